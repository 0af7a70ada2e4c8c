#include "sevrank/metrics.hpp"

#include <string>

namespace sevrank {

ConfusionMatrix confusion(const std::vector<Severity>& gold, const std::vector<Severity>& pred) {
  if (gold.size() != pred.size()) {
    throw ArgumentError("gold/pred length mismatch: " + std::to_string(gold.size()) + " vs " +
                        std::to_string(pred.size()));
  }
  if (gold.empty()) throw ArgumentError("confusion of empty label lists");
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm[to_int(gold[i])][to_int(pred[i])];
  return cm;
}

std::array<double, kNumSeverity> per_class_f1(const ConfusionMatrix& cm) {
  std::array<double, kNumSeverity> f1{};
  for (int c = 0; c < kNumSeverity; ++c) {
    std::size_t tp = cm[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumSeverity; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    // F1 = 2TP / (2TP + FP + FN); zero when the denominator vanishes.
    const std::size_t denom = 2 * tp + fp + fn;
    f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return f1;
}

double macro_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double sum = 0.0;
  for (double v : f1) sum += v;
  return sum / kNumSeverity;
}

double macro_f1(const std::vector<Severity>& gold, const std::vector<Severity>& pred) {
  return macro_f1(confusion(gold, pred));
}

}  // namespace sevrank
