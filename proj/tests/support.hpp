#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sevrank/corpus.hpp"
#include "sevrank/nn.hpp"
#include "sevrank/rng.hpp"
#include "sevrank/siamese.hpp"

namespace sevrank::testing {

// Random document with `utterances` lines of 2-6 words from a small vocabulary.
inline ScriptDocument random_document(Rng& rng, const std::string& id, std::size_t utterances) {
  static const std::vector<std::string> words = {"the", "gun", "fire", "run", "kiss", "night",
                                                 "blood", "drink", "scream", "dark", "love",
                                                 "money", "door", "car", "dog", "rain"};
  std::vector<std::string> lines;
  for (std::size_t u = 0; u < utterances; ++u) {
    std::string line;
    const std::size_t n = 2 + rng.uniform_index(5);
    for (std::size_t w = 0; w < n; ++w) {
      line += (w ? " " : "") + words[rng.uniform_index(words.size())];
    }
    lines.push_back(line);
  }
  return make_document(id, "Title " + id, lines);
}

inline AspectDataset random_dataset(Rng& rng, std::size_t n, std::size_t min_utt, std::size_t max_utt,
                                    Aspect aspect = Aspect::Violence) {
  AspectDataset ds;
  ds.aspect = aspect;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "m" + std::to_string(1000 + i);
    const std::size_t len = min_utt + rng.uniform_index(max_utt - min_utt + 1);
    auto doc = std::make_shared<const ScriptDocument>(random_document(rng, id, len));
    ds.instances.push_back({doc, aspect, severity_from_int(static_cast<int>(i % kNumSeverity)),
                            static_cast<std::int64_t>(5 + rng.uniform_index(1000))});
  }
  return ds;
}

struct GradCheckResult {
  double worst_relative = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

// Compares analytic gradients of loss(tape) with central differences for
// every scalar of every parameter in `store`. Relative error is
// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradient_check(nn::ParameterStore& store,
                                      const std::function<nn::Var(nn::Tape&)>& loss,
                                      double h = 1e-6, double floor = 1e-6) {
  store.zero_grad();
  {
    nn::Tape tape;
    tape.backward(loss(tape));
  }
  GradCheckResult r;
  for (auto& p : store.items()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      nn::Tape t1;
      const double up = t1.value(loss(t1))(0, 0);
      p->value.data()[i] = orig - h;
      nn::Tape t2;
      const double down = t2.value(loss(t2))(0, 0);
      p->value.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++r.checked;
      if (rel > r.worst_relative) {
        r.worst_relative = rel;
        r.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

inline ModelInfo tiny_info(Architecture arch, int dim, bool multitask = true) {
  ModelInfo info;
  info.aspect = Aspect::Violence;
  info.backbone.architecture = arch;
  info.backbone.input_dim = dim;
  info.backbone.hidden_dim = 3;
  info.backbone.projection_dim = 4;
  info.backbone.channels = 2;
  info.backbone.kernel_sizes = {2, 3};
  info.provider_spec = (arch == Architecture::RnnTrans ? "hash:" : "hashword:") + std::to_string(dim);
  info.multitask = multitask;
  return info;
}

}  // namespace sevrank::testing
