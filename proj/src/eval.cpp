#include "sevrank/eval.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace sevrank {

EvalReport make_eval_report(Aspect aspect, const std::vector<Severity>& gold,
                            const std::vector<Severity>& pred) {
  EvalReport r;
  r.aspect = aspect;
  r.confusion = confusion(gold, pred);
  r.per_class_f1 = per_class_f1(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  r.n = gold.size();
  return r;
}

EvalReport evaluate(const SiameseModel& model, InputCache& inputs, const AspectDataset& dataset) {
  if (dataset.aspect != model.info().aspect) {
    throw DataError("model was trained for aspect '" + std::string(aspect_name(model.info().aspect)) +
                    "' but the data is '" + std::string(aspect_name(dataset.aspect)) + "'");
  }
  EvalReport r = make_eval_report(dataset.aspect, dataset.labels(), predict_labels(model, inputs, dataset));
  r.config_hash = model.info().config_hash();
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "aspect: " << aspect_name(aspect) << "  n: " << n << "  macro_f1: " << macro_f1 << '\n';
  out << "per-class F1:";
  for (Severity s : kAllSeverities) out << "  " << severity_name(s) << '=' << per_class_f1[to_int(s)];
  out << "\nconfusion (rows gold, cols predicted):\n";
  out << std::setw(10) << "";
  for (Severity s : kAllSeverities) out << std::setw(10) << severity_name(s);
  out << '\n';
  for (Severity g : kAllSeverities) {
    out << std::setw(10) << severity_name(g);
    for (Severity p : kAllSeverities) out << std::setw(10) << confusion[to_int(g)][to_int(p)];
    out << '\n';
  }
  if (!config_hash.empty()) out << "config_hash: " << config_hash << '\n';
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["aspect"] = aspect_name(aspect);
  j["n"] = n;
  j["macro_f1"] = macro_f1;
  for (Severity s : kAllSeverities) j["per_class_f1"][std::string(severity_name(s))] = per_class_f1[to_int(s)];
  j["confusion"] = confusion;
  j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

CVReport summarize_folds(std::vector<double> fold_macro_f1) {
  if (fold_macro_f1.empty()) throw ArgumentError("no fold scores");
  CVReport r;
  double sum = 0.0;
  for (double v : fold_macro_f1) sum += v;
  r.mean = sum / static_cast<double>(fold_macro_f1.size());
  double ss = 0.0;
  for (double v : fold_macro_f1) ss += (v - r.mean) * (v - r.mean);
  r.stddev = fold_macro_f1.size() > 1 ? std::sqrt(ss / static_cast<double>(fold_macro_f1.size() - 1)) : 0.0;
  r.fold_macro_f1 = std::move(fold_macro_f1);
  return r;
}

std::string CVReport::to_tsv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "fold\tmacro_f1\n";
  for (std::size_t i = 0; i < fold_macro_f1.size(); ++i) out << i << '\t' << fold_macro_f1[i] << '\n';
  return out.str();
}

namespace {

// Stratified train/dev assignment of a fold's training portion.
AspectDataset holdout_split(const AspectDataset& ds, double dev_fraction, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumSeverity> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) groups[to_int(ds.instances[i].label)].push_back(i);
  Rng rng(derive_seed(seed, "cv_holdout"));
  SplitAssignment split;
  for (auto& g : groups) {
    std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      return ds.instances[a].movie_id() < ds.instances[b].movie_id();
    });
    rng.shuffle(std::span<std::size_t>(g));
    // Classes with a single member stay in train.
    const std::size_t n_dev =
        g.size() < 2 ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dev_fraction * g.size())));
    for (std::size_t i = 0; i < g.size(); ++i) {
      split[ds.instances[g[i]].movie_id()] = i < n_dev ? SplitPart::Dev : SplitPart::Train;
    }
  }
  AspectDataset out = ds;
  out.split = std::move(split);
  return out;
}

}  // namespace

CVReport cross_validate(const TrainConfig& config, const BackboneConfig& backbone,
                        const AspectDataset& dataset, InputCache& inputs, bool multitask,
                        const CrossValidationOptions& options, std::vector<FoldAssignment>* folds_out) {
  const auto folds = kfold_split(dataset, options.k, options.seed);
  std::vector<double> scores;
  std::string hash;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::uint64_t fold_seed = options.seed + f;
    TrainConfig fold_config = config;
    fold_config.seed = fold_seed;
    const AspectDataset train_part = holdout_split(dataset.select(folds[f].train), options.dev_fraction, fold_seed);
    const AspectDataset test_part = dataset.select(folds[f].test);
    try {
      SiameseModel model = train(fold_config, train_part, backbone, inputs, multitask);
      scores.push_back(macro_f1(test_part.labels(), predict_labels(model, inputs, test_part)));
      if (f == 0) hash = model.info().config_hash();
    } catch (const TrainingError& e) {
      throw TrainingError("fold " + std::to_string(f) + ": " + e.what());
    }
  }
  if (folds_out) *folds_out = folds;
  CVReport r = summarize_folds(std::move(scores));
  r.config_hash = hash;
  return r;
}

double pairwise_accuracy(const SiameseModel& model, InputCache& inputs, const AspectDataset& dataset,
                         std::size_t pairs, std::uint64_t seed) {
  if (!model.ranker()) throw UnsupportedOperation("model has no ranking head");
  if (pairs == 0) throw ArgumentError("pairwise accuracy needs at least one pair");
  std::unordered_map<std::string, Vector> reps;
  for (const auto& inst : dataset.instances) {
    reps.emplace(inst.movie_id(), model.represent(*inputs.get(*inst.document)));
  }
  Rng rng(derive_seed(seed, "pairwise"));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const PairSample p = sample_pair(dataset, rng);
    const Comparison c =
        compare_representations(model, reps.at(p.left.movie_id()), reps.at(p.right.movie_id()));
    if (c.label == p.rank) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs);
}

double significance_test(const std::vector<Severity>& gold, const std::vector<Severity>& pred_a,
                         const std::vector<Severity>& pred_b, int iterations, std::uint64_t seed,
                         Alternative alternative) {
  if (gold.size() != pred_a.size() || gold.size() != pred_b.size()) {
    throw ArgumentError("significance_test: length mismatch");
  }
  if (gold.empty()) throw ArgumentError("significance_test: empty input");
  if (iterations <= 0) throw ArgumentError("iterations must be positive");
  const std::size_t n = gold.size();

  // Confusion matrices are updated incrementally: swapping instance i moves
  // one count between the two systems' matrices.
  const ConfusionMatrix base_a = confusion(gold, pred_a);
  const ConfusionMatrix base_b = confusion(gold, pred_b);
  const double observed = macro_f1(base_a) - macro_f1(base_b);
  constexpr double kTol = 1e-12;
  auto hit = [&](double diff) {
    return alternative == Alternative::TwoSided ? std::abs(diff) >= std::abs(observed) - kTol
                                                : diff >= observed - kTol;
  };
  auto permuted_diff = [&](auto&& swapped) {
    ConfusionMatrix a = base_a, b = base_b;
    for (std::size_t i = 0; i < n; ++i) {
      if (!swapped(i) || pred_a[i] == pred_b[i]) continue;
      const int g = to_int(gold[i]);
      --a[g][to_int(pred_a[i])];
      ++a[g][to_int(pred_b[i])];
      --b[g][to_int(pred_b[i])];
      ++b[g][to_int(pred_a[i])];
    }
    return macro_f1(a) - macro_f1(b);
  };

  if (n < 63 && (std::uint64_t{1} << n) <= static_cast<std::uint64_t>(iterations)) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      if (hit(permuted_diff([mask](std::size_t i) { return (mask >> i) & 1U; }))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  Rng rng(derive_seed(seed, "significance"));
  std::vector<char> flips(n);
  std::uint64_t hits = 0;
  for (int it = 0; it < iterations; ++it) {
    for (auto& f : flips) f = static_cast<char>(rng.next_u64() & 1U);
    if (hit(permuted_diff([&flips](std::size_t i) { return flips[i] != 0; }))) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(iterations + 1);
}

}  // namespace sevrank
