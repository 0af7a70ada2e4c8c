#pragma once

#include <string>
#include <vector>

#include "sevrank/metrics.hpp"
#include "sevrank/siamese.hpp"

namespace sevrank {

struct EvalReport {
  Aspect aspect = Aspect::Sex;
  double macro_f1 = 0.0;
  std::array<double, kNumSeverity> per_class_f1{};
  ConfusionMatrix confusion{};
  std::size_t n = 0;
  std::string config_hash;

  std::string to_text() const;
  std::string to_json() const;
};

EvalReport make_eval_report(Aspect aspect, const std::vector<Severity>& gold,
                            const std::vector<Severity>& pred);
EvalReport evaluate(const SiameseModel& model, InputCache& inputs, const AspectDataset& dataset);

struct CVReport {
  std::vector<double> fold_macro_f1;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (k - 1); 0 for one fold
  std::string config_hash;

  std::string to_tsv() const;
};

CVReport summarize_folds(std::vector<double> fold_macro_f1);

struct CrossValidationOptions {
  int k = 10;
  std::uint64_t seed = 0;
  // Share of each fold's training portion held out (stratified) as the
  // early-stopping dev set.
  double dev_fraction = 1.0 / 9.0;
};

// Trains one fresh model per stratified fold (seed + fold index) and scores
// it on that fold's test part. Training errors are rethrown with the fold index.
CVReport cross_validate(const TrainConfig& config, const BackboneConfig& backbone,
                        const AspectDataset& dataset, InputCache& inputs, bool multitask,
                        const CrossValidationOptions& options,
                        std::vector<FoldAssignment>* folds_out = nullptr);

// Fraction of `pairs` seeded random pairs of distinct instances for which
// compare() agrees with the order of the gold labels.
double pairwise_accuracy(const SiameseModel& model, InputCache& inputs, const AspectDataset& dataset,
                         std::size_t pairs, std::uint64_t seed);

enum class Alternative {
  TwoSided,  // |diff*| >= |diff|
  Greater,   // diff* >= diff: evidence that system A beats system B
};

// Paired approximate randomization on diff = macroF1(A) - macroF1(B): each
// instance's two predictions are swapped with probability 1/2. When
// 2^n <= iterations all assignments are enumerated and p is the exact
// fraction; otherwise p = (hits + 1) / (iterations + 1).
double significance_test(const std::vector<Severity>& gold, const std::vector<Severity>& pred_a,
                         const std::vector<Severity>& pred_b, int iterations = 10000,
                         std::uint64_t seed = 0, Alternative alternative = Alternative::TwoSided);

}  // namespace sevrank
