#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "sevrank/backbones.hpp"
#include "sevrank/corpus.hpp"
#include "sevrank/embedding.hpp"
#include "sevrank/nn.hpp"

namespace sevrank {

// Ranking target of a labelled pair: severity of `a` relative to `b`.
constexpr RankLabel cpr(Severity a, Severity b) {
  return to_int(a) < to_int(b) ? RankLabel::Lower
         : to_int(a) == to_int(b) ? RankLabel::Equal
                                  : RankLabel::Higher;
}

struct PairSample {
  LabeledInstance left;
  LabeledInstance right;
  RankLabel rank = RankLabel::Equal;
};

// Two distinct instances drawn uniformly; rank = cpr of their labels.
PairSample sample_pair(const AspectDataset& train, Rng& rng);

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 16;       // pairs per step (classification-only: 2x instances)
  int pairs_per_epoch = 0;   // 0 = ceil(N / 2); classification-only sees 2x instances
  int max_epochs = 30;
  int patience = 5;
  double rank_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

struct LossBreakdown {
  double l_c = 0.0;
  double l_r = 0.0;
  double total = 0.0;
};

// Model inputs per document (one column per time step), memoized by
// movie_id and content up to a byte budget. Thread-safe.
class InputCache {
 public:
  explicit InputCache(ProviderPtr provider, DocumentCaps caps = {},
                      std::size_t budget_bytes = std::size_t{1} << 31);

  std::shared_ptr<const Matrix> get(const ScriptDocument& doc);
  const EmbeddingProvider& provider() const { return *provider_; }
  const ProviderPtr& provider_ptr() const { return provider_; }
  const DocumentCaps& caps() const { return caps_; }

 private:
  ProviderPtr provider_;
  DocumentCaps caps_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const Matrix>> entries_;
};

struct ModelInfo {
  Aspect aspect = Aspect::Sex;
  BackboneConfig backbone;
  std::string provider_spec;
  DocumentCaps caps;
  bool multitask = true;
  TrainConfig train;
  double best_dev_macro_f1 = 0.0;
  int best_epoch = 0;

  // Hash of every setting that determines training (excludes results).
  std::string config_hash() const;
};

// One shared encoder feeding a classification head and, for multitask
// models, a ranking head. Both branches of a pair go through the same
// encoder object and the same ParameterStore entries.
class SiameseModel {
 public:
  SiameseModel(ModelInfo info, std::uint64_t init_seed);
  SiameseModel(SiameseModel&&) noexcept = default;
  SiameseModel& operator=(SiameseModel&&) noexcept = default;
  SiameseModel(const SiameseModel&) = delete;
  SiameseModel& operator=(const SiameseModel&) = delete;

  const ModelInfo& info() const { return info_; }
  ModelInfo& info() { return info_; }
  bool multitask() const { return info_.multitask; }

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const Backbone& backbone() const { return *backbone_; }
  const ClassifierHead& classifier() const { return *classifier_; }
  // Null for classification-only models.
  const RankHead* ranker() const { return ranker_.get(); }

  nn::Var encode(nn::Tape& tape, const Matrix& input) const { return backbone_->encode(tape, input); }
  Vector represent(const Matrix& input) const { return backbone_->represent(input); }

  std::string serialize() const;
  static SiameseModel deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static SiameseModel load(const std::filesystem::path& path);

 private:
  ModelInfo info_;
  nn::ParameterStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<ClassifierHead> classifier_;
  std::unique_ptr<RankHead> ranker_;
};

// Loss nodes of one joint batch, recorded on `tape`.
struct JointLoss {
  nn::Var l_c;
  nn::Var l_r;
  nn::Var total;
};

// l_c: mean 4-class cross-entropy over both elements of every pair;
// l_r: mean 3-class cross-entropy of the ranking head;
// total = l_c + rank_weight * l_r. `dropout_rng` may be null (no dropout).
JointLoss joint_loss(const SiameseModel& model, const std::vector<PairSample>& batch,
                     InputCache& inputs, nn::Tape& tape, Rng* dropout_rng = nullptr);

// Mean 4-class cross-entropy over single instances.
nn::Var classification_loss(const SiameseModel& model, const std::vector<LabeledInstance>& batch,
                            InputCache& inputs, nn::Tape& tape, Rng* dropout_rng = nullptr);

// One optimizer step on the joint loss. Throws TrainingError on a
// non-finite loss, before touching the parameters.
LossBreakdown joint_step(SiameseModel& model, const std::vector<PairSample>& batch,
                         InputCache& inputs, nn::Adam& optimizer, Rng* dropout_rng = nullptr);
double classification_step(SiameseModel& model, const std::vector<LabeledInstance>& batch,
                           InputCache& inputs, nn::Adam& optimizer, Rng* dropout_rng = nullptr);

struct EpochRecord {
  int epoch = 0;
  double l_c = 0.0;
  double l_r = 0.0;
  double dev_macro_f1 = 0.0;
};

// Trains on the train part, selects the epoch with the best dev macro-F1
// (early stopping with config.patience) and returns that checkpoint.
// `log`, when given, receives one `epoch,l_c,l_r,dev_macro_f1` line per epoch.
SiameseModel train(const TrainConfig& config, const AspectDataset& dataset,
                   const BackboneConfig& backbone, InputCache& inputs, bool multitask,
                   std::ostream* log = nullptr, std::vector<EpochRecord>* history = nullptr);

struct SeverityPrediction {
  Severity label = Severity::None;
  std::array<double, kNumSeverity> probabilities{};
};

// Argmax of the softmax; ties go to the lowest level.
SeverityPrediction prediction_from_logits(const Vector& logits);
SeverityPrediction predict_severity(const SiameseModel& model, InputCache& inputs,
                                    const ScriptDocument& doc);
std::vector<Severity> predict_labels(const SiameseModel& model, InputCache& inputs,
                                     const AspectDataset& dataset);

struct Comparison {
  RankLabel label = RankLabel::Equal;
  std::array<double, kNumRank> probabilities{};  // LOWER, EQUAL, HIGHER
};

// Averages softmax(rank(a, b)) with the LOWER/HIGHER swap of
// softmax(rank(b, a)). Ties resolve to EQUAL, then LOWER before HIGHER.
Comparison canonical_comparison(const std::array<double, kNumRank>& forward,
                                const std::array<double, kNumRank>& backward);
Comparison compare_representations(const SiameseModel& model, const Vector& a, const Vector& b);
Comparison compare(const SiameseModel& model, InputCache& inputs, const ScriptDocument& a,
                   const ScriptDocument& b);

}  // namespace sevrank
