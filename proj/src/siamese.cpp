#include "sevrank/siamese.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sevrank/io.hpp"
#include "sevrank/metrics.hpp"

namespace sevrank {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ModelFormatError("missing key '" + key + "'");
  return it->second;
}

std::map<std::string, std::string> with_prefix(const std::map<std::string, std::string>& kv,
                                               const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : kv) {
    if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
  }
  return out;
}

std::map<std::string, std::string> info_map(const ModelInfo& info, bool include_results) {
  std::map<std::string, std::string> kv;
  kv["aspect"] = aspect_name(info.aspect);
  kv["multitask"] = info.multitask ? "1" : "0";
  kv["provider"] = info.provider_spec;
  kv["caps.max_utterances"] = std::to_string(info.caps.max_utterances);
  kv["caps.max_tokens_per_utterance"] = std::to_string(info.caps.max_tokens_per_utterance);
  for (const auto& [k, v] : info.backbone.to_map()) kv["backbone." + k] = v;
  for (const auto& [k, v] : info.train.to_map()) kv["train." + k] = v;
  if (include_results) {
    kv["best_dev_macro_f1"] = format_double(info.best_dev_macro_f1);
    kv["best_epoch"] = std::to_string(info.best_epoch);
    kv["config_hash"] = info.config_hash();
  }
  return kv;
}

constexpr char kModelMagic[8] = {'S', 'E', 'V', 'R', 'K', 'M', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& buf, std::uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::string_view take(std::size_t n) {
    if (pos_ + n > data_.size()) throw ModelFormatError("model file truncated");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8).data(), 8);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::array<double, kNumRank> to_array3(const Vector& v) { return {v[0], v[1], v[2]}; }

void check_finite(const LossBreakdown& loss, std::size_t batch) {
  if (!std::isfinite(loss.l_c) || !std::isfinite(loss.l_r) || !std::isfinite(loss.total)) {
    throw TrainingError("non-finite loss (l_c=" + format_double(loss.l_c) +
                        ", l_r=" + format_double(loss.l_r) + ") on a batch of " +
                        std::to_string(batch));
  }
}

}  // namespace

PairSample sample_pair(const AspectDataset& train, Rng& rng) {
  const std::size_t n = train.size();
  if (n < 2) throw ArgumentError("pair sampling needs at least 2 instances");
  const std::size_t i = rng.uniform_index(n);
  std::size_t j = rng.uniform_index(n - 1);
  if (j >= i) ++j;
  const auto& a = train.instances[i];
  const auto& b = train.instances[j];
  return PairSample{a, b, cpr(a.label, b.label)};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (batch_size <= 0) throw ArgumentError("batch size must be positive");
  if (pairs_per_epoch < 0) throw ArgumentError("pairs per epoch must be >= 0");
  if (max_epochs <= 0) throw ArgumentError("max epochs must be positive");
  if (patience <= 0) throw ArgumentError("patience must be positive");
  if (!(rank_weight >= 0.0)) throw ArgumentError("rank weight must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"learning_rate", format_double(learning_rate)},
          {"beta1", format_double(beta1)},
          {"beta2", format_double(beta2)},
          {"epsilon", format_double(epsilon)},
          {"batch_size", std::to_string(batch_size)},
          {"pairs_per_epoch", std::to_string(pairs_per_epoch)},
          {"max_epochs", std::to_string(max_epochs)},
          {"patience", std::to_string(patience)},
          {"rank_weight", format_double(rank_weight)},
          {"seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  try {
    c.learning_rate = std::stod(require(kv, "learning_rate"));
    c.beta1 = std::stod(require(kv, "beta1"));
    c.beta2 = std::stod(require(kv, "beta2"));
    c.epsilon = std::stod(require(kv, "epsilon"));
    c.batch_size = std::stoi(require(kv, "batch_size"));
    c.pairs_per_epoch = std::stoi(require(kv, "pairs_per_epoch"));
    c.max_epochs = std::stoi(require(kv, "max_epochs"));
    c.patience = std::stoi(require(kv, "patience"));
    c.rank_weight = std::stod(require(kv, "rank_weight"));
    c.seed = std::stoull(require(kv, "seed"));
  } catch (const std::logic_error&) {
    throw ModelFormatError("malformed train config value");
  }
  c.validate();
  return c;
}

InputCache::InputCache(ProviderPtr provider, DocumentCaps caps, std::size_t budget_bytes)
    : provider_(std::move(provider)), caps_(caps), budget_(budget_bytes) {
  if (!provider_) throw ArgumentError("null embedding provider");
}

std::shared_ptr<const Matrix> InputCache::get(const ScriptDocument& doc) {
  std::uint64_t h = fnv1a64(doc.movie_id);
  for (const auto& u : doc.utterances) {
    h = fnv1a64(u.text, h ^ 0x0a);
  }
  const std::string key = doc.movie_id + '\0' + io::hex64(h);
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  auto m = std::make_shared<const Matrix>(document_input(*provider_, doc, caps_));
  const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(m->size());
  std::lock_guard lock(mu_);
  if (used_ + bytes <= budget_) {
    auto [it, inserted] = entries_.emplace(key, m);
    if (inserted) used_ += bytes;
    return it->second;
  }
  return m;
}

std::string ModelInfo::config_hash() const {
  std::string text;
  for (const auto& [k, v] : info_map(*this, false)) text += k + "=" + v + "\n";
  return io::hex64(fnv1a64(text));
}

SiameseModel::SiameseModel(ModelInfo info, std::uint64_t init_seed) : info_(std::move(info)) {
  Rng init(init_seed);
  backbone_ = std::make_unique<Backbone>(info_.backbone, store_, init);
  const int width = info_.backbone.representation_width();
  classifier_ = std::make_unique<ClassifierHead>(width, store_, init);
  if (info_.multitask) ranker_ = std::make_unique<RankHead>(width, store_, init);
}

std::string SiameseModel::serialize() const {
  std::string header;
  for (const auto& [k, v] : info_map(info_, true)) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw ArgumentError("model metadata may not contain newlines");
    }
    header += k + "=" + v + "\n";
  }
  std::string buf(kModelMagic, sizeof kModelMagic);
  put_u32(buf, kModelVersion);
  put_u64(buf, header.size());
  buf += header;
  put_u32(buf, static_cast<std::uint32_t>(store_.items().size()));
  for (const auto& p : store_.items()) {
    put_u32(buf, static_cast<std::uint32_t>(p->name.size()));
    buf += p->name;
    put_u32(buf, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(buf, static_cast<std::uint32_t>(p->value.cols()));
    buf.append(reinterpret_cast<const char*>(p->value.data()),
               sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  return buf;
}

SiameseModel SiameseModel::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof kModelMagic).data(), kModelMagic, sizeof kModelMagic) != 0) {
    throw ModelFormatError("not a model file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw ModelFormatError("unsupported model format version " + std::to_string(version));
  }
  const std::uint64_t header_len = r.u64();
  const std::string_view header = r.take(header_len);
  std::map<std::string, std::string> kv;
  for (const auto& line : io::split(header, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ModelFormatError("malformed model header line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelInfo info;
  auto aspect = parse_aspect(require(kv, "aspect"));
  if (!aspect) throw ModelFormatError("unknown aspect in model file");
  info.aspect = *aspect;
  info.multitask = require(kv, "multitask") == "1";
  info.provider_spec = require(kv, "provider");
  try {
    info.caps.max_utterances = std::stoul(require(kv, "caps.max_utterances"));
    info.caps.max_tokens_per_utterance = std::stoul(require(kv, "caps.max_tokens_per_utterance"));
    info.best_dev_macro_f1 = std::stod(require(kv, "best_dev_macro_f1"));
    info.best_epoch = std::stoi(require(kv, "best_epoch"));
  } catch (const std::logic_error&) {
    throw ModelFormatError("malformed model header value");
  }
  info.backbone = BackboneConfig::from_map(with_prefix(kv, "backbone."));
  info.train = TrainConfig::from_map(with_prefix(kv, "train."));
  if (info.config_hash() != require(kv, "config_hash")) {
    throw ModelFormatError("model config hash does not match its header");
  }

  SiameseModel model(std::move(info), 0);
  const std::uint32_t count = r.u32();
  if (count != model.store_.items().size()) {
    throw ModelFormatError("parameter count " + std::to_string(count) + " does not match the " +
                           std::string(architecture_name(model.info_.backbone.architecture)) +
                           " layout (" + std::to_string(model.store_.items().size()) + ")");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name(r.take(r.u32()));
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    nn::Parameter* p = model.store_.find(name);
    if (!p) throw ModelFormatError("unexpected parameter '" + name + "'");
    if (p->value.rows() != rows || p->value.cols() != cols) {
      throw ModelFormatError("parameter '" + name + "' has shape " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", expected " + std::to_string(p->value.rows()) +
                             "x" + std::to_string(p->value.cols()));
    }
    const auto raw = r.take(sizeof(double) * rows * cols);
    std::memcpy(p->value.data(), raw.data(), raw.size());
  }
  if (!r.done()) throw ModelFormatError("trailing bytes in model file");
  return model;
}

void SiameseModel::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, serialize());
}

SiameseModel SiameseModel::load(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const Error& e) {
    throw ModelFormatError(e.what());
  }
  return deserialize(bytes);
}

JointLoss joint_loss(const SiameseModel& model, const std::vector<PairSample>& batch,
                     InputCache& inputs, nn::Tape& tape, Rng* dropout_rng) {
  if (batch.empty()) throw ArgumentError("empty batch");
  if (!model.ranker()) throw UnsupportedOperation("joint loss needs a multitask model");
  const double rate = model.info().backbone.dropout;
  std::vector<nn::Var> class_logits, rank_logits;
  std::vector<int> class_targets, rank_targets;
  for (const auto& pair : batch) {
    if (pair.left.aspect != pair.right.aspect) throw ArgumentError("pair mixes aspects");
    nn::Var u = model.encode(tape, *inputs.get(*pair.left.document));
    nn::Var v = model.encode(tape, *inputs.get(*pair.right.document));
    if (dropout_rng) {
      u = nn::dropout(tape, u, rate, *dropout_rng);
      v = nn::dropout(tape, v, rate, *dropout_rng);
    }
    class_logits.push_back(model.classifier().logits(tape, u));
    class_logits.push_back(model.classifier().logits(tape, v));
    class_targets.push_back(to_int(pair.left.label));
    class_targets.push_back(to_int(pair.right.label));
    rank_logits.push_back(model.ranker()->logits(tape, u, v));
    rank_targets.push_back(to_int(pair.rank));
  }
  JointLoss loss;
  loss.l_c = nn::cross_entropy(tape, nn::concat_cols(tape, class_logits), class_targets);
  loss.l_r = nn::cross_entropy(tape, nn::concat_cols(tape, rank_logits), rank_targets);
  const double w = model.info().train.rank_weight;
  loss.total = nn::add(tape, loss.l_c, w == 1.0 ? loss.l_r : nn::scale(tape, loss.l_r, w));
  return loss;
}

nn::Var classification_loss(const SiameseModel& model, const std::vector<LabeledInstance>& batch,
                            InputCache& inputs, nn::Tape& tape, Rng* dropout_rng) {
  if (batch.empty()) throw ArgumentError("empty batch");
  const double rate = model.info().backbone.dropout;
  std::vector<nn::Var> logits;
  std::vector<int> targets;
  for (const auto& inst : batch) {
    nn::Var u = model.encode(tape, *inputs.get(*inst.document));
    if (dropout_rng) u = nn::dropout(tape, u, rate, *dropout_rng);
    logits.push_back(model.classifier().logits(tape, u));
    targets.push_back(to_int(inst.label));
  }
  return nn::cross_entropy(tape, nn::concat_cols(tape, logits), targets);
}

LossBreakdown joint_step(SiameseModel& model, const std::vector<PairSample>& batch,
                         InputCache& inputs, nn::Adam& optimizer, Rng* dropout_rng) {
  nn::Tape tape;
  const JointLoss loss = joint_loss(model, batch, inputs, tape, dropout_rng);
  LossBreakdown out{tape.value(loss.l_c)(0, 0), tape.value(loss.l_r)(0, 0),
                    tape.value(loss.total)(0, 0)};
  check_finite(out, batch.size());
  model.parameters().zero_grad();
  tape.backward(loss.total);
  optimizer.step(model.parameters());
  return out;
}

double classification_step(SiameseModel& model, const std::vector<LabeledInstance>& batch,
                           InputCache& inputs, nn::Adam& optimizer, Rng* dropout_rng) {
  nn::Tape tape;
  const nn::Var loss = classification_loss(model, batch, inputs, tape, dropout_rng);
  const double l_c = tape.value(loss)(0, 0);
  check_finite({l_c, 0.0, l_c}, batch.size());
  model.parameters().zero_grad();
  tape.backward(loss);
  optimizer.step(model.parameters());
  return l_c;
}

SiameseModel train(const TrainConfig& config, const AspectDataset& dataset,
                   const BackboneConfig& backbone, InputCache& inputs, bool multitask,
                   std::ostream* log, std::vector<EpochRecord>* history) {
  config.validate();
  backbone.validate();
  if (inputs.provider().dim() != backbone.input_dim) {
    throw ArgumentError("provider width " + std::to_string(inputs.provider().dim()) +
                        " does not match backbone input_dim " + std::to_string(backbone.input_dim));
  }
  if (inputs.provider().kind() != backbone.input_kind()) {
    throw ArgumentError(std::string(architecture_name(backbone.architecture)) +
                        " needs a " +
                        (backbone.input_kind() == EmbeddingKind::Sentence ? "sentence" : "word") +
                        " embedding provider");
  }
  if (!dataset.split) throw ArgumentError("training needs a train/dev split");
  const AspectDataset train_set = dataset.part(SplitPart::Train);
  const AspectDataset dev_set = dataset.part(SplitPart::Dev);
  if (train_set.empty()) throw TrainingError("empty train split");
  if (dev_set.empty()) throw TrainingError("empty dev split");
  if (multitask && train_set.size() < 2) throw TrainingError("pair training needs >= 2 instances");

  ModelInfo info;
  info.aspect = dataset.aspect;
  info.backbone = backbone;
  info.provider_spec = inputs.provider().spec();
  info.caps = inputs.caps();
  info.multitask = multitask;
  info.train = config;
  SiameseModel model(std::move(info), derive_seed(config.seed, "init"));
  nn::Adam optimizer(model.parameters(),
                     {config.learning_rate, config.beta1, config.beta2, config.epsilon});
  Rng sample_rng(derive_seed(config.seed, "pairs"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  Rng* drop = backbone.dropout > 0.0 ? &dropout_rng : nullptr;

  const auto dev_gold = dev_set.labels();
  const std::size_t n = train_set.size();
  double best = -1.0;
  int best_epoch = 0;
  int stale = 0;
  std::vector<nn::Matrix> best_params;
  if (log) *log << "# config_hash=" << model.info().config_hash() << "\n# epoch,l_c,l_r,dev_macro_f1\n";

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double sum_c = 0.0, sum_r = 0.0;
    std::size_t seen = 0;
    if (multitask) {
      const std::size_t pairs =
          config.pairs_per_epoch > 0 ? static_cast<std::size_t>(config.pairs_per_epoch) : (n + 1) / 2;
      for (std::size_t done = 0; done < pairs;) {
        const std::size_t take = std::min<std::size_t>(config.batch_size, pairs - done);
        std::vector<PairSample> batch;
        batch.reserve(take);
        for (std::size_t k = 0; k < take; ++k) batch.push_back(sample_pair(train_set, sample_rng));
        const LossBreakdown loss = joint_step(model, batch, inputs, optimizer, drop);
        sum_c += loss.l_c * static_cast<double>(take);
        sum_r += loss.l_r * static_cast<double>(take);
        seen += take;
        done += take;
      }
    } else {
      // Same instance count per epoch as the pair loop: 2 * pairs, drawn
      // from reshuffled passes over the training set.
      const std::size_t total =
          config.pairs_per_epoch > 0 ? 2 * static_cast<std::size_t>(config.pairs_per_epoch) : n;
      const std::size_t step = 2 * static_cast<std::size_t>(config.batch_size);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::size_t cursor = n;
      for (std::size_t done = 0; done < total;) {
        const std::size_t take = std::min(step, total - done);
        std::vector<LabeledInstance> batch;
        batch.reserve(take);
        for (std::size_t k = 0; k < take; ++k) {
          if (cursor == n) {
            sample_rng.shuffle(std::span<std::size_t>(order));
            cursor = 0;
          }
          batch.push_back(train_set.instances[order[cursor++]]);
        }
        sum_c += classification_step(model, batch, inputs, optimizer, drop) *
                 static_cast<double>(batch.size());
        seen += batch.size();
        done += take;
      }
    }
    const double dev_f1 = macro_f1(dev_gold, predict_labels(model, inputs, dev_set));
    EpochRecord rec{epoch, sum_c / static_cast<double>(seen), sum_r / static_cast<double>(seen), dev_f1};
    if (history) history->push_back(rec);
    if (log) {
      *log << rec.epoch << ',' << format_double(rec.l_c) << ',' << format_double(rec.l_r) << ','
           << format_double(rec.dev_macro_f1) << '\n';
    }
    if (dev_f1 > best) {
      best = dev_f1;
      best_epoch = epoch;
      best_params = model.parameters().snapshot();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model.parameters().restore(best_params);
  model.info().best_dev_macro_f1 = best;
  model.info().best_epoch = best_epoch;
  return model;
}

SeverityPrediction prediction_from_logits(const Vector& logits) {
  if (logits.size() != kNumSeverity) throw ShapeError("expected 4 class logits");
  const Vector p = nn::softmax(logits);
  SeverityPrediction out;
  int best = 0;
  for (int c = 0; c < kNumSeverity; ++c) {
    out.probabilities[c] = p[c];
    if (p[c] > p[best]) best = c;
  }
  out.label = severity_from_int(best);
  return out;
}

SeverityPrediction predict_severity(const SiameseModel& model, InputCache& inputs,
                                    const ScriptDocument& doc) {
  if (doc.utterances.empty()) throw ArgumentError("cannot predict on an empty document");
  return prediction_from_logits(model.classifier().classify(model.represent(*inputs.get(doc))));
}

std::vector<Severity> predict_labels(const SiameseModel& model, InputCache& inputs,
                                     const AspectDataset& dataset) {
  std::vector<Severity> out;
  out.reserve(dataset.size());
  for (const auto& inst : dataset.instances) {
    out.push_back(predict_severity(model, inputs, *inst.document).label);
  }
  return out;
}

Comparison canonical_comparison(const std::array<double, kNumRank>& forward,
                                const std::array<double, kNumRank>& backward) {
  Comparison c;
  // backward is the (b, a) distribution; swapping it expresses it as (a, b).
  c.probabilities[0] = (forward[0] + backward[2]) / 2.0;
  c.probabilities[1] = (forward[1] + backward[1]) / 2.0;
  c.probabilities[2] = (forward[2] + backward[0]) / 2.0;
  const auto& p = c.probabilities;
  const double top = std::max({p[0], p[1], p[2]});
  if (p[1] == top || p[0] == p[2]) {
    c.label = RankLabel::Equal;
  } else {
    c.label = p[0] == top ? RankLabel::Lower : RankLabel::Higher;
  }
  return c;
}

Comparison compare_representations(const SiameseModel& model, const Vector& a, const Vector& b) {
  if (!model.ranker()) {
    throw UnsupportedOperation("compare needs a multitask model; this model was trained for "
                               "classification only");
  }
  const Vector fwd = nn::softmax(model.ranker()->rank(a, b));
  const Vector bwd = nn::softmax(model.ranker()->rank(b, a));
  return canonical_comparison(to_array3(fwd), to_array3(bwd));
}

Comparison compare(const SiameseModel& model, InputCache& inputs, const ScriptDocument& a,
                   const ScriptDocument& b) {
  if (!model.ranker()) {
    throw UnsupportedOperation("compare needs a multitask model; this model was trained for "
                               "classification only");
  }
  return compare_representations(model, model.represent(*inputs.get(a)),
                                 model.represent(*inputs.get(b)));
}

}  // namespace sevrank
