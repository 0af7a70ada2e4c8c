#include "sevrank/backbones.hpp"

#include <sstream>

#include "sevrank/io.hpp"

namespace sevrank {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::RnnTrans:
      return "rnn_trans";
    case Architecture::TextRcnn:
      return "textrcnn";
    case Architecture::TextCnn:
      return "textcnn";
    case Architecture::AvgEmbed:
      return "avg_embed";
  }
  return "?";
}

std::optional<Architecture> parse_architecture(std::string_view s) {
  for (auto a : {Architecture::RnnTrans, Architecture::TextRcnn, Architecture::TextCnn,
                 Architecture::AvgEmbed}) {
    if (architecture_name(a) == s) return a;
  }
  return std::nullopt;
}

int BackboneConfig::representation_width() const {
  switch (architecture) {
    case Architecture::RnnTrans:
      return 2 * hidden_dim;
    case Architecture::TextRcnn:
      return projection_dim;
    case Architecture::TextCnn:
      return channels * static_cast<int>(kernel_sizes.size());
    case Architecture::AvgEmbed:
      return input_dim;
  }
  return 0;
}

EmbeddingKind BackboneConfig::input_kind() const {
  return architecture == Architecture::RnnTrans ? EmbeddingKind::Sentence : EmbeddingKind::Word;
}

void BackboneConfig::validate() const {
  if (input_dim <= 0) throw ArgumentError("input_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("dropout must be in [0, 1)");
  switch (architecture) {
    case Architecture::RnnTrans:
      if (hidden_dim <= 0) throw ArgumentError("hidden_dim must be positive");
      if (rnn_layers <= 0) throw ArgumentError("rnn_layers must be positive");
      break;
    case Architecture::TextRcnn:
      if (hidden_dim <= 0 || projection_dim <= 0) {
        throw ArgumentError("hidden_dim and projection_dim must be positive");
      }
      break;
    case Architecture::TextCnn:
      if (channels <= 0 || kernel_sizes.empty()) {
        throw ArgumentError("textcnn needs channels and kernel sizes");
      }
      for (int k : kernel_sizes)
        if (k <= 0) throw ArgumentError("kernel sizes must be positive");
      break;
    case Architecture::AvgEmbed:
      break;
  }
}

std::map<std::string, std::string> BackboneConfig::to_map() const {
  std::ostringstream ks;
  for (std::size_t i = 0; i < kernel_sizes.size(); ++i) ks << (i ? "," : "") << kernel_sizes[i];
  std::ostringstream dr;
  dr.precision(17);
  dr << dropout;
  return {{"architecture", std::string(architecture_name(architecture))},
          {"input_dim", std::to_string(input_dim)},
          {"hidden_dim", std::to_string(hidden_dim)},
          {"rnn_layers", std::to_string(rnn_layers)},
          {"projection_dim", std::to_string(projection_dim)},
          {"kernel_sizes", ks.str()},
          {"channels", std::to_string(channels)},
          {"dropout", dr.str()}};
}

BackboneConfig BackboneConfig::from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ModelFormatError("backbone config lacks '" + k + "'");
    return it->second;
  };
  BackboneConfig c;
  auto arch = parse_architecture(get("architecture"));
  if (!arch) throw ModelFormatError("unknown architecture '" + get("architecture") + "'");
  c.architecture = *arch;
  try {
    c.input_dim = std::stoi(get("input_dim"));
    c.hidden_dim = std::stoi(get("hidden_dim"));
    c.rnn_layers = kv.count("rnn_layers") ? std::stoi(kv.at("rnn_layers")) : 1;
    c.projection_dim = std::stoi(get("projection_dim"));
    c.channels = std::stoi(get("channels"));
    c.dropout = std::stod(get("dropout"));
    c.kernel_sizes.clear();
    for (const auto& k : io::split(get("kernel_sizes"), ','))
      if (!k.empty()) c.kernel_sizes.push_back(std::stoi(k));
  } catch (const std::logic_error&) {
    throw ModelFormatError("malformed backbone config value");
  }
  c.validate();
  return c;
}

int textcnn_min_length(const BackboneConfig& config) {
  int m = 1;
  for (int k : config.kernel_sizes) m = std::max(m, k);
  return m;
}

Backbone::Backbone(const BackboneConfig& config, nn::ParameterStore& store, Rng& init)
    : config_(config) {
  config_.validate();
  const int d = config_.input_dim;
  const int h = config_.hidden_dim;
  auto add_lstm = [&](const std::string& dir, nn::Parameter*& wx, nn::Parameter*& wh,
                      nn::Parameter*& b, int in = 0) {
    wx = &store.add("enc." + dir + ".wx", nn::uniform_fan_in(4 * h, in > 0 ? in : d, init));
    wh = &store.add("enc." + dir + ".wh", nn::orthogonal_blocks(4, h, init));
    b = &store.add("enc." + dir + ".b", Matrix::Zero(4 * h, 1));
  };
  switch (config_.architecture) {
    case Architecture::RnnTrans:
      add_lstm("fw", fw_wx_, fw_wh_, fw_b_);
      add_lstm("bw", bw_wx_, bw_wh_, bw_b_);
      for (int l = 1; l < config_.rnn_layers; ++l) {
        auto& p = upper_.emplace_back();
        const std::string prefix = "l" + std::to_string(l) + ".";
        add_lstm(prefix + "fw", p[0], p[1], p[2], 2 * h);
        add_lstm(prefix + "bw", p[3], p[4], p[5], 2 * h);
      }
      break;
    case Architecture::TextRcnn:
      add_lstm("fw", fw_wx_, fw_wh_, fw_b_);
      add_lstm("bw", bw_wx_, bw_wh_, bw_b_);
      proj_w_ = &store.add("enc.proj.w", nn::uniform_fan_in(config_.projection_dim, 2 * h + d, init));
      proj_b_ = &store.add("enc.proj.b", Matrix::Zero(config_.projection_dim, 1));
      break;
    case Architecture::TextCnn:
      for (int k : config_.kernel_sizes) {
        const std::string name = "enc.conv" + std::to_string(k);
        conv_w_.push_back(&store.add(name + ".w", nn::uniform_fan_in(config_.channels, k * d, init)));
        conv_b_.push_back(&store.add(name + ".b", Matrix::Zero(config_.channels, 1)));
      }
      break;
    case Architecture::AvgEmbed:
      break;
  }
}

nn::Var Backbone::bilstm_states(nn::Tape& tape, nn::Var x, nn::Var* forward,
                                nn::Var* backward) const {
  nn::Var f = nn::lstm(tape, x, tape.param(*fw_wx_), tape.param(*fw_wh_), tape.param(*fw_b_), false);
  nn::Var b = nn::lstm(tape, x, tape.param(*bw_wx_), tape.param(*bw_wh_), tape.param(*bw_b_), true);
  if (forward) *forward = f;
  if (backward) *backward = b;
  return nn::concat_rows(tape, {f, b});
}

nn::Var Backbone::encode(nn::Tape& tape, const Matrix& input) const {
  if (input.rows() != config_.input_dim) {
    throw ShapeError("input width " + std::to_string(input.rows()) + " does not match backbone " +
                     std::to_string(config_.input_dim));
  }
  switch (config_.architecture) {
    case Architecture::RnnTrans: {
      if (input.cols() == 0) throw ArgumentError("cannot encode an empty document");
      nn::Var states = bilstm_states(tape, tape.constant(input), nullptr, nullptr);
      for (const auto& p : upper_) {
        nn::Var f = nn::lstm(tape, states, tape.param(*p[0]), tape.param(*p[1]), tape.param(*p[2]), false);
        nn::Var b = nn::lstm(tape, states, tape.param(*p[3]), tape.param(*p[4]), tape.param(*p[5]), true);
        states = nn::concat_rows(tape, {f, b});
      }
      return nn::max_over_cols(tape, states);
    }
    case Architecture::TextRcnn: {
      if (input.cols() == 0) throw ArgumentError("cannot encode an empty token stream");
      nn::Var x = tape.constant(input);
      nn::Var f, b;
      bilstm_states(tape, x, &f, &b);
      // Left context of word i is the forward state after word i-1; right
      // context is the backward state after word i+1.
      nn::Var left = nn::shift_right(tape, f);
      nn::Var right = nn::shift_left(tape, b);
      nn::Var triple = nn::concat_rows(tape, {left, x, right});
      nn::Var y = nn::tanh(
          tape, nn::add_bias(tape, nn::matmul(tape, tape.param(*proj_w_), triple), tape.param(*proj_b_)));
      return nn::max_over_cols(tape, y);
    }
    case Architecture::TextCnn: {
      const Eigen::Index min_len = textcnn_min_length(config_);
      Matrix padded = input;
      if (padded.cols() < min_len) {
        padded = Matrix::Zero(input.rows(), min_len);
        padded.leftCols(input.cols()) = input;
      }
      nn::Var x = tape.constant(std::move(padded));
      std::vector<nn::Var> pooled;
      for (std::size_t i = 0; i < conv_w_.size(); ++i) {
        nn::Var c = nn::conv1d(tape, x, tape.param(*conv_w_[i]), tape.param(*conv_b_[i]),
                               config_.kernel_sizes[i]);
        pooled.push_back(nn::max_over_cols(tape, nn::relu(tape, c)));
      }
      return nn::concat_rows(tape, pooled);
    }
    case Architecture::AvgEmbed: {
      if (input.cols() == 0) return tape.constant(Matrix::Zero(config_.input_dim, 1));
      return nn::mean_over_cols(tape, tape.constant(input));
    }
  }
  throw ArgumentError("unknown architecture");
}

Vector Backbone::represent(const Matrix& input) const {
  nn::Tape tape;
  return tape.value(encode(tape, input)).col(0);
}

ClassifierHead::ClassifierHead(int width, nn::ParameterStore& store, Rng& init) : width_(width) {
  w_ = &store.add("cls.w", nn::uniform_fan_in(kNumSeverity, width, init));
  b_ = &store.add("cls.b", Matrix::Zero(kNumSeverity, 1));
}

nn::Var ClassifierHead::logits(nn::Tape& tape, nn::Var rep) const {
  if (tape.value(rep).rows() != width_) throw ShapeError("classifier: representation width mismatch");
  return nn::add_bias(tape, nn::matmul(tape, tape.param(*w_), rep), tape.param(*b_));
}

Vector ClassifierHead::classify(const Vector& rep) const {
  if (rep.size() != width_) {
    throw ShapeError("classifier expects width " + std::to_string(width_) + ", got " +
                     std::to_string(rep.size()));
  }
  return w_->value * rep + b_->value.col(0);
}

RankHead::RankHead(int width, nn::ParameterStore& store, Rng& init) : width_(width) {
  w_ = &store.add("rank.w", nn::uniform_fan_in(kNumRank, 3 * width, init));
  b_ = &store.add("rank.b", Matrix::Zero(kNumRank, 1));
}

nn::Var RankHead::logits(nn::Tape& tape, nn::Var u, nn::Var v) const {
  if (tape.value(u).rows() != width_ || tape.value(v).rows() != width_) {
    throw ShapeError("rank head: representation width mismatch");
  }
  nn::Var feats = nn::concat_rows(tape, {u, v, nn::abs(tape, nn::sub(tape, u, v))});
  return nn::add_bias(tape, nn::matmul(tape, tape.param(*w_), feats), tape.param(*b_));
}

Vector RankHead::rank(const Vector& u, const Vector& v) const {
  if (u.size() != width_ || v.size() != width_) {
    throw ShapeError("rank head expects width " + std::to_string(width_));
  }
  Vector feats(3 * width_);
  feats << u, v, (u - v).cwiseAbs();
  return w_->value * feats + b_->value.col(0);
}

Vector encode_rnn_trans(const Backbone& backbone, const ScriptDocument& doc,
                        const EmbeddingProvider& provider, const DocumentCaps& caps) {
  if (backbone.config().architecture != Architecture::RnnTrans) {
    throw ArgumentError("backbone is not rnn_trans");
  }
  if (provider.kind() != EmbeddingKind::Sentence) throw ArgumentError("rnn_trans needs a sentence provider");
  if (doc.utterances.empty()) throw ArgumentError("cannot encode an empty document");
  return backbone.represent(document_input(provider, doc, caps));
}

Vector encode_textrcnn(const Backbone& backbone, const ScriptDocument& doc,
                       const EmbeddingProvider& words, const DocumentCaps& caps) {
  if (backbone.config().architecture != Architecture::TextRcnn) {
    throw ArgumentError("backbone is not textrcnn");
  }
  return backbone.represent(document_input(words, doc, caps));
}

Vector encode_textcnn(const Backbone& backbone, const ScriptDocument& doc,
                      const EmbeddingProvider& words, const DocumentCaps& caps) {
  if (backbone.config().architecture != Architecture::TextCnn) {
    throw ArgumentError("backbone is not textcnn");
  }
  return backbone.represent(document_input(words, doc, caps));
}

Vector encode_avg(const ScriptDocument& doc, const EmbeddingProvider& words, const DocumentCaps& caps) {
  const Matrix input = document_input(words, doc, caps);
  if (input.cols() == 0) return Vector::Zero(words.dim());
  return input.rowwise().mean();
}

}  // namespace sevrank
