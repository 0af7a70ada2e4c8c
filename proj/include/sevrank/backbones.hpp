#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "sevrank/embedding.hpp"
#include "sevrank/nn.hpp"

namespace sevrank {

enum class Architecture { RnnTrans, TextRcnn, TextCnn, AvgEmbed };

std::string_view architecture_name(Architecture a);
std::optional<Architecture> parse_architecture(std::string_view s);

struct BackboneConfig {
  Architecture architecture = Architecture::RnnTrans;
  int input_dim = 768;
  int hidden_dim = 200;      // per direction (rnn_trans, textrcnn)
  int rnn_layers = 1;        // stacked Bi-LSTM layers (rnn_trans)
  int projection_dim = 200;  // textrcnn
  std::vector<int> kernel_sizes = {3, 4, 5};
  int channels = 10;
  double dropout = 0.0;

  // Width of the document representation produced by the encoder.
  int representation_width() const;
  // Required provider kind for this architecture.
  EmbeddingKind input_kind() const;
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static BackboneConfig from_map(const std::map<std::string, std::string>& kv);
};

// Document encoder. Parameters are registered in a store owned by the
// caller under the prefix "enc."; encode() may be called any number of
// times on one tape and every call reads the same parameters.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, nn::ParameterStore& store, Rng& init);

  const BackboneConfig& config() const { return config_; }

  // input: one column per time step (utterances or tokens). Returns a
  // representation_width() x 1 node.
  nn::Var encode(nn::Tape& tape, const Matrix& input) const;
  Vector represent(const Matrix& input) const;

 private:
  nn::Var bilstm_states(nn::Tape& tape, nn::Var x, nn::Var* forward, nn::Var* backward) const;

  BackboneConfig config_;
  nn::Parameter* fw_wx_ = nullptr;
  nn::Parameter* fw_wh_ = nullptr;
  nn::Parameter* fw_b_ = nullptr;
  nn::Parameter* bw_wx_ = nullptr;
  nn::Parameter* bw_wh_ = nullptr;
  nn::Parameter* bw_b_ = nullptr;
  nn::Parameter* proj_w_ = nullptr;
  nn::Parameter* proj_b_ = nullptr;
  // Layers above the first: fw wx, wh, b, then bw wx, wh, b.
  std::vector<std::array<nn::Parameter*, 6>> upper_;
  std::vector<nn::Parameter*> conv_w_;
  std::vector<nn::Parameter*> conv_b_;
};

// Affine map from a representation to 4 severity logits.
class ClassifierHead {
 public:
  ClassifierHead(int width, nn::ParameterStore& store, Rng& init);

  nn::Var logits(nn::Tape& tape, nn::Var rep) const;
  Vector classify(const Vector& rep) const;
  int width() const { return width_; }

 private:
  int width_;
  nn::Parameter* w_;
  nn::Parameter* b_;
};

// Affine map from pair features [u; v; |u - v|] to 3 logits ordered
// (LOWER, EQUAL, HIGHER).
class RankHead {
 public:
  RankHead(int width, nn::ParameterStore& store, Rng& init);

  nn::Var logits(nn::Tape& tape, nn::Var u, nn::Var v) const;
  Vector rank(const Vector& u, const Vector& v) const;
  int width() const { return width_; }

 private:
  int width_;
  nn::Parameter* w_;
  nn::Parameter* b_;
};

// Minimum token count for TextCNN input; shorter streams are zero-padded.
int textcnn_min_length(const BackboneConfig& config);

// Convenience wrappers: provider lookup plus encoding in one call.
Vector encode_rnn_trans(const Backbone& backbone, const ScriptDocument& doc,
                        const EmbeddingProvider& provider, const DocumentCaps& caps = {});
Vector encode_textrcnn(const Backbone& backbone, const ScriptDocument& doc,
                       const EmbeddingProvider& words, const DocumentCaps& caps = {});
Vector encode_textcnn(const Backbone& backbone, const ScriptDocument& doc,
                      const EmbeddingProvider& words, const DocumentCaps& caps = {});
Vector encode_avg(const ScriptDocument& doc, const EmbeddingProvider& words,
                  const DocumentCaps& caps = {});

}  // namespace sevrank
