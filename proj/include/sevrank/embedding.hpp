#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sevrank/corpus.hpp"

namespace sevrank {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
// character as its own token. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> tokenize(std::string_view text);

enum class EmbeddingKind { Sentence, Word };

// Maps text to a fixed-width vector. Sentence providers take a whole
// utterance; word providers take a single token. Implementations are
// read-only after construction and deterministic.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  virtual EmbeddingKind kind() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
  // Provider spec string, stored in model files (see make_provider).
  virtual std::string spec() const = 0;
};

using ProviderPtr = std::shared_ptr<const EmbeddingProvider>;

// Test embedder with no external data. A token's vector is drawn from a
// generator seeded by the token's 64-bit hash (unit-variance coordinates).
// In sentence mode an utterance is the L2-normalized mean of its token
// vectors; an utterance without tokens maps to the zero vector.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(int dim, EmbeddingKind kind = EmbeddingKind::Sentence);

  int dim() const override { return dim_; }
  EmbeddingKind kind() const override { return kind_; }
  Vector embed(std::string_view text) const override;
  std::string spec() const override;

  Vector token_vector(std::string_view token) const;

 private:
  int dim_;
  EmbeddingKind kind_;
};

// Token -> vector table in the common `token v1 ... vN` text layout.
// Lookups never fail: absent tokens resolve to the zero vector.
class WordEmbeddingTable final : public EmbeddingProvider {
 public:
  explicit WordEmbeddingTable(int dim);

  static WordEmbeddingTable load(const std::filesystem::path& path, int dim = 300);

  int dim() const override { return dim_; }
  EmbeddingKind kind() const override { return EmbeddingKind::Word; }
  Vector embed(std::string_view token) const override { return lookup(token); }
  std::string spec() const override;

  void insert(std::string token, Vector v);
  bool contains(std::string_view token) const;
  Vector lookup(std::string_view token) const;
  std::size_t size() const { return table_.size(); }
  // Fraction of tokens absent from the table (0 for an empty list).
  double oov_rate(const std::vector<std::string>& tokens) const;

 private:
  int dim_;
  std::string source_;
  std::unordered_map<std::string, Vector> table_;
};

// Sentence provider backed by a cache of precomputed vectors, e.g. produced
// offline by a pretrained sentence encoder. A cache miss is a ProviderError.
class PrecomputedSentenceProvider final : public EmbeddingProvider {
 public:
  PrecomputedSentenceProvider(std::filesystem::path cache_dir, int dim, std::string model_tag);

  int dim() const override { return dim_; }
  EmbeddingKind kind() const override { return EmbeddingKind::Sentence; }
  Vector embed(std::string_view text) const override;
  std::string spec() const override;

 private:
  std::filesystem::path dir_;
  int dim_;
  std::string tag_;
};

// Wraps a sentence provider with an on-disk cache keyed by content hash.
class CachedProvider final : public EmbeddingProvider {
 public:
  CachedProvider(ProviderPtr inner, std::filesystem::path cache_dir);

  int dim() const override { return inner_->dim(); }
  EmbeddingKind kind() const override { return inner_->kind(); }
  Vector embed(std::string_view text) const override;
  std::string spec() const override { return inner_->spec(); }

 private:
  ProviderPtr inner_;
  std::filesystem::path dir_;
};

// Vector cache files: magic "SEVRKEMB", u32 format version, u32 dim, then
// dim little-endian doubles. One file per key.
namespace vector_cache {
inline constexpr char kMagic[8] = {'S', 'E', 'V', 'R', 'K', 'E', 'M', 'B'};
inline constexpr std::uint32_t kVersion = 1;
std::string key(std::string_view model_tag, std::string_view text);
std::filesystem::path entry_path(const std::filesystem::path& dir, std::string_view model_tag,
                                 std::string_view text);
void store(const std::filesystem::path& file, const Vector& v);
// Returns false if the file is absent. Throws ProviderError on a bad header.
bool load(const std::filesystem::path& file, int expected_dim, Vector& out);
}  // namespace vector_cache

// Builds a provider from its spec string:
//   hash:<dim>                        sentence-mode hash embedder
//   hashword:<dim>                    word-mode hash embedder
//   glove:<dim>:<path>                word vectors from a text file
//   precomputed:<dim>:<tag>:<dir>     cached sentence vectors
ProviderPtr make_provider(const std::string& spec);

struct DocumentCaps {
  std::size_t max_utterances = 2000;
  std::size_t max_tokens_per_utterance = 128;
};

// Utterance text limited to its first max_tokens tokens.
std::string truncate_utterance(std::string_view text, std::size_t max_tokens);

Vector embed_utterance(const EmbeddingProvider& provider, const Utterance& utterance,
                       const DocumentCaps& caps = {});

// Token stream of a document (utterances concatenated), with caps applied.
std::vector<std::string> document_tokens(const ScriptDocument& doc, const DocumentCaps& caps = {});

// Model input matrix with one column per time step: utterance embeddings for a
// sentence provider, token vectors for a word provider.
Matrix document_input(const EmbeddingProvider& provider, const ScriptDocument& doc,
                      const DocumentCaps& caps = {});

}  // namespace sevrank
