#include "sevrank/embedding.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sevrank/io.hpp"
#include "sevrank/rng.hpp"

namespace sevrank {

namespace fs = std::filesystem;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return tokens;
}

HashEmbedder::HashEmbedder(int dim, EmbeddingKind kind) : dim_(dim), kind_(kind) {
  if (dim <= 0) throw ArgumentError("embedding dim must be positive");
}

Vector HashEmbedder::token_vector(std::string_view token) const {
  Rng rng(splitmix64(fnv1a64(token)));
  Vector v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = rng.normal();
  return v;
}

Vector HashEmbedder::embed(std::string_view text) const {
  if (kind_ == EmbeddingKind::Word) return token_vector(text);
  Vector sum = Vector::Zero(dim_);
  const auto tokens = tokenize(text);
  if (tokens.empty()) return sum;
  for (const auto& t : tokens) sum += token_vector(t);
  sum /= static_cast<double>(tokens.size());
  const double norm = sum.norm();
  if (norm > 0) sum /= norm;
  return sum;
}

std::string HashEmbedder::spec() const {
  return (kind_ == EmbeddingKind::Word ? "hashword:" : "hash:") + std::to_string(dim_);
}

WordEmbeddingTable::WordEmbeddingTable(int dim) : dim_(dim) {
  if (dim <= 0) throw ArgumentError("embedding dim must be positive");
}

WordEmbeddingTable WordEmbeddingTable::load(const fs::path& path, int dim) {
  std::ifstream in(path);
  if (!in) throw ProviderError("cannot open word vector file: " + path.string());
  WordEmbeddingTable table(dim);
  table.source_ = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (io::trim(line).empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    Vector v(dim);
    int n = 0;
    std::string field;
    while (ss >> field) {
      if (n >= dim) {
        ++n;
        break;
      }
      char* end = nullptr;
      v[n] = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size()) {
        throw ParseError("word vector file line " + std::to_string(line_no) +
                         ": non-numeric value '" + field + "'");
      }
      ++n;
    }
    if (n != dim) {
      throw ParseError("word vector file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values");
    }
    table.table_.insert_or_assign(std::move(token), std::move(v));
  }
  return table;
}

std::string WordEmbeddingTable::spec() const {
  return "glove:" + std::to_string(dim_) + ":" + source_;
}

void WordEmbeddingTable::insert(std::string token, Vector v) {
  if (v.size() != dim_) throw ShapeError("word vector has wrong dimension");
  table_.insert_or_assign(std::move(token), std::move(v));
}

bool WordEmbeddingTable::contains(std::string_view token) const {
  return table_.find(std::string(token)) != table_.end();
}

Vector WordEmbeddingTable::lookup(std::string_view token) const {
  auto it = table_.find(std::string(token));
  return it == table_.end() ? Vector::Zero(dim_) : it->second;
}

double WordEmbeddingTable::oov_rate(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) return 0.0;
  std::size_t miss = 0;
  for (const auto& t : tokens) miss += contains(t) ? 0 : 1;
  return static_cast<double>(miss) / static_cast<double>(tokens.size());
}

namespace vector_cache {

std::string key(std::string_view model_tag, std::string_view text) {
  std::string buf(model_tag);
  buf.push_back('\0');
  buf.append(text);
  return io::hex64(fnv1a64(buf)) + io::hex64(fnv1a64(buf, 0x84222325cbf29ce4ULL));
}

fs::path entry_path(const fs::path& dir, std::string_view model_tag, std::string_view text) {
  const std::string k = key(model_tag, text);
  return dir / k.substr(0, 2) / (k + ".vec");
}

static_assert(std::endian::native == std::endian::little, "vector cache assumes little-endian");

void store(const fs::path& file, const Vector& v) {
  std::string buf(kMagic, sizeof kMagic);
  auto put_u32 = [&](std::uint32_t x) { buf.append(reinterpret_cast<const char*>(&x), 4); };
  put_u32(kVersion);
  put_u32(static_cast<std::uint32_t>(v.size()));
  buf.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * static_cast<std::size_t>(v.size()));
  io::write_file_atomic(file, buf);
}

bool load(const fs::path& file, int expected_dim, Vector& out) {
  if (!fs::exists(file)) return false;
  const std::string buf = io::read_file(file);
  const std::size_t header = sizeof kMagic + 8;
  if (buf.size() < header || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw ProviderError("bad vector cache entry: " + file.string());
  }
  std::uint32_t version = 0, dim = 0;
  std::memcpy(&version, buf.data() + 8, 4);
  std::memcpy(&dim, buf.data() + 12, 4);
  if (version != kVersion || static_cast<int>(dim) != expected_dim ||
      buf.size() != header + sizeof(double) * dim) {
    throw ProviderError("vector cache entry version/dimension mismatch: " + file.string());
  }
  out.resize(dim);
  std::memcpy(out.data(), buf.data() + header, sizeof(double) * dim);
  return true;
}

}  // namespace vector_cache

PrecomputedSentenceProvider::PrecomputedSentenceProvider(fs::path cache_dir, int dim,
                                                         std::string model_tag)
    : dir_(std::move(cache_dir)), dim_(dim), tag_(std::move(model_tag)) {
  if (dim <= 0) throw ArgumentError("embedding dim must be positive");
}

Vector PrecomputedSentenceProvider::embed(std::string_view text) const {
  Vector v;
  if (!vector_cache::load(vector_cache::entry_path(dir_, tag_, text), dim_, v)) {
    throw ProviderError("sentence encoder backend unavailable: no cached vector for utterance '" +
                        std::string(text.substr(0, 40)) + "'");
  }
  return v;
}

std::string PrecomputedSentenceProvider::spec() const {
  return "precomputed:" + std::to_string(dim_) + ":" + tag_ + ":" + dir_.string();
}

CachedProvider::CachedProvider(ProviderPtr inner, fs::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
  if (!inner_) throw ArgumentError("null provider");
}

Vector CachedProvider::embed(std::string_view text) const {
  const std::string tag = inner_->spec();
  const fs::path file = vector_cache::entry_path(dir_, tag, text);
  Vector v;
  if (vector_cache::load(file, inner_->dim(), v)) return v;
  v = inner_->embed(text);
  vector_cache::store(file, v);
  return v;
}

ProviderPtr make_provider(const std::string& spec) {
  auto parts = io::split(spec, ':');
  auto parse_dim = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      int d = std::stoi(s, &used);
      if (used != s.size() || d <= 0) throw std::invalid_argument("dim");
      return d;
    } catch (const std::exception&) {
      throw ArgumentError("bad dimension in provider spec '" + spec + "'");
    }
  };
  auto rest_from = [&](std::size_t i) {
    std::string r;
    for (std::size_t j = i; j < parts.size(); ++j) {
      if (j > i) r += ':';
      r += parts[j];
    }
    return r;
  };
  if (parts.size() == 2 && parts[0] == "hash") {
    return std::make_shared<HashEmbedder>(parse_dim(parts[1]), EmbeddingKind::Sentence);
  }
  if (parts.size() == 2 && parts[0] == "hashword") {
    return std::make_shared<HashEmbedder>(parse_dim(parts[1]), EmbeddingKind::Word);
  }
  if (parts.size() >= 3 && parts[0] == "glove") {
    return std::make_shared<WordEmbeddingTable>(
        WordEmbeddingTable::load(rest_from(2), parse_dim(parts[1])));
  }
  if (parts.size() >= 4 && parts[0] == "precomputed") {
    return std::make_shared<PrecomputedSentenceProvider>(rest_from(3), parse_dim(parts[1]),
                                                         parts[2]);
  }
  throw ArgumentError("unknown embedding provider spec '" + spec + "'");
}

std::string truncate_utterance(std::string_view text, std::size_t max_tokens) {
  auto tokens = tokenize(text);
  if (tokens.size() <= max_tokens) return std::string(text);
  std::string out;
  for (std::size_t i = 0; i < max_tokens; ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vector embed_utterance(const EmbeddingProvider& provider, const Utterance& utterance,
                       const DocumentCaps& caps) {
  Vector v = provider.embed(truncate_utterance(utterance.text, caps.max_tokens_per_utterance));
  if (v.size() != provider.dim()) throw ProviderError("provider returned a vector of wrong width");
  return v;
}

std::vector<std::string> document_tokens(const ScriptDocument& doc, const DocumentCaps& caps) {
  std::vector<std::string> out;
  const std::size_t n = std::min(doc.utterances.size(), caps.max_utterances);
  for (std::size_t i = 0; i < n; ++i) {
    auto tokens = tokenize(doc.utterances[i].text);
    if (tokens.size() > caps.max_tokens_per_utterance) tokens.resize(caps.max_tokens_per_utterance);
    for (auto& t : tokens) out.push_back(std::move(t));
  }
  return out;
}

Matrix document_input(const EmbeddingProvider& provider, const ScriptDocument& doc,
                      const DocumentCaps& caps) {
  if (provider.kind() == EmbeddingKind::Sentence) {
    const std::size_t n = std::min(doc.utterances.size(), caps.max_utterances);
    Matrix m(provider.dim(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      m.col(static_cast<Eigen::Index>(i)) = embed_utterance(provider, doc.utterances[i], caps);
    }
    return m;
  }
  const auto tokens = document_tokens(doc, caps);
  Matrix m(provider.dim(), static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = provider.embed(tokens[i]);
  }
  return m;
}

}  // namespace sevrank
