#include "sevrank/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sevrank/io.hpp"
#include "sevrank/rng.hpp"

namespace sevrank {

namespace fs = std::filesystem;

namespace {

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : io::trim(s)) {
    bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (ws) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = io::trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Largest-remainder apportionment of `total` units over `quotas`.
// Largest-remainder apportionment of `total` units, capped per entry. Ties
// on the fractional part go to the lower index.
std::vector<std::size_t> apportion(const std::vector<double>& quotas, std::size_t total,
                                   const std::vector<std::size_t>& cap) {
  const std::size_t n = quotas.size();
  std::vector<std::size_t> alloc(n);
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    alloc[i] = std::min(static_cast<std::size_t>(std::floor(quotas[i] + 1e-9)), cap[i]);
    used += alloc[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (quotas[a] - std::floor(quotas[a] + 1e-9)) > (quotas[b] - std::floor(quotas[b] + 1e-9));
  });
  bool progress = true;
  while (used < total && progress) {
    progress = false;
    for (std::size_t i : order) {
      if (used == total) break;
      if (alloc[i] < cap[i]) {
        ++alloc[i];
        ++used;
        progress = true;
      }
    }
  }
  if (used != total) throw StratificationError("cannot apportion split sizes");
  return alloc;
}

std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }

// Instance positions grouped per class, each group sorted by movie_id.
std::array<std::vector<std::size_t>, kNumSeverity> class_groups(const AspectDataset& dataset) {
  std::array<std::vector<std::size_t>, kNumSeverity> groups;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    groups[to_int(dataset.instances[i].label)].push_back(i);
  }
  for (auto& g : groups) {
    std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      return dataset.instances[a].movie_id() < dataset.instances[b].movie_id();
    });
  }
  return groups;
}

}  // namespace

std::size_t ScriptDocument::word_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += count_words(u.text);
  return n;
}

ScriptDocument make_document(std::string movie_id, std::string title,
                             const std::vector<std::string>& lines) {
  ScriptDocument doc;
  doc.movie_id = std::move(movie_id);
  doc.title = std::move(title);
  for (const auto& line : lines) {
    std::string text = collapse_whitespace(line);
    if (text.empty()) continue;
    doc.utterances.push_back({std::move(text), doc.utterances.size()});
  }
  if (doc.utterances.empty()) {
    throw IngestError("script for movie '" + doc.movie_id + "' has no utterances");
  }
  return doc;
}

std::string_view split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::Train:
      return "train";
    case SplitPart::Dev:
      return "dev";
    case SplitPart::Test:
      return "test";
  }
  return "?";
}

std::optional<SplitPart> parse_split_part(std::string_view s) {
  if (s == "train") return SplitPart::Train;
  if (s == "dev") return SplitPart::Dev;
  if (s == "test") return SplitPart::Test;
  return std::nullopt;
}

std::vector<Severity> AspectDataset::labels() const {
  std::vector<Severity> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.label);
  return out;
}

std::array<std::size_t, kNumSeverity> AspectDataset::class_counts() const {
  std::array<std::size_t, kNumSeverity> counts{};
  for (const auto& inst : instances) ++counts[to_int(inst.label)];
  return counts;
}

AspectDataset AspectDataset::part(SplitPart p) const {
  if (!split) throw ArgumentError("dataset has no split assignment");
  AspectDataset out;
  out.aspect = aspect;
  for (const auto& inst : instances) {
    auto it = split->find(inst.movie_id());
    if (it != split->end() && it->second == p) out.instances.push_back(inst);
  }
  return out;
}

AspectDataset AspectDataset::select(const std::vector<std::size_t>& positions) const {
  AspectDataset out;
  out.aspect = aspect;
  out.instances.reserve(positions.size());
  for (std::size_t pos : positions) out.instances.push_back(instances.at(pos));
  return out;
}

std::string label_column(Aspect a) { return std::string(aspect_name(a)) + "_label"; }
std::string votes_column(Aspect a) { return std::string(aspect_name(a)) + "_votes"; }

Corpus load_corpus(const fs::path& manifest_path, const fs::path& scripts_dir,
                   std::vector<std::string>* skipped) {
  if (!fs::is_regular_file(manifest_path)) {
    throw IngestError("manifest not found: " + manifest_path.string());
  }
  if (!fs::is_directory(scripts_dir)) {
    throw IngestError("scripts directory not found: " + scripts_dir.string());
  }
  std::vector<std::string> lines;
  try {
    lines = io::read_lines(manifest_path);
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  if (lines.empty()) throw ParseError("manifest is empty (header row required)");

  const auto header = io::split(lines[0], '\t');
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(io::trim(header[i]))] = i;
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ParseError("manifest header lacks column '" + name + "'");
    return it->second;
  };
  const std::size_t id_col = need("movie_id");
  const std::size_t title_col = need("title");
  std::array<std::size_t, kNumAspects> label_cols{}, votes_cols{};
  for (Aspect a : kAllAspects) {
    label_cols[to_int(a)] = need(label_column(a));
    votes_cols[to_int(a)] = need(votes_column(a));
  }

  Corpus corpus;
  for (Aspect a : kAllAspects) corpus[a].aspect = a;

  std::unordered_set<std::string> seen;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const std::size_t line_no = row + 1;
    if (io::trim(lines[row]).empty()) continue;
    auto fields = io::split(lines[row], '\t');
    if (fields.size() < header.size()) fields.resize(header.size());
    std::string movie_id(io::trim(fields[id_col]));
    if (movie_id.empty()) throw ParseError("row " + std::to_string(line_no) + ": empty movie_id");
    if (!seen.insert(movie_id).second) {
      throw ParseError("row " + std::to_string(line_no) + ": duplicate movie_id '" + movie_id + "'");
    }

    struct Parsed {
      Aspect aspect;
      Severity label;
      std::int64_t votes;
    };
    std::vector<Parsed> labels;
    for (Aspect a : kAllAspects) {
      std::string_view tok = io::trim(fields[label_cols[to_int(a)]]);
      if (tok.empty()) continue;
      auto sev = parse_severity(tok);
      if (!sev) {
        throw ParseError("row " + std::to_string(line_no) + ": malformed " + label_column(a) +
                         " '" + std::string(tok) + "'");
      }
      auto votes = parse_int(fields[votes_cols[to_int(a)]]);
      if (!votes || *votes < 0) {
        throw ParseError("row " + std::to_string(line_no) + ": malformed " + votes_column(a) +
                         " '" + fields[votes_cols[to_int(a)]] + "'");
      }
      labels.push_back({a, *sev, *votes});
    }
    if (labels.empty()) continue;

    const fs::path script = scripts_dir / (movie_id + ".txt");
    if (!fs::exists(script)) {
      if (skipped) skipped->push_back(movie_id);
      continue;
    }
    std::vector<std::string> script_lines;
    try {
      script_lines = io::read_lines(script);
    } catch (const Error&) {
      throw IngestError("unreadable script file for movie '" + movie_id + "'");
    }
    auto doc = std::make_shared<const ScriptDocument>(
        make_document(movie_id, std::string(io::trim(fields[title_col])), script_lines));
    for (const auto& p : labels) {
      corpus[p.aspect].instances.push_back({doc, p.aspect, p.label, p.votes});
    }
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& manifest_path, const fs::path& scripts_dir) {
  struct Row {
    DocumentPtr doc;
    std::array<std::optional<std::pair<Severity, std::int64_t>>, kNumAspects> labels;
  };
  std::map<std::string, Row> rows;
  for (const auto& [aspect, ds] : corpus) {
    for (const auto& inst : ds.instances) {
      auto& row = rows[inst.movie_id()];
      row.doc = inst.document;
      row.labels[to_int(aspect)] = std::make_pair(inst.label, inst.votes);
    }
  }
  std::ostringstream out;
  out << "movie_id\ttitle";
  for (Aspect a : kAllAspects) out << '\t' << label_column(a) << '\t' << votes_column(a);
  out << '\n';
  fs::create_directories(scripts_dir);
  for (const auto& [id, row] : rows) {
    out << id << '\t' << row.doc->title;
    for (const auto& l : row.labels) {
      if (l) {
        out << '\t' << severity_name(l->first) << '\t' << l->second;
      } else {
        out << "\t\t";
      }
    }
    out << '\n';
    std::string text;
    for (const auto& u : row.doc->utterances) {
      text += u.text;
      text += '\n';
    }
    io::write_file_atomic(scripts_dir / (id + ".txt"), text);
  }
  io::write_file_atomic(manifest_path, out.str());
}

AspectDataset filter_by_votes(const AspectDataset& dataset, std::int64_t min_votes) {
  if (min_votes < 1) throw ArgumentError("min_votes must be >= 1");
  AspectDataset out;
  out.aspect = dataset.aspect;
  for (const auto& inst : dataset.instances) {
    if (inst.votes >= min_votes) out.instances.push_back(inst);
  }
  if (dataset.split) {
    SplitAssignment kept;
    for (const auto& inst : out.instances) {
      auto it = dataset.split->find(inst.movie_id());
      if (it != dataset.split->end()) kept.emplace(it->first, it->second);
    }
    out.split = std::move(kept);
  }
  return out;
}

AspectDataset stratified_split(const AspectDataset& dataset, const SplitRatios& ratios,
                               std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.dev <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw ArgumentError("split ratios must be positive and sum to 1");
  }
  auto groups = class_groups(dataset);
  for (int c = 0; c < kNumSeverity; ++c) {
    if (!groups[c].empty() && groups[c].size() < 3) {
      throw StratificationError("class " + std::string(severity_name(severity_from_int(c))) +
                                " has " + std::to_string(groups[c].size()) +
                                " instances; stratification needs at least 3");
    }
  }
  const std::size_t n = dataset.size();
  if (n == 0) throw StratificationError("cannot split an empty dataset");

  const std::size_t n_test = ceil_count(ratios.test * static_cast<double>(n));
  const std::size_t n_dev =
      ceil_count(ratios.dev / (ratios.dev + ratios.train) * static_cast<double>(n - n_test));
  const std::size_t n_hold = n_test + n_dev;

  std::vector<double> quotas(kNumSeverity);
  std::vector<std::size_t> sizes(kNumSeverity);
  for (int c = 0; c < kNumSeverity; ++c) {
    sizes[c] = groups[c].size();
    quotas[c] = static_cast<double>(sizes[c]) * static_cast<double>(n_hold) / static_cast<double>(n);
  }
  const auto hold = apportion(quotas, n_hold, sizes);

  std::vector<double> test_quotas(kNumSeverity);
  for (int c = 0; c < kNumSeverity; ++c) {
    test_quotas[c] = n_hold == 0 ? 0.0
                                 : static_cast<double>(hold[c]) * static_cast<double>(n_test) /
                                       static_cast<double>(n_hold);
  }
  const auto test = apportion(test_quotas, n_test, hold);

  Rng rng(derive_seed(seed, "stratified_split"));
  SplitAssignment assignment;
  for (int c = 0; c < kNumSeverity; ++c) {
    auto& g = groups[c];
    rng.shuffle(std::span<std::size_t>(g));
    for (std::size_t i = 0; i < g.size(); ++i) {
      SplitPart part = i < test[c] ? SplitPart::Test
                       : i < hold[c] ? SplitPart::Dev
                                     : SplitPart::Train;
      assignment[dataset.instances[g[i]].movie_id()] = part;
    }
  }
  AspectDataset out = dataset;
  out.split = std::move(assignment);
  return out;
}

std::vector<FoldAssignment> kfold_split(const AspectDataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("k must be at least 2");
  if (static_cast<std::size_t>(k) > dataset.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " exceeds dataset size " +
                        std::to_string(dataset.size()));
  }
  auto groups = class_groups(dataset);
  Rng rng(derive_seed(seed, "kfold_split"));
  std::vector<int> fold_of(dataset.size());
  std::size_t cursor = 0;
  for (auto& g : groups) {
    rng.shuffle(std::span<std::size_t>(g));
    for (std::size_t pos : g) fold_of[pos] = static_cast<int>(cursor++ % static_cast<std::size_t>(k));
  }
  std::vector<FoldAssignment> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

void write_split(const AspectDataset& dataset, const fs::path& path) {
  if (!dataset.split) throw ArgumentError("dataset has no split assignment");
  std::ostringstream out;
  for (const auto& inst : dataset.instances) {
    out << inst.movie_id() << '\t' << split_part_name(dataset.split->at(inst.movie_id())) << '\n';
  }
  io::write_file_atomic(path, out.str());
}

SplitAssignment read_split(const fs::path& path) {
  std::vector<std::string> lines;
  try {
    lines = io::read_lines(path);
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  SplitAssignment out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    auto fields = io::split(lines[i], '\t');
    std::optional<SplitPart> part;
    if (fields.size() == 2) part = parse_split_part(io::trim(fields[1]));
    if (!part) throw ParseError("split file line " + std::to_string(i + 1) + ": malformed entry");
    if (!out.emplace(std::string(io::trim(fields[0])), *part).second) {
      throw ParseError("split file line " + std::to_string(i + 1) + ": duplicate movie_id");
    }
  }
  return out;
}

AspectDataset apply_split(const AspectDataset& dataset, const SplitAssignment& assignment) {
  SplitAssignment kept;
  for (const auto& inst : dataset.instances) {
    auto it = assignment.find(inst.movie_id());
    if (it == assignment.end()) {
      throw DataError("split assignment does not cover movie '" + inst.movie_id() + "'");
    }
    kept.emplace(it->first, it->second);
  }
  AspectDataset out = dataset;
  out.split = std::move(kept);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ArgumentError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

CorpusStats corpus_stats(const AspectDataset& dataset) {
  if (dataset.empty()) throw ArgumentError("corpus_stats on an empty dataset");
  CorpusStats stats;
  stats.aspect = dataset.aspect;
  stats.instances = dataset.size();
  stats.class_counts = dataset.class_counts();
  std::vector<double> lengths;
  std::unordered_set<std::string> vocab;
  for (const auto& inst : dataset.instances) {
    lengths.push_back(static_cast<double>(inst.document->word_count()));
    for (const auto& u : inst.document->utterances) {
      std::istringstream ss(u.text);
      std::string w;
      while (ss >> w) {
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        vocab.insert(std::move(w));
      }
    }
  }
  stats.length_words.min = quantile(lengths, 0.0);
  stats.length_words.q25 = quantile(lengths, 0.25);
  stats.length_words.median = quantile(lengths, 0.5);
  stats.length_words.q75 = quantile(lengths, 0.75);
  stats.length_words.max = quantile(lengths, 1.0);
  stats.length_words.mean =
      std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(lengths.size());
  stats.vocabulary_size = vocab.size();
  return stats;
}

std::string CorpusStats::to_text() const {
  std::ostringstream out;
  out << "aspect: " << aspect_name(aspect) << '\n';
  out << "instances: " << instances << '\n';
  for (Severity s : kAllSeverities) {
    out << "  " << severity_name(s) << ": " << class_counts[to_int(s)] << '\n';
  }
  out << "length (words): min " << length_words.min << ", q25 " << length_words.q25 << ", median "
      << length_words.median << ", q75 " << length_words.q75 << ", max " << length_words.max
      << ", mean " << length_words.mean << '\n';
  out << "vocabulary: " << vocabulary_size << '\n';
  return out.str();
}

std::string CorpusStats::to_json() const {
  nlohmann::json j;
  j["aspect"] = aspect_name(aspect);
  j["instances"] = instances;
  for (Severity s : kAllSeverities) {
    j["class_counts"][std::string(severity_name(s))] = class_counts[to_int(s)];
  }
  j["length_words"] = {{"min", length_words.min},       {"q25", length_words.q25},
                       {"median", length_words.median}, {"q75", length_words.q75},
                       {"max", length_words.max},       {"mean", length_words.mean}};
  j["vocabulary_size"] = vocabulary_size;
  return j.dump(2) + "\n";
}

}  // namespace sevrank
