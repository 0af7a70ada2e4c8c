#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sevrank/types.hpp"

namespace sevrank {

struct Utterance {
  std::string text;
  std::size_t index = 0;
};

struct ScriptDocument {
  std::string movie_id;
  std::string title;
  std::vector<Utterance> utterances;

  // Whitespace-delimited words summed over all utterances.
  std::size_t word_count() const;
};

using DocumentPtr = std::shared_ptr<const ScriptDocument>;

// Builds a document from raw lines: whitespace is trimmed and collapsed,
// blank lines are dropped, indices are renumbered from 0. Throws IngestError
// if nothing remains.
ScriptDocument make_document(std::string movie_id, std::string title,
                             const std::vector<std::string>& lines);

struct LabeledInstance {
  DocumentPtr document;
  Aspect aspect = Aspect::Sex;
  Severity label = Severity::None;
  std::int64_t votes = 0;

  const std::string& movie_id() const { return document->movie_id; }
};

enum class SplitPart : std::uint8_t { Train = 0, Dev = 1, Test = 2 };

std::string_view split_part_name(SplitPart p);
std::optional<SplitPart> parse_split_part(std::string_view s);

using SplitAssignment = std::map<std::string, SplitPart>;

struct AspectDataset {
  Aspect aspect = Aspect::Sex;
  std::vector<LabeledInstance> instances;
  std::optional<SplitAssignment> split;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  std::vector<Severity> labels() const;
  std::array<std::size_t, kNumSeverity> class_counts() const;

  // Instances of one split part (order preserved); the result carries no split.
  AspectDataset part(SplitPart p) const;
  // Instances at the given positions, in the given order.
  AspectDataset select(const std::vector<std::size_t>& positions) const;
};

using Corpus = std::map<Aspect, AspectDataset>;

// Manifest column names for an aspect, e.g. "violence_label" / "violence_votes".
std::string label_column(Aspect a);
std::string votes_column(Aspect a);

// Reads the tab-separated manifest and `<scripts_dir>/<movie_id>.txt` files.
// Rows whose script file does not exist are skipped; `skipped`, when given,
// receives their movie ids.
Corpus load_corpus(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& scripts_dir,
                   std::vector<std::string>* skipped = nullptr);

// Inverse of load_corpus: one manifest row per movie appearing in any aspect.
void write_corpus(const Corpus& corpus, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& scripts_dir);

AspectDataset filter_by_votes(const AspectDataset& dataset, std::int64_t min_votes = 5);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

// Seeded stratified train/dev/test assignment. Part totals are
// test = ceil(test * N) and dev = ceil(dev / (dev + train) * (N - test)); each
// class receives its proportional share of the held-out parts by largest
// remainder, and the rest goes to train.
AspectDataset stratified_split(const AspectDataset& dataset, const SplitRatios& ratios,
                               std::uint64_t seed);

struct FoldAssignment {
  std::vector<std::size_t> train;  // positions into dataset.instances
  std::vector<std::size_t> test;
};

std::vector<FoldAssignment> kfold_split(const AspectDataset& dataset, int k, std::uint64_t seed);

// Split file: one `movie_id<TAB>part` line per instance.
void write_split(const AspectDataset& dataset, const std::filesystem::path& path);
SplitAssignment read_split(const std::filesystem::path& path);
// Attaches an assignment; every instance must be covered.
AspectDataset apply_split(const AspectDataset& dataset, const SplitAssignment& assignment);

struct LengthQuantiles {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0, mean = 0;
};

struct CorpusStats {
  Aspect aspect = Aspect::Sex;
  std::size_t instances = 0;
  std::array<std::size_t, kNumSeverity> class_counts{};
  LengthQuantiles length_words;
  std::size_t vocabulary_size = 0;

  std::string to_text() const;
  std::string to_json() const;
};

CorpusStats corpus_stats(const AspectDataset& dataset);

// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace sevrank
