#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sevrank/siamese.hpp"

namespace sevrank {

using Popularity = std::map<std::string, std::int64_t>;

// TSV `movie_id<TAB>rating_count`.
Popularity read_popularity(const std::filesystem::path& path);

struct ComparatorSet {
  Aspect aspect = Aspect::Sex;
  std::array<std::vector<LabeledInstance>, kNumSeverity> levels;
  std::vector<std::string> warnings;

  std::size_t size() const;
};

struct ComparatorOptions {
  std::int64_t min_popularity = 200000;
  std::size_t per_level = 5;
  // Split parts to draw from; empty means every instance regardless of split.
  std::set<SplitPart> pool = {SplitPart::Train, SplitPart::Dev};
  std::optional<std::string> exclude_movie;
};

// Per severity level: movies at or above the popularity threshold, ordered by
// descending vote count then ascending movie_id; the first per_level are kept.
ComparatorSet select_comparators(const AspectDataset& dataset, const Popularity& popularity,
                                 const ComparatorOptions& options = {});

struct ComparatorOutcome {
  std::string movie_id;
  std::string title;
  std::int64_t votes = 0;
  Comparison comparison;  // test movie relative to this comparator
};

struct ComparatorReport {
  std::string movie_id;
  std::string title;
  Aspect aspect = Aspect::Sex;
  std::optional<Severity> gold;
  SeverityPrediction predicted;
  std::array<std::vector<ComparatorOutcome>, kNumSeverity> outcomes;
  std::string config_hash;

  // One row per level with `<`, `=`, `>` per comparator.
  std::string to_text() const;
  std::string to_json() const;
};

ComparatorReport comparator_report(const SiameseModel& model, InputCache& inputs,
                                   const ScriptDocument& movie, const ComparatorSet& comparators,
                                   std::optional<Severity> gold = std::nullopt);

}  // namespace sevrank
