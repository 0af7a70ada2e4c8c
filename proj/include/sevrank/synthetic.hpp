#pragma once

#include <map>
#include <string>

#include "sevrank/corpus.hpp"

namespace sevrank {

// Planted-signal corpus: severity is a staircase function of how many
// utterances are the marker token. Other utterances hold 3-10 random filler
// words.
struct SyntheticConfig {
  std::size_t documents = 600;
  std::size_t min_utterances = 40;
  std::size_t max_utterances = 80;
  std::size_t filler_vocabulary = 400;
  // Marker utterances form one contiguous scene at a random position;
  // otherwise they are scattered uniformly.
  bool scene = true;
  std::string marker = "zzmarker";
  Aspect aspect = Aspect::Profanity;
  std::uint64_t seed = 7;
};

// 0 -> None, 1-2 -> Mild, 3-5 -> Moderate, >= 6 -> Severe.
Severity staircase(std::size_t marker_count);

struct SyntheticCorpus {
  AspectDataset dataset;
  std::map<std::string, std::int64_t> popularity;
  std::map<std::string, std::size_t> marker_counts;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config);

}  // namespace sevrank
