#include "sevrank/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "sevrank/rng.hpp"

namespace sevrank {

Severity staircase(std::size_t marker_count) {
  if (marker_count == 0) return Severity::None;
  if (marker_count <= 2) return Severity::Mild;
  if (marker_count <= 5) return Severity::Moderate;
  return Severity::Severe;
}

namespace {

std::string filler_word(std::size_t i) {
  // Letters only, so the tokenizer keeps each word whole.
  std::string w = "w";
  do {
    w.push_back(static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return w;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.documents == 0 || config.min_utterances == 0 ||
      config.max_utterances < config.min_utterances || config.filler_vocabulary == 0) {
    throw ArgumentError("invalid synthetic corpus configuration");
  }
  // Marker counts drawn per level: None 0, Mild 1-2, Moderate 3-5, Severe 6-9.
  constexpr std::size_t kLo[kNumSeverity] = {0, 1, 3, 6};
  constexpr std::size_t kHi[kNumSeverity] = {0, 2, 5, 9};
  if (config.min_utterances < kHi[kNumSeverity - 1]) {
    throw ArgumentError("documents too short to hold the marker counts");
  }

  Rng rng(derive_seed(config.seed, "synthetic"));
  auto random_line = [&] {
    const std::size_t words = 3 + rng.uniform_index(8);
    std::string line;
    for (std::size_t w = 0; w < words; ++w) {
      line += (w ? " " : "") + filler_word(rng.uniform_index(config.filler_vocabulary));
    }
    return line;
  };
  SyntheticCorpus out;
  out.dataset.aspect = config.aspect;
  for (std::size_t d = 0; d < config.documents; ++d) {
    const int level = static_cast<int>(rng.uniform_index(kNumSeverity));
    const std::size_t markers = kLo[level] + rng.uniform_index(kHi[level] - kLo[level] + 1);
    const std::size_t length =
        config.min_utterances + rng.uniform_index(config.max_utterances - config.min_utterances + 1);

    std::vector<bool> has_marker(length, false);
    if (config.scene) {
      const std::size_t start = rng.uniform_index(length - markers + 1);
      for (std::size_t i = 0; i < markers; ++i) has_marker[start + i] = true;
    } else {
      std::vector<std::size_t> slots(length);
      for (std::size_t i = 0; i < length; ++i) slots[i] = i;
      rng.shuffle(std::span<std::size_t>(slots));
      for (std::size_t i = 0; i < markers; ++i) has_marker[slots[i]] = true;
    }

    std::vector<std::string> lines;
    for (std::size_t u = 0; u < length; ++u) {
      if (has_marker[u]) {
        lines.push_back(config.marker);
      } else {
        lines.push_back(random_line());
      }
    }

    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", d);
    auto doc = std::make_shared<const ScriptDocument>(
        make_document(id, "Synthetic " + std::string(id), lines));
    const Severity label = staircase(markers);
    const auto votes = static_cast<std::int64_t>(5 + rng.uniform_index(500));
    out.dataset.instances.push_back({doc, config.aspect, label, votes});
    out.popularity[id] = static_cast<std::int64_t>(rng.uniform_index(400000));
    out.marker_counts[id] = markers;
  }
  return out;
}

}  // namespace sevrank
