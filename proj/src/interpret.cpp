#include "sevrank/interpret.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sevrank/io.hpp"

namespace sevrank {

Popularity read_popularity(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  try {
    lines = io::read_lines(path);
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  Popularity out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const auto fields = io::split(lines[i], '\t');
    std::int64_t count = 0;
    bool ok = fields.size() == 2;
    if (ok) {
      const std::string_view s = io::trim(fields[1]);
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), count);
      ok = ec == std::errc() && p == s.data() + s.size() && count >= 0;
    }
    if (!ok) {
      // A non-numeric first line is taken as a header.
      if (i == 0) continue;
      throw ParseError("popularity file line " + std::to_string(i + 1) + ": malformed entry");
    }
    out[std::string(io::trim(fields[0]))] = count;
  }
  return out;
}

std::size_t ComparatorSet::size() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.size();
  return n;
}

ComparatorSet select_comparators(const AspectDataset& dataset, const Popularity& popularity,
                                 const ComparatorOptions& options) {
  ComparatorSet set;
  set.aspect = dataset.aspect;
  for (const auto& inst : dataset.instances) {
    if (options.exclude_movie && inst.movie_id() == *options.exclude_movie) continue;
    if (!options.pool.empty()) {
      if (!dataset.split) throw ArgumentError("comparator pool needs a split assignment");
      auto it = dataset.split->find(inst.movie_id());
      if (it == dataset.split->end() || !options.pool.count(it->second)) continue;
    }
    auto pop = popularity.find(inst.movie_id());
    const std::int64_t count = pop == popularity.end() ? 0 : pop->second;
    if (count < options.min_popularity) continue;
    set.levels[to_int(inst.label)].push_back(inst);
  }
  for (int level = 0; level < kNumSeverity; ++level) {
    auto& l = set.levels[level];
    std::sort(l.begin(), l.end(), [](const LabeledInstance& a, const LabeledInstance& b) {
      if (a.votes != b.votes) return a.votes > b.votes;
      return a.movie_id() < b.movie_id();
    });
    if (l.size() > options.per_level) l.resize(options.per_level);
    if (l.size() < options.per_level) {
      set.warnings.push_back("level " + std::string(severity_name(severity_from_int(level))) +
                             ": " + std::to_string(l.size()) + " of " +
                             std::to_string(options.per_level) + " comparators available");
    }
  }
  return set;
}

ComparatorReport comparator_report(const SiameseModel& model, InputCache& inputs,
                                   const ScriptDocument& movie, const ComparatorSet& comparators,
                                   std::optional<Severity> gold) {
  if (!model.ranker()) {
    throw UnsupportedOperation("comparator reports need a multitask model");
  }
  if (comparators.aspect != model.info().aspect) {
    throw DataError("comparators are for aspect '" + std::string(aspect_name(comparators.aspect)) +
                    "' but the model is '" + std::string(aspect_name(model.info().aspect)) + "'");
  }
  ComparatorReport r;
  r.movie_id = movie.movie_id;
  r.title = movie.title;
  r.aspect = comparators.aspect;
  r.gold = gold;
  r.config_hash = model.info().config_hash();
  const Vector rep = model.represent(*inputs.get(movie));
  r.predicted = prediction_from_logits(model.classifier().classify(rep));
  for (int level = 0; level < kNumSeverity; ++level) {
    for (const auto& c : comparators.levels[level]) {
      const Vector other = model.represent(*inputs.get(*c.document));
      r.outcomes[level].push_back(
          {c.movie_id(), c.document->title, c.votes, compare_representations(model, rep, other)});
    }
  }
  return r;
}

std::string ComparatorReport::to_text() const {
  std::ostringstream out;
  out << "movie: " << movie_id;
  if (!title.empty()) out << " (" << title << ")";
  out << "\naspect: " << aspect_name(aspect) << "\ngold: " << (gold ? severity_name(*gold) : "-")
      << "\nprediction: " << severity_name(predicted.label);
  if (gold) out << (predicted.label == *gold ? " (correct)" : " (incorrect)");
  out << "\n\n" << std::left << std::setw(10) << "level" << "outcomes   comparators\n";
  for (Severity s : kAllSeverities) {
    const auto& row = outcomes[to_int(s)];
    std::string glyphs;
    for (const auto& o : row) glyphs += rank_glyph(o.comparison.label);
    if (glyphs.empty()) glyphs = "(none)";
    out << std::setw(10) << severity_name(s) << std::setw(11) << glyphs;
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? ", " : "") << row[i].movie_id;
    out << '\n';
  }
  out << "\n'<' lower than the comparator, '=' equal, '>' higher\n";
  return out.str();
}

std::string ComparatorReport::to_json() const {
  nlohmann::json j;
  j["movie_id"] = movie_id;
  j["title"] = title;
  j["aspect"] = aspect_name(aspect);
  j["gold"] = gold ? nlohmann::json(severity_name(*gold)) : nlohmann::json(nullptr);
  j["prediction"] = severity_name(predicted.label);
  j["probabilities"] = predicted.probabilities;
  j["config_hash"] = config_hash;
  for (Severity s : kAllSeverities) {
    auto& arr = j["comparators"][std::string(severity_name(s))];
    arr = nlohmann::json::array();
    for (const auto& o : outcomes[to_int(s)]) {
      arr.push_back({{"movie_id", o.movie_id},
                     {"title", o.title},
                     {"votes", o.votes},
                     {"outcome", rank_name(o.comparison.label)},
                     {"probabilities", o.comparison.probabilities}});
    }
  }
  return j.dump(2) + "\n";
}

}  // namespace sevrank
