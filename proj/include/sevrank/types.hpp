#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sevrank {

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data-side failures (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};
class IngestError : public DataError {
 public:
  using DataError::DataError;
};
class ParseError : public DataError {
 public:
  using DataError::DataError;
};
class StratificationError : public DataError {
 public:
  using DataError::DataError;
};
class ProviderError : public DataError {
 public:
  using DataError::DataError;
};
class ModelFormatError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};
class ArgumentError : public Error {
 public:
  using Error::Error;
};
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Ordinal severity: None < Mild < Moderate < Severe.
enum class Severity : std::uint8_t { None = 0, Mild = 1, Moderate = 2, Severe = 3 };

inline constexpr int kNumSeverity = 4;
inline constexpr std::array<Severity, kNumSeverity> kAllSeverities = {
    Severity::None, Severity::Mild, Severity::Moderate, Severity::Severe};

constexpr int to_int(Severity s) { return static_cast<int>(s); }
Severity severity_from_int(int v);
std::string_view severity_name(Severity s);
std::optional<Severity> parse_severity(std::string_view token);

enum class Aspect : std::uint8_t { Sex = 0, Violence, Profanity, Substance, Frightening };

inline constexpr int kNumAspects = 5;
inline constexpr std::array<Aspect, kNumAspects> kAllAspects = {
    Aspect::Sex, Aspect::Violence, Aspect::Profanity, Aspect::Substance, Aspect::Frightening};

constexpr int to_int(Aspect a) { return static_cast<int>(a); }
// Serialization names are lowercase: sex, violence, profanity, substance, frightening.
std::string_view aspect_name(Aspect a);
std::optional<Aspect> parse_aspect(std::string_view name);

// Severity of the left item relative to the right one.
enum class RankLabel : std::uint8_t { Lower = 0, Equal = 1, Higher = 2 };

inline constexpr int kNumRank = 3;

constexpr int to_int(RankLabel r) { return static_cast<int>(r); }
std::string_view rank_name(RankLabel r);
// '<', '=', '>'
char rank_glyph(RankLabel r);
constexpr RankLabel swap_rank(RankLabel r) {
  return r == RankLabel::Lower ? RankLabel::Higher
         : r == RankLabel::Higher ? RankLabel::Lower
                                  : RankLabel::Equal;
}

}  // namespace sevrank
