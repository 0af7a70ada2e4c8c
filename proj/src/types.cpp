#include "sevrank/types.hpp"

#include <algorithm>
#include <cctype>

namespace sevrank {

namespace {

constexpr std::array<std::string_view, kNumSeverity> kSeverityNames = {"None", "Mild", "Moderate",
                                                                       "Severe"};
constexpr std::array<std::string_view, kNumAspects> kAspectNames = {
    "sex", "violence", "profanity", "substance", "frightening"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

Severity severity_from_int(int v) {
  if (v < 0 || v >= kNumSeverity) {
    throw ArgumentError("severity value out of range: " + std::to_string(v));
  }
  return static_cast<Severity>(v);
}

std::string_view severity_name(Severity s) { return kSeverityNames[to_int(s)]; }

std::optional<Severity> parse_severity(std::string_view token) {
  for (int i = 0; i < kNumSeverity; ++i) {
    if (iequals(token, kSeverityNames[i])) return static_cast<Severity>(i);
  }
  if (token.size() == 1 && token[0] >= '0' && token[0] <= '3') {
    return static_cast<Severity>(token[0] - '0');
  }
  return std::nullopt;
}

std::string_view aspect_name(Aspect a) { return kAspectNames[to_int(a)]; }

std::optional<Aspect> parse_aspect(std::string_view name) {
  for (int i = 0; i < kNumAspects; ++i) {
    if (iequals(name, kAspectNames[i])) return static_cast<Aspect>(i);
  }
  return std::nullopt;
}

std::string_view rank_name(RankLabel r) {
  switch (r) {
    case RankLabel::Lower:
      return "LOWER";
    case RankLabel::Equal:
      return "EQUAL";
    case RankLabel::Higher:
      return "HIGHER";
  }
  return "?";
}

char rank_glyph(RankLabel r) {
  switch (r) {
    case RankLabel::Lower:
      return '<';
    case RankLabel::Equal:
      return '=';
    case RankLabel::Higher:
      return '>';
  }
  return '?';
}

}  // namespace sevrank
