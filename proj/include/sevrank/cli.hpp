#pragma once

#include <iosfwd>

namespace sevrank::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kTrainingError = 3;

// Environment variable overriding the sentence-vector cache directory.
inline constexpr const char* kCacheEnv = "SEVRANK_CACHE_DIR";

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sevrank::cli
