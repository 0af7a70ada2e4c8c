#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sevrank/types.hpp"

namespace sevrank {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumSeverity>, kNumSeverity>;

// Entry (g, p) counts instances with gold g predicted as p.
ConfusionMatrix confusion(const std::vector<Severity>& gold, const std::vector<Severity>& pred);

// F1 per class; a class whose precision and recall denominators are both
// zero scores 0.
std::array<double, kNumSeverity> per_class_f1(const ConfusionMatrix& cm);

// Unweighted mean of the four per-class F1 scores.
double macro_f1(const std::vector<Severity>& gold, const std::vector<Severity>& pred);
double macro_f1(const ConfusionMatrix& cm);

}  // namespace sevrank
