#pragma once

#include <utility>

#include "nightseg/types.hpp"

namespace nightseg {

// Tolerance band accepted for per-pixel probability sums on load. Decoded
// float32 maps from external networks rarely sum to exactly 1.
inline constexpr double kSoftSumTolerance = 1e-3;

/// Checks a decoded soft-map buffer against the catalog and returns a map
/// whose pixel sums are renormalized to 1 (within 1e-6, checked in double).
/// Throws ChannelMismatch or NotADistribution.
SoftPredictionMap validate_soft_map(const SoftPredictionMap& raw, const ClassCatalog& catalog);

/// Per-pixel argmax label and its probability. Ties break to the lowest
/// class index.
std::pair<HardLabelMap, ConfidenceMap> argmax_with_confidence(const SoftPredictionMap& s);

} // namespace nightseg
