#pragma once

#include "nightseg/types.hpp"

namespace nightseg {

struct FusionParams {
    double alpha_low = 0.3;
    double alpha_high = 0.6;
    double eta = 0.2;

    void validate() const;
};

/// Per-pixel fusion weight map; values are only ever alpha_low or alpha_high.
struct AlphaMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// alpha(p) = alpha_low when one prediction's argmax is a dynamic class on
/// which the other prediction puts probability <= eta; alpha_high otherwise.
AlphaMap compute_alpha(const SoftPredictionMap& s_dark, const SoftPredictionMap& s_day_aligned,
                       const ClassCatalog& catalog, const FusionParams& params);

/// Confidence-adaptive blend: (F_dark*S_dark + alpha*F_day*S_day) /
/// (F_dark + alpha*F_day), confidences recomputed internally as per-pixel
/// max channels. The denominator is >= (1+alpha_low)/C for valid inputs.
SoftPredictionMap fuse(const SoftPredictionMap& s_dark, const SoftPredictionMap& s_day_aligned,
                       const AlphaMap& alpha);

} // namespace nightseg
