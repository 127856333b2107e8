#include "nightseg/fusion.hpp"

#include <cassert>

#include "nightseg/parallel.hpp"

namespace nightseg {

void FusionParams::validate() const {
    if (!(alpha_low > 0.0) || !(alpha_low <= alpha_high) || !(alpha_high <= 1.0))
        raise(ErrorCode::InvalidArgument, "require 0 < alpha_low <= alpha_high <= 1");
    if (!(eta >= 0.0) || !(eta <= 1.0))
        raise(ErrorCode::InvalidArgument, "require 0 <= eta <= 1");
}

AlphaMap compute_alpha(const SoftPredictionMap& s_dark, const SoftPredictionMap& s_day_aligned,
                       const ClassCatalog& catalog, const FusionParams& params) {
    params.validate();
    if (!s_dark.same_shape(s_day_aligned))
        raise(ErrorCode::DimensionMismatch, "prediction shapes differ");
    if (s_dark.channels != catalog.num_classes)
        raise(ErrorCode::ChannelMismatch, "channel count does not match catalog");

    const int c = s_dark.channels;
    std::vector<std::uint8_t> dynamic(c, 0);
    for (int d : catalog.dynamic_classes) dynamic[d] = 1;

    AlphaMap alpha;
    alpha.height = s_dark.height;
    alpha.width = s_dark.width;
    alpha.values.resize(s_dark.pixel_count());
    const float a_low = static_cast<float>(params.alpha_low);
    const float a_high = static_cast<float>(params.alpha_high);
    const float eta = static_cast<float>(params.eta);

    parallel_for(static_cast<std::int64_t>(s_dark.pixel_count()),
                 [&](std::int64_t pb, std::int64_t pe) {
                     for (std::int64_t p = pb; p < pe; ++p) {
                         const float* day = s_day_aligned.values.data() + p * c;
                         const float* dark = s_dark.values.data() + p * c;
                         int c1 = 0, c2 = 0;
                         for (int i = 1; i < c; ++i) {
                             if (day[i] > day[c1]) c1 = i;
                             if (dark[i] > dark[c2]) c2 = i;
                         }
                         const bool disagree = (dynamic[c1] && dark[c1] <= eta) ||
                                               (dynamic[c2] && day[c2] <= eta);
                         alpha.values[p] = disagree ? a_low : a_high;
                     }
                 });
    return alpha;
}

SoftPredictionMap fuse(const SoftPredictionMap& s_dark, const SoftPredictionMap& s_day_aligned,
                       const AlphaMap& alpha) {
    if (!s_dark.same_shape(s_day_aligned))
        raise(ErrorCode::DimensionMismatch, "prediction shapes differ");
    if (alpha.height != s_dark.height || alpha.width != s_dark.width)
        raise(ErrorCode::DimensionMismatch, "alpha map shape differs");

    const int c = s_dark.channels;
    SoftPredictionMap out(s_dark.height, s_dark.width, c);
    parallel_for(static_cast<std::int64_t>(s_dark.pixel_count()),
                 [&](std::int64_t pb, std::int64_t pe) {
                     for (std::int64_t p = pb; p < pe; ++p) {
                         const float* dark = s_dark.values.data() + p * c;
                         const float* day = s_day_aligned.values.data() + p * c;
                         double f_dark = dark[0], f_day = day[0];
                         for (int i = 1; i < c; ++i) {
                             if (dark[i] > f_dark) f_dark = dark[i];
                             if (day[i] > f_day) f_day = day[i];
                         }
                         const double a = alpha.values[p];
                         const double denom = f_dark + a * f_day;
                         assert(denom > 0.0);
                         const double w_dark = f_dark / denom;
                         const double w_day = a * f_day / denom;
                         float* ov = out.values.data() + p * c;
                         for (int i = 0; i < c; ++i)
                             ov[i] = static_cast<float>(w_dark * dark[i] + w_day * day[i]);
                     }
                 });
    return out;
}

} // namespace nightseg
