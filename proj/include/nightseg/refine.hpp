#pragma once

#include <string>

#include "nightseg/bilateral.hpp"
#include "nightseg/fusion.hpp"
#include "nightseg/geometry.hpp"
#include "nightseg/types.hpp"

namespace nightseg {

enum class AlignmentMode {
    Bilateral,
    Warp,
    WarpWithFallback,
};

const char* alignment_mode_name(AlignmentMode mode);
AlignmentMode parse_alignment_mode(const std::string& name);

struct RefineConfig {
    AlignmentMode mode = AlignmentMode::WarpWithFallback;
    int min_inliers = 14;
    BilateralParams bilateral;
    FusionParams fusion;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RefineReport {
    AlignmentMode requested = AlignmentMode::Bilateral;
    AlignmentMode used = AlignmentMode::Bilateral;
    int inlier_count = -1;           // -1: no motion estimation ran
    std::string fallback_reason;     // empty unless a fallback happened
};

struct RefineResult {
    SoftPredictionMap refined;  // fused soft prediction for the dark view
    HardLabelMap labels;        // its argmax pseudo-labels
    RefineReport report;
};

struct RefineInputs {
    const SoftPredictionMap* s_dark = nullptr;
    const ImageU8* img_dark = nullptr;
    const SoftPredictionMap* s_day = nullptr;
    const ImageU8* img_day = nullptr;
    const DepthMap* depth_day = nullptr;      // required by warp modes
    const CameraModel* cam_day = nullptr;     // required by warp modes
    const CameraModel* cam_dark = nullptr;    // required by warp modes
    const MatchSet* matches = nullptr;        // optional external matches
};

/// Aligns the day prediction to the dark view (cross bilateral filter or
/// depth-based forward warp), then fuses it with the initial dark
/// prediction. WarpWithFallback reverts to the bilateral path whenever
/// motion estimation fails or finds fewer than min_inliers inliers, so it
/// never raises geometry errors. The pseudo-labels never contain the
/// invalid code.
RefineResult refine_prediction(const RefineInputs& in, const ClassCatalog& catalog,
                               const RefineConfig& config);

} // namespace nightseg
