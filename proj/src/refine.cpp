#include "nightseg/refine.hpp"

#include "nightseg/core.hpp"

namespace nightseg {

const char* alignment_mode_name(AlignmentMode mode) {
    switch (mode) {
        case AlignmentMode::Bilateral: return "bilateral";
        case AlignmentMode::Warp: return "warp";
        case AlignmentMode::WarpWithFallback: return "warp_with_fallback";
    }
    return "unknown";
}

AlignmentMode parse_alignment_mode(const std::string& name) {
    if (name == "bilateral") return AlignmentMode::Bilateral;
    if (name == "warp") return AlignmentMode::Warp;
    if (name == "warp_with_fallback") return AlignmentMode::WarpWithFallback;
    raise(ErrorCode::InvalidArgument, "unknown alignment mode '" + name + "'");
}

void RefineConfig::validate() const {
    if (min_inliers < 7) raise(ErrorCode::InvalidArgument, "min_inliers must be >= 7");
    bilateral.validate();
    fusion.validate();
}

namespace {

SoftPredictionMap align_bilateral(const RefineInputs& in, const RefineConfig& config) {
    const LabImage ref = srgb_to_lab(*in.img_dark);
    return cross_bilateral_align_grid(*in.s_day, ref, config.bilateral);
}

// Warp path: estimate the camera motion, clamp sky depth, build the mesh and
// forward-warp the day prediction into the dark view.
SoftPredictionMap align_warp(const RefineInputs& in, const ClassCatalog& catalog,
                             const RefineConfig& config, int* inlier_count) {
    RansacParams ransac;
    ransac.seed = config.seed;

    MotionEstimate est;
    if (in.matches && !in.matches->empty()) {
        est = estimate_motion(*in.matches, *in.cam_day, *in.cam_dark, *in.depth_day, ransac);
    } else {
        est = estimate_motion(*in.img_day, *in.img_dark, *in.cam_day, *in.cam_dark,
                              *in.depth_day, ransac);
    }
    *inlier_count = est.inlier_count;
    if (est.inlier_count < config.min_inliers && config.mode == AlignmentMode::WarpWithFallback)
        raise(ErrorCode::DegenerateSample,
              "only " + std::to_string(est.inlier_count) + " inliers");

    std::vector<std::uint8_t> sky_mask;
    if (const auto sky = catalog.find_class("sky")) {
        auto [labels, conf] = argmax_with_confidence(*in.s_day);
        sky_mask.resize(labels.labels.size());
        for (std::size_t i = 0; i < sky_mask.size(); ++i)
            sky_mask[i] = labels.labels[i] == *sky ? 1 : 0;
    }
    const WarpMesh mesh = build_warp_mesh(*in.depth_day, est.motion, *in.cam_day, *in.cam_dark,
                                          sky_mask.empty() ? nullptr : &sky_mask);
    return forward_warp(*in.s_day, mesh).first;
}

} // namespace

RefineResult refine_prediction(const RefineInputs& in, const ClassCatalog& catalog,
                               const RefineConfig& config) {
    config.validate();
    if (!in.s_dark || !in.s_day || !in.img_dark || !in.img_day)
        raise(ErrorCode::InvalidArgument, "missing prediction or image inputs");
    if (in.s_dark->height != in.s_day->height || in.s_dark->width != in.s_day->width ||
        in.s_dark->channels != in.s_day->channels)
        raise(ErrorCode::DimensionMismatch, "day and dark predictions must have equal shape");
    if (in.img_dark->height != in.s_dark->height || in.img_dark->width != in.s_dark->width)
        raise(ErrorCode::DimensionMismatch, "dark image and prediction dimensions differ");
    if (in.img_day->height != in.s_day->height || in.img_day->width != in.s_day->width)
        raise(ErrorCode::DimensionMismatch, "day image and prediction dimensions differ");

    const bool wants_warp = config.mode != AlignmentMode::Bilateral;
    if (wants_warp) {
        if (!in.depth_day) raise(ErrorCode::MissingDepth, "warp modes require a day depth map");
        if (!in.cam_day || !in.cam_dark)
            raise(ErrorCode::MissingCameras, "warp modes require both camera models");
        if (in.depth_day->height != in.s_day->height || in.depth_day->width != in.s_day->width)
            raise(ErrorCode::DimensionMismatch, "depth map and prediction dimensions differ");
    }

    RefineResult result;
    result.report.requested = config.mode;
    result.report.used = config.mode == AlignmentMode::Bilateral ? AlignmentMode::Bilateral
                                                                 : AlignmentMode::Warp;

    SoftPredictionMap aligned;
    if (wants_warp) {
        int inliers = -1;
        try {
            aligned = align_warp(in, catalog, config, &inliers);
            result.report.inlier_count = inliers;
        } catch (const Error& e) {
            result.report.inlier_count = inliers;
            if (config.mode == AlignmentMode::Warp) throw;
            result.report.used = AlignmentMode::Bilateral;
            result.report.fallback_reason = e.what();
        }
    }
    if (result.report.used == AlignmentMode::Bilateral) aligned = align_bilateral(in, config);

    const AlphaMap alpha = compute_alpha(*in.s_dark, aligned, catalog, config.fusion);
    result.refined = fuse(*in.s_dark, aligned, alpha);
    result.labels = argmax_with_confidence(result.refined).first;
    return result;
}

} // namespace nightseg
