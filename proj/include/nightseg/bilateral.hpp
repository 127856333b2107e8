#pragma once

#include "nightseg/types.hpp"

namespace nightseg {

/// CIELAB image (D65 white point), interleaved L,a,b floats per pixel.
/// L in [0,100]; a,b roughly in [-128,127].
struct LabImage {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    LabImage() = default;
    LabImage(int h, int w)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

    const float* pixel(int y, int x) const {
        return values.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    float* pixel(int y, int x) {
        return values.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

struct BilateralParams {
    double sigma_s = 80.0;  // spatial std-dev, pixels
    double sigma_r = 10.0;  // range std-dev, CIELAB units
    int radius = 0;         // window truncation; 0 = ceil(2*sigma_s)

    int effective_radius() const;
    void validate() const;
};

/// Which reference channels feed the grid's range axes.
enum class GridRangeAxes {
    Luminance,  // L only
    Lab,        // full L,a,b
};

/// Standard sRGB -> CIEXYZ(D65) -> CIELAB conversion.
LabImage srgb_to_lab(const ImageU8& img);

/// Cross bilateral filter: smooths s1 with a spatial Gaussian while the
/// range kernel is evaluated on the reference image. Direct double-loop
/// evaluation over the truncated window; windows clip at the image border
/// and the denominator renormalizes automatically.
SoftPredictionMap cross_bilateral_align(const SoftPredictionMap& s1, const LabImage& ref,
                                        const BilateralParams& params);

/// Grid-accelerated approximation of cross_bilateral_align via a bilateral
/// lattice over (x, y, range axes) with trilinear splat, separable Gaussian
/// blur and slice. Defaults to full Lab range axes: the luminance-only grid
/// misses the a/b terms of the range distance and can deviate far beyond
/// the 0.01 equivalence budget on colorful references.
SoftPredictionMap cross_bilateral_align_grid(const SoftPredictionMap& s1, const LabImage& ref,
                                             const BilateralParams& params,
                                             GridRangeAxes axes = GridRangeAxes::Lab);

} // namespace nightseg
