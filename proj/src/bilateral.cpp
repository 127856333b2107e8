#include "nightseg/bilateral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "nightseg/parallel.hpp"

namespace nightseg {

int BilateralParams::effective_radius() const {
    if (radius >= 1) return radius;
    // ceil(2*sigma_s) captures >95% of the spatial Gaussian mass
    return static_cast<int>(std::ceil(2.0 * sigma_s));
}

void BilateralParams::validate() const {
    if (!(sigma_s > 0.0)) raise(ErrorCode::InvalidArgument, "sigma_s must be positive");
    if (!(sigma_r > 0.0)) raise(ErrorCode::InvalidArgument, "sigma_r must be positive");
    if (radius < 0) raise(ErrorCode::InvalidArgument, "radius must be >= 1 (or 0 for default)");
}

namespace {

const std::array<double, 256>& srgb_linear_lut() {
    static const std::array<double, 256> lut = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) {
            const double c = i / 255.0;
            t[i] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
        }
        return t;
    }();
    return lut;
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    if (t > delta3) return std::cbrt(t);
    return t / (3.0 * delta * delta) + 4.0 / 29.0;
}

} // namespace

LabImage srgb_to_lab(const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        raise(ErrorCode::InvalidArgument, "srgb_to_lab expects a 1- or 3-channel image");
    const auto& lut = srgb_linear_lut();
    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
    LabImage lab(img.height, img.width);
    const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        const std::uint8_t* px = img.data.data() + p * img.channels;
        const double r = lut[px[0]];
        const double g = lut[img.channels == 3 ? px[1] : px[0]];
        const double b = lut[img.channels == 3 ? px[2] : px[0]];
        const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        const double fx = lab_f(x / xn);
        const double fy = lab_f(y / yn);
        const double fz = lab_f(z / zn);
        float* out = lab.values.data() + p * 3;
        out[0] = static_cast<float>(116.0 * fy - 16.0);
        out[1] = static_cast<float>(500.0 * (fx - fy));
        out[2] = static_cast<float>(200.0 * (fy - fz));
    }
    return lab;
}

SoftPredictionMap cross_bilateral_align(const SoftPredictionMap& s1, const LabImage& ref,
                                        const BilateralParams& params) {
    params.validate();
    if (s1.height != ref.height || s1.width != ref.width)
        raise(ErrorCode::DimensionMismatch, "prediction and reference dimensions differ");

    const int h = s1.height, w = s1.width, c = s1.channels;
    const int r = params.effective_radius();
    const float inv2sr = static_cast<float>(1.0 / (2.0 * params.sigma_r * params.sigma_r));
    const double inv2ss = 1.0 / (2.0 * params.sigma_s * params.sigma_s);

    std::vector<float> axis(r + 1);
    for (int d = 0; d <= r; ++d)
        axis[d] = static_cast<float>(std::exp(-static_cast<double>(d) * d * inv2ss));

    SoftPredictionMap out(h, w, c);

    parallel_for(h, [&](std::int64_t row_begin, std::int64_t row_end) {
        std::vector<float> wbuf(2 * r + 1);
        std::vector<double> acc(c);
        for (std::int64_t y = row_begin; y < row_end; ++y) {
            const int y0 = std::max(0, static_cast<int>(y) - r);
            const int y1 = std::min(h - 1, static_cast<int>(y) + r);
            for (int x = 0; x < w; ++x) {
                const int x0 = std::max(0, x - r);
                const int x1 = std::min(w - 1, x + r);
                const int n = x1 - x0 + 1;
                const float* pr = ref.pixel(static_cast<int>(y), x);
                const float pl = pr[0], pa = pr[1], pb = pr[2];

                std::fill(acc.begin(), acc.end(), 0.0);
                double wsum = 0.0;
                for (int qy = y0; qy <= y1; ++qy) {
                    const float sy = axis[std::abs(qy - static_cast<int>(y))];
                    const float* qr = ref.pixel(qy, x0);
                    for (int i = 0; i < n; ++i) {
                        const float dl = qr[i * 3 + 0] - pl;
                        const float da = qr[i * 3 + 1] - pa;
                        const float db = qr[i * 3 + 2] - pb;
                        wbuf[i] = -(dl * dl + da * da + db * db) * inv2sr;
                    }
                    for (int i = 0; i < n; ++i) wbuf[i] = std::exp(wbuf[i]);
                    for (int i = 0; i < n; ++i) wbuf[i] *= sy * axis[std::abs(x0 + i - x)];

                    const float* srow = s1.pixel(qy, x0);
                    for (int i = 0; i < n; ++i) {
                        const double wq = wbuf[i];
                        wsum += wq;
                        const float* sv = srow + static_cast<std::size_t>(i) * c;
                        for (int cc = 0; cc < c; ++cc) acc[cc] += wq * sv[cc];
                    }
                }
                float* ov = out.pixel(static_cast<int>(y), x);
                const double inv = 1.0 / wsum;
                for (int cc = 0; cc < c; ++cc) ov[cc] = static_cast<float>(acc[cc] * inv);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Grid-accelerated path: splat / blur / slice over (x, y, range axes).
// ---------------------------------------------------------------------------

namespace {

struct GridAxis {
    double offset = 0.0;   // value subtracted before dividing by spacing
    double spacing = 1.0;
    int size = 0;          // including blur padding on both sides
};

constexpr int kBlurRadius = 3;

struct BilateralGrid {
    int dims = 0;                   // 2 spatial + 1 or 3 range
    int vch = 0;                    // value channels + 1 homogeneous
    std::array<GridAxis, 5> axes{};
    std::array<std::int64_t, 5> stride{};
    std::int64_t cells = 0;
    std::vector<float> data;        // [cell][vch]
};

// Grid coordinate of a value on one axis; padding keeps every splat corner
// and blur tap in bounds.
inline double grid_coord(const GridAxis& ax, double value) {
    return (value - ax.offset) / ax.spacing + kBlurRadius;
}

void setup_axes(BilateralGrid& g, const SoftPredictionMap& s1, const LabImage& ref,
                const BilateralParams& p, int range_dims) {
    g.dims = 2 + range_dims;
    g.axes[0] = GridAxis{0.0, p.sigma_s, 0};
    g.axes[1] = GridAxis{0.0, p.sigma_s, 0};
    double mins[3], maxs[3];
    for (int k = 0; k < range_dims; ++k) {
        mins[k] = ref.values[k];
        maxs[k] = ref.values[k];
    }
    const std::size_t pixels = static_cast<std::size_t>(ref.height) * ref.width;
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int k = 0; k < range_dims; ++k) {
            const double v = ref.values[i * 3 + k];
            mins[k] = std::min(mins[k], v);
            maxs[k] = std::max(maxs[k], v);
        }
    }
    for (int k = 0; k < range_dims; ++k)
        g.axes[2 + k] = GridAxis{mins[k], p.sigma_r, 0};

    const double extents[5] = {static_cast<double>(s1.width - 1),
                               static_cast<double>(s1.height - 1),
                               range_dims > 0 ? maxs[0] - mins[0] : 0.0,
                               range_dims > 1 ? maxs[1] - mins[1] : 0.0,
                               range_dims > 2 ? maxs[2] - mins[2] : 0.0};
    for (int a = 0; a < g.dims; ++a) {
        const int interior = static_cast<int>(std::floor(extents[a] / g.axes[a].spacing)) + 2;
        g.axes[a].size = interior + 2 * kBlurRadius;
    }
    g.stride[g.dims - 1] = 1;
    for (int a = g.dims - 2; a >= 0; --a)
        g.stride[a] = g.stride[a + 1] * g.axes[a + 1].size;
    g.cells = g.stride[0] * g.axes[0].size;
}

} // namespace

SoftPredictionMap cross_bilateral_align_grid(const SoftPredictionMap& s1, const LabImage& ref,
                                             const BilateralParams& params, GridRangeAxes axes) {
    params.validate();
    if (s1.height != ref.height || s1.width != ref.width)
        raise(ErrorCode::DimensionMismatch, "prediction and reference dimensions differ");

    const int h = s1.height, w = s1.width, c = s1.channels;
    const int range_dims = axes == GridRangeAxes::Luminance ? 1 : 3;

    BilateralGrid g;
    g.vch = c + 1;
    setup_axes(g, s1, ref, params, range_dims);
    g.data.assign(static_cast<std::size_t>(g.cells) * g.vch, 0.0f);

    const int dims = g.dims;
    const int corners = 1 << dims;

    // Splat. Image rows are processed in bands that own disjoint grid-row
    // slabs would be fragile; a single pass is cheap relative to the blur.
    {
        std::array<int, 5> base{};
        std::array<double, 5> frac{};
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float* rv = ref.pixel(y, x);
                const double coords[5] = {grid_coord(g.axes[0], x), grid_coord(g.axes[1], y),
                                          range_dims > 0 ? grid_coord(g.axes[2], rv[0]) : 0.0,
                                          range_dims > 1 ? grid_coord(g.axes[3], rv[1]) : 0.0,
                                          range_dims > 2 ? grid_coord(g.axes[4], rv[2]) : 0.0};
                std::int64_t cell0 = 0;
                for (int a = 0; a < dims; ++a) {
                    base[a] = static_cast<int>(coords[a]);
                    frac[a] = coords[a] - base[a];
                    cell0 += base[a] * g.stride[a];
                }
                const float* sv = s1.pixel(y, x);
                for (int m = 0; m < corners; ++m) {
                    double wt = 1.0;
                    std::int64_t cell = cell0;
                    for (int a = 0; a < dims; ++a) {
                        if (m & (1 << a)) {
                            wt *= frac[a];
                            cell += g.stride[a];
                        } else {
                            wt *= 1.0 - frac[a];
                        }
                    }
                    if (wt == 0.0) continue;
                    float* cellv = g.data.data() + cell * g.vch;
                    const float wf = static_cast<float>(wt);
                    for (int cc = 0; cc < c; ++cc) cellv[cc] += wf * sv[cc];
                    cellv[c] += wf;
                }
            }
        }
    }

    // Separable blur along each axis. Splat+slice add triangle variance
    // 1/3 cell^2, so the blur carries the remaining 2/3 to reach the unit
    // target.
    {
        float taps[2 * kBlurRadius + 1];
        double tap_sum = 0.0;
        for (int k = -kBlurRadius; k <= kBlurRadius; ++k)
            tap_sum += std::exp(-k * k / (2.0 * (2.0 / 3.0)));
        for (int k = -kBlurRadius; k <= kBlurRadius; ++k)
            taps[k + kBlurRadius] =
                static_cast<float>(std::exp(-k * k / (2.0 * (2.0 / 3.0))) / tap_sum);

        std::vector<float> scratch(g.data.size());
        for (int a = 0; a < dims; ++a) {
            std::fill(scratch.begin(), scratch.end(), 0.0f);
            const std::int64_t stride = g.stride[a] * g.vch;
            const int size = g.axes[a].size;
            const std::int64_t outer = g.cells / size;  // cells per axis slice
            parallel_for(outer, [&](std::int64_t ob, std::int64_t oe) {
                for (std::int64_t o = ob; o < oe; ++o) {
                    // decompose o into indices of all axes except a
                    std::int64_t rem = o;
                    std::int64_t base_cell = 0;
                    for (int b = dims - 1; b >= 0; --b) {
                        if (b == a) continue;
                        const std::int64_t idx = rem % g.axes[b].size;
                        rem /= g.axes[b].size;
                        base_cell += idx * g.stride[b];
                    }
                    float* dst = scratch.data() + base_cell * g.vch;
                    const float* src = g.data.data() + base_cell * g.vch;
                    for (int i = kBlurRadius; i < size - kBlurRadius; ++i) {
                        float* dv = dst + i * stride;
                        for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
                            const float t = taps[k + kBlurRadius];
                            const float* sv = src + (i + k) * stride;
                            for (int ch = 0; ch < g.vch; ++ch) dv[ch] += t * sv[ch];
                        }
                    }
                }
            });
            g.data.swap(scratch);
        }
    }

    // Slice.
    SoftPredictionMap out(h, w, c);
    parallel_for(h, [&](std::int64_t row_begin, std::int64_t row_end) {
        std::array<int, 5> base{};
        std::array<double, 5> frac{};
        std::vector<double> num(c);
        for (std::int64_t y = row_begin; y < row_end; ++y) {
            for (int x = 0; x < w; ++x) {
                const float* rv = ref.pixel(static_cast<int>(y), x);
                const double coords[5] = {
                    grid_coord(g.axes[0], x), grid_coord(g.axes[1], static_cast<double>(y)),
                    range_dims > 0 ? grid_coord(g.axes[2], rv[0]) : 0.0,
                    range_dims > 1 ? grid_coord(g.axes[3], rv[1]) : 0.0,
                    range_dims > 2 ? grid_coord(g.axes[4], rv[2]) : 0.0};
                std::int64_t cell0 = 0;
                for (int a = 0; a < dims; ++a) {
                    base[a] = static_cast<int>(coords[a]);
                    frac[a] = coords[a] - base[a];
                    cell0 += base[a] * g.stride[a];
                }
                std::fill(num.begin(), num.end(), 0.0);
                double hom = 0.0;
                for (int m = 0; m < corners; ++m) {
                    double wt = 1.0;
                    std::int64_t cell = cell0;
                    for (int a = 0; a < dims; ++a) {
                        if (m & (1 << a)) {
                            wt *= frac[a];
                            cell += g.stride[a];
                        } else {
                            wt *= 1.0 - frac[a];
                        }
                    }
                    if (wt == 0.0) continue;
                    const float* cellv = g.data.data() + cell * g.vch;
                    for (int cc = 0; cc < c; ++cc) num[cc] += wt * cellv[cc];
                    hom += wt * cellv[c];
                }
                float* ov = out.pixel(static_cast<int>(y), x);
                const double inv = 1.0 / hom;
                for (int cc = 0; cc < c; ++cc) ov[cc] = static_cast<float>(num[cc] * inv);
            }
        }
    });
    return out;
}

} // namespace nightseg
