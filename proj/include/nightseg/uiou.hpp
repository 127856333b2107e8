#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "nightseg/types.hpp"

namespace nightseg {

/// Per-class pixel tallies. Merging is the componentwise sum, a commutative
/// monoid with the zero table as identity.
struct TallyTable {
    struct Counts {
        std::int64_t tp = 0;
        std::int64_t fp = 0;
        std::int64_t fn = 0;
        std::int64_t ti = 0;
        std::int64_t fi = 0;
    };
    std::vector<Counts> classes;

    TallyTable() = default;
    explicit TallyTable(int num_classes) : classes(num_classes) {}

    TallyTable& merge(const TallyTable& other);
};

struct UiouScore {
    std::vector<double> per_class;  // NaN for classes with empty denominator
    double mean = 0.0;              // over classes with nonempty denominator
};

struct UiouCurve {
    struct Point {
        double theta = 0.0;
        double mean_uiou = 0.0;
        std::vector<double> per_class_uiou;
    };
    std::vector<Point> points;
};

/// Argmax label where confidence >= theta, the invalid code elsewhere.
HardLabelMap threshold_to_hard(const SoftPredictionMap& s, double theta,
                               const ClassCatalog& catalog);

/// Per-class TP/FP/FN/TI/FI counts of pred against (gt, invalid_gt).
/// Ground-truth pixels labeled with the ignore code are skipped entirely.
TallyTable tally(const HardLabelMap& pred, const HardLabelMap& gt, const InvalidMask& invalid_gt,
                 const ClassCatalog& catalog);

/// UIoU per class: (tp+ti) / (tp+ti+fp+fn+fi). Classes whose denominator is
/// zero are excluded from the mean and reported as NaN.
UiouScore uiou_score(const TallyTable& t);

/// Uniform theta grid of n points from 1/C to 1 inclusive.
std::vector<double> default_theta_grid(const ClassCatalog& catalog, int n = 101);

/// Thresholds every map at each theta, merges tallies across images and
/// scores. The first grid point must be 1/C, where the curve equals
/// standard mean IoU.
UiouCurve uiou_curve(const std::vector<const SoftPredictionMap*>& s_maps,
                     const std::vector<const HardLabelMap*>& gts,
                     const std::vector<const InvalidMask*>& invalid_masks,
                     const std::vector<double>& theta_grid, const ClassCatalog& catalog);

/// Separation bounds of Theorem-style instances: (max confidence over
/// invalid pixels, min confidence over valid pixels) when the former is
/// strictly smaller, nullopt otherwise. Empty sides use the vacuous bounds
/// 1/C and 1.
std::optional<std::pair<double, double>> check_separation(
    const std::vector<const SoftPredictionMap*>& s_maps,
    const std::vector<const InvalidMask*>& invalid_masks, const ClassCatalog& catalog);

} // namespace nightseg
