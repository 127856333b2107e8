#include "nightseg/uiou.hpp"

#include <cmath>
#include <limits>

#include "nightseg/core.hpp"
#include "nightseg/parallel.hpp"

namespace nightseg {

TallyTable& TallyTable::merge(const TallyTable& other) {
    if (classes.size() != other.classes.size())
        raise(ErrorCode::DimensionMismatch, "tally tables cover different class counts");
    for (std::size_t c = 0; c < classes.size(); ++c) {
        classes[c].tp += other.classes[c].tp;
        classes[c].fp += other.classes[c].fp;
        classes[c].fn += other.classes[c].fn;
        classes[c].ti += other.classes[c].ti;
        classes[c].fi += other.classes[c].fi;
    }
    return *this;
}

HardLabelMap threshold_to_hard(const SoftPredictionMap& s, double theta,
                               const ClassCatalog& catalog) {
    const double lo = catalog.min_confidence();
    if (!(theta >= lo - 1e-12) || !(theta <= 1.0 + 1e-12))
        raise(ErrorCode::ThetaOutOfRange,
              "theta " + std::to_string(theta) + " outside [1/C, 1]");
    auto [labels, conf] = argmax_with_confidence(s);
    const std::size_t n = labels.labels.size();
    for (std::size_t p = 0; p < n; ++p) {
        if (conf.values[p] < theta)
            labels.labels[p] = static_cast<std::uint8_t>(catalog.invalid_code);
    }
    return labels;
}

namespace {

// One pass over the pixels with the prediction given as (label, confidence)
// and the threshold applied on the fly.
void tally_pixels(const std::uint8_t* pred_labels, const float* pred_conf, double theta,
                  const HardLabelMap& gt, const InvalidMask& invalid_gt,
                  const ClassCatalog& catalog, TallyTable& table) {
    const int c_count = catalog.num_classes;
    const std::uint8_t invalid = static_cast<std::uint8_t>(catalog.invalid_code);
    const std::uint8_t ignore = static_cast<std::uint8_t>(catalog.ignore_code);
    const std::size_t n = static_cast<std::size_t>(gt.height) * gt.width;

    for (std::size_t p = 0; p < n; ++p) {
        const std::uint8_t g = gt.labels[p];
        if (g == ignore) continue;
        if (g >= c_count)
            raise(ErrorCode::InvalidArgument, "ground truth contains a non-class label");

        std::uint8_t v = pred_labels[p];
        if (pred_conf && pred_conf[p] < theta) v = invalid;
        if (v != invalid && v != ignore && v >= c_count)
            raise(ErrorCode::InvalidArgument, "prediction contains an unknown label");

        auto& gc = table.classes[g];
        if (v == g) {
            ++gc.tp;
        } else if (v == invalid) {
            if (invalid_gt.mask[p]) ++gc.ti;
            else ++gc.fi;
        } else {
            ++gc.fn;  // includes predictions carrying the ignore code
            if (v < c_count) ++table.classes[v].fp;
        }
    }
}

} // namespace

TallyTable tally(const HardLabelMap& pred, const HardLabelMap& gt, const InvalidMask& invalid_gt,
                 const ClassCatalog& catalog) {
    if (pred.height != gt.height || pred.width != gt.width)
        raise(ErrorCode::DimensionMismatch, "prediction and ground truth dimensions differ");
    if (invalid_gt.height != gt.height || invalid_gt.width != gt.width)
        raise(ErrorCode::DimensionMismatch, "invalid mask and ground truth dimensions differ");

    TallyTable table(catalog.num_classes);
    tally_pixels(pred.labels.data(), nullptr, 0.0, gt, invalid_gt, catalog, table);
    return table;
}

UiouScore uiou_score(const TallyTable& t) {
    UiouScore score;
    score.per_class.resize(t.classes.size());
    double sum = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < t.classes.size(); ++c) {
        const auto& k = t.classes[c];
        const std::int64_t num = k.tp + k.ti;
        const std::int64_t den = k.tp + k.ti + k.fp + k.fn + k.fi;
        if (den == 0) {
            score.per_class[c] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        score.per_class[c] = static_cast<double>(num) / static_cast<double>(den);
        sum += score.per_class[c];
        ++counted;
    }
    score.mean = counted > 0 ? sum / counted : std::numeric_limits<double>::quiet_NaN();
    return score;
}

std::vector<double> default_theta_grid(const ClassCatalog& catalog, int n) {
    if (n < 2) raise(ErrorCode::InvalidArgument, "theta grid needs at least 2 points");
    const double lo = catalog.min_confidence();
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i)
        grid[i] = lo + (1.0 - lo) * static_cast<double>(i) / (n - 1);
    grid.front() = lo;
    grid.back() = 1.0;
    return grid;
}

UiouCurve uiou_curve(const std::vector<const SoftPredictionMap*>& s_maps,
                     const std::vector<const HardLabelMap*>& gts,
                     const std::vector<const InvalidMask*>& invalid_masks,
                     const std::vector<double>& theta_grid, const ClassCatalog& catalog) {
    if (s_maps.size() != gts.size() || s_maps.size() != invalid_masks.size())
        raise(ErrorCode::DimensionMismatch, "sequence lengths differ");
    if (theta_grid.empty()) raise(ErrorCode::ThetaOutOfRange, "empty theta grid");
    const double lo = catalog.min_confidence();
    if (std::abs(theta_grid.front() - lo) > 1e-12)
        raise(ErrorCode::ThetaOutOfRange, "theta grid must start at 1/C");
    for (std::size_t i = 0; i < theta_grid.size(); ++i) {
        if (theta_grid[i] < lo - 1e-12 || theta_grid[i] > 1.0 + 1e-12)
            raise(ErrorCode::ThetaOutOfRange, "theta grid value outside [1/C, 1]");
        if (i > 0 && !(theta_grid[i] > theta_grid[i - 1]))
            raise(ErrorCode::ThetaOutOfRange, "theta grid must be strictly increasing");
    }

    // Per-image argmax labels and confidences are theta-independent.
    const std::size_t images = s_maps.size();
    std::vector<HardLabelMap> labels(images);
    std::vector<ConfidenceMap> confs(images);
    for (std::size_t i = 0; i < images; ++i) {
        if (s_maps[i]->height != gts[i]->height || s_maps[i]->width != gts[i]->width ||
            invalid_masks[i]->height != gts[i]->height ||
            invalid_masks[i]->width != gts[i]->width)
            raise(ErrorCode::DimensionMismatch, "image " + std::to_string(i) +
                                                    " has mismatched dimensions");
        auto [l, f] = argmax_with_confidence(*s_maps[i]);
        labels[i] = std::move(l);
        confs[i] = std::move(f);
    }

    UiouCurve curve;
    curve.points.resize(theta_grid.size());
    parallel_for(static_cast<std::int64_t>(theta_grid.size()),
                 [&](std::int64_t tb, std::int64_t te) {
                     for (std::int64_t t = tb; t < te; ++t) {
                         const double theta = theta_grid[t];
                         TallyTable table(catalog.num_classes);
                         for (std::size_t i = 0; i < images; ++i) {
                             tally_pixels(labels[i].labels.data(), confs[i].values.data(), theta,
                                          *gts[i], *invalid_masks[i], catalog, table);
                         }
                         const UiouScore score = uiou_score(table);
                         curve.points[t].theta = theta;
                         curve.points[t].mean_uiou = score.mean;
                         curve.points[t].per_class_uiou = score.per_class;
                     }
                 });
    return curve;
}

std::optional<std::pair<double, double>> check_separation(
    const std::vector<const SoftPredictionMap*>& s_maps,
    const std::vector<const InvalidMask*>& invalid_masks, const ClassCatalog& catalog) {
    if (s_maps.size() != invalid_masks.size())
        raise(ErrorCode::DimensionMismatch, "sequence lengths differ");

    double max_invalid = -std::numeric_limits<double>::infinity();
    double min_valid = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s_maps.size(); ++i) {
        if (s_maps[i]->height != invalid_masks[i]->height ||
            s_maps[i]->width != invalid_masks[i]->width)
            raise(ErrorCode::DimensionMismatch, "image " + std::to_string(i) +
                                                    " has mismatched dimensions");
        const auto [labels, conf] = argmax_with_confidence(*s_maps[i]);
        const std::size_t n = conf.values.size();
        for (std::size_t p = 0; p < n; ++p) {
            if (invalid_masks[i]->mask[p]) {
                max_invalid = std::max(max_invalid, static_cast<double>(conf.values[p]));
            } else {
                min_valid = std::min(min_valid, static_cast<double>(conf.values[p]));
            }
        }
    }
    const double theta1 =
        std::isfinite(max_invalid) ? max_invalid : catalog.min_confidence();
    const double theta2 = std::isfinite(min_valid) ? min_valid : 1.0;
    if (theta1 < theta2) return std::make_pair(theta1, theta2);
    return std::nullopt;
}

} // namespace nightseg
