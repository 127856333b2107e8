#include "nightseg/core.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace nightseg {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::ChannelMismatch: return "ChannelMismatch";
        case ErrorCode::NotADistribution: return "NotADistribution";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ThetaOutOfRange: return "ThetaOutOfRange";
        case ErrorCode::InsufficientMatches: return "InsufficientMatches";
        case ErrorCode::DegenerateSample: return "DegenerateSample";
        case ErrorCode::CheiralityAmbiguous: return "CheiralityAmbiguous";
        case ErrorCode::NoValidTriangulation: return "NoValidTriangulation";
        case ErrorCode::NoKeypoints: return "NoKeypoints";
        case ErrorCode::MissingDepth: return "MissingDepth";
        case ErrorCode::MissingCameras: return "MissingCameras";
        case ErrorCode::EmptyReferenceSet: return "EmptyReferenceSet";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "UnknownError";
}

ClassCatalog ClassCatalog::cityscapes19() {
    ClassCatalog c;
    c.num_classes = 19;
    c.names = {"road",       "sidewalk",     "building",  "wall",    "fence",
               "pole",       "traffic light", "traffic sign", "vegetation", "terrain",
               "sky",        "person",       "rider",     "car",     "truck",
               "bus",        "train",        "motorcycle", "bicycle"};
    c.dynamic_classes = {11, 12, 13, 14, 15, 16, 17, 18};
    c.invalid_code = 19;
    c.ignore_code = 255;
    return c;
}

bool ClassCatalog::is_dynamic(int c) const {
    return std::find(dynamic_classes.begin(), dynamic_classes.end(), c) != dynamic_classes.end();
}

std::optional<int> ClassCatalog::find_class(std::string_view name) const {
    for (int i = 0; i < num_classes; ++i) {
        if (names[i] == name) return i;
    }
    return std::nullopt;
}

void ClassCatalog::validate() const {
    if (num_classes <= 0) raise(ErrorCode::InvalidArgument, "catalog has no classes");
    if (static_cast<int>(names.size()) != num_classes)
        raise(ErrorCode::InvalidArgument, "catalog name count does not match num_classes");
    for (int c : dynamic_classes) {
        if (c < 0 || c >= num_classes)
            raise(ErrorCode::InvalidArgument, "dynamic class index out of range");
    }
    if (invalid_code == ignore_code)
        raise(ErrorCode::InvalidArgument, "invalid_code and ignore_code must differ");
    if (is_class(invalid_code) || is_class(ignore_code))
        raise(ErrorCode::InvalidArgument, "reserved codes must lie outside the class range");
}

void DepthMap::validate() const {
    if (!(d_max > 0.0f)) raise(ErrorCode::InvalidArgument, "d_max must be positive");
    for (float d : depth) {
        if (!std::isfinite(d) || d <= 0.0f || d > d_max)
            raise(ErrorCode::InvalidArgument, "depth outside (0, d_max]");
    }
}

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        raise(ErrorCode::InvalidArgument, "focal lengths must be positive");
}

void CameraMotion::validate() const {
    const Eigen::Matrix3d residual = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (residual.cwiseAbs().maxCoeff() > 1e-9)
        raise(ErrorCode::InvalidArgument, "rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        raise(ErrorCode::InvalidArgument, "rotation determinant is not +1");
}

SoftPredictionMap validate_soft_map(const SoftPredictionMap& raw, const ClassCatalog& catalog) {
    if (raw.channels != catalog.num_classes)
        raise(ErrorCode::ChannelMismatch, "expected " + std::to_string(catalog.num_classes) +
                                              " channels, got " + std::to_string(raw.channels));
    SoftPredictionMap out = raw;
    const std::size_t pixels = out.pixel_count();
    const int c = out.channels;
    for (std::size_t p = 0; p < pixels; ++p) {
        float* v = out.values.data() + p * c;
        double sum = 0.0;
        for (int i = 0; i < c; ++i) {
            if (!std::isfinite(v[i]) || v[i] < 0.0f)
                raise(ErrorCode::NotADistribution,
                      "negative or non-finite probability at pixel " + std::to_string(p));
            sum += v[i];
        }
        if (std::abs(sum - 1.0) > kSoftSumTolerance)
            raise(ErrorCode::NotADistribution, "pixel " + std::to_string(p) + " sums to " +
                                                   std::to_string(sum));
        if (sum != 1.0) {
            const double inv = 1.0 / sum;
            for (int i = 0; i < c; ++i) v[i] = static_cast<float>(v[i] * inv);
        }
    }
    return out;
}

std::pair<HardLabelMap, ConfidenceMap> argmax_with_confidence(const SoftPredictionMap& s) {
    HardLabelMap labels(s.height, s.width);
    ConfidenceMap conf(s.height, s.width);
    const std::size_t pixels = s.pixel_count();
    const int c = s.channels;
    for (std::size_t p = 0; p < pixels; ++p) {
        const float* v = s.values.data() + p * c;
        int best = 0;
        float best_v = v[0];
        for (int i = 1; i < c; ++i) {
            if (v[i] > best_v) {
                best = i;
                best_v = v[i];
            }
        }
        labels.labels[p] = static_cast<std::uint8_t>(best);
        conf.values[p] = best_v;
    }
    return {std::move(labels), std::move(conf)};
}

} // namespace nightseg
