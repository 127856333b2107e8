#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace nightseg {

enum class ErrorCode {
    ChannelMismatch,
    NotADistribution,
    DimensionMismatch,
    ThetaOutOfRange,
    InsufficientMatches,
    DegenerateSample,
    CheiralityAmbiguous,
    NoValidTriangulation,
    NoKeypoints,
    MissingDepth,
    MissingCameras,
    EmptyReferenceSet,
    SchemaError,
    DuplicateId,
    FormatError,
    IoError,
    InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

/// Semantic class set plus the two reserved label codes. The default catalog
/// is the 19 Cityscapes evaluation classes with invalid=19 and ignore=255.
struct ClassCatalog {
    int num_classes = 0;
    std::vector<std::string> names;
    std::vector<int> dynamic_classes;
    int invalid_code = 0;
    int ignore_code = 0;

    static ClassCatalog cityscapes19();

    bool is_dynamic(int c) const;
    bool is_class(int v) const { return v >= 0 && v < num_classes; }
    std::optional<int> find_class(std::string_view name) const;
    double min_confidence() const { return 1.0 / num_classes; }

    void validate() const;
};

/// Per-pixel probability distribution over the catalog classes.
/// Layout is row-major, channel-fastest: values[(y*width + x)*channels + c].
struct SoftPredictionMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;

    SoftPredictionMap() = default;
    SoftPredictionMap(int h, int w, int c)
        : height(h), width(w), channels(c),
          values(static_cast<std::size_t>(h) * w * c, 0.0f) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    const float* pixel(int y, int x) const {
        return values.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    float* pixel(int y, int x) {
        return values.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    bool same_shape(const SoftPredictionMap& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Per-pixel class IDs; may additionally carry the catalog's invalid or
/// ignore code. Stored as bytes to match the 8-bit PNG label codec.
struct HardLabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;

    HardLabelMap() = default;
    HardLabelMap(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Binary mask, 1 = invalid region.
struct InvalidMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;

    InvalidMask() = default;
    InvalidMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), mask(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t at(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return mask[static_cast<std::size_t>(y) * width + x]; }
};

/// Metric depth per pixel, 0 < depth <= d_max.
struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<float> depth;
    float d_max = 540.0f;

    DepthMap() = default;
    DepthMap(int h, int w, float fill, float dmax = 540.0f)
        : height(h), width(w), depth(static_cast<std::size_t>(h) * w, fill), d_max(dmax) {}

    float at(int y, int x) const { return depth[static_cast<std::size_t>(y) * width + x]; }
    float& at(int y, int x) { return depth[static_cast<std::size_t>(y) * width + x]; }

    void validate() const;
};

/// Pinhole intrinsics (rectified, zero skew).
struct CameraModel {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;

    Eigen::Matrix3d K() const {
        Eigen::Matrix3d k;
        k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
        return k;
    }
    Eigen::Matrix3d K_inv() const {
        Eigen::Matrix3d k;
        k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
        return k;
    }

    void validate() const;
};

/// Rigid transform from the day camera frame to the dark camera frame.
struct CameraMotion {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    void validate() const;
};

/// Per-pixel max-channel probability of a soft map; values in [1/C, 1].
struct ConfidenceMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    ConfidenceMap() = default;
    ConfidenceMap(int h, int w)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0f) {}

    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-bit image, interleaved, 1 (gray) or 3 (sRGB) channels.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    const std::uint8_t* pixel(int y, int x) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    std::uint8_t* pixel(int y, int x) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
};

} // namespace nightseg
