#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nightseg/types.hpp"

namespace nightseg {

enum class RecordRole { Day, Twilight, Night };

const char* record_role_name(RecordRole role);

struct GpsPoint {
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]
};

/// One manifest line: an image with its optional per-image artifacts.
struct ManifestRecord {
    std::string id;
    RecordRole role = RecordRole::Day;
    GpsPoint gps;
    std::string image_path;
    std::optional<std::string> soft_path;
    std::optional<std::string> depth_path;
    std::optional<std::string> label_path;
    std::optional<std::string> invalid_path;
    CameraModel camera;
};

struct Correspondence {
    std::string day_id;
    double distance_m = 0.0;
};

/// dark record id -> nearest day record; every source id appears once.
using CorrespondenceTable = std::map<std::string, Correspondence>;

// Mean-Earth-radius sphere; sub-meter ellipsoidal accuracy is irrelevant at
// the dataset's ~50 m sampling spacing.
inline constexpr double kEarthRadiusMeters = 6371000.0;

/// Great-circle distance in meters between two GPS points.
double haversine_distance(const GpsPoint& a, const GpsPoint& b);

/// Maps each dark record to the day record with minimum great-circle
/// distance; ties pick the lexicographically smallest day id.
CorrespondenceTable gps_nearest_correspondence(const std::vector<ManifestRecord>& dark_records,
                                               const std::vector<ManifestRecord>& day_records);

/// Parses a JSON-lines manifest (one record object per nonempty line).
/// Schema violations report the 1-based line number.
std::vector<ManifestRecord> parse_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Codecs. SPM1 and DPT1 are little-endian binary formats:
//   SPM1: magic "SPM1", u32 height, u32 width, u32 channels,
//         then h*w*c float32, row-major, channel-fastest.
//   DPT1: magic "DPT1", u32 height, u32 width, then h*w float32 meters.
// Label maps and invalid masks are 8-bit single-channel PNG.
// ---------------------------------------------------------------------------

/// Decoded but unvalidated soft map; run validate_soft_map before use.
SoftPredictionMap decode_spm1(const std::string& path);
void encode_spm1(const std::string& path, const SoftPredictionMap& map);

/// Depth values are checked finite and positive and clamped to d_max.
DepthMap decode_dpt1(const std::string& path, float d_max = 540.0f);
void encode_dpt1(const std::string& path, const DepthMap& map);

ImageU8 read_png(const std::string& path);            // gray8 or rgb8
void write_png(const std::string& path, const ImageU8& img);

HardLabelMap read_label_png(const std::string& path);
void write_label_png(const std::string& path, const HardLabelMap& labels);

InvalidMask read_invalid_png(const std::string& path);
void write_invalid_png(const std::string& path, const InvalidMask& mask);

} // namespace nightseg
