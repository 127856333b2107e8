#include "nightseg/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace nightseg {

static_assert(std::endian::native == std::endian::little,
              "SPM1/DPT1 codecs assume a little-endian host");

const char* record_role_name(RecordRole role) {
    switch (role) {
        case RecordRole::Day: return "day";
        case RecordRole::Twilight: return "twilight";
        case RecordRole::Night: return "night";
    }
    return "unknown";
}

double haversine_distance(const GpsPoint& a, const GpsPoint& b) {
    const double deg = M_PI / 180.0;
    const double phi1 = a.lat * deg, phi2 = b.lat * deg;
    const double dphi = (b.lat - a.lat) * deg;
    const double dlambda = (b.lon - a.lon) * deg;
    const double s = std::sin(dphi / 2.0), t = std::sin(dlambda / 2.0);
    const double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
    return 2.0 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(h)));
}

CorrespondenceTable gps_nearest_correspondence(const std::vector<ManifestRecord>& dark_records,
                                               const std::vector<ManifestRecord>& day_records) {
    if (day_records.empty())
        raise(ErrorCode::EmptyReferenceSet, "day record list is empty");
    CorrespondenceTable table;
    for (const auto& dark : dark_records) {
        const ManifestRecord* best = nullptr;
        double best_dist = 0.0;
        for (const auto& day : day_records) {
            const double d = haversine_distance(dark.gps, day.gps);
            if (!best || d < best_dist || (d == best_dist && day.id < best->id)) {
                best = &day;
                best_dist = d;
            }
        }
        table[dark.id] = Correspondence{best->id, best_dist};
    }
    return table;
}

namespace {

using nlohmann::json;

RecordRole parse_role(const std::string& s, int line) {
    if (s == "day") return RecordRole::Day;
    if (s == "twilight") return RecordRole::Twilight;
    if (s == "night") return RecordRole::Night;
    raise(ErrorCode::SchemaError, "line " + std::to_string(line) + ": unknown role '" + s + "'");
}

std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.string();
    return (base / fp).string();
}

} // namespace

std::vector<ManifestRecord> parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open manifest " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<ManifestRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            raise(ErrorCode::SchemaError,
                  "line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            ManifestRecord rec;
            rec.id = j.at("id").get<std::string>();
            if (rec.id.empty())
                raise(ErrorCode::SchemaError, "line " + std::to_string(line_no) + ": empty id");
            rec.role = parse_role(j.at("role").get<std::string>(), line_no);
            const auto& gps = j.at("gps");
            rec.gps.lat = gps.at("lat").get<double>();
            rec.gps.lon = gps.at("lon").get<double>();
            if (rec.gps.lat < -90.0 || rec.gps.lat > 90.0 || rec.gps.lon < -180.0 ||
                rec.gps.lon > 180.0)
                raise(ErrorCode::SchemaError,
                      "line " + std::to_string(line_no) + ": GPS coordinates out of range");
            rec.image_path = resolve_path(base, j.at("image").get<std::string>());
            if (j.contains("soft")) rec.soft_path = resolve_path(base, j["soft"].get<std::string>());
            if (j.contains("depth"))
                rec.depth_path = resolve_path(base, j["depth"].get<std::string>());
            if (j.contains("label"))
                rec.label_path = resolve_path(base, j["label"].get<std::string>());
            if (j.contains("invalid"))
                rec.invalid_path = resolve_path(base, j["invalid"].get<std::string>());
            if (j.contains("camera")) {
                const auto& cam = j["camera"];
                rec.camera.fx = cam.at("fx").get<double>();
                rec.camera.fy = cam.at("fy").get<double>();
                rec.camera.cx = cam.at("cx").get<double>();
                rec.camera.cy = cam.at("cy").get<double>();
            }
            for (const auto& existing : records) {
                if (existing.id == rec.id)
                    raise(ErrorCode::DuplicateId,
                          "line " + std::to_string(line_no) + ": duplicate id '" + rec.id + "'");
            }
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            raise(ErrorCode::SchemaError,
                  "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// SPM1 / DPT1
// ---------------------------------------------------------------------------

namespace {

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(bytes.data(), size);
    if (!in) raise(ErrorCode::IoError, "short read on " + path);
    return bytes;
}

void write_all(const std::string& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) raise(ErrorCode::IoError, "short write on " + path);
}

std::uint32_t read_u32(const char* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

constexpr std::uint32_t kMaxDim = 1 << 20;

} // namespace

SoftPredictionMap decode_spm1(const std::string& path) {
    const auto bytes = read_all(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "SPM1", 4) != 0)
        raise(ErrorCode::FormatError, path + ": missing SPM1 header");
    const std::uint32_t h = read_u32(bytes.data() + 4);
    const std::uint32_t w = read_u32(bytes.data() + 8);
    const std::uint32_t c = read_u32(bytes.data() + 12);
    if (h == 0 || w == 0 || c == 0 || h > kMaxDim || w > kMaxDim || c > 4096)
        raise(ErrorCode::FormatError, path + ": implausible dimensions");
    const std::size_t count = static_cast<std::size_t>(h) * w * c;
    if (bytes.size() != 16 + count * 4)
        raise(ErrorCode::FormatError, path + ": size does not match header");
    SoftPredictionMap map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::memcpy(map.values.data(), bytes.data() + 16, count * 4);
    return map;
}

void encode_spm1(const std::string& path, const SoftPredictionMap& map) {
    std::vector<char> bytes(16 + map.values.size() * 4);
    std::memcpy(bytes.data(), "SPM1", 4);
    const std::uint32_t h = static_cast<std::uint32_t>(map.height);
    const std::uint32_t w = static_cast<std::uint32_t>(map.width);
    const std::uint32_t c = static_cast<std::uint32_t>(map.channels);
    std::memcpy(bytes.data() + 4, &h, 4);
    std::memcpy(bytes.data() + 8, &w, 4);
    std::memcpy(bytes.data() + 12, &c, 4);
    std::memcpy(bytes.data() + 16, map.values.data(), map.values.size() * 4);
    write_all(path, bytes.data(), bytes.size());
}

DepthMap decode_dpt1(const std::string& path, float d_max) {
    const auto bytes = read_all(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "DPT1", 4) != 0)
        raise(ErrorCode::FormatError, path + ": missing DPT1 header");
    const std::uint32_t h = read_u32(bytes.data() + 4);
    const std::uint32_t w = read_u32(bytes.data() + 8);
    if (h == 0 || w == 0 || h > kMaxDim || w > kMaxDim)
        raise(ErrorCode::FormatError, path + ": implausible dimensions");
    const std::size_t count = static_cast<std::size_t>(h) * w;
    if (bytes.size() != 12 + count * 4)
        raise(ErrorCode::FormatError, path + ": size does not match header");
    DepthMap map(static_cast<int>(h), static_cast<int>(w), 1.0f, d_max);
    std::memcpy(map.depth.data(), bytes.data() + 12, count * 4);
    for (float& d : map.depth) {
        if (!std::isfinite(d) || d <= 0.0f)
            raise(ErrorCode::FormatError, path + ": non-positive or non-finite depth value");
        if (d > d_max) d = d_max;
    }
    return map;
}

void encode_dpt1(const std::string& path, const DepthMap& map) {
    std::vector<char> bytes(12 + map.depth.size() * 4);
    std::memcpy(bytes.data(), "DPT1", 4);
    const std::uint32_t h = static_cast<std::uint32_t>(map.height);
    const std::uint32_t w = static_cast<std::uint32_t>(map.width);
    std::memcpy(bytes.data() + 4, &h, 4);
    std::memcpy(bytes.data() + 8, &w, 4);
    std::memcpy(bytes.data() + 12, map.depth.data(), map.depth.size() * 4);
    write_all(path, bytes.data(), bytes.size());
}

HardLabelMap read_label_png(const std::string& path) {
    const ImageU8 img = read_png(path);
    if (img.channels != 1)
        raise(ErrorCode::FormatError, path + ": label PNG must be single-channel");
    HardLabelMap labels(img.height, img.width);
    labels.labels = img.data;
    return labels;
}

void write_label_png(const std::string& path, const HardLabelMap& labels) {
    ImageU8 img(labels.height, labels.width, 1);
    img.data = labels.labels;
    write_png(path, img);
}

InvalidMask read_invalid_png(const std::string& path) {
    const ImageU8 img = read_png(path);
    if (img.channels != 1)
        raise(ErrorCode::FormatError, path + ": invalid-mask PNG must be single-channel");
    InvalidMask mask(img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) mask.mask[i] = img.data[i] ? 1 : 0;
    return mask;
}

void write_invalid_png(const std::string& path, const InvalidMask& mask) {
    ImageU8 img(mask.height, mask.width, 1);
    img.data = mask.mask;
    write_png(path, img);
}

} // namespace nightseg
