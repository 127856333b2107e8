#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nightseg/types.hpp"

namespace nightseg {

/// Putative or filtered point correspondences between the day and dark view.
struct Match {
    Eigen::Vector2d p_day;
    Eigen::Vector2d p_dark;
    double dist_sq = -1.0;  // squared descriptor distance; <0 = unknown
};

using MatchSet = std::vector<Match>;

/// Rank-2 fundamental matrix, Frobenius-normalized, with p_dark^T F p_day = 0.
struct FundamentalMatrix {
    Eigen::Matrix3d f = Eigen::Matrix3d::Zero();

    void validate() const;
};

struct MatchFilterParams {
    double theta_sec = 0.7;  // NN / second-NN squared-distance ratio
    double theta_rel = 20.0; // match / globally-best squared-distance ratio
};

/// Per-query nearest and second-nearest neighbor with squared distances.
/// second < 0 means no second neighbor exists (treated as infinitely far).
struct NeighborTable {
    struct Row {
        int best = -1;
        double best_d2 = 0.0;
        int second = -1;
        double second_d2 = 0.0;
    };
    std::vector<Row> rows;
};

struct RansacParams {
    int iterations = 1000;
    double inlier_threshold = 2.0;  // pixels, Sampson distance
    std::uint64_t seed = 0;
};

struct HarrisParams {
    int max_keypoints = 2000;
    double k = 0.04;
    double response_rel_threshold = 1e-4;  // relative to max response
    int patch_radius = 5;                  // 11x11 descriptor
};

/// Deformed quad mesh of the day pixel grid, expressed in dark-view pixels.
/// Vertices follow the pixel grid (one per pixel); quads are the
/// 4-connectivity cells between adjacent vertices, indexed row-major over
/// the (height-1) x (width-1) cells.
struct WarpMesh {
    int height = 0;  // vertex rows  (= image height)
    int width = 0;   // vertex cols  (= image width)

    std::vector<Eigen::Vector2f> vertices;   // warped position per vertex
    std::vector<std::uint8_t> vertex_valid;  // 0 = behind camera
    std::vector<float> vertex_depth;         // source depth after sky clamp

    std::vector<float> quad_mean_depth;      // mean of 4 source-vertex depths
    std::vector<std::uint8_t> quad_irregular;
    std::vector<std::uint8_t> quad_usable;   // all 4 vertices valid

    int quad_rows() const { return height - 1; }
    int quad_cols() const { return width - 1; }
    std::size_t quad_count() const {
        return static_cast<std::size_t>(quad_rows()) * quad_cols();
    }
    // Vertex ids of quad q in cyclic order: (x,y) (x+1,y) (x+1,y+1) (x,y+1).
    std::array<std::int64_t, 4> quad_vertices(std::int64_t q) const;
};

/// Per-dark-pixel quad assignment with interpolation weights over the four
/// source vertices of the assigned quad. quad = kUncovered means the pixel
/// was copied from the same position in the source map.
struct WarpAssignment {
    static constexpr std::int64_t kUncovered = -1;

    int height = 0;
    int width = 0;
    std::vector<std::int64_t> quad;
    std::vector<std::array<double, 4>> weights;
};

/// Keeps candidates that are mutual nearest neighbors, pass the
/// second-neighbor ratio test and sit within theta_rel of the globally best
/// squared distance. Ratio tests use multiplication so zero distances are
/// handled without division.
MatchSet filter_matches(const std::vector<Eigen::Vector2d>& kp_day,
                        const std::vector<Eigen::Vector2d>& kp_dark,
                        const NeighborTable& dark_to_day,
                        const NeighborTable& day_to_dark,
                        const MatchFilterParams& params = {});

/// Harris corners with 11x11 zero-mean, L2-normalized patch descriptors,
/// matched both ways and filtered. Built-in fallback for when no external
/// match file is supplied. Throws NoKeypoints on featureless images.
MatchSet detect_and_match(const ImageU8& img_day, const ImageU8& img_dark,
                          const HarrisParams& harris = {},
                          const MatchFilterParams& filter = {});

/// Text match file: one "x_day y_day x_dark y_dark" line per match,
/// '#' starts a comment.
MatchSet load_match_file(const std::string& path);
void save_match_file(const std::string& path, const MatchSet& matches);

/// Sampson distance (pixels) of a correspondence under F.
double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& p_day,
                        const Eigen::Vector2d& p_dark);

/// Minimal 7-point solve: up to 3 real fundamental matrices through the
/// 7 given correspondences. Points are Hartley-normalized internally.
std::vector<Eigen::Matrix3d> solve_fundamental_7pt(const MatchSet& sample);

/// Seeded 7-point RANSAC; every candidate from each minimal solve is scored
/// by Sampson inlier count (ties keep the earlier model). Deterministic for
/// a fixed seed.
std::pair<FundamentalMatrix, std::vector<int>> ransac_fundamental(const MatchSet& matches,
                                                                  const RansacParams& params);

/// E = K_dark^T F K_day projected onto the essential manifold, decomposed
/// into the 4 (R, t) candidates and disambiguated by triangulating the
/// inliers; returns the candidate with strictly the most points in front of
/// both cameras, |t| = 1. Throws CheiralityAmbiguous on ties.
CameraMotion essential_and_decompose(const FundamentalMatrix& f, const CameraModel& k_day,
                                     const CameraModel& k_dark, const MatchSet& inliers);

/// Linear (DLT) two-view triangulation; returns the point in the day frame.
Eigen::Vector3d triangulate_linear(const CameraModel& k_day, const CameraModel& k_dark,
                                   const CameraMotion& motion, const Eigen::Vector2d& p_day,
                                   const Eigen::Vector2d& p_dark);

/// Scales the unit translation by the median of d_day(p)/Z_triangulated over
/// inliers with positive depth in both views.
CameraMotion recover_scale(const CameraMotion& motion, const MatchSet& inliers,
                           const CameraModel& k_day, const CameraModel& k_dark,
                           const DepthMap& depth_day);

struct MotionEstimate {
    CameraMotion motion;
    int inlier_count = 0;
};

/// Full pipeline: RANSAC -> essential decomposition -> metric scale.
/// inlier_count is the RANSAC inlier count consumed by the fallback rule.
MotionEstimate estimate_motion(const MatchSet& matches, const CameraModel& k_day,
                               const CameraModel& k_dark, const DepthMap& depth_day,
                               const RansacParams& params = {});

/// As above but detects and matches features itself.
MotionEstimate estimate_motion(const ImageU8& img_day, const ImageU8& img_dark,
                               const CameraModel& k_day, const CameraModel& k_dark,
                               const DepthMap& depth_day, const RansacParams& params = {});

/// Back-project p with its day depth, transform by (R|t), reproject into the
/// dark view. nullopt = point behind the dark camera.
std::optional<Eigen::Vector2d> backproject_reproject(const Eigen::Vector2d& p, double depth,
                                                     const CameraMotion& motion,
                                                     const CameraModel& k_day,
                                                     const CameraModel& k_dark);

// Disocclusion side-length ratio above which a quad is deemed irregular.
inline constexpr double kIrregularSideRatio = 5.0;

/// Warps every pixel-grid vertex into the dark view. sky_mask (optional)
/// marks pixels whose depth is replaced by depth_day.d_max before warping.
/// A quad is irregular when 2nd-longest/3rd-longest deformed side > 5.
WarpMesh build_warp_mesh(const DepthMap& depth_day, const CameraMotion& motion,
                         const CameraModel& k_day, const CameraModel& k_dark,
                         const std::vector<std::uint8_t>* sky_mask = nullptr);

/// Forward-warps s1 through the mesh. Per dark pixel: the containing quad
/// with the smallest mean source depth wins; irregular quads drop the
/// vertices on the near side of their cut; pixels covered by no quad copy
/// s1 at the same position.
std::pair<SoftPredictionMap, WarpAssignment> forward_warp(const SoftPredictionMap& s1,
                                                          const WarpMesh& mesh);

} // namespace nightseg
