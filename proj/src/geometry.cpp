#include "nightseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "nightseg/parallel.hpp"

namespace nightseg {

void FundamentalMatrix::validate() const {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(f);
    const auto& sv = svd.singularValues();
    if (sv(2) > 1e-9 * sv(0))
        raise(ErrorCode::InvalidArgument, "fundamental matrix is not rank 2");
    if (std::abs(f.norm() - 1.0) > 1e-9)
        raise(ErrorCode::InvalidArgument, "fundamental matrix is not Frobenius-normalized");
}

std::array<std::int64_t, 4> WarpMesh::quad_vertices(std::int64_t q) const {
    const std::int64_t qy = q / quad_cols();
    const std::int64_t qx = q % quad_cols();
    const std::int64_t v00 = qy * width + qx;
    return {v00, v00 + 1, v00 + width + 1, v00 + width};
}

// ---------------------------------------------------------------------------
// Match filtering and the built-in detector
// ---------------------------------------------------------------------------

MatchSet filter_matches(const std::vector<Eigen::Vector2d>& kp_day,
                        const std::vector<Eigen::Vector2d>& kp_dark,
                        const NeighborTable& dark_to_day, const NeighborTable& day_to_dark,
                        const MatchFilterParams& params) {
    double global_min = std::numeric_limits<double>::infinity();
    for (const auto& row : dark_to_day.rows) {
        if (row.best >= 0) global_min = std::min(global_min, row.best_d2);
    }
    MatchSet out;
    for (std::size_t i = 0; i < dark_to_day.rows.size(); ++i) {
        const auto& row = dark_to_day.rows[i];
        const int j = row.best;
        if (j < 0) continue;
        if (day_to_dark.rows[j].best != static_cast<int>(i)) continue;  // mutual NN
        if (row.second >= 0 && row.best_d2 > params.theta_sec * row.second_d2) continue;
        if (row.best_d2 > params.theta_rel * global_min) continue;
        out.push_back(Match{kp_day[j], kp_dark[i], row.best_d2});
    }
    return out;
}

namespace {

std::vector<float> to_gray(const ImageU8& img) {
    const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
    std::vector<float> gray(pixels);
    if (img.channels == 1) {
        for (std::size_t i = 0; i < pixels; ++i) gray[i] = img.data[i];
    } else if (img.channels == 3) {
        for (std::size_t i = 0; i < pixels; ++i) {
            const std::uint8_t* p = img.data.data() + i * 3;
            gray[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
        }
    } else {
        raise(ErrorCode::InvalidArgument, "expected a 1- or 3-channel image");
    }
    return gray;
}

struct Keypoint {
    int x = 0;
    int y = 0;
    float response = 0.0f;
};

// 5-tap binomial smoothing of the structure tensor entries.
void smooth5(const std::vector<float>& src, std::vector<float>& dst, int h, int w) {
    static const float k[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};
    std::vector<float> tmp(src.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 2; x < w - 2; ++x) {
            float s = 0.0f;
            for (int d = -2; d <= 2; ++d) s += k[d + 2] * src[y * w + x + d];
            tmp[y * w + x] = s;
        }
    }
    dst.assign(src.size(), 0.0f);
    for (int y = 2; y < h - 2; ++y) {
        for (int x = 0; x < w; ++x) {
            float s = 0.0f;
            for (int d = -2; d <= 2; ++d) s += k[d + 2] * tmp[(y + d) * w + x];
            dst[y * w + x] = s;
        }
    }
}

std::vector<Keypoint> harris_keypoints(const std::vector<float>& gray, int h, int w,
                                       const HarrisParams& params) {
    if (h < 8 || w < 8) return {};
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<float> ix(n, 0.0f), iy(n, 0.0f);
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const auto at = [&](int yy, int xx) { return gray[yy * w + xx]; };
            ix[y * w + x] = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) -
                             at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1)) / 8.0f;
            iy[y * w + x] = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) -
                             at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1)) / 8.0f;
        }
    }
    std::vector<float> ixx(n), ixy(n), iyy(n);
    for (std::size_t i = 0; i < n; ++i) {
        ixx[i] = ix[i] * ix[i];
        ixy[i] = ix[i] * iy[i];
        iyy[i] = iy[i] * iy[i];
    }
    std::vector<float> a, b, c;
    smooth5(ixx, a, h, w);
    smooth5(ixy, b, h, w);
    smooth5(iyy, c, h, w);

    std::vector<float> resp(n, 0.0f);
    float max_resp = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const float det = a[i] * c[i] - b[i] * b[i];
        const float tr = a[i] + c[i];
        resp[i] = det - static_cast<float>(params.k) * tr * tr;
        max_resp = std::max(max_resp, resp[i]);
    }
    if (max_resp <= 0.0f) return {};

    const float threshold = static_cast<float>(params.response_rel_threshold) * max_resp;
    const int margin = params.patch_radius + 1;
    std::vector<Keypoint> kps;
    for (int y = margin; y < h - margin; ++y) {
        for (int x = margin; x < w - margin; ++x) {
            const float r = resp[y * w + x];
            if (r <= threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (resp[(y + dy) * w + x + dx] > r) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) kps.push_back({x, y, r});
        }
    }
    std::sort(kps.begin(), kps.end(), [](const Keypoint& l, const Keypoint& r) {
        if (l.response != r.response) return l.response > r.response;
        if (l.y != r.y) return l.y < r.y;
        return l.x < r.x;
    });
    if (static_cast<int>(kps.size()) > params.max_keypoints) kps.resize(params.max_keypoints);
    return kps;
}

// Zero-mean, L2-normalized square intensity patches.
bool patch_descriptor(const std::vector<float>& gray, int h, int w, const Keypoint& kp, int radius,
                      std::vector<float>& out) {
    (void)h;
    const int side = 2 * radius + 1;
    out.resize(static_cast<std::size_t>(side) * side);
    double mean = 0.0;
    int idx = 0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const float v = gray[(kp.y + dy) * w + kp.x + dx];
            out[idx++] = v;
            mean += v;
        }
    mean /= out.size();
    double norm_sq = 0.0;
    for (auto& v : out) {
        v = static_cast<float>(v - mean);
        norm_sq += static_cast<double>(v) * v;
    }
    if (norm_sq < 1e-12) return false;  // constant patch carries no signal
    const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (auto& v : out) v *= inv;
    return true;
}

NeighborTable build_neighbor_table(const std::vector<std::vector<float>>& queries,
                                   const std::vector<std::vector<float>>& targets) {
    NeighborTable table;
    table.rows.resize(queries.size());
    parallel_for(static_cast<std::int64_t>(queries.size()), [&](std::int64_t qb, std::int64_t qe) {
        for (std::int64_t q = qb; q < qe; ++q) {
            NeighborTable::Row row;
            double best = std::numeric_limits<double>::infinity();
            double second = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < targets.size(); ++t) {
                const auto& a = queries[q];
                const auto& b = targets[t];
                double d2 = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    const double d = static_cast<double>(a[k]) - b[k];
                    d2 += d * d;
                }
                if (d2 < best) {
                    second = best;
                    row.second = row.best;
                    best = d2;
                    row.best = static_cast<int>(t);
                } else if (d2 < second) {
                    second = d2;
                    row.second = static_cast<int>(t);
                }
            }
            row.best_d2 = best;
            row.second_d2 = second;
            table.rows[q] = row;
        }
    });
    return table;
}

} // namespace

MatchSet detect_and_match(const ImageU8& img_day, const ImageU8& img_dark,
                          const HarrisParams& harris, const MatchFilterParams& filter) {
    const auto gray_day = to_gray(img_day);
    const auto gray_dark = to_gray(img_dark);
    const auto kp_day = harris_keypoints(gray_day, img_day.height, img_day.width, harris);
    const auto kp_dark = harris_keypoints(gray_dark, img_dark.height, img_dark.width, harris);
    if (kp_day.empty() || kp_dark.empty())
        raise(ErrorCode::NoKeypoints, "no corner features detected");

    std::vector<std::vector<float>> desc_day, desc_dark;
    std::vector<Eigen::Vector2d> pos_day, pos_dark;
    std::vector<float> buf;
    for (const auto& kp : kp_day) {
        if (patch_descriptor(gray_day, img_day.height, img_day.width, kp, harris.patch_radius, buf)) {
            desc_day.push_back(buf);
            pos_day.emplace_back(kp.x, kp.y);
        }
    }
    for (const auto& kp : kp_dark) {
        if (patch_descriptor(gray_dark, img_dark.height, img_dark.width, kp, harris.patch_radius, buf)) {
            desc_dark.push_back(buf);
            pos_dark.emplace_back(kp.x, kp.y);
        }
    }
    if (desc_day.empty() || desc_dark.empty())
        raise(ErrorCode::NoKeypoints, "no usable descriptors");

    const NeighborTable dark_to_day = build_neighbor_table(desc_dark, desc_day);
    const NeighborTable day_to_dark = build_neighbor_table(desc_day, desc_dark);
    return filter_matches(pos_day, pos_dark, dark_to_day, day_to_dark, filter);
}

MatchSet load_match_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open match file " + path);
    MatchSet matches;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        double xd, yd, xz, yz;
        if (!(ss >> xd)) continue;  // blank line
        if (!(ss >> yd >> xz >> yz))
            raise(ErrorCode::FormatError,
                  "match file " + path + " line " + std::to_string(line_no) +
                      ": expected 4 numbers");
        matches.push_back(Match{{xd, yd}, {xz, yz}, -1.0});
    }
    return matches;
}

void save_match_file(const std::string& path, const MatchSet& matches) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write match file " + path);
    char buf[160];
    for (const auto& m : matches) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g\n", m.p_day.x(), m.p_day.y(),
                      m.p_dark.x(), m.p_dark.y());
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Fundamental matrix estimation
// ---------------------------------------------------------------------------

double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& p_day,
                        const Eigen::Vector2d& p_dark) {
    const Eigen::Vector3d x1(p_day.x(), p_day.y(), 1.0);
    const Eigen::Vector3d x2(p_dark.x(), p_dark.y(), 1.0);
    const Eigen::Vector3d fx1 = f * x1;
    const Eigen::Vector3d ftx2 = f.transpose() * x2;
    const double num = x2.dot(fx1);
    const double den = fx1(0) * fx1(0) + fx1(1) * fx1(1) + ftx2(0) * ftx2(0) + ftx2(1) * ftx2(1);
    if (den <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(num * num / den);
}

namespace {

Eigen::Matrix3d hartley_normalization(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += (p - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    const double scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    Eigen::Matrix3d t;
    t << scale, 0.0, -scale * centroid.x(), 0.0, scale, -scale * centroid.y(), 0.0, 0.0, 1.0;
    return t;
}

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, largest-magnitude terms first
// reduced as needed; roots are polished with a Newton step.
std::vector<double> solve_real_cubic(double c3, double c2, double c1, double c0) {
    std::vector<double> roots;
    const double max_c = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
    if (max_c == 0.0) return roots;
    if (std::abs(c3) < 1e-14 * max_c) {
        if (std::abs(c2) < 1e-14 * max_c) {
            if (std::abs(c1) >= 1e-14 * max_c) roots.push_back(-c0 / c1);
            return roots;
        }
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
            const double s = std::sqrt(disc);
            roots.push_back((-c1 + s) / (2.0 * c2));
            roots.push_back((-c1 - s) / (2.0 * c2));
        }
        return roots;
    }
    const double a = c2 / c3, b = c1 / c3, c = c0 / c3;
    // depressed cubic t^3 + p t + q with x = t - a/3
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    if (disc > 0.0) {
        const double s = std::sqrt(disc);
        const double u = std::cbrt(-q / 2.0 + s);
        const double v = std::cbrt(-q / 2.0 - s);
        roots.push_back(u + v - a / 3.0);
    } else if (disc == 0.0) {
        const double u = std::cbrt(-q / 2.0);
        roots.push_back(2.0 * u - a / 3.0);
        roots.push_back(-u - a / 3.0);
    } else {
        const double r = std::sqrt(-p * p * p / 27.0);
        const double phi = std::acos(std::clamp(-q / (2.0 * r), -1.0, 1.0));
        const double m = 2.0 * std::sqrt(-p / 3.0);
        for (int k = 0; k < 3; ++k)
            roots.push_back(m * std::cos((phi + 2.0 * M_PI * k) / 3.0) - a / 3.0);
    }
    for (double& x : roots) {
        const double fx = ((c3 * x + c2) * x + c1) * x + c0;
        const double dfx = (3.0 * c3 * x + 2.0 * c2) * x + c1;
        if (std::abs(dfx) > 1e-14) x -= fx / dfx;
    }
    return roots;
}

Eigen::Matrix3d reshape_row_major(const Eigen::Matrix<double, 9, 1>& v) {
    Eigen::Matrix3d m;
    m << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    return m;
}

} // namespace

std::vector<Eigen::Matrix3d> solve_fundamental_7pt(const MatchSet& sample) {
    if (sample.size() != 7)
        raise(ErrorCode::InvalidArgument, "7-point solver needs exactly 7 matches");

    std::vector<Eigen::Vector2d> day(7), dark(7);
    for (int i = 0; i < 7; ++i) {
        day[i] = sample[i].p_day;
        dark[i] = sample[i].p_dark;
    }
    const Eigen::Matrix3d t_day = hartley_normalization(day);
    const Eigen::Matrix3d t_dark = hartley_normalization(dark);

    Eigen::Matrix<double, 7, 9> a;
    for (int i = 0; i < 7; ++i) {
        const Eigen::Vector3d pd = t_day * Eigen::Vector3d(day[i].x(), day[i].y(), 1.0);
        const Eigen::Vector3d pz = t_dark * Eigen::Vector3d(dark[i].x(), dark[i].y(), 1.0);
        const double x = pd.x() / pd.z(), y = pd.y() / pd.z();
        const double xp = pz.x() / pz.z(), yp = pz.y() / pz.z();
        a.row(i) << xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0;
    }

    Eigen::JacobiSVD<Eigen::Matrix<double, 7, 9>> svd(a, Eigen::ComputeFullV);
    const Eigen::Matrix3d f1 = reshape_row_major(svd.matrixV().col(7));
    const Eigen::Matrix3d f2 = reshape_row_major(svd.matrixV().col(8));

    // det(f2 + lambda (f1 - f2)) as a cubic in lambda
    const Eigen::Matrix3d fd = f1 - f2;
    auto det3 = [](const Eigen::Vector3d& c0, const Eigen::Vector3d& c1,
                   const Eigen::Vector3d& c2) { return c0.dot(c1.cross(c2)); };
    const Eigen::Vector3d b0 = f2.col(0), b1 = f2.col(1), b2 = f2.col(2);
    const Eigen::Vector3d d0 = fd.col(0), d1 = fd.col(1), d2 = fd.col(2);
    const double c0 = det3(b0, b1, b2);
    const double c1 = det3(d0, b1, b2) + det3(b0, d1, b2) + det3(b0, b1, d2);
    const double c2 = det3(d0, d1, b2) + det3(d0, b1, d2) + det3(b0, d1, d2);
    const double c3 = det3(d0, d1, d2);

    std::vector<Eigen::Matrix3d> result;
    for (double lambda : solve_real_cubic(c3, c2, c1, c0)) {
        if (!std::isfinite(lambda)) continue;
        Eigen::Matrix3d fn = f2 + lambda * fd;
        Eigen::Matrix3d f = t_dark.transpose() * fn * t_day;
        const double norm = f.norm();
        if (norm < 1e-12) continue;
        result.push_back(f / norm);
    }
    return result;
}

std::pair<FundamentalMatrix, std::vector<int>> ransac_fundamental(const MatchSet& matches,
                                                                  const RansacParams& params) {
    const int n = static_cast<int>(matches.size());
    if (n < 7)
        raise(ErrorCode::InsufficientMatches,
              "need at least 7 matches, got " + std::to_string(n));

    std::mt19937_64 rng(params.seed);
    const double t = params.inlier_threshold;

    Eigen::Matrix3d best_f = Eigen::Matrix3d::Zero();
    int best_count = -1;
    bool any_model = false;

    MatchSet sample(7);
    int idx[7];
    for (int iter = 0; iter < params.iterations; ++iter) {
        for (int k = 0; k < 7; ++k) {
            bool fresh = false;
            while (!fresh) {
                idx[k] = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
                fresh = true;
                for (int j = 0; j < k; ++j)
                    if (idx[j] == idx[k]) {
                        fresh = false;
                        break;
                    }
            }
            sample[k] = matches[idx[k]];
        }
        for (const Eigen::Matrix3d& f : solve_fundamental_7pt(sample)) {
            any_model = true;
            int count = 0;
            for (const auto& m : matches)
                if (sampson_distance(f, m.p_day, m.p_dark) <= t) ++count;
            if (count > best_count) {
                best_count = count;
                best_f = f;
            }
        }
    }
    if (!any_model)
        raise(ErrorCode::DegenerateSample, "all RANSAC iterations were degenerate");

    // Enforce rank 2 and unit Frobenius norm on the winner, then recompute
    // the inlier set against the returned matrix.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(best_f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d sv = svd.singularValues();
    sv(2) = 0.0;
    Eigen::Matrix3d f = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
    f /= f.norm();

    std::vector<int> inliers;
    for (int i = 0; i < n; ++i)
        if (sampson_distance(f, matches[i].p_day, matches[i].p_dark) <= t) inliers.push_back(i);

    return {FundamentalMatrix{f}, std::move(inliers)};
}

// ---------------------------------------------------------------------------
// Relative pose
// ---------------------------------------------------------------------------

Eigen::Vector3d triangulate_linear(const CameraModel& k_day, const CameraModel& k_dark,
                                   const CameraMotion& motion, const Eigen::Vector2d& p_day,
                                   const Eigen::Vector2d& p_dark) {
    Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
    p1.block<3, 3>(0, 0) = k_day.K();
    Eigen::Matrix<double, 3, 4> rt;
    rt.block<3, 3>(0, 0) = motion.rotation;
    rt.col(3) = motion.translation;
    const Eigen::Matrix<double, 3, 4> p2 = k_dark.K() * rt;

    Eigen::Matrix4d a;
    a.row(0) = p_day.x() * p1.row(2) - p1.row(0);
    a.row(1) = p_day.y() * p1.row(2) - p1.row(1);
    a.row(2) = p_dark.x() * p2.row(2) - p2.row(0);
    a.row(3) = p_dark.y() * p2.row(2) - p2.row(1);

    Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
    const Eigen::Vector4d x = svd.matrixV().col(3);
    if (std::abs(x(3)) < 1e-15)
        return Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    return x.head<3>() / x(3);
}

CameraMotion essential_and_decompose(const FundamentalMatrix& f, const CameraModel& k_day,
                                     const CameraModel& k_dark, const MatchSet& inliers) {
    if (inliers.empty())
        raise(ErrorCode::CheiralityAmbiguous, "no inliers available for cheirality voting");

    const Eigen::Matrix3d e = k_dark.K().transpose() * f.f * k_day.K();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    if (u.determinant() < 0.0) u = -u;
    if (v.determinant() < 0.0) v = -v;

    Eigen::Matrix3d w;
    w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
    const Eigen::Matrix3d r1 = u * w * v.transpose();
    const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
    const Eigen::Vector3d t = u.col(2);

    const CameraMotion candidates[4] = {
        {r1, t}, {r1, -t}, {r2, t}, {r2, -t}};

    int votes[4] = {0, 0, 0, 0};
    for (int ci = 0; ci < 4; ++ci) {
        const auto& cand = candidates[ci];
        for (const auto& m : inliers) {
            const Eigen::Vector3d x = triangulate_linear(k_day, k_dark, cand, m.p_day, m.p_dark);
            if (!x.allFinite()) continue;
            if (x.z() <= 0.0) continue;
            const double z_dark = (cand.rotation * x + cand.translation).z();
            if (z_dark <= 0.0) continue;
            ++votes[ci];
        }
    }
    int best = 0;
    for (int ci = 1; ci < 4; ++ci)
        if (votes[ci] > votes[best]) best = ci;
    int runner_up = -1;
    for (int ci = 0; ci < 4; ++ci) {
        if (ci == best) continue;
        if (runner_up < 0 || votes[ci] > votes[runner_up]) runner_up = ci;
    }
    if (votes[best] == 0 || votes[best] == votes[runner_up])
        raise(ErrorCode::CheiralityAmbiguous, "no pose candidate dominates the cheirality vote");
    return candidates[best];
}

CameraMotion recover_scale(const CameraMotion& motion, const MatchSet& inliers,
                           const CameraModel& k_day, const CameraModel& k_dark,
                           const DepthMap& depth_day) {
    std::vector<double> ratios;
    ratios.reserve(inliers.size());
    for (const auto& m : inliers) {
        const Eigen::Vector3d x = triangulate_linear(k_day, k_dark, motion, m.p_day, m.p_dark);
        if (!x.allFinite() || x.z() <= 0.0) continue;
        if ((motion.rotation * x + motion.translation).z() <= 0.0) continue;
        const int px = static_cast<int>(std::lround(m.p_day.x()));
        const int py = static_cast<int>(std::lround(m.p_day.y()));
        if (px < 0 || px >= depth_day.width || py < 0 || py >= depth_day.height) continue;
        const double d = depth_day.at(py, px);
        if (!(d > 0.0)) continue;
        ratios.push_back(d / x.z());
    }
    if (ratios.empty())
        raise(ErrorCode::NoValidTriangulation, "no inlier produced a valid triangulation");

    std::sort(ratios.begin(), ratios.end());
    const std::size_t n = ratios.size();
    const double median =
        n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);

    CameraMotion scaled = motion;
    scaled.translation *= median;
    return scaled;
}

MotionEstimate estimate_motion(const MatchSet& matches, const CameraModel& k_day,
                               const CameraModel& k_dark, const DepthMap& depth_day,
                               const RansacParams& params) {
    auto [f, inlier_idx] = ransac_fundamental(matches, params);
    MatchSet inliers;
    inliers.reserve(inlier_idx.size());
    for (int i : inlier_idx) inliers.push_back(matches[i]);

    const CameraMotion unit = essential_and_decompose(f, k_day, k_dark, inliers);
    const CameraMotion metric = recover_scale(unit, inliers, k_day, k_dark, depth_day);
    return MotionEstimate{metric, static_cast<int>(inliers.size())};
}

MotionEstimate estimate_motion(const ImageU8& img_day, const ImageU8& img_dark,
                               const CameraModel& k_day, const CameraModel& k_dark,
                               const DepthMap& depth_day, const RansacParams& params) {
    const MatchSet matches = detect_and_match(img_day, img_dark);
    return estimate_motion(matches, k_day, k_dark, depth_day, params);
}

// ---------------------------------------------------------------------------
// Forward warping
// ---------------------------------------------------------------------------

std::optional<Eigen::Vector2d> backproject_reproject(const Eigen::Vector2d& p, double depth,
                                                     const CameraMotion& motion,
                                                     const CameraModel& k_day,
                                                     const CameraModel& k_dark) {
    const Eigen::Vector3d ray((p.x() - k_day.cx) / k_day.fx, (p.y() - k_day.cy) / k_day.fy, 1.0);
    const Eigen::Vector3d x = depth * ray;
    const Eigen::Vector3d xp = motion.rotation * x + motion.translation;
    if (xp.z() <= 0.0) return std::nullopt;
    return Eigen::Vector2d(k_dark.fx * xp.x() / xp.z() + k_dark.cx,
                           k_dark.fy * xp.y() / xp.z() + k_dark.cy);
}

WarpMesh build_warp_mesh(const DepthMap& depth_day, const CameraMotion& motion,
                         const CameraModel& k_day, const CameraModel& k_dark,
                         const std::vector<std::uint8_t>* sky_mask) {
    const int h = depth_day.height, w = depth_day.width;
    if (h < 2 || w < 2) raise(ErrorCode::InvalidArgument, "mesh needs at least 2x2 pixels");
    if (sky_mask && static_cast<int>(sky_mask->size()) != h * w)
        raise(ErrorCode::DimensionMismatch, "sky mask size does not match depth map");

    WarpMesh mesh;
    mesh.height = h;
    mesh.width = w;
    const std::size_t vcount = static_cast<std::size_t>(h) * w;
    mesh.vertices.resize(vcount);
    mesh.vertex_valid.assign(vcount, 0);
    mesh.vertex_depth.resize(vcount);

    parallel_for(h, [&](std::int64_t yb, std::int64_t ye) {
        for (std::int64_t y = yb; y < ye; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t v = static_cast<std::size_t>(y) * w + x;
                float d = depth_day.depth[v];
                if (sky_mask && (*sky_mask)[v]) d = depth_day.d_max;
                mesh.vertex_depth[v] = d;
                const auto p = backproject_reproject(
                    Eigen::Vector2d(x, static_cast<double>(y)), d, motion, k_day, k_dark);
                if (p && p->allFinite()) {
                    mesh.vertices[v] = p->cast<float>();
                    mesh.vertex_valid[v] = 1;
                } else {
                    mesh.vertices[v] = Eigen::Vector2f::Zero();
                }
            }
        }
    });

    const std::size_t qcount = mesh.quad_count();
    mesh.quad_mean_depth.resize(qcount);
    mesh.quad_irregular.assign(qcount, 0);
    mesh.quad_usable.assign(qcount, 0);

    parallel_for(mesh.quad_rows(), [&](std::int64_t qyb, std::int64_t qye) {
        for (std::int64_t qy = qyb; qy < qye; ++qy) {
            for (int qx = 0; qx < mesh.quad_cols(); ++qx) {
                const std::int64_t q = qy * mesh.quad_cols() + qx;
                const auto vid = mesh.quad_vertices(q);
                float depth_sum = 0.0f;
                bool usable = true;
                for (const auto v : vid) {
                    depth_sum += mesh.vertex_depth[v];
                    usable = usable && mesh.vertex_valid[v];
                }
                mesh.quad_mean_depth[q] = depth_sum / 4.0f;
                mesh.quad_usable[q] = usable ? 1 : 0;
                if (!usable) continue;

                double side[4];
                for (int k = 0; k < 4; ++k) {
                    const Eigen::Vector2f d =
                        mesh.vertices[vid[(k + 1) % 4]] - mesh.vertices[vid[k]];
                    side[k] = d.cast<double>().norm();
                }
                double sorted[4] = {side[0], side[1], side[2], side[3]};
                std::sort(sorted, sorted + 4, std::greater<double>());
                const bool irregular =
                    sorted[2] > 0.0 ? sorted[1] / sorted[2] > kIrregularSideRatio
                                    : sorted[1] > 0.0;
                mesh.quad_irregular[q] = irregular ? 1 : 0;
            }
        }
    });
    return mesh;
}

namespace {

// Point-in-triangle with inclusive edges, orientation-agnostic.
inline bool point_in_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
        return u.x() * v.y() - u.y() * v.x();
    };
    const double s1 = cross(b - a, p - a);
    const double s2 = cross(c - b, p - b);
    const double s3 = cross(a - c, p - c);
    const bool non_neg = s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0;
    const bool non_pos = s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0;
    return non_neg || non_pos;
}

// Quads are tested as two triangles split along the fixed v0-v2 diagonal.
inline bool point_in_quad(const Eigen::Vector2d& p, const std::array<Eigen::Vector2d, 4>& v) {
    return point_in_triangle(p, v[0], v[1], v[2]) || point_in_triangle(p, v[0], v[2], v[3]);
}

// Mean value coordinates of p in the (possibly deformed) quad; reduces to
// bilinear weights on axis-aligned rectangles. Vertex and edge incidences
// take the exact one- or two-point weights.
std::array<double, 4> mean_value_weights(const Eigen::Vector2d& p,
                                         const std::array<Eigen::Vector2d, 4>& v) {
    std::array<double, 4> w{0.0, 0.0, 0.0, 0.0};
    std::array<Eigen::Vector2d, 4> d;
    std::array<double, 4> dist;
    for (int i = 0; i < 4; ++i) {
        d[i] = v[i] - p;
        dist[i] = d[i].norm();
        if (dist[i] < 1e-12) {
            w[i] = 1.0;
            return w;
        }
    }
    std::array<double, 4> tan_half;
    for (int i = 0; i < 4; ++i) {
        const int j = (i + 1) % 4;
        const double cross = std::abs(d[i].x() * d[j].y() - d[i].y() * d[j].x());
        const double dot = d[i].dot(d[j]);
        const double denom = dist[i] * dist[j] + dot;
        if (denom < 1e-12) {
            // p lies on the segment v_i v_j
            w[i] = dist[j] / (dist[i] + dist[j]);
            w[j] = dist[i] / (dist[i] + dist[j]);
            for (int k = 0; k < 4; ++k)
                if (k != i && k != j) w[k] = 0.0;
            return w;
        }
        tan_half[i] = cross / denom;
    }
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        const int prev = (i + 3) % 4;
        w[i] = (tan_half[prev] + tan_half[i]) / dist[i];
        if (w[i] < 0.0) w[i] = 0.0;  // inverted quads can push MVC negative
        sum += w[i];
    }
    for (int i = 0; i < 4; ++i) w[i] /= sum;
    return w;
}

// Removing the two longest sides of a 4-cycle leaves two connected vertex
// components; returns a bitmask of the component with the larger mean
// source depth (the distant side of the cut).
std::uint8_t far_side_mask(const std::array<Eigen::Vector2d, 4>& v,
                           const std::array<float, 4>& depth) {
    std::array<double, 4> side;
    for (int k = 0; k < 4; ++k) side[k] = (v[(k + 1) % 4] - v[k]).norm();
    int order[4] = {0, 1, 2, 3};
    std::sort(order, order + 4, [&](int a, int b) { return side[a] > side[b]; });
    const bool removed[4] = {
        order[0] == 0 || order[1] == 0, order[0] == 1 || order[1] == 1,
        order[0] == 2 || order[1] == 2, order[0] == 3 || order[1] == 3};

    // connected components over the remaining edges
    int comp[4] = {0, 1, 2, 3};
    for (int k = 0; k < 4; ++k) {
        if (removed[k]) continue;
        const int a = k, b = (k + 1) % 4;
        const int from = std::max(comp[a], comp[b]);
        const int to = std::min(comp[a], comp[b]);
        for (int& c : comp)
            if (c == from) c = to;
    }
    double mean[4] = {0, 0, 0, 0};
    int count[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) {
        mean[comp[i]] += depth[i];
        ++count[comp[i]];
    }
    int best_comp = -1;
    double best_mean = -1.0;
    for (int c = 0; c < 4; ++c) {
        if (count[c] == 0) continue;
        const double m = mean[c] / count[c];
        if (m > best_mean) {
            best_mean = m;
            best_comp = c;
        }
    }
    std::uint8_t mask = 0;
    for (int i = 0; i < 4; ++i)
        if (comp[i] == best_comp) mask |= static_cast<std::uint8_t>(1 << i);
    return mask;
}

} // namespace

std::pair<SoftPredictionMap, WarpAssignment> forward_warp(const SoftPredictionMap& s1,
                                                          const WarpMesh& mesh) {
    if (s1.height != mesh.height || s1.width != mesh.width)
        raise(ErrorCode::DimensionMismatch, "prediction and mesh dimensions differ");
    const int h = s1.height, w = s1.width, c = s1.channels;

    WarpAssignment assign;
    assign.height = h;
    assign.width = w;
    assign.quad.assign(static_cast<std::size_t>(h) * w, WarpAssignment::kUncovered);
    assign.weights.assign(static_cast<std::size_t>(h) * w, {0.0f, 0.0f, 0.0f, 0.0f});

    // Rasterize quads serially: the smallest mean depth wins, ties keep the
    // lowest quad id.
    std::vector<float> best_depth(static_cast<std::size_t>(h) * w,
                                  std::numeric_limits<float>::infinity());
    const std::int64_t qcount = static_cast<std::int64_t>(mesh.quad_count());
    for (std::int64_t q = 0; q < qcount; ++q) {
        if (!mesh.quad_usable[q]) continue;
        const auto vid = mesh.quad_vertices(q);
        std::array<Eigen::Vector2d, 4> v;
        for (int k = 0; k < 4; ++k) v[k] = mesh.vertices[vid[k]].cast<double>();

        double minx = v[0].x(), maxx = v[0].x(), miny = v[0].y(), maxy = v[0].y();
        for (int k = 1; k < 4; ++k) {
            minx = std::min(minx, v[k].x());
            maxx = std::max(maxx, v[k].x());
            miny = std::min(miny, v[k].y());
            maxy = std::max(maxy, v[k].y());
        }
        // clamp in double before casting: deformed vertices can be huge
        const int x0 = static_cast<int>(std::min<double>(std::max(0.0, std::ceil(minx)), w));
        const int x1 = static_cast<int>(std::max<double>(std::min<double>(std::floor(maxx), w - 1), -1.0));
        const int y0 = static_cast<int>(std::min<double>(std::max(0.0, std::ceil(miny)), h));
        const int y1 = static_cast<int>(std::max<double>(std::min<double>(std::floor(maxy), h - 1), -1.0));
        const float depth = mesh.quad_mean_depth[q];

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                if (depth >= best_depth[p]) continue;
                if (!point_in_quad(Eigen::Vector2d(x, y), v)) continue;
                best_depth[p] = depth;
                assign.quad[p] = q;
            }
        }
    }

    SoftPredictionMap out(h, w, c);
    parallel_for(h, [&](std::int64_t yb, std::int64_t ye) {
        for (std::int64_t y = yb; y < ye; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const std::int64_t q = assign.quad[p];
                bool covered = false;
                if (q != WarpAssignment::kUncovered) {
                    const auto vid = mesh.quad_vertices(q);
                    std::array<Eigen::Vector2d, 4> v;
                    std::array<float, 4> vdepth;
                    for (int k = 0; k < 4; ++k) {
                        v[k] = mesh.vertices[vid[k]].cast<double>();
                        vdepth[k] = mesh.vertex_depth[vid[k]];
                    }
                    auto wt = mean_value_weights(Eigen::Vector2d(x, static_cast<double>(y)), v);
                    if (mesh.quad_irregular[q]) {
                        const std::uint8_t keep = far_side_mask(v, vdepth);
                        for (int k = 0; k < 4; ++k)
                            if (!(keep & (1 << k))) wt[k] = 0.0;
                        const double sum = wt[0] + wt[1] + wt[2] + wt[3];
                        if (sum > 1e-12) {
                            for (auto& ww : wt) ww /= sum;
                        } else {
                            wt = {0.0, 0.0, 0.0, 0.0};  // fully cut: treat as uncovered
                        }
                    }
                    const double sum = wt[0] + wt[1] + wt[2] + wt[3];
                    if (sum > 0.0) {
                        covered = true;
                        float* ov = out.pixel(static_cast<int>(y), x);
                        for (int cc = 0; cc < c; ++cc) {
                            double acc = 0.0;
                            for (int k = 0; k < 4; ++k) {
                                if (wt[k] == 0.0) continue;
                                const std::int64_t vy = vid[k] / w;
                                const std::int64_t vx = vid[k] % w;
                                acc += wt[k] * s1.pixel(static_cast<int>(vy),
                                                        static_cast<int>(vx))[cc];
                            }
                            ov[cc] = static_cast<float>(acc);
                        }
                        assign.weights[p] = wt;
                    }
                }
                if (!covered) {
                    assign.quad[p] = WarpAssignment::kUncovered;
                    const float* sv = s1.pixel(static_cast<int>(y), x);
                    float* ov = out.pixel(static_cast<int>(y), x);
                    for (int cc = 0; cc < c; ++cc) ov[cc] = sv[cc];
                }
            }
        }
    });
    return {std::move(out), std::move(assign)};
}

} // namespace nightseg
