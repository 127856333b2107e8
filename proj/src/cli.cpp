#include "nightseg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nightseg/core.hpp"
#include "nightseg/dataset.hpp"
#include "nightseg/parallel.hpp"
#include "nightseg/uiou.hpp"

namespace nightseg::cli {

namespace {

namespace fs = std::filesystem;

std::string g9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::map<std::string, const ManifestRecord*> index_by_id(const std::vector<ManifestRecord>& recs) {
    std::map<std::string, const ManifestRecord*> index;
    for (const auto& r : recs) index[r.id] = &r;
    return index;
}

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out)
        if (c == '/' || c == '\\' || c == ':') c = '_';
    return out;
}

std::map<std::string, std::string> load_correspondence_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open correspondence file " + path);
    std::map<std::string, std::string> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("dark_id,", 0) == 0) continue;
        std::istringstream ss(line);
        std::string dark, day;
        if (!std::getline(ss, dark, ',') || !std::getline(ss, day, ','))
            raise(ErrorCode::FormatError,
                  path + " line " + std::to_string(line_no) + ": expected dark_id,day_id,...");
        pairs[dark] = day;
    }
    return pairs;
}

struct LoadedGt {
    HardLabelMap labels;
    InvalidMask invalid;
};

LoadedGt load_gt(const ManifestRecord& rec) {
    if (!rec.label_path) raise(ErrorCode::SchemaError, rec.id + ": record has no label path");
    LoadedGt gt;
    gt.labels = read_label_png(*rec.label_path);
    if (rec.invalid_path) {
        gt.invalid = read_invalid_png(*rec.invalid_path);
    } else {
        gt.invalid = InvalidMask(gt.labels.height, gt.labels.width, 0);
    }
    return gt;
}

} // namespace

int cmd_match(const MatchOptions& opt) {
    try {
        const auto dark = parse_manifest(opt.dark_manifest);
        const auto day = parse_manifest(opt.day_manifest);
        const CorrespondenceTable table = gps_nearest_correspondence(dark, day);

        std::ofstream out(opt.out_csv);
        if (!out) raise(ErrorCode::IoError, "cannot write " + opt.out_csv);
        out << "dark_id,day_id,distance_m\n";
        for (const auto& rec : dark) {
            const auto& c = table.at(rec.id);
            out << rec.id << ',' << c.day_id << ',' << g9(c.distance_m) << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "match: " << e.what() << "\n";
        return 1;
    }
}

int cmd_refine(const RefineOptions& opt) {
    struct Row {
        std::string dark_id;
        std::string day_id;
        std::string mode;
        int inliers = -1;
        bool failed = false;
    };
    std::vector<Row> rows;
    try {
        const auto pairs = load_correspondence_csv(opt.correspondence_csv);
        const auto dark_recs = parse_manifest(opt.dark_manifest);
        const auto day_recs = parse_manifest(opt.day_manifest);
        const auto day_index = index_by_id(day_recs);
        const ClassCatalog catalog = ClassCatalog::cityscapes19();

        fs::create_directories(opt.out_dir);
        rows.resize(dark_recs.size());

        std::atomic<int> failures{0};
        parallel_for(
            static_cast<std::int64_t>(dark_recs.size()),
            [&](std::int64_t jb, std::int64_t je) {
                WorkerScope inner(1);  // pairs are the parallel unit
                for (std::int64_t j = jb; j < je; ++j) {
                    const auto& dark = dark_recs[j];
                    Row& row = rows[j];
                    row.dark_id = dark.id;
                    try {
                        const auto pair_it = pairs.find(dark.id);
                        if (pair_it == pairs.end())
                            raise(ErrorCode::SchemaError, "no correspondence for " + dark.id);
                        row.day_id = pair_it->second;
                        const auto day_it = day_index.find(pair_it->second);
                        if (day_it == day_index.end())
                            raise(ErrorCode::SchemaError,
                                  "day record " + pair_it->second + " not in manifest");
                        const ManifestRecord& day = *day_it->second;

                        if (!dark.soft_path)
                            raise(ErrorCode::SchemaError, dark.id + ": missing soft map");
                        if (!day.soft_path)
                            raise(ErrorCode::SchemaError, day.id + ": missing soft map");

                        const ImageU8 img_dark = read_png(dark.image_path);
                        const ImageU8 img_day = read_png(day.image_path);
                        const SoftPredictionMap s_dark =
                            validate_soft_map(decode_spm1(*dark.soft_path), catalog);
                        const SoftPredictionMap s_day =
                            validate_soft_map(decode_spm1(*day.soft_path), catalog);

                        DepthMap depth;
                        MatchSet matches;
                        RefineInputs in;
                        in.s_dark = &s_dark;
                        in.img_dark = &img_dark;
                        in.s_day = &s_day;
                        in.img_day = &img_day;
                        if (opt.config.mode != AlignmentMode::Bilateral) {
                            if (!day.depth_path)
                                raise(ErrorCode::MissingDepth,
                                      day.id + ": warp modes need a depth map");
                            depth = decode_dpt1(*day.depth_path, opt.d_max);
                            in.depth_day = &depth;
                            in.cam_day = &day.camera;
                            in.cam_dark = &dark.camera;
                        }
                        if (opt.matches_dir) {
                            const fs::path mp =
                                fs::path(*opt.matches_dir) / (sanitize_id(dark.id) + ".txt");
                            if (fs::exists(mp)) {
                                matches = load_match_file(mp.string());
                                in.matches = &matches;
                            }
                        }

                        const RefineResult result = refine_prediction(in, catalog, opt.config);

                        const std::string stem =
                            (fs::path(opt.out_dir) / sanitize_id(dark.id)).string();
                        encode_spm1(stem + "_refined.spm1", result.refined);
                        write_label_png(stem + "_labels.png", result.labels);
                        row.mode = alignment_mode_name(result.report.used);
                        row.inliers = result.report.inlier_count;
                    } catch (const std::exception& e) {
                        row.failed = true;
                        row.mode = "failed";
                        failures.fetch_add(1);
                        std::cerr << "refine: " << dark.id << ": " << e.what() << "\n";
                    }
                }
            },
            opt.workers);

        std::ofstream report(fs::path(opt.out_dir) / "report.csv");
        if (!report) raise(ErrorCode::IoError, "cannot write report.csv");
        report << "dark_id,day_id,mode,inliers\n";
        for (const auto& row : rows)
            report << row.dark_id << ',' << row.day_id << ',' << row.mode << ',' << row.inliers
                   << '\n';
        return failures.load() == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "refine: " << e.what() << "\n";
        return 1;
    }
}

int cmd_evaluate(const EvaluateOptions& opt) {
    try {
        const auto pred_recs = parse_manifest(opt.pred_manifest);
        const auto gt_recs = parse_manifest(opt.gt_manifest);
        const auto pred_index = index_by_id(pred_recs);
        const ClassCatalog catalog = ClassCatalog::cityscapes19();
        const double theta = opt.theta.value_or(catalog.min_confidence());
        if (theta < catalog.min_confidence() - 1e-12 || theta > 1.0 + 1e-12)
            raise(ErrorCode::ThetaOutOfRange, "theta outside [1/C, 1]");

        std::vector<TallyTable> tables(gt_recs.size(), TallyTable(catalog.num_classes));
        std::vector<std::uint8_t> failed(gt_recs.size(), 0);
        parallel_for(
            static_cast<std::int64_t>(gt_recs.size()),
            [&](std::int64_t jb, std::int64_t je) {
                WorkerScope inner(1);
                for (std::int64_t j = jb; j < je; ++j) {
                    const auto& gt_rec = gt_recs[j];
                    try {
                        const auto it = pred_index.find(gt_rec.id);
                        if (it == pred_index.end())
                            raise(ErrorCode::SchemaError, "no prediction for " + gt_rec.id);
                        const ManifestRecord& pred_rec = *it->second;
                        const LoadedGt gt = load_gt(gt_rec);

                        HardLabelMap pred;
                        if (pred_rec.soft_path) {
                            const SoftPredictionMap s =
                                validate_soft_map(decode_spm1(*pred_rec.soft_path), catalog);
                            pred = threshold_to_hard(s, theta, catalog);
                        } else if (pred_rec.label_path) {
                            pred = read_label_png(*pred_rec.label_path);
                        } else {
                            raise(ErrorCode::SchemaError,
                                  pred_rec.id + ": record has neither soft map nor labels");
                        }
                        tables[j] = tally(pred, gt.labels, gt.invalid, catalog);
                    } catch (const std::exception& e) {
                        failed[j] = 1;
                        std::cerr << "evaluate: " << gt_rec.id << ": " << e.what() << "\n";
                    }
                }
            },
            opt.workers);

        TallyTable total(catalog.num_classes);
        for (const auto& t : tables) total.merge(t);
        const UiouScore score = uiou_score(total);

        std::ostringstream text;
        text << "theta," << g9(theta) << "\n";
        for (int c = 0; c < catalog.num_classes; ++c)
            text << catalog.names[c] << ',' << g9(score.per_class[c]) << '\n';
        text << "mean_uiou," << g9(score.mean) << '\n';
        std::cout << text.str();
        if (opt.out_csv) {
            std::ofstream out(*opt.out_csv);
            if (!out) raise(ErrorCode::IoError, "cannot write " + *opt.out_csv);
            out << text.str();
        }
        const bool any_failed = std::count(failed.begin(), failed.end(), 1) > 0;
        return any_failed ? 1 : 0;
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return 1;
    }
}

int cmd_curve(const CurveOptions& opt) {
    try {
        const auto pred_recs = parse_manifest(opt.pred_manifest);
        const auto gt_recs = parse_manifest(opt.gt_manifest);
        const auto pred_index = index_by_id(pred_recs);
        const ClassCatalog catalog = ClassCatalog::cityscapes19();

        std::vector<SoftPredictionMap> softs(gt_recs.size());
        std::vector<LoadedGt> gts(gt_recs.size());
        std::vector<std::uint8_t> failed(gt_recs.size(), 0);
        parallel_for(
            static_cast<std::int64_t>(gt_recs.size()),
            [&](std::int64_t jb, std::int64_t je) {
                WorkerScope inner(1);
                for (std::int64_t j = jb; j < je; ++j) {
                    const auto& gt_rec = gt_recs[j];
                    try {
                        const auto it = pred_index.find(gt_rec.id);
                        if (it == pred_index.end())
                            raise(ErrorCode::SchemaError, "no prediction for " + gt_rec.id);
                        if (!it->second->soft_path)
                            raise(ErrorCode::SchemaError,
                                  gt_rec.id + ": curve needs soft predictions");
                        softs[j] = validate_soft_map(decode_spm1(*it->second->soft_path), catalog);
                        gts[j] = load_gt(gt_rec);
                    } catch (const std::exception& e) {
                        failed[j] = 1;
                        std::cerr << "curve: " << gt_rec.id << ": " << e.what() << "\n";
                    }
                }
            },
            opt.workers);

        std::vector<const SoftPredictionMap*> s_ptr;
        std::vector<const HardLabelMap*> gt_ptr;
        std::vector<const InvalidMask*> mask_ptr;
        for (std::size_t j = 0; j < gt_recs.size(); ++j) {
            if (failed[j]) continue;
            s_ptr.push_back(&softs[j]);
            gt_ptr.push_back(&gts[j].labels);
            mask_ptr.push_back(&gts[j].invalid);
        }
        if (s_ptr.empty()) raise(ErrorCode::EmptyReferenceSet, "no evaluable image pairs");

        const auto grid = default_theta_grid(catalog, opt.grid_size);
        const UiouCurve curve = uiou_curve(s_ptr, gt_ptr, mask_ptr, grid, catalog);

        std::ofstream out(opt.out_csv);
        if (!out) raise(ErrorCode::IoError, "cannot write " + opt.out_csv);
        out << "theta,mean_uiou";
        for (const auto& name : catalog.names) out << ',' << name;
        out << '\n';
        for (const auto& pt : curve.points) {
            out << g9(pt.theta) << ',' << g9(pt.mean_uiou);
            for (double v : pt.per_class_uiou) out << ',' << g9(v);
            out << '\n';
        }

        std::size_t best = 0;
        for (std::size_t i = 1; i < curve.points.size(); ++i)
            if (curve.points[i].mean_uiou > curve.points[best].mean_uiou) best = i;
        std::cout << "max_mean_uiou," << g9(curve.points[best].mean_uiou) << ",at_theta,"
                  << g9(curve.points[best].theta) << "\n";

        const bool any_failed = std::count(failed.begin(), failed.end(), 1) > 0;
        return any_failed ? 1 : 0;
    } catch (const std::exception& e) {
        std::cerr << "curve: " << e.what() << "\n";
        return 1;
    }
}

} // namespace nightseg::cli
