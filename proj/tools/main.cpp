#include <string>

#include <CLI11.hpp>

#include "nightseg/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"nightseg: geometrically guided segmentation refinement and "
                 "uncertainty-aware (UIoU) evaluation"};
    app.require_subcommand(1);

    using namespace nightseg;

    cli::MatchOptions mopt;
    auto* match = app.add_subcommand("match", "GPS nearest-neighbor day/dark correspondences");
    match->add_option("--dark", mopt.dark_manifest, "dark (twilight/night) manifest")->required();
    match->add_option("--day", mopt.day_manifest, "day manifest")->required();
    match->add_option("--out", mopt.out_csv, "output CSV path")->required();

    cli::RefineOptions ropt;
    std::string mode_name = "warp_with_fallback";
    auto* refine = app.add_subcommand("refine", "batch pseudo-label refinement");
    refine->add_option("--correspondences", ropt.correspondence_csv, "match CSV from 'match'")
        ->required();
    refine->add_option("--dark", ropt.dark_manifest, "dark manifest")->required();
    refine->add_option("--day", ropt.day_manifest, "day manifest")->required();
    refine->add_option("--out-dir", ropt.out_dir, "output directory")->required();
    refine->add_option("--mode", mode_name, "bilateral | warp | warp_with_fallback")
        ->check(CLI::IsMember({"bilateral", "warp", "warp_with_fallback"}));
    refine->add_option("--sigma-s", ropt.config.bilateral.sigma_s, "bilateral spatial sigma");
    refine->add_option("--sigma-r", ropt.config.bilateral.sigma_r, "bilateral range sigma");
    refine->add_option("--alpha-low", ropt.config.fusion.alpha_low, "fusion alpha_l");
    refine->add_option("--alpha-high", ropt.config.fusion.alpha_high, "fusion alpha_h");
    refine->add_option("--eta", ropt.config.fusion.eta, "fusion disagreement threshold");
    refine->add_option("--min-inliers", ropt.config.min_inliers, "warp fallback inlier threshold");
    refine->add_option("--seed", ropt.config.seed, "RANSAC seed");
    refine->add_option("--matches-dir", [&ropt](const std::vector<std::string>& v) {
        ropt.matches_dir = v.back();
        return true;
    }, "directory of <dark_id>.txt external match files");
    refine->add_option("--dmax", ropt.d_max, "depth ceiling in meters");
    refine->add_option("--workers", ropt.workers, "parallel pair workers");

    cli::EvaluateOptions eopt;
    double theta = -1.0;
    std::string eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "UIoU at a fixed confidence threshold");
    evaluate->add_option("--pred", eopt.pred_manifest, "prediction manifest")->required();
    evaluate->add_option("--gt", eopt.gt_manifest, "ground-truth manifest")->required();
    auto* theta_opt = evaluate->add_option("--theta", theta, "confidence threshold (default 1/C)");
    auto* eval_out_opt = evaluate->add_option("--out", eval_out, "also write the table as CSV");
    evaluate->add_option("--workers", eopt.workers, "parallel image workers");

    cli::CurveOptions copt;
    auto* curve = app.add_subcommand("curve", "UIoU(theta) curve over a threshold grid");
    curve->add_option("--pred", copt.pred_manifest, "prediction manifest")->required();
    curve->add_option("--gt", copt.gt_manifest, "ground-truth manifest")->required();
    curve->add_option("--grid-size", copt.grid_size, "number of theta grid points");
    curve->add_option("--out", copt.out_csv, "output curve CSV")->required();
    curve->add_option("--workers", copt.workers, "parallel image workers");

    CLI11_PARSE(app, argc, argv);

    if (match->parsed()) return cli::cmd_match(mopt);
    if (refine->parsed()) {
        ropt.config.mode = parse_alignment_mode(mode_name);
        return cli::cmd_refine(ropt);
    }
    if (evaluate->parsed()) {
        if (theta_opt->count() > 0) eopt.theta = theta;
        if (eval_out_opt->count() > 0) eopt.out_csv = eval_out;
        return cli::cmd_evaluate(eopt);
    }
    if (curve->parsed()) return cli::cmd_curve(copt);
    return 1;
}
