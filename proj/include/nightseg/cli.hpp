#pragma once

#include <optional>
#include <string>

#include "nightseg/refine.hpp"
#include "nightseg/types.hpp"

namespace nightseg::cli {

struct MatchOptions {
    std::string dark_manifest;
    std::string day_manifest;
    std::string out_csv;
};

struct RefineOptions {
    std::string correspondence_csv;
    std::string dark_manifest;
    std::string day_manifest;
    std::string out_dir;
    RefineConfig config;
    std::optional<std::string> matches_dir;  // per-pair "<dark_id>.txt" files
    float d_max = 540.0f;
    int workers = 0;  // 0 = effective_workers()
};

struct EvaluateOptions {
    std::string pred_manifest;
    std::string gt_manifest;
    std::optional<double> theta;  // default 1/C
    std::optional<std::string> out_csv;
    int workers = 0;
};

struct CurveOptions {
    std::string pred_manifest;
    std::string gt_manifest;
    int grid_size = 101;
    std::string out_csv;
    int workers = 0;
};

/// Each command returns a process exit code: 0 iff no per-item failure.
int cmd_match(const MatchOptions& opt);
int cmd_refine(const RefineOptions& opt);
int cmd_evaluate(const EvaluateOptions& opt);
int cmd_curve(const CurveOptions& opt);

} // namespace nightseg::cli
