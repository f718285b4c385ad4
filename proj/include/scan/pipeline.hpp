#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "scan/config.hpp"

namespace scan {

struct PipelineOutcome {
    nlohmann::json report;
    std::string report_path;
};

/// End-to-end run: data -> mine -> train -> selflabel -> eval, artifacts under
/// cfg.out_dir (dataset.semb, neighbors.sknn, clustering.sckpt, histories,
/// report.json plus a timing sidecar that stays out of the report body).
/// With `resume`, a stage whose artifacts already parse is loaded instead of
/// recomputed. Errors carry the failing stage's name; artifacts written by
/// completed stages are kept.
PipelineOutcome run_pipeline(const PipelineConfig& cfg, bool resume = false);

struct SweepOutcome {
    nlohmann::json table;
    std::string json_path;
    std::string csv_path;
};

/// One pipeline run per value of `parameter` (k, lambda or threshold), each in
/// its own subdirectory of out_dir, all sharing the base config's seeds so the
/// swept parameter is the only thing that moves. Emits sweep.json and
/// sweep.csv with the headline metrics per value.
SweepOutcome run_sweep(const PipelineConfig& base, const std::string& parameter,
                       const std::vector<double>& values, const std::string& out_dir);

}  // namespace scan
