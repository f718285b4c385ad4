#pragma once

#include <string>

#include "json.hpp"
#include "scan/config.hpp"
#include "scan/selflabel.hpp"
#include "scan/trainer.hpp"

namespace scan {

/// Full evaluation of a head on view 0: assignment statistics, label metrics
/// (when the dataset carries labels), confusion matrix, prototypes and the
/// lowest-confidence samples. Pure function of its inputs; no wall-clock data
/// ever lands in the body, so identical runs serialize identically.
nlohmann::json evaluation_json(const ClusterHead& eval_head, const EmbeddingDataset& ds,
                               const EvalOptions& opts);

nlohmann::json train_history_json(const TrainHistory& hist);
TrainHistory train_history_from_json(const nlohmann::json& j);

nlohmann::json selflabel_history_json(const SelfLabelHistory& hist);
SelfLabelHistory selflabel_history_from_json(const nlohmann::json& j);

/// Writes with sorted keys, two-space indent and a trailing newline; byte
/// output is a pure function of the json value.
void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

}  // namespace scan
