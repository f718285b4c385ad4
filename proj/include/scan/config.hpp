#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "scan/io.hpp"
#include "scan/knn.hpp"
#include "scan/selflabel.hpp"
#include "scan/trainer.hpp"

namespace scan {

/// Parsed key=value config, section -> key -> raw string value. Lines are
/// `key = value` under `[section]` headers; `#` starts a full-line comment;
/// values are taken verbatim after trimming (no inline comments, no quoting).
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

/// Canonical text form: sections and keys in sorted order, one blank line
/// between sections. parse(render(m)) == m.
std::string render_config(const ConfigMap& map);

/// Shortest round-trip decimal for a double ("5", "0.001", "1e-20", "nan"-free).
std::string format_double(double x);

enum class DataSource : std::uint32_t { synth = 0, file = 1 };

struct EvalOptions {
    enum class Mode : std::uint32_t { auto_match = 0, one_to_one = 1, many_to_one = 2 };
    Mode mode = Mode::auto_match;       // auto: one_to_one iff clusters == classes
    double confident_threshold = 0.99;  // for the reported confident fraction
    std::uint32_t low_confidence_count = 10;
    std::uint32_t prototypes_per_cluster = 10;
};

/// Everything a pipeline run needs, defaults resolved. Stage seeds not given
/// explicitly derive from [pipeline] seed, so one master seed pins the run.
struct PipelineConfig {
    // [data]
    DataSource source = DataSource::synth;
    std::string preset;  // applied before explicit synth keys; empty = none
    std::string input;   // dataset path when source == file
    SynthConfig synth;
    // [mine]
    std::uint32_t mine_k = 20;
    Metric metric = Metric::cosine;
    int mine_workers = 0;
    bool filter_false_positives = false;
    // [train]
    TrainConfig train;
    // [selflabel]
    bool selflabel_enabled = true;
    SelfLabelConfig selflabel;
    // [eval]
    EvalOptions eval;
    // [pipeline]
    std::string out_dir = "out";
    std::uint64_t seed = 1;

    void validate() const;
};

/// Applies a parsed map over defaults. Unknown sections or keys, malformed
/// values and cross-field contradictions are UsageErrors naming the key.
PipelineConfig config_from_map(const ConfigMap& map);

/// The fully resolved configuration as a map; rendering it and parsing the
/// result reproduces the same PipelineConfig. This is what reports embed.
ConfigMap effective_config(const PipelineConfig& cfg);

}  // namespace scan
