#include "scan/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "scan/error.hpp"
#include "scan/io.hpp"
#include "scan/knn.hpp"
#include "scan/predict.hpp"
#include "scan/report.hpp"
#include "scan/selflabel.hpp"
#include "scan/trainer.hpp"

namespace scan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Runs one stage, stamping its name onto any domain error while keeping the
/// error's class (and with it the exit code) intact.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const UsageError& e) {
        throw UsageError(std::string("stage ") + name + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(e.reason(), std::string("stage ") + name + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("stage ") + name + ": " + e.what());
    } catch (const TrainError& e) {
        throw TrainError(std::string("stage ") + name + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(std::string("stage ") + name + ": " + e.what());
    }
}

struct StageClock {
    json timings = json::object();
    std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();

    void lap(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        timings[name] = std::chrono::duration<double>(now - mark).count();
        mark = now;
    }
};

}  // namespace

PipelineOutcome run_pipeline(const PipelineConfig& cfg, bool resume) {
    cfg.validate();
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());

    const std::string dataset_path = (dir / "dataset.semb").string();
    const std::string neighbors_path = (dir / "neighbors.sknn").string();
    const std::string filtered_path = (dir / "neighbors_filtered.sknn").string();
    const std::string clustering_path = (dir / "clustering.sckpt").string();
    const std::string clustering_hist_path = (dir / "clustering_history.json").string();
    const std::string selflabel_path = (dir / "selflabel.sckpt").string();
    const std::string selflabel_hist_path = (dir / "selflabel_history.json").string();
    const std::string report_path = (dir / "report.json").string();
    const std::string timing_path = (dir / "report.timing.json").string();

    StageClock clock;

    EmbeddingDataset ds = stage("data", [&] {
        if (cfg.source == DataSource::file) return read_dataset(cfg.input);
        if (resume && fs::exists(dataset_path)) return read_dataset(dataset_path);
        EmbeddingDataset fresh = generate_synthetic(cfg.synth);
        write_dataset(fresh, dataset_path);
        return fresh;
    });
    clock.lap("data");

    NeighborIndex nbrs = stage("mine", [&] {
        std::string path = cfg.filter_false_positives ? filtered_path : neighbors_path;
        if (resume && fs::exists(path)) {
            NeighborIndex loaded = read_neighbors(path);
            if (loaded.n == ds.n && loaded.k == cfg.mine_k) return loaded;
        }
        NeighborIndex mined = mine_neighbors(ds, cfg.mine_k, 0, cfg.metric, cfg.mine_workers);
        write_neighbors(mined, neighbors_path);
        if (!cfg.filter_false_positives) return mined;
        if (!ds.has_labels())
            throw ValidationError("filtering false positives needs ground-truth labels");
        NeighborIndex filtered = remove_false_positives(mined, ds);
        write_neighbors(filtered, filtered_path);
        return filtered;
    });
    clock.lap("mine");

    TrainState clustering_state;
    TrainHistory clustering_hist;
    bool reused = false;
    if (resume && fs::exists(clustering_path) && fs::exists(clustering_hist_path)) {
        clustering_state = stage("train", [&] { return read_checkpoint(clustering_path); });
        clustering_hist =
            stage("train", [&] { return train_history_from_json(read_json_file(clustering_hist_path)); });
        reused = true;
    }
    if (!reused) {
        TrainResult res = stage("train", [&] { return train_clustering(ds, nbrs, cfg.train); });
        clustering_state = std::move(res.state);
        clustering_hist = std::move(res.history);
        stage("train", [&] {
            write_checkpoint(clustering_state, clustering_path);
            write_json_file(train_history_json(clustering_hist), clustering_hist_path);
            return 0;
        });
    }
    clock.lap("train");

    std::optional<SelfLabelResult> sl;
    if (cfg.selflabel_enabled) {
        if (resume && fs::exists(selflabel_path) && fs::exists(selflabel_hist_path)) {
            sl = stage("selflabel", [&] {
                SelfLabelResult loaded;
                loaded.state = read_checkpoint(selflabel_path);
                loaded.history = selflabel_history_from_json(read_json_file(selflabel_hist_path));
                return loaded;
            });
        } else {
            sl = stage("selflabel",
                       [&] { return self_label_train(ds, clustering_state, cfg.selflabel); });
            stage("selflabel", [&] {
                write_checkpoint(sl->state, selflabel_path);
                write_json_file(selflabel_history_json(sl->history), selflabel_hist_path);
                return 0;
            });
        }
    }
    clock.lap("selflabel");

    const TrainState& final_state = sl ? sl->state : clustering_state;
    json report = stage("eval", [&] {
        json r;
        r["evaluation"] = evaluation_json(final_state.eval_head(), ds, cfg.eval);

        json clustering;
        clustering["selected_head"] = clustering_hist.selected_head;
        clustering["head_final_losses"] = clustering_hist.head_final_losses;
        clustering["epochs"] = clustering_hist.epochs.size();
        if (!clustering_hist.epochs.empty()) {
            const auto& last = clustering_hist.epochs.back();
            clustering["final"] = {{"consistency", last.consistency},
                                   {"entropy_term", last.entropy_term},
                                   {"total", last.total}};
        }
        r["clustering"] = clustering;

        json slj;
        slj["enabled"] = cfg.selflabel_enabled;
        if (sl) {
            slj["epochs_run"] = sl->history.epochs_run;
            slj["plateaued"] = sl->history.plateaued;
            if (!sl->history.confident_counts.empty())
                slj["final_confident_count"] = sl->history.confident_counts.back();
        }
        r["selflabel"] = slj;

        json artifacts;
        artifacts["dataset"] = cfg.source == DataSource::file ? cfg.input : "dataset.semb";
        artifacts["neighbors"] = "neighbors.sknn";
        if (cfg.filter_false_positives) artifacts["neighbors_filtered"] = "neighbors_filtered.sknn";
        artifacts["clustering"] = "clustering.sckpt";
        artifacts["clustering_history"] = "clustering_history.json";
        if (cfg.selflabel_enabled) {
            artifacts["selflabel"] = "selflabel.sckpt";
            artifacts["selflabel_history"] = "selflabel_history.json";
        }
        r["artifacts"] = artifacts;

        r["effective_config"] = render_config(effective_config(cfg));
        write_json_file(r, report_path);
        return r;
    });
    clock.lap("eval");

    // Wall-clock sidecar; best effort, never part of the report body.
    try {
        write_json_file(clock.timings, timing_path);
    } catch (const IoError&) {
    }

    return {std::move(report), report_path};
}

SweepOutcome run_sweep(const PipelineConfig& base, const std::string& parameter,
                       const std::vector<double>& values, const std::string& out_dir) {
    if (values.empty()) throw UsageError("sweep: no values given");
    if (parameter != "k" && parameter != "lambda" && parameter != "threshold")
        throw UsageError("sweep: parameter must be k, lambda or threshold, got '" + parameter +
                         "'");
    if (parameter == "threshold" && !base.selflabel_enabled)
        throw UsageError("sweep: threshold sweep needs selflabel enabled");
    for (double v : values) {
        if (parameter == "k") {
            if (v < 0 || v != std::floor(v) || v > 4294967295.0)
                throw UsageError("sweep: k values must be non-negative integers");
        } else if (parameter == "lambda") {
            if (!(v >= 0)) throw UsageError("sweep: lambda values must be >= 0");
        } else if (!(v > 0 && v < 1)) {
            throw UsageError("sweep: threshold values must be in (0,1)");
        }
    }

    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    json runs = json::array();
    std::string csv = "value,acc,nmi,ari,marginal_entropy,confident_fraction\n";
    for (double v : values) {
        PipelineConfig cfg = base;
        std::string value_str = format_double(v);
        if (parameter == "k") {
            auto k = static_cast<std::uint32_t>(v);
            cfg.mine_k = k;
            cfg.train.k = k;
        } else if (parameter == "lambda") {
            cfg.train.lambda = v;
        } else {
            cfg.selflabel.threshold = v;
        }
        cfg.out_dir = (dir / (parameter + "_" + value_str)).string();
        PipelineOutcome run = run_pipeline(cfg, false);

        json row;
        row["value"] = v;
        row["out_dir"] = parameter + "_" + value_str;
        const json& eval = run.report.at("evaluation");
        row["marginal_entropy"] = eval.at("assignments").at("marginal_entropy");
        row["confident_fraction"] = eval.at("assignments").at("confident_fraction");
        std::string acc = "", nmi_s = "", ari_s = "";
        if (eval.contains("metrics")) {
            row["acc"] = eval.at("metrics").at("acc");
            row["nmi"] = eval.at("metrics").at("nmi");
            row["ari"] = eval.at("metrics").at("ari");
            acc = format_double(eval.at("metrics").at("acc").get<double>());
            nmi_s = format_double(eval.at("metrics").at("nmi").get<double>());
            ari_s = format_double(eval.at("metrics").at("ari").get<double>());
        }
        runs.push_back(row);
        csv += value_str + "," + acc + "," + nmi_s + "," + ari_s + "," +
               format_double(eval.at("assignments").at("marginal_entropy").get<double>()) + "," +
               format_double(eval.at("assignments").at("confident_fraction").get<double>()) + "\n";
    }

    SweepOutcome out;
    out.table = json{{"parameter", parameter}, {"runs", runs}};
    out.json_path = (dir / "sweep.json").string();
    out.csv_path = (dir / "sweep.csv").string();
    write_json_file(out.table, out.json_path);
    std::ofstream csv_file(out.csv_path, std::ios::trunc);
    if (!csv_file) throw IoError("cannot open for writing: " + out.csv_path);
    csv_file << csv;
    csv_file.flush();
    if (!csv_file) throw IoError("write failed: " + out.csv_path);
    return out;
}

}  // namespace scan
