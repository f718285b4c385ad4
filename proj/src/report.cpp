#include "scan/report.hpp"

#include <fstream>

#include "scan/error.hpp"
#include "scan/metrics.hpp"
#include "scan/predict.hpp"

namespace scan {

using nlohmann::json;

json evaluation_json(const ClusterHead& eval_head, const EmbeddingDataset& ds,
                     const EvalOptions& opts) {
    Predictions pr = predict(eval_head, ds, 0);

    json out;
    out["dataset"] = {{"n", ds.n},          {"d", ds.d},
                      {"views", ds.v},      {"normalized", ds.normalized},
                      {"has_labels", ds.has_labels()}, {"classes", ds.l}};
    out["head"] = {{"kind", eval_head.kind == HeadKind::linear ? "linear" : "mlp"},
                   {"clusters", eval_head.c},
                   {"d", eval_head.d},
                   {"hidden", eval_head.hidden},
                   {"param_count", eval_head.param_count()}};

    std::vector<std::uint64_t> sizes(eval_head.c, 0);
    for (auto a : pr.assign) ++sizes[a];
    out["assignments"] = {{"marginal_entropy", marginal_entropy(pr)},
                          {"confident_threshold", opts.confident_threshold},
                          {"confident_fraction", confident_fraction(pr, opts.confident_threshold)},
                          {"cluster_sizes", sizes}};

    auto protos = prototypes(eval_head, ds, opts.prototypes_per_cluster);
    out["low_confidence"] = low_confidence(eval_head, ds, opts.low_confidence_count);

    if (ds.has_labels()) {
        AccMode mode;
        switch (opts.mode) {
            case EvalOptions::Mode::one_to_one: mode = AccMode::one_to_one; break;
            case EvalOptions::Mode::many_to_one: mode = AccMode::many_to_one; break;
            default:
                mode = eval_head.c == ds.l ? AccMode::one_to_one : AccMode::many_to_one;
                break;
        }
        auto res = accuracy(pr.assign, *ds.labels, mode, eval_head.c, ds.l);
        out["metrics"] = {{"mode", mode == AccMode::one_to_one ? "one_to_one" : "many_to_one"},
                          {"acc", res.acc},
                          {"nmi", nmi(pr.assign, *ds.labels)},
                          {"ari", ari(pr.assign, *ds.labels)},
                          {"mapping", res.mapping}};

        auto cm = confusion_matrix(pr.assign, *ds.labels, res.mapping);
        std::vector<std::vector<std::uint64_t>> rows(cm.clusters.size());
        for (std::size_t r = 0; r < cm.clusters.size(); ++r)
            rows[r].assign(cm.counts.begin() + r * cm.l, cm.counts.begin() + (r + 1) * cm.l);
        out["confusion"] = {{"clusters", cm.clusters}, {"classes", cm.l}, {"counts", rows}};

        json per_cluster = json::array();
        for (std::uint32_t k = 0; k < eval_head.c; ++k) {
            json row;
            row["cluster"] = k;
            row["size"] = sizes[k];
            row["fraction"] = ds.n > 0 ? double(sizes[k]) / ds.n : 0.0;
            row["mapped_class"] = res.mapping[k];
            std::uint64_t majority = 0;
            if (sizes[k] > 0) {
                std::vector<std::uint64_t> counts(ds.l, 0);
                for (std::uint32_t i = 0; i < ds.n; ++i)
                    if (pr.assign[i] == k) ++counts[(*ds.labels)[i]];
                for (auto c : counts) majority = std::max(majority, c);
                row["purity"] = double(majority) / double(sizes[k]);
            } else {
                row["purity"] = nullptr;
            }
            row["prototype"] = protos[k] ? json(*protos[k]) : json(nullptr);
            per_cluster.push_back(row);
        }
        out["per_cluster"] = per_cluster;
    } else {
        json per_cluster = json::array();
        for (std::uint32_t k = 0; k < eval_head.c; ++k) {
            json row;
            row["cluster"] = k;
            row["size"] = sizes[k];
            row["fraction"] = ds.n > 0 ? double(sizes[k]) / ds.n : 0.0;
            row["prototype"] = protos[k] ? json(*protos[k]) : json(nullptr);
            per_cluster.push_back(row);
        }
        out["per_cluster"] = per_cluster;
    }
    return out;
}

json train_history_json(const TrainHistory& hist) {
    json epochs = json::array();
    for (const auto& e : hist.epochs)
        epochs.push_back({{"consistency", e.consistency},
                          {"entropy_term", e.entropy_term},
                          {"total", e.total}});
    return {{"selected_head", hist.selected_head},
            {"head_final_losses", hist.head_final_losses},
            {"epochs", epochs}};
}

TrainHistory train_history_from_json(const json& j) {
    TrainHistory hist;
    hist.selected_head = j.at("selected_head").get<std::uint32_t>();
    hist.head_final_losses = j.at("head_final_losses").get<std::vector<double>>();
    for (const auto& e : j.at("epochs")) {
        EpochStats s;
        s.consistency = e.at("consistency").get<double>();
        s.entropy_term = e.at("entropy_term").get<double>();
        s.total = e.at("total").get<double>();
        hist.epochs.push_back(s);
    }
    return hist;
}

json selflabel_history_json(const SelfLabelHistory& hist) {
    return {{"epochs_run", hist.epochs_run},
            {"plateaued", hist.plateaued},
            {"confident_counts", hist.confident_counts},
            {"pseudo_label_accuracy", hist.pseudo_label_accuracy},
            {"ce_loss", hist.ce_loss}};
}

SelfLabelHistory selflabel_history_from_json(const json& j) {
    SelfLabelHistory hist;
    hist.epochs_run = j.at("epochs_run").get<std::uint32_t>();
    hist.plateaued = j.at("plateaued").get<bool>();
    hist.confident_counts = j.at("confident_counts").get<std::vector<std::uint32_t>>();
    hist.pseudo_label_accuracy = j.at("pseudo_label_accuracy").get<std::vector<double>>();
    hist.ce_loss = j.at("ce_loss").get<std::vector<double>>();
    return hist;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw FormatError(FormatError::Reason::bad_payload, "malformed JSON in " + path);
    return j;
}

}  // namespace scan
