#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scan/config.hpp"
#include "scan/error.hpp"
#include "scan/io.hpp"
#include "scan/kmeans.hpp"
#include "scan/knn.hpp"
#include "scan/metrics.hpp"
#include "scan/pipeline.hpp"
#include "scan/predict.hpp"
#include "scan/report.hpp"
#include "scan/selflabel.hpp"
#include "scan/trainer.hpp"

namespace {

scan::Metric parse_metric(const std::string& s) {
    if (s == "cosine") return scan::Metric::cosine;
    if (s == "l2") return scan::Metric::l2;
    throw scan::UsageError("--metric must be cosine or l2, got '" + s + "'");
}

scan::HeadKind parse_head(const std::string& s) {
    if (s == "linear") return scan::HeadKind::linear;
    if (s == "mlp") return scan::HeadKind::mlp;
    throw scan::UsageError("--head must be linear or mlp, got '" + s + "'");
}

scan::NeighborMode parse_neighbor_mode(const std::string& s) {
    if (s == "sample_one") return scan::NeighborMode::sample_one;
    if (s == "full_sum") return scan::NeighborMode::full_sum;
    throw scan::UsageError("--neighbor-mode must be sample_one or full_sum, got '" + s + "'");
}

scan::OptimizerConfig::Kind parse_optimizer(const std::string& s) {
    if (s == "adam") return scan::OptimizerConfig::Kind::adam;
    if (s == "sgd") return scan::OptimizerConfig::Kind::sgd;
    throw scan::UsageError("--optimizer must be adam or sgd, got '" + s + "'");
}

scan::EvalOptions::Mode parse_eval_mode(const std::string& s) {
    if (s == "auto") return scan::EvalOptions::Mode::auto_match;
    if (s == "one_to_one") return scan::EvalOptions::Mode::one_to_one;
    if (s == "many_to_one") return scan::EvalOptions::Mode::many_to_one;
    throw scan::UsageError("--mode must be auto, one_to_one or many_to_one, got '" + s + "'");
}

scan::KmeansConfig::Init parse_kmeans_init(const std::string& s) {
    if (s == "kmeanspp") return scan::KmeansConfig::Init::kmeanspp;
    if (s == "random") return scan::KmeansConfig::Init::random;
    throw scan::UsageError("--init must be kmeanspp or random, got '" + s + "'");
}

void print_eval_summary(const nlohmann::json& eval) {
    const auto& assignments = eval.at("assignments");
    std::cout << "marginal_entropy=" << assignments.at("marginal_entropy").get<double>()
              << " confident_fraction=" << assignments.at("confident_fraction").get<double>();
    if (eval.contains("metrics")) {
        const auto& m = eval.at("metrics");
        std::cout << " acc=" << m.at("acc").get<double>() << " (" << m.at("mode").get<std::string>()
                  << ") nmi=" << m.at("nmi").get<double>() << " ari=" << m.at("ari").get<double>();
    }
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semantic clustering over precomputed embeddings"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
    std::string synth_preset, synth_out;
    scan::SynthConfig sc;
    std::vector<double> synth_imbalance;
    synth->add_option("--preset", synth_preset, "start from a named preset (separated, overlap)");
    synth->add_option("--n", sc.n, "sample count");
    synth->add_option("--d", sc.d, "embedding dimension");
    synth->add_option("--classes", sc.c_true, "number of classes");
    synth->add_option("--views", sc.v, "views per sample (view 0 weak, rest strong)");
    synth->add_option("--sep", sc.sep, "min centroid separation in units of within-std");
    synth->add_option("--within-std", sc.within_std, "per-coordinate class noise");
    synth->add_option("--jitter", sc.view_jitter_std, "per-view jitter noise");
    synth->add_option("--imbalance", synth_imbalance, "per-class proportions, sum 1")
        ->delimiter(',');
    synth->add_option("--seed", sc.seed, "generator seed");
    synth->add_option("--out", synth_out, "output dataset path (.semb)")->required();
    synth->callback([&] {
        scan::SynthConfig cfg = synth_preset.empty() ? scan::SynthConfig{}
                                                     : scan::preset_config(synth_preset);
        if (synth->count("--n")) cfg.n = sc.n;
        if (synth->count("--d")) cfg.d = sc.d;
        if (synth->count("--classes")) cfg.c_true = sc.c_true;
        if (synth->count("--views")) cfg.v = sc.v;
        if (synth->count("--sep")) cfg.sep = sc.sep;
        if (synth->count("--within-std")) cfg.within_std = sc.within_std;
        if (synth->count("--jitter")) cfg.view_jitter_std = sc.view_jitter_std;
        if (synth->count("--imbalance")) cfg.imbalance = synth_imbalance;
        if (synth->count("--seed")) cfg.seed = sc.seed;
        scan::EmbeddingDataset ds = scan::generate_synthetic(cfg);
        scan::write_dataset(ds, synth_out);
        std::cout << "wrote " << synth_out << ": n=" << ds.n << " d=" << ds.d << " views=" << ds.v
                  << " classes=" << ds.l << "\n";
    });

    // mine
    auto* mine = app.add_subcommand("mine", "mine exact nearest neighbors");
    std::string mine_input, mine_out, mine_metric = "cosine";
    std::uint32_t mine_k = 20, mine_view = 0;
    int mine_workers = 0;
    bool mine_purity = false;
    mine->add_option("--input", mine_input, "dataset path (.semb)")->required();
    mine->add_option("--k", mine_k, "neighbors per sample");
    mine->add_option("--view", mine_view, "view to mine on");
    mine->add_option("--metric", mine_metric, "cosine or l2");
    mine->add_option("--workers", mine_workers, "threads, 0 = all cores");
    mine->add_flag("--purity", mine_purity, "print the label purity of the mined pairs");
    mine->add_option("--out", mine_out, "output index path (.sknn)")->required();
    mine->callback([&] {
        scan::EmbeddingDataset ds = scan::read_dataset(mine_input);
        scan::NeighborIndex nbrs =
            scan::mine_neighbors(ds, mine_k, mine_view, parse_metric(mine_metric), mine_workers);
        scan::write_neighbors(nbrs, mine_out);
        std::cout << "wrote " << mine_out << ": n=" << nbrs.n << " k=" << nbrs.k << "\n";
        if (mine_purity) {
            scan::PurityReport purity = scan::neighbor_purity(nbrs, ds);
            std::cout << "purity=" << purity.overall << "\n";
        }
    });

    // train
    auto* train = app.add_subcommand("train", "train the clustering head on mined neighbors");
    std::string train_input, train_neighbors, train_out, train_history;
    std::string train_head = "linear", train_mode = "sample_one", train_opt = "adam";
    scan::TrainConfig tc;
    train->add_option("--input", train_input, "dataset path (.semb)")->required();
    train->add_option("--neighbors", train_neighbors, "neighbor index path (.sknn)")->required();
    train->add_option("--clusters", tc.clusters, "number of clusters");
    train->add_option("--k", tc.k, "neighbors to use per anchor (0 = second view instead)");
    train->add_option("--lambda", tc.lambda, "entropy term weight");
    train->add_option("--epochs", tc.epochs, "training epochs");
    train->add_option("--batch-size", tc.batch_size, "anchors per batch");
    train->add_option("--heads", tc.heads, "independently seeded heads, best kept");
    train->add_option("--head", train_head, "linear or mlp");
    train->add_option("--hidden", tc.hidden, "hidden width for mlp heads");
    train->add_option("--neighbor-mode", train_mode, "sample_one or full_sum");
    train->add_option("--optimizer", train_opt, "adam or sgd");
    train->add_option("--lr", tc.optimizer.lr, "learning rate");
    train->add_option("--weight-decay", tc.optimizer.weight_decay, "decoupled decay (adam)");
    train->add_option("--momentum", tc.optimizer.momentum, "momentum (sgd)");
    train->add_option("--ema-alpha", tc.ema_alpha, "parameter EMA factor, 0 = off");
    train->add_option("--seed", tc.seed, "training seed");
    train->add_option("--workers", tc.workers, "parallel heads, 0 = all cores");
    train->add_option("--out", train_out, "output checkpoint path (.sckpt)")->required();
    train->add_option("--history", train_history, "optional per-epoch loss history (.json)");
    train->callback([&] {
        tc.head_kind = parse_head(train_head);
        tc.neighbor_mode = parse_neighbor_mode(train_mode);
        tc.optimizer.kind = parse_optimizer(train_opt);
        scan::EmbeddingDataset ds = scan::read_dataset(train_input);
        scan::NeighborIndex nbrs = scan::read_neighbors(train_neighbors);
        scan::TrainResult res = scan::train_clustering(ds, nbrs, tc);
        scan::write_checkpoint(res.state, train_out);
        if (!train_history.empty())
            scan::write_json_file(scan::train_history_json(res.history), train_history);
        std::cout << "wrote " << train_out << ": selected head " << res.history.selected_head
                  << ", final loss "
                  << res.history.head_final_losses[res.history.selected_head] << "\n";
    });

    // selflabel
    auto* sl = app.add_subcommand("selflabel", "fine-tune on confident pseudo-labels");
    std::string sl_input, sl_state, sl_out, sl_history, sl_opt = "adam";
    scan::SelfLabelConfig slc;
    sl->add_option("--input", sl_input, "dataset path (.semb)")->required();
    sl->add_option("--state", sl_state, "input checkpoint path (.sckpt)")->required();
    sl->add_option("--threshold", slc.threshold, "confidence threshold (strict)");
    sl->add_option("--epochs", slc.epochs, "epoch budget");
    sl->add_option("--batch-size", slc.batch_size, "samples per batch");
    sl->add_option("--optimizer", sl_opt, "adam or sgd");
    sl->add_option("--lr", slc.optimizer.lr, "learning rate");
    sl->add_option("--weight-decay", slc.optimizer.weight_decay, "decoupled decay (adam)");
    sl->add_option("--momentum", slc.optimizer.momentum, "momentum (sgd)");
    sl->add_option("--ema-alpha", slc.ema_alpha, "parameter EMA factor, 0 = off");
    sl->add_option("--class-balance", slc.class_balance, "balance class weights per batch");
    sl->add_option("--plateau-window", slc.plateau_window, "epochs between growth checks");
    sl->add_option("--plateau-growth", slc.plateau_growth, "relative growth floor");
    sl->add_option("--noise-std", slc.noise_std, "single-view fallback jitter, 0 = off");
    sl->add_option("--out", sl_out, "output checkpoint path (.sckpt)")->required();
    sl->add_option("--history", sl_history, "optional history path (.json)");
    sl->callback([&] {
        slc.optimizer.kind = parse_optimizer(sl_opt);
        scan::EmbeddingDataset ds = scan::read_dataset(sl_input);
        scan::TrainState state = scan::read_checkpoint(sl_state);
        scan::SelfLabelResult res = scan::self_label_train(ds, std::move(state), slc);
        scan::write_checkpoint(res.state, sl_out);
        if (!sl_history.empty())
            scan::write_json_file(scan::selflabel_history_json(res.history), sl_history);
        std::cout << "wrote " << sl_out << ": epochs=" << res.history.epochs_run
                  << (res.history.plateaued ? " (plateaued)" : "") << " confident="
                  << (res.history.confident_counts.empty() ? 0u
                                                           : res.history.confident_counts.back())
                  << "\n";
    });

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against the dataset labels");
    std::string eval_input, eval_state, eval_report, eval_mode = "auto";
    scan::EvalOptions eo;
    eval->add_option("--input", eval_input, "dataset path (.semb)")->required();
    eval->add_option("--state", eval_state, "checkpoint path (.sckpt)")->required();
    eval->add_option("--mode", eval_mode, "auto, one_to_one or many_to_one");
    eval->add_option("--threshold", eo.confident_threshold, "confident-fraction threshold");
    eval->add_option("--low-confidence", eo.low_confidence_count, "ids to list");
    eval->add_option("--prototypes", eo.prototypes_per_cluster, "confident samples per prototype");
    eval->add_option("--report", eval_report, "optional report path (.json)");
    eval->callback([&] {
        eo.mode = parse_eval_mode(eval_mode);
        scan::EmbeddingDataset ds = scan::read_dataset(eval_input);
        scan::TrainState state = scan::read_checkpoint(eval_state);
        nlohmann::json j = scan::evaluation_json(state.eval_head(), ds, eo);
        if (!eval_report.empty()) scan::write_json_file(j, eval_report);
        print_eval_summary(j);
    });

    // kmeans
    auto* km = app.add_subcommand("kmeans", "k-means baseline on one view");
    std::string km_input, km_report, km_init = "kmeanspp";
    std::uint32_t km_view = 0;
    scan::KmeansConfig kc;
    km->add_option("--input", km_input, "dataset path (.semb)")->required();
    km->add_option("--clusters", kc.clusters, "number of clusters");
    km->add_option("--init", km_init, "kmeanspp or random");
    km->add_option("--seed", kc.seed, "seeding randomness");
    km->add_option("--max-iters", kc.max_iters, "iteration cap");
    km->add_option("--tol", kc.tol, "centroid-shift convergence threshold");
    km->add_option("--view", km_view, "view to cluster");
    km->add_option("--report", km_report, "optional report path (.json)");
    km->callback([&] {
        kc.init = parse_kmeans_init(km_init);
        scan::EmbeddingDataset ds = scan::read_dataset(km_input);
        scan::KmeansResult res = scan::kmeans(ds, kc, km_view);
        std::cout << "inertia=" << res.inertia << " iters=" << res.iters;
        nlohmann::json j{{"clusters", kc.clusters}, {"inertia", res.inertia},
                         {"iters", res.iters}};
        if (ds.has_labels()) {
            scan::AccMode mode =
                kc.clusters == ds.l ? scan::AccMode::one_to_one : scan::AccMode::many_to_one;
            auto acc = scan::accuracy(res.assignments, *ds.labels, mode, kc.clusters, ds.l);
            std::cout << " acc=" << acc.acc
                      << (mode == scan::AccMode::one_to_one ? " (one_to_one)" : " (many_to_one)");
            j["metrics"] = {{"mode", mode == scan::AccMode::one_to_one ? "one_to_one"
                                                                       : "many_to_one"},
                            {"acc", acc.acc},
                            {"nmi", scan::nmi(res.assignments, *ds.labels)},
                            {"ari", scan::ari(res.assignments, *ds.labels)}};
        }
        std::cout << "\n";
        if (!km_report.empty()) scan::write_json_file(j, km_report);
    });

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "run mine, train, selflabel and eval end to end");
    std::string pipe_config, pipe_out_dir;
    bool pipe_resume = false;
    pipe->add_option("--config", pipe_config, "config path (key = value sections)")->required();
    pipe->add_option("--out-dir", pipe_out_dir, "override [pipeline] out_dir");
    pipe->add_flag("--resume", pipe_resume, "reuse artifacts that already parse");
    pipe->callback([&] {
        scan::PipelineConfig cfg = scan::config_from_map(scan::parse_config_file(pipe_config));
        if (!pipe_out_dir.empty()) cfg.out_dir = pipe_out_dir;
        scan::PipelineOutcome outcome = scan::run_pipeline(cfg, pipe_resume);
        std::cout << "wrote " << outcome.report_path << "\n";
        print_eval_summary(outcome.report.at("evaluation"));
    });

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run the pipeline across parameter values");
    std::string sweep_config, sweep_param, sweep_out_dir;
    std::vector<double> sweep_values;
    sweep->add_option("--config", sweep_config, "base config path")->required();
    sweep->add_option("--parameter", sweep_param, "k, lambda or threshold")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out-dir", sweep_out_dir, "sweep output root (default <out_dir>_sweep)");
    sweep->callback([&] {
        scan::PipelineConfig cfg = scan::config_from_map(scan::parse_config_file(sweep_config));
        std::string out_dir = sweep_out_dir.empty() ? cfg.out_dir + "_sweep" : sweep_out_dir;
        scan::SweepOutcome outcome = scan::run_sweep(cfg, sweep_param, sweep_values, out_dir);
        std::cout << "wrote " << outcome.json_path << " and " << outcome.csv_path << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const scan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.cls());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
