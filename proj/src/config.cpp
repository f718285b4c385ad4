#include "scan/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "scan/error.hpp"
#include "scan/rng.hpp"

namespace scan {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const std::string& expected) {
    throw UsageError("config: " + section + "." + key + " = \"" + value + "\": expected " +
                     expected);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                throw UsageError("config line " + std::to_string(lineno) +
                                 ": malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw UsageError("config line " + std::to_string(lineno) + ": empty section name");
            if (map.count(section))
                throw UsageError("config line " + std::to_string(lineno) + ": duplicate section [" +
                                 section + "]");
            map[section];
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) +
                             ": expected 'key = value', got '" + t + "'");
        if (section.empty())
            throw UsageError("config line " + std::to_string(lineno) +
                             ": key before any [section]");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        if (value.empty())
            throw UsageError("config line " + std::to_string(lineno) + ": empty value for '" +
                             key + "' (drop the line to keep the default)");
        if (map[section].count(key))
            throw UsageError("config line " + std::to_string(lineno) + ": duplicate key " +
                             section + "." + key);
        map[section][key] = value;
    }
    return map;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string render_config(const ConfigMap& map) {
    std::string out;
    bool first = true;
    for (const auto& [section, keys] : map) {
        if (!first) out += "\n";
        first = false;
        out += "[" + section + "]\n";
        for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
    }
    return out;
}

std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw ValidationError("format_double: conversion failed");
    return std::string(buf, end);
}

namespace {

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    bad_value(section, key, v, "a boolean (true/false/on/off/1/0)");
}

std::uint64_t parse_u64(const std::string& section, const std::string& key,
                        const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        bad_value(section, key, v, "a non-negative integer");
    return out;
}

std::uint32_t parse_u32(const std::string& section, const std::string& key,
                        const std::string& v) {
    std::uint64_t out = parse_u64(section, key, v);
    if (out > 0xFFFFFFFFull) bad_value(section, key, v, "a 32-bit integer");
    return static_cast<std::uint32_t>(out);
}

int parse_int(const std::string& section, const std::string& key, const std::string& v) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(section, key, v, "an integer");
    return out;
}

double parse_f64(const std::string& section, const std::string& key, const std::string& v) {
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(out))
        bad_value(section, key, v, "a finite number");
    return out;
}

std::vector<double> parse_list(const std::string& section, const std::string& key,
                               const std::string& v) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        std::size_t comma = v.find(',', pos);
        std::string item = trim(v.substr(pos, comma == std::string::npos ? comma : comma - pos));
        if (item.empty()) bad_value(section, key, v, "a comma-separated number list");
        out.push_back(parse_f64(section, key, item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

const std::map<std::string, std::string>* find_section(const ConfigMap& map,
                                                       const std::string& name) {
    auto it = map.find(name);
    return it == map.end() ? nullptr : &it->second;
}

const std::string* find_key(const std::map<std::string, std::string>* section,
                            const std::string& key) {
    if (!section) return nullptr;
    auto it = section->find(key);
    return it == section->end() ? nullptr : &it->second;
}

void reject_unknown(const std::string& name, const std::map<std::string, std::string>* section,
                    const std::set<std::string>& allowed) {
    if (!section) return;
    for (const auto& [key, value] : *section)
        if (!allowed.count(key)) throw UsageError("config: unknown key " + name + "." + key);
}

void apply_optimizer(const std::string& name, const std::map<std::string, std::string>* section,
                     OptimizerConfig& opt) {
    if (const auto* v = find_key(section, "optimizer")) {
        if (*v == "adam")
            opt.kind = OptimizerConfig::Kind::adam;
        else if (*v == "sgd")
            opt.kind = OptimizerConfig::Kind::sgd;
        else
            bad_value(name, "optimizer", *v, "adam or sgd");
    }
    if (const auto* v = find_key(section, "lr")) opt.lr = parse_f64(name, "lr", *v);
    if (const auto* v = find_key(section, "weight_decay"))
        opt.weight_decay = parse_f64(name, "weight_decay", *v);
    if (const auto* v = find_key(section, "beta1")) opt.beta1 = parse_f64(name, "beta1", *v);
    if (const auto* v = find_key(section, "beta2")) opt.beta2 = parse_f64(name, "beta2", *v);
    if (const auto* v = find_key(section, "eps")) opt.eps = parse_f64(name, "eps", *v);
    if (const auto* v = find_key(section, "momentum"))
        opt.momentum = parse_f64(name, "momentum", *v);
}

const std::set<std::string> kOptimizerKeys = {"optimizer", "lr",  "weight_decay",
                                              "beta1",     "beta2", "eps",
                                              "momentum"};

std::set<std::string> with_optimizer(std::set<std::string> keys) {
    keys.insert(kOptimizerKeys.begin(), kOptimizerKeys.end());
    return keys;
}

}  // namespace

PipelineConfig config_from_map(const ConfigMap& map) {
    static const std::set<std::string> sections = {"data",      "mine", "train",
                                                   "selflabel", "eval", "pipeline"};
    for (const auto& [name, keys] : map)
        if (!sections.count(name)) throw UsageError("config: unknown section [" + name + "]");

    PipelineConfig cfg;

    const auto* pipeline = find_section(map, "pipeline");
    reject_unknown("pipeline", pipeline, {"out_dir", "seed"});
    if (const auto* v = find_key(pipeline, "out_dir")) cfg.out_dir = *v;
    if (const auto* v = find_key(pipeline, "seed")) cfg.seed = parse_u64("pipeline", "seed", *v);

    const auto* data = find_section(map, "data");
    reject_unknown("data", data,
                   {"source", "preset", "input", "n", "d", "classes", "views", "sep",
                    "within_std", "jitter", "imbalance", "seed"});
    if (const auto* v = find_key(data, "source")) {
        if (*v == "synth")
            cfg.source = DataSource::synth;
        else if (*v == "file")
            cfg.source = DataSource::file;
        else
            bad_value("data", "source", *v, "synth or file");
    }
    if (const auto* v = find_key(data, "preset")) {
        cfg.preset = *v;
        cfg.synth = preset_config(*v);  // UsageError on unknown names
    } else if (cfg.source == DataSource::synth && !find_key(data, "seed")) {
        cfg.synth.seed = derive_seed(cfg.seed, "synth", 0);
    }
    if (const auto* v = find_key(data, "input")) cfg.input = *v;
    if (const auto* v = find_key(data, "n")) cfg.synth.n = parse_u32("data", "n", *v);
    if (const auto* v = find_key(data, "d")) cfg.synth.d = parse_u32("data", "d", *v);
    if (const auto* v = find_key(data, "classes"))
        cfg.synth.c_true = parse_u32("data", "classes", *v);
    if (const auto* v = find_key(data, "views")) cfg.synth.v = parse_u32("data", "views", *v);
    if (const auto* v = find_key(data, "sep")) cfg.synth.sep = parse_f64("data", "sep", *v);
    if (const auto* v = find_key(data, "within_std"))
        cfg.synth.within_std = parse_f64("data", "within_std", *v);
    if (const auto* v = find_key(data, "jitter"))
        cfg.synth.view_jitter_std = parse_f64("data", "jitter", *v);
    if (const auto* v = find_key(data, "imbalance"))
        cfg.synth.imbalance = parse_list("data", "imbalance", *v);
    if (const auto* v = find_key(data, "seed")) cfg.synth.seed = parse_u64("data", "seed", *v);
    if (cfg.source == DataSource::file && cfg.input.empty())
        throw UsageError("config: data.source = file needs data.input");

    const auto* mine = find_section(map, "mine");
    reject_unknown("mine", mine, {"k", "metric", "workers", "filter_false_positives"});
    if (const auto* v = find_key(mine, "k")) cfg.mine_k = parse_u32("mine", "k", *v);
    if (const auto* v = find_key(mine, "metric")) {
        if (*v == "cosine")
            cfg.metric = Metric::cosine;
        else if (*v == "l2")
            cfg.metric = Metric::l2;
        else
            bad_value("mine", "metric", *v, "cosine or l2");
    }
    if (const auto* v = find_key(mine, "workers"))
        cfg.mine_workers = parse_int("mine", "workers", *v);
    if (const auto* v = find_key(mine, "filter_false_positives"))
        cfg.filter_false_positives = parse_bool("mine", "filter_false_positives", *v);

    const auto* train = find_section(map, "train");
    reject_unknown("train", train,
                   with_optimizer({"clusters", "k", "lambda", "epochs", "batch_size", "heads",
                                   "head", "hidden", "neighbor_mode", "ema_alpha", "seed",
                                   "workers"}));
    if (const auto* v = find_key(train, "clusters"))
        cfg.train.clusters = parse_u32("train", "clusters", *v);
    if (const auto* v = find_key(train, "k"))
        cfg.train.k = parse_u32("train", "k", *v);
    else
        cfg.train.k = cfg.mine_k;
    if (const auto* v = find_key(train, "lambda"))
        cfg.train.lambda = parse_f64("train", "lambda", *v);
    if (const auto* v = find_key(train, "epochs"))
        cfg.train.epochs = parse_u32("train", "epochs", *v);
    if (const auto* v = find_key(train, "batch_size"))
        cfg.train.batch_size = parse_u32("train", "batch_size", *v);
    if (const auto* v = find_key(train, "heads")) cfg.train.heads = parse_u32("train", "heads", *v);
    if (const auto* v = find_key(train, "head")) {
        if (*v == "linear")
            cfg.train.head_kind = HeadKind::linear;
        else if (*v == "mlp")
            cfg.train.head_kind = HeadKind::mlp;
        else
            bad_value("train", "head", *v, "linear or mlp");
    }
    if (const auto* v = find_key(train, "hidden"))
        cfg.train.hidden = parse_u32("train", "hidden", *v);
    if (const auto* v = find_key(train, "neighbor_mode")) {
        if (*v == "sample_one")
            cfg.train.neighbor_mode = NeighborMode::sample_one;
        else if (*v == "full_sum")
            cfg.train.neighbor_mode = NeighborMode::full_sum;
        else
            bad_value("train", "neighbor_mode", *v, "sample_one or full_sum");
    }
    apply_optimizer("train", train, cfg.train.optimizer);
    if (const auto* v = find_key(train, "ema_alpha"))
        cfg.train.ema_alpha = parse_f64("train", "ema_alpha", *v);
    if (const auto* v = find_key(train, "seed"))
        cfg.train.seed = parse_u64("train", "seed", *v);
    else
        cfg.train.seed = derive_seed(cfg.seed, "train", 0);
    if (const auto* v = find_key(train, "workers"))
        cfg.train.workers = parse_int("train", "workers", *v);

    const auto* sl = find_section(map, "selflabel");
    reject_unknown("selflabel", sl,
                   with_optimizer({"enabled", "threshold", "epochs", "batch_size", "ema_alpha",
                                   "class_balance", "plateau_window", "plateau_growth",
                                   "noise_std"}));
    if (const auto* v = find_key(sl, "enabled"))
        cfg.selflabel_enabled = parse_bool("selflabel", "enabled", *v);
    if (const auto* v = find_key(sl, "threshold"))
        cfg.selflabel.threshold = parse_f64("selflabel", "threshold", *v);
    if (const auto* v = find_key(sl, "epochs"))
        cfg.selflabel.epochs = parse_u32("selflabel", "epochs", *v);
    if (const auto* v = find_key(sl, "batch_size"))
        cfg.selflabel.batch_size = parse_u32("selflabel", "batch_size", *v);
    apply_optimizer("selflabel", sl, cfg.selflabel.optimizer);
    if (const auto* v = find_key(sl, "ema_alpha"))
        cfg.selflabel.ema_alpha = parse_f64("selflabel", "ema_alpha", *v);
    if (const auto* v = find_key(sl, "class_balance"))
        cfg.selflabel.class_balance = parse_bool("selflabel", "class_balance", *v);
    if (const auto* v = find_key(sl, "plateau_window"))
        cfg.selflabel.plateau_window = parse_u32("selflabel", "plateau_window", *v);
    if (const auto* v = find_key(sl, "plateau_growth"))
        cfg.selflabel.plateau_growth = parse_f64("selflabel", "plateau_growth", *v);
    if (const auto* v = find_key(sl, "noise_std"))
        cfg.selflabel.noise_std = parse_f64("selflabel", "noise_std", *v);

    const auto* eval = find_section(map, "eval");
    reject_unknown("eval", eval,
                   {"mode", "confident_threshold", "low_confidence", "prototypes"});
    if (const auto* v = find_key(eval, "mode")) {
        if (*v == "auto")
            cfg.eval.mode = EvalOptions::Mode::auto_match;
        else if (*v == "one_to_one")
            cfg.eval.mode = EvalOptions::Mode::one_to_one;
        else if (*v == "many_to_one")
            cfg.eval.mode = EvalOptions::Mode::many_to_one;
        else
            bad_value("eval", "mode", *v, "auto, one_to_one or many_to_one");
    }
    if (const auto* v = find_key(eval, "confident_threshold"))
        cfg.eval.confident_threshold = parse_f64("eval", "confident_threshold", *v);
    if (const auto* v = find_key(eval, "low_confidence"))
        cfg.eval.low_confidence_count = parse_u32("eval", "low_confidence", *v);
    if (const auto* v = find_key(eval, "prototypes"))
        cfg.eval.prototypes_per_cluster = parse_u32("eval", "prototypes", *v);

    cfg.validate();
    return cfg;
}

void PipelineConfig::validate() const {
    if (train.k > mine_k)
        throw UsageError("config: train.k (" + std::to_string(train.k) + ") exceeds mine.k (" +
                         std::to_string(mine_k) + ")");
    if (out_dir.empty()) throw UsageError("config: pipeline.out_dir must not be empty");
    if (source == DataSource::file && input.empty())
        throw UsageError("config: data.source = file needs data.input");
}

ConfigMap effective_config(const PipelineConfig& cfg) {
    ConfigMap map;

    auto& data = map["data"];
    data["source"] = cfg.source == DataSource::synth ? "synth" : "file";
    if (!cfg.preset.empty()) data["preset"] = cfg.preset;
    if (cfg.source == DataSource::file) {
        data["input"] = cfg.input;
    } else {
        data["n"] = std::to_string(cfg.synth.n);
        data["d"] = std::to_string(cfg.synth.d);
        data["classes"] = std::to_string(cfg.synth.c_true);
        data["views"] = std::to_string(cfg.synth.v);
        data["sep"] = format_double(cfg.synth.sep);
        data["within_std"] = format_double(cfg.synth.within_std);
        data["jitter"] = format_double(cfg.synth.view_jitter_std);
        data["seed"] = std::to_string(cfg.synth.seed);
        if (cfg.synth.imbalance) {
            std::string list;
            for (double x : *cfg.synth.imbalance) {
                if (!list.empty()) list += ",";
                list += format_double(x);
            }
            data["imbalance"] = list;
        }
    }

    auto& mine = map["mine"];
    mine["k"] = std::to_string(cfg.mine_k);
    mine["metric"] = cfg.metric == Metric::cosine ? "cosine" : "l2";
    mine["workers"] = std::to_string(cfg.mine_workers);
    mine["filter_false_positives"] = cfg.filter_false_positives ? "true" : "false";

    auto render_opt = [](std::map<std::string, std::string>& section,
                         const OptimizerConfig& opt) {
        section["optimizer"] = opt.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd";
        section["lr"] = format_double(opt.lr);
        section["weight_decay"] = format_double(opt.weight_decay);
        section["beta1"] = format_double(opt.beta1);
        section["beta2"] = format_double(opt.beta2);
        section["eps"] = format_double(opt.eps);
        section["momentum"] = format_double(opt.momentum);
    };

    auto& train = map["train"];
    train["clusters"] = std::to_string(cfg.train.clusters);
    train["k"] = std::to_string(cfg.train.k);
    train["lambda"] = format_double(cfg.train.lambda);
    train["epochs"] = std::to_string(cfg.train.epochs);
    train["batch_size"] = std::to_string(cfg.train.batch_size);
    train["heads"] = std::to_string(cfg.train.heads);
    train["head"] = cfg.train.head_kind == HeadKind::linear ? "linear" : "mlp";
    train["hidden"] = std::to_string(cfg.train.hidden);
    train["neighbor_mode"] =
        cfg.train.neighbor_mode == NeighborMode::sample_one ? "sample_one" : "full_sum";
    render_opt(train, cfg.train.optimizer);
    train["ema_alpha"] = format_double(cfg.train.ema_alpha);
    train["seed"] = std::to_string(cfg.train.seed);
    train["workers"] = std::to_string(cfg.train.workers);

    auto& sl = map["selflabel"];
    sl["enabled"] = cfg.selflabel_enabled ? "true" : "false";
    sl["threshold"] = format_double(cfg.selflabel.threshold);
    sl["epochs"] = std::to_string(cfg.selflabel.epochs);
    sl["batch_size"] = std::to_string(cfg.selflabel.batch_size);
    render_opt(sl, cfg.selflabel.optimizer);
    sl["ema_alpha"] = format_double(cfg.selflabel.ema_alpha);
    sl["class_balance"] = cfg.selflabel.class_balance ? "true" : "false";
    sl["plateau_window"] = std::to_string(cfg.selflabel.plateau_window);
    sl["plateau_growth"] = format_double(cfg.selflabel.plateau_growth);
    sl["noise_std"] = format_double(cfg.selflabel.noise_std);

    auto& eval = map["eval"];
    switch (cfg.eval.mode) {
        case EvalOptions::Mode::auto_match: eval["mode"] = "auto"; break;
        case EvalOptions::Mode::one_to_one: eval["mode"] = "one_to_one"; break;
        case EvalOptions::Mode::many_to_one: eval["mode"] = "many_to_one"; break;
    }
    eval["confident_threshold"] = format_double(cfg.eval.confident_threshold);
    eval["low_confidence"] = std::to_string(cfg.eval.low_confidence_count);
    eval["prototypes"] = std::to_string(cfg.eval.prototypes_per_cluster);

    auto& pipeline = map["pipeline"];
    pipeline["out_dir"] = cfg.out_dir;
    pipeline["seed"] = std::to_string(cfg.seed);

    return map;
}

}  // namespace scan
