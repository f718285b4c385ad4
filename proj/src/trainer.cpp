#include "scan/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <limits>
#include <thread>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {

Optimizer Optimizer::make(const OptimizerConfig& cfg, std::size_t param_count) {
    Optimizer opt;
    opt.cfg = cfg;
    opt.m.assign(param_count, 0.0);
    if (cfg.kind == OptimizerConfig::Kind::adam) opt.v.assign(param_count, 0.0);
    return opt;
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
    ++t;
    if (cfg.kind == OptimizerConfig::Kind::adam) {
        double decay = 1.0 - cfg.lr * cfg.weight_decay;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] *= decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = cfg.momentum * m[i] + grad[i];
            params[i] -= cfg.lr * m[i];
        }
    }
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ValidationError("train config: lambda must be >= 0");
    if (batch_size < 2) throw ValidationError("train config: batch_size must be >= 2");
    if (heads < 1) throw ValidationError("train config: heads must be >= 1");
    if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
    if (head_kind == HeadKind::mlp && hidden < 1)
        throw ValidationError("train config: mlp head needs hidden >= 1");
}

ScanBatch make_scan_batch(std::span<const std::uint32_t> anchors, const NeighborIndex& nbrs,
                          std::uint32_t k, NeighborMode mode, std::uint32_t views, Rng& rng) {
    if (views < 1) throw ValidationError("batch: views must be >= 1");
    if (k == 0 && views < 2)
        throw TrainError("train: k=0 needs at least two views per sample (no augmentation source)");
    ScanBatch batch;
    batch.pair_offsets.push_back(0);
    for (std::uint32_t i : anchors) {
        if (k == 0) {
            std::uint32_t av = static_cast<std::uint32_t>(rng.next_below(views));
            std::uint32_t nv = static_cast<std::uint32_t>(rng.next_below(views - 1));
            if (nv >= av) ++nv;  // a different view of the same sample
            batch.anchors.push_back(i);
            batch.anchor_views.push_back(av);
            batch.neighbor_ids.push_back(i);
            batch.neighbor_views.push_back(nv);
            batch.pair_offsets.push_back(static_cast<std::uint32_t>(batch.neighbor_ids.size()));
            continue;
        }
        std::uint32_t usable = std::min(nbrs.row_size(i), k);
        if (usable == 0) continue;
        std::uint32_t av = static_cast<std::uint32_t>(rng.next_below(views));
        batch.anchors.push_back(i);
        batch.anchor_views.push_back(av);
        const std::uint32_t* row = nbrs.row_ids(i);
        if (mode == NeighborMode::sample_one) {
            std::uint32_t pick = static_cast<std::uint32_t>(rng.next_below(usable));
            batch.neighbor_ids.push_back(row[pick]);
            batch.neighbor_views.push_back(static_cast<std::uint32_t>(rng.next_below(views)));
        } else {
            for (std::uint32_t t = 0; t < usable; ++t) {
                batch.neighbor_ids.push_back(row[t]);
                batch.neighbor_views.push_back(static_cast<std::uint32_t>(rng.next_below(views)));
            }
        }
        batch.pair_offsets.push_back(static_cast<std::uint32_t>(batch.neighbor_ids.size()));
    }
    return batch;
}

namespace {

/// Shared forward/backward core. When grad is non-empty it receives the
/// analytic gradient of `total`; the loss value is returned either way.
LossBreakdown loss_core(const ClusterHead& head, const ScanBatch& batch,
                        const EmbeddingDataset& ds, double lambda, std::span<double> grad) {
    if (batch.pair_count() == 0) throw ValidationError("scan_loss: empty batch");
    if (lambda < 0.0) throw ValidationError("scan_loss: lambda must be >= 0");
    const std::uint32_t C = head.c;
    const std::size_t A = batch.anchor_count();
    const std::size_t P = batch.pair_count();
    const std::size_t M = A + P;  // forward passes feeding the marginal
    const bool want_grad = !grad.empty();
    const bool is_mlp = head.kind == HeadKind::mlp;

    std::vector<double> probs(M * C);
    std::vector<double> logits(C);
    std::vector<std::vector<double>> hiddens(is_mlp && want_grad ? M : 0);
    std::vector<double> hidden_scratch;

    auto run_forward = [&](std::size_t slot, const float* x) {
        std::vector<double>* hb = nullptr;
        if (is_mlp) hb = want_grad ? &hiddens[slot] : &hidden_scratch;
        head.forward(x, logits, std::span<double>(probs.data() + slot * C, C), hb);
    };
    for (std::size_t a = 0; a < A; ++a)
        run_forward(a, ds.view(batch.anchors[a], batch.anchor_views[a]));
    for (std::size_t p = 0; p < P; ++p)
        run_forward(A + p, ds.view(batch.neighbor_ids[p], batch.neighbor_views[p]));

    LossBreakdown out;
    out.marginal.assign(C, 0.0);
    for (std::size_t s = 0; s < M; ++s)
        for (std::uint32_t c = 0; c < C; ++c) out.marginal[c] += probs[s * C + c];
    for (std::uint32_t c = 0; c < C; ++c) out.marginal[c] /= static_cast<double>(M);

    std::vector<double> dprob(want_grad ? M * C : 0, 0.0);

    double consistency = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
        const double* pa = probs.data() + a * C;
        for (std::uint32_t p = batch.pair_offsets[a]; p < batch.pair_offsets[a + 1]; ++p) {
            const std::size_t slot = A + p;
            const double* pb = probs.data() + slot * C;
            double dot = dot_f64(pa, pb, C);
            if (dot > kDotClamp) {
                consistency -= std::log(dot);
                if (want_grad) {
                    double scale = -1.0 / (static_cast<double>(P) * dot);
                    double* ga = dprob.data() + a * C;
                    double* gb = dprob.data() + slot * C;
                    for (std::uint32_t c = 0; c < C; ++c) {
                        ga[c] += scale * pb[c];
                        gb[c] += scale * pa[c];
                    }
                }
            } else {
                consistency -= std::log(kDotClamp);  // clamped: flat, no gradient
            }
        }
    }
    out.consistency = consistency / static_cast<double>(P);

    double ent = 0.0;
    for (std::uint32_t c = 0; c < C; ++c) {
        double q = out.marginal[c];
        if (q > 0.0) ent += q * std::log(q);
    }
    out.entropy_term = lambda * ent;
    out.total = out.consistency + out.entropy_term;

    if (want_grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        // marginal term: every pass contributes 1/M to p'
        for (std::uint32_t c = 0; c < C; ++c) {
            double q = out.marginal[c];
            if (q <= 0.0) continue;
            double g = lambda * (std::log(q) + 1.0) / static_cast<double>(M);
            for (std::size_t s = 0; s < M; ++s) dprob[s * C + c] += g;
        }
        // softmax backprop per pass, then into the parameters
        std::vector<double> dlogits(C);
        for (std::size_t s = 0; s < M; ++s) {
            const double* p = probs.data() + s * C;
            const double* gp = dprob.data() + s * C;
            double inner = dot_f64(gp, p, C);
            for (std::uint32_t c = 0; c < C; ++c) dlogits[c] = p[c] * (gp[c] - inner);
            const float* x = s < A ? ds.view(batch.anchors[s], batch.anchor_views[s])
                                   : ds.view(batch.neighbor_ids[s - A], batch.neighbor_views[s - A]);
            head.accumulate_grad(x, dlogits, is_mlp ? &hiddens[s] : nullptr, grad);
        }
    }
    return out;
}

void shuffle_ids(std::vector<std::uint32_t>& ids, Rng& rng) {
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(ids[i - 1], ids[j]);
    }
}

struct HeadRun {
    TrainState state;
    std::vector<EpochStats> epochs;
    double final_loss = std::numeric_limits<double>::infinity();
};

HeadRun train_one_head(const EmbeddingDataset& ds, const NeighborIndex& nbrs,
                       const TrainConfig& cfg, std::uint32_t head_idx) {
    Rng rng(derive_seed(cfg.seed, "clustering-head", head_idx));
    HeadRun run;
    run.state.head = ClusterHead::make(cfg.clusters, ds.d, cfg.head_kind, cfg.hidden);
    run.state.head.init(rng);
    run.state.opt = Optimizer::make(cfg.optimizer, run.state.head.param_count());
    run.state.ema_alpha = cfg.ema_alpha;
    if (cfg.ema_alpha > 0.0) run.state.ema = run.state.head.params;

    std::vector<std::uint32_t> order(ds.n);
    for (std::uint32_t i = 0; i < ds.n; ++i) order[i] = i;
    std::vector<double> grad(run.state.head.param_count());

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_ids(order, rng);
        EpochStats stats;
        std::uint32_t batches = 0;
        for (std::uint32_t begin = 0; begin < ds.n; begin += cfg.batch_size) {
            std::uint32_t end = std::min<std::uint32_t>(begin + cfg.batch_size, ds.n);
            ScanBatch batch = make_scan_batch({order.data() + begin, end - begin}, nbrs, cfg.k,
                                              cfg.neighbor_mode, ds.v, rng);
            if (batch.pair_count() == 0) continue;
            LossBreakdown loss =
                scan_loss_grad(run.state.head, batch, ds, cfg.lambda, grad);
            run.state.opt.step(run.state.head.params, grad);
            if (run.state.ema) ema_step(*run.state.ema, run.state.head.params, cfg.ema_alpha);
            stats.consistency += loss.consistency;
            stats.entropy_term += loss.entropy_term;
            stats.total += loss.total;
            ++batches;
        }
        if (batches == 0)
            throw TrainError("clustering: no trainable batches (all neighbor rows empty)");
        stats.consistency /= batches;
        stats.entropy_term /= batches;
        stats.total /= batches;
        run.epochs.push_back(stats);
    }
    run.final_loss = run.epochs.back().total;
    run.state.rng_state = rng.state();
    return run;
}

}  // namespace

LossBreakdown scan_loss(const ClusterHead& head, const ScanBatch& batch,
                        const EmbeddingDataset& ds, double lambda) {
    return loss_core(head, batch, ds, lambda, {});
}

LossBreakdown scan_loss_grad(const ClusterHead& head, const ScanBatch& batch,
                             const EmbeddingDataset& ds, double lambda, std::span<double> grad) {
    if (grad.size() != head.param_count())
        throw ValidationError("scan_loss_grad: gradient span size mismatch");
    return loss_core(head, batch, ds, lambda, grad);
}

void ema_step(std::span<double> shadow, std::span<const double> params, double alpha) {
    if (shadow.size() != params.size()) throw ValidationError("ema_step: size mismatch");
    if (alpha < 0.0 || alpha >= 1.0) throw ValidationError("ema_step: alpha must be in [0,1)");
    for (std::size_t i = 0; i < shadow.size(); ++i)
        shadow[i] = alpha * shadow[i] + (1.0 - alpha) * params[i];
}

TrainResult train_clustering(const EmbeddingDataset& ds, const NeighborIndex& nbrs,
                             const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (nbrs.n != ds.n) throw ValidationError("train: neighbor index n != dataset n");
    if (cfg.k > nbrs.k)
        throw ValidationError("train: config k (" + std::to_string(cfg.k) +
                              ") exceeds mined k (" + std::to_string(nbrs.k) + ")");
    if (cfg.k == 0 && ds.v < 2)
        throw TrainError("train: k=0 needs at least two views per sample (no augmentation source)");

    std::uint32_t heads = cfg.heads;
    std::vector<HeadRun> runs(heads);

    int workers = cfg.workers > 0 ? cfg.workers
                                  : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (workers == 1 || heads == 1) {
        for (std::uint32_t h = 0; h < heads; ++h) runs[h] = train_one_head(ds, nbrs, cfg, h);
    } else {
        std::vector<std::future<HeadRun>> futures;
        futures.reserve(heads);
        for (std::uint32_t h = 0; h < heads; ++h)
            futures.push_back(std::async(std::launch::async,
                                         [&, h] { return train_one_head(ds, nbrs, cfg, h); }));
        for (std::uint32_t h = 0; h < heads; ++h) runs[h] = futures[h].get();
    }

    std::uint32_t best = 0;
    for (std::uint32_t h = 1; h < heads; ++h)
        if (runs[h].final_loss < runs[best].final_loss) best = h;

    TrainResult result;
    result.state = std::move(runs[best].state);
    result.history.epochs = std::move(runs[best].epochs);
    result.history.selected_head = best;
    result.history.head_final_losses.resize(heads);
    for (std::uint32_t h = 0; h < heads; ++h)
        result.history.head_final_losses[h] = runs[h].final_loss;
    return result;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t x) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(x >> 8),
                         static_cast<std::uint8_t>(x >> 16), static_cast<std::uint8_t>(x >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t x) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ofstream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

std::uint32_t get_u32(std::ifstream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(FormatError::Reason::truncated, "truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::ifstream& in) {
    std::uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw FormatError(FormatError::Reason::truncated, "truncated checkpoint");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

double get_f64(std::ifstream& in) { return std::bit_cast<double>(get_u64(in)); }

constexpr char kCheckpointMagic[8] = {'S', 'C', 'A', 'N', 'C', 'K', 'P', '1'};

}  // namespace

void write_checkpoint(const TrainState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kCheckpointMagic, 8);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(state.head.kind));
    put_u32(out, state.head.c);
    put_u32(out, state.head.d);
    put_u32(out, state.head.hidden);
    put_u32(out, static_cast<std::uint32_t>(state.opt.cfg.kind));
    put_f64(out, state.opt.cfg.lr);
    put_f64(out, state.opt.cfg.weight_decay);
    put_f64(out, state.opt.cfg.beta1);
    put_f64(out, state.opt.cfg.beta2);
    put_f64(out, state.opt.cfg.eps);
    put_f64(out, state.opt.cfg.momentum);
    put_u64(out, state.opt.t);
    put_u64(out, state.rng_state);
    std::uint8_t has_ema = state.ema ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&has_ema), 1);
    put_f64(out, state.ema_alpha);
    put_u64(out, state.head.param_count());
    for (double p : state.head.params) put_f64(out, p);
    for (double x : state.opt.m) put_f64(out, x);
    if (state.opt.cfg.kind == OptimizerConfig::Kind::adam)
        for (double x : state.opt.v) put_f64(out, x);
    if (state.ema)
        for (double x : *state.ema) put_f64(out, x);
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

TrainState read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError(FormatError::Reason::bad_magic, "bad magic, not a checkpoint file");
    std::uint32_t version = get_u32(in);
    if (version != 1)
        throw FormatError(FormatError::Reason::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
    std::uint32_t kind_raw = get_u32(in);
    if (kind_raw > 1) throw FormatError(FormatError::Reason::bad_payload, "bad head kind");
    std::uint32_t c = get_u32(in);
    std::uint32_t d = get_u32(in);
    std::uint32_t hidden = get_u32(in);
    std::uint32_t opt_kind_raw = get_u32(in);
    if (opt_kind_raw > 1) throw FormatError(FormatError::Reason::bad_payload, "bad optimizer kind");

    TrainState state;
    state.head = ClusterHead::make(c, d, static_cast<HeadKind>(kind_raw),
                                   kind_raw == 1 ? hidden : 0);
    OptimizerConfig ocfg;
    ocfg.kind = static_cast<OptimizerConfig::Kind>(opt_kind_raw);
    ocfg.lr = get_f64(in);
    ocfg.weight_decay = get_f64(in);
    ocfg.beta1 = get_f64(in);
    ocfg.beta2 = get_f64(in);
    ocfg.eps = get_f64(in);
    ocfg.momentum = get_f64(in);
    std::uint64_t opt_t = get_u64(in);
    state.rng_state = get_u64(in);
    char has_ema = 0;
    in.read(&has_ema, 1);
    if (in.gcount() != 1) throw FormatError(FormatError::Reason::truncated, "truncated checkpoint");
    state.ema_alpha = get_f64(in);
    std::uint64_t pc = get_u64(in);
    if (pc != state.head.param_count())
        throw FormatError(FormatError::Reason::bad_payload, "parameter count mismatch");
    for (auto& p : state.head.params) p = get_f64(in);
    state.opt = Optimizer::make(ocfg, pc);
    state.opt.t = opt_t;
    for (auto& x : state.opt.m) x = get_f64(in);
    if (ocfg.kind == OptimizerConfig::Kind::adam)
        for (auto& x : state.opt.v) x = get_f64(in);
    if (has_ema) {
        std::vector<double> ema(pc);
        for (auto& x : ema) x = get_f64(in);
        state.ema = std::move(ema);
    }
    in.peek();
    if (!in.eof())
        throw FormatError(FormatError::Reason::bad_payload, "trailing bytes after payload");
    return state;
}

}  // namespace scan
