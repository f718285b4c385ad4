#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scan/head.hpp"
#include "scan/rng.hpp"
#include "scan/types.hpp"

namespace scan {

struct OptimizerConfig {
    enum class Kind : std::uint32_t { adam = 0, sgd = 1 };
    Kind kind = Kind::adam;
    double lr = 1e-4;
    double weight_decay = 1e-4;  // decoupled, adam only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.9;  // sgd only
};

/// Flat-vector optimizer. Adam uses decoupled weight decay: parameters are
/// scaled by (1 - lr*wd) before the moment update is applied, so the decay
/// never enters the moment estimates. SGD is classic momentum without decay.
struct Optimizer {
    OptimizerConfig cfg;
    std::uint64_t t = 0;
    std::vector<double> m;  // adam first moment / sgd velocity
    std::vector<double> v;  // adam second moment (empty for sgd)

    static Optimizer make(const OptimizerConfig& cfg, std::size_t param_count);
    void step(std::span<double> params, std::span<const double> grad);
};

enum class NeighborMode : std::uint32_t { sample_one = 0, full_sum = 1 };

struct TrainConfig {
    std::uint32_t clusters = 10;
    std::uint32_t k = 20;
    double lambda = 5.0;
    std::uint32_t epochs = 100;
    std::uint32_t batch_size = 128;
    std::uint32_t heads = 10;
    HeadKind head_kind = HeadKind::linear;
    std::uint32_t hidden = 64;  // mlp heads only
    NeighborMode neighbor_mode = NeighborMode::sample_one;
    OptimizerConfig optimizer;
    double ema_alpha = 0.0;  // 0 = off, 0.999 when on
    std::uint64_t seed = 1;
    int workers = 0;  // head-level parallelism, 0 = hardware concurrency

    void validate() const;
};

/// One training batch of the clustering loss. Anchors are stored once each;
/// their pairs index into the neighbor arrays via pair_offsets (sample_one
/// mode has exactly one pair per anchor, full_sum one per usable neighbor).
/// In the K=0 corner the "neighbor" is the anchor itself under a different
/// view.
struct ScanBatch {
    std::vector<std::uint32_t> anchors;
    std::vector<std::uint32_t> anchor_views;
    std::vector<std::uint32_t> pair_offsets;  // size anchors.size()+1
    std::vector<std::uint32_t> neighbor_ids;
    std::vector<std::uint32_t> neighbor_views;

    std::size_t pair_count() const { return neighbor_ids.size(); }
    std::size_t anchor_count() const { return anchors.size(); }
};

/// Builds a batch for the given anchors. Per anchor the draw order is fixed:
/// anchor view, then neighbor choice (sample_one), then neighbor view(s).
/// Anchors whose truncated neighbor row is empty are dropped (k > 0 only).
ScanBatch make_scan_batch(std::span<const std::uint32_t> anchors, const NeighborIndex& nbrs,
                          std::uint32_t k, NeighborMode mode, std::uint32_t views, Rng& rng);

/// The clustering objective, decomposed. For P pairs with prediction vectors
/// p_a, p_b and the batch marginal p' (mean over every anchor and neighbor
/// prediction in the batch, M vectors total):
///   consistency  = -(1/P) sum_p ln(max(<p_a, p_b>, 1e-8))
///   entropy_term = lambda * sum_c p'_c ln p'_c          (0 ln 0 := 0)
///   total        = consistency + entropy_term
struct LossBreakdown {
    double consistency = 0.0;
    double entropy_term = 0.0;
    double total = 0.0;
    std::vector<double> marginal;
};

inline constexpr double kDotClamp = 1e-8;

LossBreakdown scan_loss(const ClusterHead& head, const ScanBatch& batch,
                        const EmbeddingDataset& ds, double lambda);

/// Analytic gradient of `total` with respect to every head parameter.
/// Pairs whose dot product hits the clamp contribute no consistency gradient.
LossBreakdown scan_loss_grad(const ClusterHead& head, const ScanBatch& batch,
                             const EmbeddingDataset& ds, double lambda,
                             std::span<double> grad);

/// One exponential-moving-average update: shadow = alpha*shadow + (1-alpha)*params.
/// A convex combination, so every shadow coordinate lands between its previous
/// value and the incoming parameter. alpha = 0 copies the parameters.
void ema_step(std::span<double> shadow, std::span<const double> params, double alpha);

/// Everything needed to continue or evaluate a training run. `ema` shadows
/// the parameters when exponential averaging is on; predictions and final
/// outputs then use the shadow.
struct TrainState {
    ClusterHead head;
    Optimizer opt;
    std::optional<std::vector<double>> ema;
    double ema_alpha = 0.0;
    std::uint64_t rng_state = 0;

    /// Parameters to use for inference: the EMA shadow when present.
    const std::vector<double>& eval_params() const { return ema ? *ema : head.params; }

    /// Copy of the head with eval_params() installed.
    ClusterHead eval_head() const {
        ClusterHead h = head;
        if (ema) h.params = *ema;
        return h;
    }
};

// Checkpoint (.sckpt), little-endian, bit-exact round trip:
//   magic "SCANCKP1" (8 bytes)
//   u32 version = 1
//   u32 head_kind, u32 c, u32 d, u32 hidden
//   u32 opt_kind
//   f64 lr, weight_decay, beta1, beta2, eps, momentum
//   u64 opt_step_count
//   u64 rng_state
//   u8 has_ema, f64 ema_alpha
//   u64 param_count P
//   P x f64 params
//   P x f64 opt_m            (adam first moment / sgd velocity)
//   [P x f64 opt_v]          adam only
//   [P x f64 ema]            when has_ema
void write_checkpoint(const TrainState& state, const std::string& path);
TrainState read_checkpoint(const std::string& path);

struct EpochStats {
    double consistency = 0.0;
    double entropy_term = 0.0;
    double total = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;         // history of the selected head
    std::vector<double> head_final_losses;  // final-epoch mean total per head
    std::uint32_t selected_head = 0;
};

struct TrainResult {
    TrainState state;
    TrainHistory history;
};

/// Clustering step: trains cfg.heads heads from independent seeded
/// initializations and returns the one with the lowest final-epoch mean loss.
/// Per-epoch stats are arithmetic means over batches. Heads may train on
/// parallel workers; per-head RNG streams make the result independent of
/// scheduling.
TrainResult train_clustering(const EmbeddingDataset& ds, const NeighborIndex& nbrs,
                             const TrainConfig& cfg);

}  // namespace scan
