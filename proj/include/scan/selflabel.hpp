#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scan/trainer.hpp"
#include "scan/types.hpp"

namespace scan {

/// Fine-tuning on the model's own confident predictions. Pseudo-labels are
/// read off the weak view (view 0) and training happens only on strong views
/// (views >= 1); that shift is the whole point, so view 0 never appears in a
/// training batch.
struct SelfLabelConfig {
    double threshold = 0.99;  // strict lower bound on p_max for selection
    std::uint32_t epochs = 200;
    std::uint32_t batch_size = 128;
    OptimizerConfig optimizer;  // fresh moments; adam lr 1e-4 wd 1e-4 default
    double ema_alpha = 0.0;     // 0 disables the shadow; 0.999 typical when on
    bool class_balance = true;
    std::uint32_t plateau_window = 5;    // epochs between growth checks
    double plateau_growth = 0.001;       // stop when relative growth drops below
    double noise_std = 0.0;  // v==1 fallback: Gaussian jitter stands in for a
                             // strong view; experimental, off by default

    void validate() const;
};

/// Samples whose top view-0 probability strictly exceeds the threshold,
/// with their argmax pseudo-labels. Empty selections are valid results.
struct ConfidentSelection {
    std::vector<std::uint32_t> ids;
    std::vector<std::uint32_t> labels;
    std::vector<double> confidence;

    std::size_t size() const { return ids.size(); }
};

ConfidentSelection select_confident(const ClusterHead& head, const EmbeddingDataset& ds,
                                    double threshold);

/// Per-class weights for one batch: w_c = B / (classes_present * count_c) for
/// classes in the batch, 0 for absent ones. Balanced batches get all-ones, so
/// the weighted loss reduces to the plain mean. With `balance` off, all-ones.
std::vector<double> balance_weights(std::span<const std::uint32_t> labels, std::uint32_t c,
                                    bool balance);

/// Weighted cross-entropy over a gathered batch. `features` holds B rows of
/// head.d floats. Loss = -sum_i w_{y_i} ln p_{y_i}(x_i) / sum_i w_{y_i}, which
/// is invariant to rescaling the weights and to duplicating the batch.
/// `grad` is either empty (loss only) or head.param_count() and is overwritten.
double weighted_ce_loss(const ClusterHead& head, std::span<const float> features,
                        std::span<const std::uint32_t> labels,
                        std::span<const double> class_weights, std::span<double> grad);

struct SelfLabelHistory {
    std::vector<std::uint32_t> confident_counts;  // selection size at each epoch start
    std::vector<double> pseudo_label_accuracy;    // vs truth (many-to-one); -1 if unlabeled
    std::vector<double> ce_loss;                  // mean batch loss per trained epoch
    std::uint32_t epochs_run = 0;
    bool plateaued = false;
};

struct SelfLabelResult {
    TrainState state;
    SelfLabelHistory history;
};

/// Alternates confident selection on the weak view with weighted
/// cross-entropy steps on strong views of the selected samples, re-labeling
/// every epoch. The optimizer starts fresh from cfg; the RNG continues from
/// state.rng_state. When EMA is on, selection and the returned weights use
/// the shadow. Stops when confident growth over `plateau_window` epochs falls
/// below `plateau_growth`, or at the epoch budget. An empty selection at the
/// very start is an error; one mid-run stops the loop gracefully.
SelfLabelResult self_label_train(const EmbeddingDataset& ds, TrainState state,
                                 const SelfLabelConfig& cfg);

}  // namespace scan
