#include "scan/selflabel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "scan/error.hpp"
#include "scan/metrics.hpp"
#include "scan/predict.hpp"

namespace scan {

void SelfLabelConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("selflabel: threshold must be in (0,1)");
    if (epochs == 0) throw ValidationError("selflabel: epochs must be positive");
    if (batch_size == 0) throw ValidationError("selflabel: batch_size must be positive");
    if (plateau_window < 2) throw ValidationError("selflabel: plateau window must be >= 2");
    if (plateau_growth < 0.0) throw ValidationError("selflabel: plateau growth must be >= 0");
    if (ema_alpha < 0.0 || ema_alpha >= 1.0)
        throw ValidationError("selflabel: ema_alpha must be in [0,1)");
    if (noise_std < 0.0) throw ValidationError("selflabel: noise_std must be >= 0");
}

ConfidentSelection select_confident(const ClusterHead& head, const EmbeddingDataset& ds,
                                    double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("select_confident: threshold must be in (0,1)");
    Predictions pr = predict(head, ds, 0);
    ConfidentSelection sel;
    for (std::uint32_t i = 0; i < ds.n; ++i) {
        if (pr.pmax[i] > threshold) {
            sel.ids.push_back(i);
            sel.labels.push_back(pr.assign[i]);
            sel.confidence.push_back(pr.pmax[i]);
        }
    }
    return sel;
}

std::vector<double> balance_weights(std::span<const std::uint32_t> labels, std::uint32_t c,
                                    bool balance) {
    if (labels.empty()) throw ValidationError("balance_weights: empty batch");
    std::vector<double> w(c, balance ? 0.0 : 1.0);
    if (!balance) return w;
    std::vector<std::uint64_t> counts(c, 0);
    std::uint32_t present = 0;
    for (auto y : labels) {
        if (y >= c) throw ValidationError("balance_weights: label out of range");
        if (counts[y]++ == 0) ++present;
    }
    double b = double(labels.size());
    for (std::uint32_t k = 0; k < c; ++k)
        if (counts[k] > 0) w[k] = b / (double(present) * double(counts[k]));
    return w;
}

double weighted_ce_loss(const ClusterHead& head, std::span<const float> features,
                        std::span<const std::uint32_t> labels,
                        std::span<const double> class_weights, std::span<double> grad) {
    std::size_t b = labels.size();
    if (b == 0) throw ValidationError("weighted_ce_loss: empty batch");
    if (features.size() != b * head.d)
        throw ValidationError("weighted_ce_loss: feature buffer size mismatch");
    if (class_weights.size() != head.c)
        throw ValidationError("weighted_ce_loss: weight vector size != cluster count");
    bool want_grad = !grad.empty();
    if (want_grad && grad.size() != head.param_count())
        throw ValidationError("weighted_ce_loss: gradient span size mismatch");

    double weight_sum = 0.0;
    for (auto y : labels) {
        if (y >= head.c) throw ValidationError("weighted_ce_loss: label out of range");
        if (!(class_weights[y] > 0.0))
            throw ValidationError("weighted_ce_loss: weight of a present class must be positive");
        weight_sum += class_weights[y];
    }

    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> logits(head.c), probs(head.c), dlogits(head.c);
    std::vector<double> hidden_buf;
    std::vector<double>* hb = head.kind == HeadKind::mlp ? &hidden_buf : nullptr;

    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const float* x = features.data() + i * head.d;
        head.forward(x, logits, probs, hb);
        std::uint32_t y = labels[i];
        double w = class_weights[y] / weight_sum;
        loss -= class_weights[y] * std::log(std::max(probs[y], 1e-300));
        if (want_grad) {
            for (std::uint32_t k = 0; k < head.c; ++k) dlogits[k] = w * probs[k];
            dlogits[y] -= w;
            head.accumulate_grad(x, dlogits, hb, grad);
        }
    }
    return loss / weight_sum;
}

namespace {

void shuffle_u32(std::vector<std::uint32_t>& xs, Rng& rng) {
    for (std::size_t i = xs.size(); i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(xs[i - 1], xs[j]);
    }
}

double pseudo_accuracy(const ConfidentSelection& sel, const EmbeddingDataset& ds) {
    if (!ds.has_labels() || sel.ids.empty()) return -1.0;
    std::vector<std::uint32_t> truth(sel.ids.size());
    for (std::size_t i = 0; i < sel.ids.size(); ++i) truth[i] = (*ds.labels)[sel.ids[i]];
    return accuracy(sel.labels, truth, AccMode::many_to_one).acc;
}

}  // namespace

SelfLabelResult self_label_train(const EmbeddingDataset& ds, TrainState state,
                                 const SelfLabelConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (state.head.d != ds.d)
        throw ValidationError("self-label: head dimension != dataset dimension");
    bool noise_fallback = ds.v < 2;
    if (noise_fallback && cfg.noise_std <= 0.0)
        throw TrainError(
            "self-label: dataset has a single view and noise injection is off; "
            "no strong views to train on");

    SelfLabelResult out;
    out.state = std::move(state);
    // Fine-tuning continues from the inference weights and starts a fresh
    // shadow; the clustering stage's shadow (if any) is consumed here.
    if (out.state.ema) out.state.head.params = *out.state.ema;
    out.state.ema.reset();
    out.state.ema_alpha = cfg.ema_alpha;
    if (cfg.ema_alpha > 0.0) out.state.ema = out.state.head.params;
    out.state.opt = Optimizer::make(cfg.optimizer, out.state.head.param_count());

    Rng rng(0);
    rng.set_state(out.state.rng_state);

    SelfLabelHistory& hist = out.history;
    std::vector<double> grad(out.state.head.param_count());
    std::vector<float> feat;
    std::vector<std::uint32_t> batch_labels;
    std::vector<std::uint32_t> order;

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        ConfidentSelection sel = select_confident(out.state.eval_head(), ds, cfg.threshold);
        hist.confident_counts.push_back(static_cast<std::uint32_t>(sel.size()));
        hist.pseudo_label_accuracy.push_back(pseudo_accuracy(sel, ds));

        if (sel.size() == 0) {
            if (epoch == 0) {
                std::ostringstream msg;
                msg << "self-label: no samples above threshold " << cfg.threshold
                    << " at the start; lower threshold or train clustering longer";
                throw TrainError(msg.str());
            }
            break;  // selection emptied mid-run; keep the current weights
        }

        if (epoch >= cfg.plateau_window) {
            double prev = hist.confident_counts[epoch - cfg.plateau_window];
            double cur = hist.confident_counts[epoch];
            double growth = (cur - prev) / std::max(prev, 1.0);
            if (growth < cfg.plateau_growth) {
                hist.plateaued = true;
                break;
            }
        }

        order.resize(sel.size());
        std::iota(order.begin(), order.end(), 0u);
        shuffle_u32(order, rng);

        double epoch_loss = 0.0;
        std::uint32_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::size_t b = end - begin;
            feat.resize(b * ds.d);
            batch_labels.resize(b);
            for (std::size_t e = 0; e < b; ++e) {
                std::uint32_t id = sel.ids[order[begin + e]];
                batch_labels[e] = sel.labels[order[begin + e]];
                float* dst = feat.data() + e * ds.d;
                if (noise_fallback) {
                    const float* src = ds.view(id, 0);
                    for (std::uint32_t j = 0; j < ds.d; ++j)
                        dst[j] = static_cast<float>(src[j] + cfg.noise_std * rng.next_normal());
                } else {
                    std::uint32_t view = 1 + static_cast<std::uint32_t>(
                                                 rng.next_below(ds.v - 1));
                    const float* src = ds.view(id, view);
                    std::copy(src, src + ds.d, dst);
                }
            }
            auto weights = balance_weights(batch_labels, out.state.head.c, cfg.class_balance);
            epoch_loss += weighted_ce_loss(out.state.head, feat, batch_labels, weights, grad);
            out.state.opt.step(out.state.head.params, grad);
            if (out.state.ema) ema_step(*out.state.ema, out.state.head.params, cfg.ema_alpha);
            ++batches;
        }
        hist.ce_loss.push_back(epoch_loss / batches);
        ++hist.epochs_run;
    }

    out.state.rng_state = rng.state();
    return out;
}

}  // namespace scan
