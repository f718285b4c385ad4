#include "scan/head.hpp"

#include <cmath>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {

ClusterHead ClusterHead::make(std::uint32_t c, std::uint32_t d, HeadKind kind, std::uint32_t hidden) {
    if (c < 1 || d < 1) throw ValidationError("head: c and d must be >= 1");
    if (kind == HeadKind::mlp && hidden < 1) throw ValidationError("head: mlp needs hidden >= 1");
    ClusterHead h;
    h.c = c;
    h.d = d;
    h.kind = kind;
    h.hidden = kind == HeadKind::mlp ? hidden : 0;
    std::size_t count = kind == HeadKind::linear
                            ? static_cast<std::size_t>(c) * d + c
                            : static_cast<std::size_t>(hidden) * d + hidden +
                                  static_cast<std::size_t>(c) * hidden + c;
    h.params.assign(count, 0.0);
    return h;
}

void ClusterHead::init(Rng& rng) {
    double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    if (kind == HeadKind::linear) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(c) * d; ++i)
            params[i] = rng.next_range(-s1, s1);
        for (std::size_t i = b1_off(); i < param_count(); ++i) params[i] = 0.0;
    } else {
        double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (std::size_t i = 0; i < static_cast<std::size_t>(hidden) * d; ++i)
            params[i] = rng.next_range(-s1, s1);
        for (std::size_t i = 0; i < hidden; ++i) params[b1_off() + i] = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(c) * hidden; ++i)
            params[w2_off() + i] = rng.next_range(-s2, s2);
        for (std::size_t i = 0; i < c; ++i) params[b2_off() + i] = 0.0;
    }
}

void ClusterHead::forward(const float* x, std::span<double> logits, std::span<double> probs,
                          std::vector<double>* hidden_buf) const {
    if (logits.size() != c || probs.size() != c)
        throw ValidationError("head: output span size != c");
    if (kind == HeadKind::linear) {
        const double* W = params.data();
        const double* b = params.data() + b1_off();
        for (std::uint32_t i = 0; i < c; ++i) {
            double z = b[i];
            const double* row = W + static_cast<std::size_t>(i) * d;
            for (std::uint32_t j = 0; j < d; ++j) z += row[j] * static_cast<double>(x[j]);
            logits[i] = z;
        }
    } else {
        if (hidden_buf == nullptr)
            throw ValidationError("head: mlp forward needs a hidden buffer");
        hidden_buf->resize(hidden);
        const double* W1 = params.data();
        const double* b1 = params.data() + b1_off();
        const double* W2 = params.data() + w2_off();
        const double* b2 = params.data() + b2_off();
        for (std::uint32_t i = 0; i < hidden; ++i) {
            double z = b1[i];
            const double* row = W1 + static_cast<std::size_t>(i) * d;
            for (std::uint32_t j = 0; j < d; ++j) z += row[j] * static_cast<double>(x[j]);
            (*hidden_buf)[i] = z > 0.0 ? z : 0.0;
        }
        for (std::uint32_t i = 0; i < c; ++i) {
            double z = b2[i];
            const double* row = W2 + static_cast<std::size_t>(i) * hidden;
            for (std::uint32_t j = 0; j < hidden; ++j) z += row[j] * (*hidden_buf)[j];
            logits[i] = z;
        }
    }
    for (std::uint32_t i = 0; i < c; ++i) probs[i] = logits[i];
    softmax_inplace(probs);
}

void ClusterHead::accumulate_grad(const float* x, std::span<const double> dlogits,
                                  const std::vector<double>* hidden_buf,
                                  std::span<double> grad) const {
    if (kind == HeadKind::linear) {
        double* gW = grad.data();
        double* gb = grad.data() + b1_off();
        for (std::uint32_t i = 0; i < c; ++i) {
            double g = dlogits[i];
            gb[i] += g;
            double* row = gW + static_cast<std::size_t>(i) * d;
            for (std::uint32_t j = 0; j < d; ++j) row[j] += g * static_cast<double>(x[j]);
        }
    } else {
        const double* W2 = params.data() + w2_off();
        double* gW1 = grad.data();
        double* gb1 = grad.data() + b1_off();
        double* gW2 = grad.data() + w2_off();
        double* gb2 = grad.data() + b2_off();
        const std::vector<double>& h = *hidden_buf;
        for (std::uint32_t i = 0; i < c; ++i) {
            double g = dlogits[i];
            gb2[i] += g;
            double* row = gW2 + static_cast<std::size_t>(i) * hidden;
            for (std::uint32_t j = 0; j < hidden; ++j) row[j] += g * h[j];
        }
        for (std::uint32_t j = 0; j < hidden; ++j) {
            if (h[j] <= 0.0) continue;  // ReLU gradient is zero at and below the kink
            double g = 0.0;
            for (std::uint32_t i = 0; i < c; ++i)
                g += dlogits[i] * W2[static_cast<std::size_t>(i) * hidden + j];
            gb1[j] += g;
            double* row = gW1 + static_cast<std::size_t>(j) * d;
            for (std::uint32_t t = 0; t < d; ++t) row[t] += g * static_cast<double>(x[t]);
        }
    }
}

}  // namespace scan
