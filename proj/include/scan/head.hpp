#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scan/rng.hpp"

namespace scan {

enum class HeadKind : std::uint32_t { linear = 0, mlp = 1 };

/// Softmax classification head over C clusters: either a single linear layer
/// or one ReLU hidden layer followed by a linear layer. Parameters live in
/// one flat f64 vector (training math is all f64):
///   linear: W (c x d, row-major), b (c)
///   mlp:    W1 (h x d), b1 (h), W2 (c x h), b2 (c)
struct ClusterHead {
    std::uint32_t c = 0;
    std::uint32_t d = 0;
    HeadKind kind = HeadKind::linear;
    std::uint32_t hidden = 0;  // mlp only
    std::vector<double> params;

    static ClusterHead make(std::uint32_t c, std::uint32_t d, HeadKind kind,
                            std::uint32_t hidden = 0);

    std::size_t param_count() const { return params.size(); }

    // Flat offsets into params.
    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const { return static_cast<std::size_t>(kind == HeadKind::mlp ? hidden : c) * d; }
    std::size_t w2_off() const { return b1_off() + hidden; }          // mlp only
    std::size_t b2_off() const { return w2_off() + static_cast<std::size_t>(c) * hidden; }

    /// Uniform init in +-1/sqrt(fan_in) for weights, zero biases.
    void init(Rng& rng);

    /// logits = head(x); probs = softmax(logits). x is the f32 embedding row,
    /// promoted to f64. Both outputs are sized c; `hidden_buf` (mlp only)
    /// receives the post-ReLU hidden activations when non-null.
    void forward(const float* x, std::span<double> logits, std::span<double> probs,
                 std::vector<double>* hidden_buf = nullptr) const;

    /// Backprop of dL/dlogits for input x; accumulates into grad (same layout
    /// as params). `hidden_buf` must be the activations from forward() for
    /// mlp heads.
    void accumulate_grad(const float* x, std::span<const double> dlogits,
                         const std::vector<double>* hidden_buf, std::span<double> grad) const;
};

}  // namespace scan
