#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "scan/error.hpp"

namespace scan {

/// Numerically stable softmax (max-subtraction). Natural logarithms are used
/// throughout the library. Rejects non-finite input.
inline void softmax_inplace(std::span<double> z) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : z) {
        if (!std::isfinite(x)) throw ValidationError("softmax: non-finite logit");
        if (x > m) m = x;
    }
    double sum = 0.0;
    for (double& x : z) {
        x = std::exp(x - m);
        sum += x;
    }
    for (double& x : z) x /= sum;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    softmax_inplace(p);
    return p;
}

/// Shannon entropy in nats with the 0*ln(0) := 0 convention.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

inline double dot_f64(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

/// f32 inputs, f64 accumulation in index order. Both the blocked kNN kernel
/// and the reference path go through this single routine so their per-pair
/// floating-point order is identical.
inline double dot_f32(const float* a, const float* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

inline double norm_f32(const float* a, std::size_t d) { return std::sqrt(dot_f32(a, a, d)); }

}  // namespace scan
