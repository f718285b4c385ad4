#pragma once

#include <cstdint>
#include <vector>

#include "scan/head.hpp"
#include "scan/types.hpp"

namespace scan {

/// Forward pass of a head over every sample of one view. Assignments break
/// probability ties toward the lower cluster id so repeated runs agree.
struct Predictions {
    std::uint32_t n = 0;
    std::uint32_t c = 0;
    std::vector<double> probs;          // n x c, row-major
    std::vector<std::uint32_t> assign;  // argmax per sample
    std::vector<double> pmax;           // probability of the assigned cluster

    const double* row(std::uint32_t i) const { return probs.data() + std::size_t(i) * c; }
};

Predictions predict(const ClusterHead& head, const EmbeddingDataset& ds, std::uint32_t view = 0);

/// Mean predicted distribution over all samples (length c, sums to 1).
std::vector<double> marginal_distribution(const Predictions& p);

/// Entropy of the mean predicted distribution, in nats.
double marginal_entropy(const Predictions& p);

/// Fraction of samples whose top probability exceeds `threshold` (strict).
double confident_fraction(const Predictions& p, double threshold);

}  // namespace scan
