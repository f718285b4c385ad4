#pragma once

#include <cstdint>
#include <vector>

#include "scan/types.hpp"

namespace scan {

struct KmeansConfig {
    enum class Init : std::uint32_t { kmeanspp = 0, random = 1 };

    std::uint32_t clusters = 10;
    Init init = Init::kmeanspp;
    std::uint32_t max_iters = 300;
    double tol = 1e-6;  // max centroid shift (L2) that counts as converged
    std::uint64_t seed = 1;
};

struct KmeansResult {
    std::vector<std::uint32_t> assignments;
    std::vector<double> centroids;  // clusters x d, row-major
    double inertia = 0.0;
    std::uint32_t iters = 0;
    std::vector<double> inertia_trace;  // one entry per Lloyd iteration
};

/// Lloyd's algorithm on one view, k-means++ seeding by default. A cluster
/// left empty after assignment is re-seeded to the point farthest from its
/// own centroid. Inertia is checked to be non-increasing every iteration.
KmeansResult kmeans(const EmbeddingDataset& ds, const KmeansConfig& cfg, std::uint32_t view = 0);

}  // namespace scan
