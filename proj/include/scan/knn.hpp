#pragma once

#include <cstdint>
#include <vector>

#include "scan/types.hpp"

namespace scan {

enum class Metric { cosine, l2 };

/// Exact k-nearest-neighbor mining on one view of the dataset (view 0 by
/// default, the view the prior is mined from). Similarity is cosine by
/// default; the l2 option scores by negative squared distance so rows stay
/// sorted high-to-low. Self matches are excluded, ties break toward the lower
/// sample id. Brute force over all pairs, blocked over query rows; the result
/// is bit-identical for any block size or worker count.
NeighborIndex mine_neighbors(const EmbeddingDataset& ds, std::uint32_t k,
                             std::uint32_t view = 0, Metric metric = Metric::cosine,
                             int workers = 0);

struct PurityReport {
    double overall = 0.0;               // fraction of neighbor pairs with matching labels
    std::vector<double> cumulative;     // purity over ranks 1..r, r = 1..k
};

/// Fraction of (anchor, neighbor) pairs sharing a ground-truth label, plus
/// the purity curve as a function of neighbor rank. Sentinel entries are
/// skipped. Requires labels and k >= 1.
PurityReport neighbor_purity(const NeighborIndex& nbrs, const EmbeddingDataset& ds);

/// Drops neighbors whose label differs from the anchor's, compacting each row
/// and padding the tail with (kNoNeighbor, -inf). Upper-bound experiments
/// only; requires labels.
NeighborIndex remove_false_positives(const NeighborIndex& nbrs, const EmbeddingDataset& ds);

}  // namespace scan
