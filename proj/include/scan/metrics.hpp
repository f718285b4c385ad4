#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scan/predict.hpp"
#include "scan/types.hpp"

namespace scan {

/// Row assigned to padding in a rectangular assignment.
inline constexpr std::uint32_t kNoMatch = std::numeric_limits<std::uint32_t>::max();

/// Minimum-cost perfect assignment of an n x n matrix (row-major), O(n^3)
/// shortest augmenting paths with potentials. Returns row -> column.
std::vector<std::uint32_t> hungarian(std::span<const double> cost, std::uint32_t n);

/// Rectangular variant: pads with zero cost to square. Rows matched to a
/// padding column come back as kNoMatch.
std::vector<std::uint32_t> hungarian_rect(std::span<const double> cost, std::uint32_t rows,
                                          std::uint32_t cols);

enum class AccMode : std::uint32_t { one_to_one = 0, many_to_one = 1 };

struct AccuracyResult {
    double acc = 0.0;
    std::vector<std::uint32_t> mapping;  // cluster id -> class id
};

/// Clustering accuracy against ground truth. one_to_one finds the best
/// cluster-to-class permutation (Hungarian on negated co-occurrence counts)
/// and needs as many clusters as classes; many_to_one sends each cluster to
/// its majority class (ties to the lower class id) and works for any counts.
/// Cluster/class counts are inferred from the data; the hints raise them so
/// ids a head never predicted still count as (empty) clusters.
AccuracyResult accuracy(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                        AccMode mode, std::uint32_t c_hint = 0, std::uint32_t l_hint = 0);

/// Normalized mutual information I(a;b)/sqrt(H(a)H(b)), natural logs.
/// Identical partitions (up to relabeling) give 1; if either partition has
/// zero entropy and they differ, 0.
double nmi(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Adjusted Rand index via pair counting. When the expected and maximum
/// indices coincide (degenerate cases like all-singletons), returns 1 when
/// the index also coincides, else 0.
double ari(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Cluster-by-class counts with rows ordered for display by mapped class
/// (then cluster id), so a perfect one-to-one clustering shows as diagonal.
struct ConfusionMatrix {
    std::vector<std::uint32_t> clusters;  // display order of cluster ids
    std::uint32_t l = 0;
    std::vector<std::uint64_t> counts;  // clusters.size() x l, display order

    std::uint64_t at(std::size_t display_row, std::uint32_t cls) const {
        return counts[display_row * l + cls];
    }
};

ConfusionMatrix confusion_matrix(std::span<const std::uint32_t> pred,
                                 std::span<const std::uint32_t> truth,
                                 std::span<const std::uint32_t> mapping);

/// Per-cluster representative: among the cluster's `per_cluster` most
/// confident members, the one whose view-0 embedding is nearest (cosine) to
/// the group's mean embedding. Ties go to the lower sample id; clusters with
/// no members come back empty.
std::vector<std::optional<std::uint32_t>> prototypes(const ClusterHead& head,
                                                     const EmbeddingDataset& ds,
                                                     std::uint32_t per_cluster = 10);

/// Sample ids with the smallest top probability, ascending (ties by id).
/// Asking for more than n returns all n.
std::vector<std::uint32_t> low_confidence(const ClusterHead& head, const EmbeddingDataset& ds,
                                          std::uint32_t count);

}  // namespace scan
