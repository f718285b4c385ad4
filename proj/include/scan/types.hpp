#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace scan {

/// Sentinel neighbor id marking a dropped entry (see remove_false_positives).
/// Rows are padded at the tail with this id and similarity -inf; every
/// consumer skips sentinel entries.
inline constexpr std::uint32_t kNoNeighbor = std::numeric_limits<std::uint32_t>::max();

/// N samples x V views x D dims of 32-bit features, plus optional labels.
/// View 0 is the canonical (weak) view; views >= 1 are the strong views.
/// Immutable after construction in normal use; safe to share across threads.
struct EmbeddingDataset {
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::uint32_t v = 1;
    bool normalized = false;
    std::vector<float> features;  // sample-major, view-major, dim-minor
    std::optional<std::vector<std::uint32_t>> labels;
    std::uint32_t l = 0;  // ground-truth class count, 0 when labels absent

    const float* view(std::uint32_t sample, std::uint32_t view_idx) const {
        return features.data() + (static_cast<std::size_t>(sample) * v + view_idx) * d;
    }
    float* view_mut(std::uint32_t sample, std::uint32_t view_idx) {
        return features.data() + (static_cast<std::size_t>(sample) * v + view_idx) * d;
    }

    bool has_labels() const { return labels.has_value(); }

    /// Throws ValidationError on any invariant violation: non-finite features,
    /// broken unit norms under the normalized flag, labels out of range or a
    /// class with zero occurrences.
    void validate() const;
};

/// Per-sample list of k mined neighbor ids with similarity scores, row-sorted
/// by non-increasing similarity. A row never contains the anchor itself and
/// never contains duplicates. Sentinel-padded rows (kNoNeighbor, -inf) appear
/// only after false-positive removal.
struct NeighborIndex {
    std::uint32_t n = 0;
    std::uint32_t k = 0;
    std::vector<std::uint32_t> ids;  // n*k
    std::vector<float> sims;         // n*k

    const std::uint32_t* row_ids(std::uint32_t i) const {
        return ids.data() + static_cast<std::size_t>(i) * k;
    }
    const float* row_sims(std::uint32_t i) const {
        return sims.data() + static_cast<std::size_t>(i) * k;
    }

    /// Number of non-sentinel entries in row i (sentinels pad the tail).
    std::uint32_t row_size(std::uint32_t i) const {
        const std::uint32_t* r = row_ids(i);
        std::uint32_t m = k;
        while (m > 0 && r[m - 1] == kNoNeighbor) --m;
        return m;
    }

    void validate() const;
};

}  // namespace scan
