#include "scan/types.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {

void EmbeddingDataset::validate() const {
    if (n < 1 || d < 1 || v < 1) throw ValidationError("dataset: n, d, v must all be >= 1");
    if (features.size() != static_cast<std::size_t>(n) * v * d)
        throw ValidationError("dataset: feature buffer size does not match n*v*d");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i]))
            throw ValidationError("dataset: non-finite feature at flat index " + std::to_string(i));
    }
    if (normalized) {
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::uint32_t w = 0; w < v; ++w) {
                double nrm = norm_f32(view(i, w), d);
                if (std::abs(nrm - 1.0) > 1e-4)
                    throw ValidationError("dataset: normalized flag set but sample " +
                                          std::to_string(i) + " view " + std::to_string(w) +
                                          " has norm " + std::to_string(nrm));
            }
        }
    }
    if (labels) {
        if (labels->size() != n) throw ValidationError("dataset: label count != n");
        if (l < 1) throw ValidationError("dataset: labels present but class count l < 1");
        std::vector<std::uint32_t> seen(l, 0);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::uint32_t y = (*labels)[i];
            if (y >= l)
                throw ValidationError("dataset: label " + std::to_string(y) + " at sample " +
                                      std::to_string(i) + " out of range [0, " + std::to_string(l) + ")");
            ++seen[y];
        }
        for (std::uint32_t c = 0; c < l; ++c)
            if (seen[c] == 0)
                throw ValidationError("dataset: class " + std::to_string(c) + " has no samples");
    }
}

void NeighborIndex::validate() const {
    if (ids.size() != static_cast<std::size_t>(n) * k || sims.size() != ids.size())
        throw ValidationError("neighbor index: buffer sizes do not match n*k");
    std::unordered_set<std::uint32_t> row;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t* rid = row_ids(i);
        const float* rs = row_sims(i);
        row.clear();
        bool tail = false;
        for (std::uint32_t j = 0; j < k; ++j) {
            if (rid[j] == kNoNeighbor) {
                tail = true;
                continue;
            }
            if (tail)
                throw ValidationError("neighbor index: sentinel before real entry in row " +
                                      std::to_string(i));
            if (rid[j] == i)
                throw ValidationError("neighbor index: row " + std::to_string(i) + " contains itself");
            if (rid[j] >= n)
                throw ValidationError("neighbor index: id out of range in row " + std::to_string(i));
            if (!row.insert(rid[j]).second)
                throw ValidationError("neighbor index: duplicate id in row " + std::to_string(i));
            if (j > 0 && rid[j - 1] != kNoNeighbor && rs[j] > rs[j - 1])
                throw ValidationError("neighbor index: similarities not non-increasing in row " +
                                      std::to_string(i));
        }
    }
}

}  // namespace scan
