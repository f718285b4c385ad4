#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scan/types.hpp"

namespace scan {

// Binary file formats. All fields little-endian regardless of host order.
//
// Dataset (.semb):
//   magic "SCANEMB1" (8 bytes)
//   u32 version = 1
//   u32 n, u32 d, u32 v
//   u8 flags          bit0: labels present, bit1: normalized
//   [u32 l, n x u32 labels]          when bit0 set
//   n*v*d x f32 features             sample-major, view-major, dim-minor
//
// Neighbor index (.sknn):
//   magic "SCANKNN1" (8 bytes)
//   u32 version = 1
//   u32 n, u32 k
//   n*k x u32 ids
//   n*k x f32 sims
//   Ids must be < n, except the sentinel 0xFFFFFFFF (dropped entry, written
//   with similarity -inf) which is accepted so filtered indexes round-trip.
//
// Round-trips are bit-exact. Readers reject bad magic, unknown versions,
// truncated payloads, NaN features and out-of-range ids/labels with a
// FormatError carrying the specific reason.

void write_dataset(const EmbeddingDataset& ds, const std::string& path);
EmbeddingDataset read_dataset(const std::string& path);

void write_neighbors(const NeighborIndex& nbrs, const std::string& path);
NeighborIndex read_neighbors(const std::string& path);

/// Synthetic Gaussian-mixture embeddings: c_true centroids on the unit
/// sphere, rejection-sampled until every pairwise distance is at least
/// sep * within_std; each sample is its centroid plus isotropic noise, each
/// view adds per-view jitter, and every vector is L2-normalized.
struct SynthConfig {
    std::uint32_t n = 1000;
    std::uint32_t d = 32;
    std::uint32_t c_true = 10;
    std::uint32_t v = 1;
    double sep = 10.0;          // in units of within_std
    double within_std = 0.02;   // per-coordinate class noise
    double view_jitter_std = 0.01;
    std::optional<std::vector<double>> imbalance;  // per-class proportions, sum 1
    std::uint64_t seed = 1;
};

EmbeddingDataset generate_synthetic(const SynthConfig& cfg);

/// Benchmark presets used throughout the test and report tooling.
/// "separated": well-separated classes, near-perfect neighbor purity.
/// "overlap":   heavy class overlap, noisy neighbors.
/// Both carry pinned seeds so runs are reproducible byte for byte.
SynthConfig preset_config(const std::string& name);

}  // namespace scan
