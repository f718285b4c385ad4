#include "scan/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {
namespace {

constexpr std::uint32_t kBlock = 64;

double pair_score(const EmbeddingDataset& ds, std::uint32_t view, Metric metric,
                  const std::vector<double>& inv_norms, std::uint32_t i, std::uint32_t j) {
    const float* a = ds.view(i, view);
    const float* b = ds.view(j, view);
    if (metric == Metric::cosine) return dot_f32(a, b, ds.d) * inv_norms[i] * inv_norms[j];
    double d2 = 0.0;
    for (std::uint32_t t = 0; t < ds.d; ++t) {
        double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
        d2 += diff * diff;
    }
    return -d2;
}

void mine_rows(const EmbeddingDataset& ds, std::uint32_t k, std::uint32_t view, Metric metric,
               const std::vector<double>& inv_norms, std::uint32_t row_begin,
               std::uint32_t row_end, NeighborIndex& out) {
    const std::uint32_t n = ds.n;
    std::vector<std::pair<double, std::uint32_t>> scored(n > 0 ? n - 1 : 0);
    for (std::uint32_t block = row_begin; block < row_end; block += kBlock) {
        std::uint32_t hi = std::min(block + kBlock, row_end);
        for (std::uint32_t i = block; i < hi; ++i) {
            std::size_t m = 0;
            for (std::uint32_t j = 0; j < n; ++j) {
                if (j == i) continue;
                scored[m++] = {pair_score(ds, view, metric, inv_norms, i, j), j};
            }
            // Highest score first, lower id on ties.
            auto better = [](const std::pair<double, std::uint32_t>& a,
                             const std::pair<double, std::uint32_t>& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            };
            std::partial_sort(scored.begin(), scored.begin() + k, scored.begin() + m, better);
            std::uint32_t* rid = out.ids.data() + static_cast<std::size_t>(i) * k;
            float* rs = out.sims.data() + static_cast<std::size_t>(i) * k;
            for (std::uint32_t t = 0; t < k; ++t) {
                rid[t] = scored[t].second;
                rs[t] = static_cast<float>(scored[t].first);
            }
        }
    }
}

}  // namespace

NeighborIndex mine_neighbors(const EmbeddingDataset& ds, std::uint32_t k, std::uint32_t view,
                             Metric metric, int workers) {
    ds.validate();
    if (view >= ds.v) throw ValidationError("mine_neighbors: view index out of range");
    if (k >= ds.n)
        throw ValidationError("mine_neighbors: k must be < n (" + std::to_string(k) +
                              " >= " + std::to_string(ds.n) + ")");

    NeighborIndex out;
    out.n = ds.n;
    out.k = k;
    out.ids.resize(static_cast<std::size_t>(ds.n) * k);
    out.sims.resize(static_cast<std::size_t>(ds.n) * k);
    if (k == 0) return out;

    std::vector<double> inv_norms(ds.n, 1.0);
    if (metric == Metric::cosine) {
        for (std::uint32_t i = 0; i < ds.n; ++i) {
            double nrm = norm_f32(ds.view(i, view), ds.d);
            inv_norms[i] = nrm > 0.0 ? 1.0 / nrm : 0.0;
        }
    }

    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = std::min<int>(workers, static_cast<int>((ds.n + kBlock - 1) / kBlock));

    if (workers == 1) {
        mine_rows(ds, k, view, metric, inv_norms, 0, ds.n, out);
    } else {
        // Static row partition; each worker writes disjoint rows, so the
        // result does not depend on scheduling.
        std::vector<std::thread> pool;
        std::uint32_t chunk = (ds.n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            std::uint32_t lo = std::min<std::uint32_t>(w * chunk, ds.n);
            std::uint32_t hi = std::min<std::uint32_t>(lo + chunk, ds.n);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] { mine_rows(ds, k, view, metric, inv_norms, lo, hi, out); });
        }
        for (auto& t : pool) t.join();
    }
    return out;
}

PurityReport neighbor_purity(const NeighborIndex& nbrs, const EmbeddingDataset& ds) {
    if (!ds.has_labels()) throw ValidationError("neighbor_purity: dataset has no labels");
    if (nbrs.k < 1) throw ValidationError("neighbor_purity: k must be >= 1");
    if (nbrs.n != ds.n) throw ValidationError("neighbor_purity: n mismatch");

    const auto& labels = *ds.labels;
    PurityReport rep;
    rep.cumulative.resize(nbrs.k, 0.0);
    std::vector<std::uint64_t> match_at_rank(nbrs.k, 0), present_at_rank(nbrs.k, 0);
    for (std::uint32_t i = 0; i < nbrs.n; ++i) {
        const std::uint32_t* rid = nbrs.row_ids(i);
        for (std::uint32_t r = 0; r < nbrs.k; ++r) {
            if (rid[r] == kNoNeighbor) continue;
            ++present_at_rank[r];
            if (labels[rid[r]] == labels[i]) ++match_at_rank[r];
        }
    }
    std::uint64_t match = 0, present = 0;
    for (std::uint32_t r = 0; r < nbrs.k; ++r) {
        match += match_at_rank[r];
        present += present_at_rank[r];
        rep.cumulative[r] = present > 0 ? static_cast<double>(match) / present : 0.0;
    }
    rep.overall = present > 0 ? static_cast<double>(match) / present : 0.0;
    return rep;
}

NeighborIndex remove_false_positives(const NeighborIndex& nbrs, const EmbeddingDataset& ds) {
    if (!ds.has_labels()) throw ValidationError("remove_false_positives: dataset has no labels");
    if (nbrs.n != ds.n) throw ValidationError("remove_false_positives: n mismatch");

    const auto& labels = *ds.labels;
    NeighborIndex out;
    out.n = nbrs.n;
    out.k = nbrs.k;
    out.ids.assign(nbrs.ids.size(), kNoNeighbor);
    out.sims.assign(nbrs.sims.size(), -std::numeric_limits<float>::infinity());
    for (std::uint32_t i = 0; i < nbrs.n; ++i) {
        const std::uint32_t* rid = nbrs.row_ids(i);
        const float* rs = nbrs.row_sims(i);
        std::uint32_t* oid = out.ids.data() + static_cast<std::size_t>(i) * out.k;
        float* os = out.sims.data() + static_cast<std::size_t>(i) * out.k;
        std::uint32_t m = 0;
        for (std::uint32_t r = 0; r < nbrs.k; ++r) {
            if (rid[r] == kNoNeighbor) continue;
            if (labels[rid[r]] == labels[i]) {
                oid[m] = rid[r];
                os[m] = rs[r];
                ++m;
            }
        }
    }
    return out;
}

}  // namespace scan
