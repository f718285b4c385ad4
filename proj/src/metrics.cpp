#include "scan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {

std::vector<std::uint32_t> hungarian(std::span<const double> cost, std::uint32_t n) {
    if (n == 0) throw ValidationError("hungarian: empty matrix");
    if (cost.size() != std::size_t(n) * n)
        throw ValidationError("hungarian: cost size != n*n");
    for (double x : cost)
        if (!std::isfinite(x)) throw ValidationError("hungarian: non-finite cost entry");

    // Shortest augmenting paths with row/column potentials, 1-indexed with a
    // virtual column 0 holding the row currently being inserted.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::uint32_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);

    auto a = [&](std::uint32_t i, std::uint32_t j) {
        return cost[std::size_t(i - 1) * n + (j - 1)];
    };

    for (std::uint32_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::uint32_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), char(0));
        do {
            used[j0] = 1;
            std::uint32_t i0 = p[j0], j1 = 0;
            double delta = inf;
            for (std::uint32_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::uint32_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::uint32_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::uint32_t> row_to_col(n);
    for (std::uint32_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

std::vector<std::uint32_t> hungarian_rect(std::span<const double> cost, std::uint32_t rows,
                                          std::uint32_t cols) {
    if (rows == 0 || cols == 0) throw ValidationError("hungarian_rect: empty matrix");
    if (cost.size() != std::size_t(rows) * cols)
        throw ValidationError("hungarian_rect: cost size != rows*cols");
    std::uint32_t n = std::max(rows, cols);
    std::vector<double> square(std::size_t(n) * n, 0.0);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c)
            square[std::size_t(r) * n + c] = cost[std::size_t(r) * cols + c];
    auto full = hungarian(square, n);
    std::vector<std::uint32_t> out(rows);
    for (std::uint32_t r = 0; r < rows; ++r) out[r] = full[r] < cols ? full[r] : kNoMatch;
    return out;
}

namespace {

struct Contingency {
    std::uint32_t c = 0;                  // distinct values in a (max+1)
    std::uint32_t l = 0;                  // distinct values in b (max+1)
    std::vector<std::uint64_t> counts;    // c x l
    std::vector<std::uint64_t> row_sums;  // per a-value
    std::vector<std::uint64_t> col_sums;  // per b-value
    std::uint64_t n = 0;

    std::uint64_t at(std::uint32_t i, std::uint32_t j) const {
        return counts[std::size_t(i) * l + j];
    }
};

Contingency contingency(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b,
                        std::uint32_t c_hint = 0, std::uint32_t l_hint = 0) {
    if (a.size() != b.size())
        throw ValidationError("contingency: label arrays differ in length");
    if (a.empty()) throw ValidationError("contingency: empty labels");
    Contingency t;
    t.n = a.size();
    t.c = c_hint;
    t.l = l_hint;
    for (auto x : a) t.c = std::max(t.c, x + 1);
    for (auto x : b) t.l = std::max(t.l, x + 1);
    t.counts.assign(std::size_t(t.c) * t.l, 0);
    t.row_sums.assign(t.c, 0);
    t.col_sums.assign(t.l, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++t.counts[std::size_t(a[i]) * t.l + b[i]];
        ++t.row_sums[a[i]];
        ++t.col_sums[b[i]];
    }
    return t;
}

/// True when the nonzero pattern is a partial permutation matrix, i.e. the
/// two labelings induce the same partition up to renaming.
bool same_partition(const Contingency& t) {
    for (std::uint32_t i = 0; i < t.c; ++i) {
        std::uint32_t nz = 0;
        for (std::uint32_t j = 0; j < t.l; ++j)
            if (t.at(i, j) != 0) ++nz;
        if (nz > 1) return false;
    }
    for (std::uint32_t j = 0; j < t.l; ++j) {
        std::uint32_t nz = 0;
        for (std::uint32_t i = 0; i < t.c; ++i)
            if (t.at(i, j) != 0) ++nz;
        if (nz > 1) return false;
    }
    return true;
}

double entropy_of(std::span<const std::uint64_t> sums, std::uint64_t n) {
    double h = 0.0;
    for (auto s : sums) {
        if (s == 0) continue;
        double p = double(s) / double(n);
        h -= p * std::log(p);
    }
    return h;
}

double pairs2(std::uint64_t m) { return 0.5 * double(m) * double(m - 1); }

}  // namespace

AccuracyResult accuracy(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                        AccMode mode, std::uint32_t c_hint, std::uint32_t l_hint) {
    auto t = contingency(pred, truth, c_hint, l_hint);
    AccuracyResult out;
    out.mapping.resize(t.c);
    if (mode == AccMode::one_to_one) {
        if (t.c != t.l)
            throw ValidationError("one_to_one accuracy needs equal cluster and class counts (" +
                                  std::to_string(t.c) + " vs " + std::to_string(t.l) +
                                  "); use many_to_one");
        std::vector<double> cost(std::size_t(t.c) * t.l);
        for (std::uint32_t i = 0; i < t.c; ++i)
            for (std::uint32_t j = 0; j < t.l; ++j)
                cost[std::size_t(i) * t.l + j] = -double(t.at(i, j));
        out.mapping = hungarian(cost, t.c);
        std::uint64_t matched = 0;
        for (std::uint32_t i = 0; i < t.c; ++i) matched += t.at(i, out.mapping[i]);
        out.acc = double(matched) / double(t.n);
    } else {
        std::uint64_t matched = 0;
        for (std::uint32_t i = 0; i < t.c; ++i) {
            std::uint32_t best = 0;
            for (std::uint32_t j = 1; j < t.l; ++j)
                if (t.at(i, j) > t.at(i, best)) best = j;
            out.mapping[i] = best;
            matched += t.at(i, best);
        }
        out.acc = double(matched) / double(t.n);
    }
    return out;
}

double nmi(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    auto t = contingency(a, b);
    if (t.n < 2) throw ValidationError("nmi: need at least 2 samples");
    if (same_partition(t)) return 1.0;
    double ha = entropy_of(t.row_sums, t.n);
    double hb = entropy_of(t.col_sums, t.n);
    if (ha == 0.0 || hb == 0.0) return 0.0;
    double mi = 0.0;
    for (std::uint32_t i = 0; i < t.c; ++i) {
        for (std::uint32_t j = 0; j < t.l; ++j) {
            std::uint64_t nij = t.at(i, j);
            if (nij == 0) continue;
            double pij = double(nij) / double(t.n);
            mi += pij * std::log(double(t.n) * double(nij) /
                                 (double(t.row_sums[i]) * double(t.col_sums[j])));
        }
    }
    double val = mi / std::sqrt(ha * hb);
    return std::clamp(val, 0.0, 1.0);
}

double ari(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    auto t = contingency(a, b);
    if (t.n < 2) throw ValidationError("ari: need at least 2 samples");
    double index = 0.0;
    for (auto nij : t.counts) index += pairs2(nij);
    double sa = 0.0, sb = 0.0;
    for (auto s : t.row_sums) sa += pairs2(s);
    for (auto s : t.col_sums) sb += pairs2(s);
    double total = pairs2(t.n);
    double expected = sa * sb / total;
    double maximum = 0.5 * (sa + sb);
    double tol = 1e-9 * std::max(1.0, maximum);
    if (std::abs(maximum - expected) <= tol)
        return std::abs(index - expected) <= tol ? 1.0 : 0.0;
    return (index - expected) / (maximum - expected);
}

ConfusionMatrix confusion_matrix(std::span<const std::uint32_t> pred,
                                 std::span<const std::uint32_t> truth,
                                 std::span<const std::uint32_t> mapping) {
    auto t = contingency(pred, truth);
    if (mapping.size() < t.c)
        throw ValidationError("confusion_matrix: mapping shorter than cluster count");
    std::uint32_t l = t.l;
    for (auto m : mapping) l = std::max(l, m + 1);

    ConfusionMatrix cm;
    cm.l = l;
    cm.clusters.resize(mapping.size());
    std::iota(cm.clusters.begin(), cm.clusters.end(), 0u);
    std::stable_sort(cm.clusters.begin(), cm.clusters.end(),
                     [&](std::uint32_t x, std::uint32_t y) { return mapping[x] < mapping[y]; });
    cm.counts.assign(cm.clusters.size() * std::size_t(l), 0);
    for (std::size_t r = 0; r < cm.clusters.size(); ++r) {
        std::uint32_t cluster = cm.clusters[r];
        if (cluster >= t.c) continue;  // mapped but never predicted
        for (std::uint32_t j = 0; j < t.l; ++j)
            cm.counts[r * l + j] = t.at(cluster, j);
    }
    return cm;
}

std::vector<std::optional<std::uint32_t>> prototypes(const ClusterHead& head,
                                                     const EmbeddingDataset& ds,
                                                     std::uint32_t per_cluster) {
    if (per_cluster == 0) throw ValidationError("prototypes: per_cluster must be positive");
    Predictions pr = predict(head, ds, 0);

    std::vector<std::vector<std::uint32_t>> members(head.c);
    for (std::uint32_t i = 0; i < ds.n; ++i) members[pr.assign[i]].push_back(i);

    std::vector<std::optional<std::uint32_t>> out(head.c);
    std::vector<double> mean(ds.d);
    for (std::uint32_t k = 0; k < head.c; ++k) {
        auto& ids = members[k];
        if (ids.empty()) continue;
        std::stable_sort(ids.begin(), ids.end(), [&](std::uint32_t x, std::uint32_t y) {
            return pr.pmax[x] > pr.pmax[y];
        });
        std::size_t take = std::min<std::size_t>(per_cluster, ids.size());

        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t m = 0; m < take; ++m) {
            const float* x = ds.view(ids[m], 0);
            for (std::uint32_t j = 0; j < ds.d; ++j) mean[j] += x[j];
        }
        for (auto& x : mean) x /= double(take);
        double mean_norm = 0.0;
        for (double x : mean) mean_norm += x * x;
        mean_norm = std::sqrt(mean_norm);

        std::uint32_t best = ids[0];
        double best_cos = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < take; ++m) {
            const float* x = ds.view(ids[m], 0);
            double dot = 0.0, norm = 0.0;
            for (std::uint32_t j = 0; j < ds.d; ++j) {
                dot += double(x[j]) * mean[j];
                norm += double(x[j]) * double(x[j]);
            }
            norm = std::sqrt(norm);
            double cos = (norm > 0.0 && mean_norm > 0.0) ? dot / (norm * mean_norm) : 0.0;
            if (cos > best_cos || (cos == best_cos && ids[m] < best)) {
                best_cos = cos;
                best = ids[m];
            }
        }
        out[k] = best;
    }
    return out;
}

std::vector<std::uint32_t> low_confidence(const ClusterHead& head, const EmbeddingDataset& ds,
                                          std::uint32_t count) {
    Predictions pr = predict(head, ds, 0);
    std::vector<std::uint32_t> order(ds.n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t x, std::uint32_t y) { return pr.pmax[x] < pr.pmax[y]; });
    order.resize(std::min<std::size_t>(count, order.size()));
    return order;
}

}  // namespace scan
