#include "scan/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scan/error.hpp"
#include "scan/rng.hpp"

namespace scan {

namespace {

double dist2(const double* a, const double* b, std::uint32_t d) {
    double s = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) {
        double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace

KmeansResult kmeans(const EmbeddingDataset& ds, const KmeansConfig& cfg, std::uint32_t view) {
    if (cfg.clusters == 0) throw ValidationError("kmeans: clusters must be positive");
    if (cfg.clusters > ds.n)
        throw ValidationError("kmeans: more clusters than samples (" +
                              std::to_string(cfg.clusters) + " > " + std::to_string(ds.n) + ")");
    if (view >= ds.v) throw ValidationError("kmeans: view out of range");
    if (cfg.max_iters == 0) throw ValidationError("kmeans: max_iters must be positive");
    if (!(cfg.tol >= 0.0)) throw ValidationError("kmeans: tol must be >= 0");

    const std::uint32_t n = ds.n, d = ds.d, c = cfg.clusters;
    std::vector<double> x(std::size_t(n) * d);
    for (std::uint32_t i = 0; i < n; ++i) {
        const float* row = ds.view(i, view);
        for (std::uint32_t j = 0; j < d; ++j) x[std::size_t(i) * d + j] = row[j];
    }
    auto point = [&](std::uint32_t i) { return x.data() + std::size_t(i) * d; };

    Rng rng(cfg.seed);
    KmeansResult res;
    res.centroids.assign(std::size_t(c) * d, 0.0);
    auto centroid = [&](std::uint32_t k) { return res.centroids.data() + std::size_t(k) * d; };

    if (cfg.init == KmeansConfig::Init::random) {
        std::vector<std::uint32_t> ids(n);
        std::iota(ids.begin(), ids.end(), 0u);
        for (std::uint32_t k = 0; k < c; ++k) {
            std::size_t j = k + rng.next_below(n - k);
            std::swap(ids[k], ids[j]);
            std::copy(point(ids[k]), point(ids[k]) + d, centroid(k));
        }
    } else {
        std::uint32_t first = static_cast<std::uint32_t>(rng.next_below(n));
        std::copy(point(first), point(first) + d, centroid(0));
        std::vector<double> best_d2(n);
        for (std::uint32_t i = 0; i < n; ++i) best_d2[i] = dist2(point(i), centroid(0), d);
        for (std::uint32_t k = 1; k < c; ++k) {
            double total = std::accumulate(best_d2.begin(), best_d2.end(), 0.0);
            std::uint32_t pick;
            if (total > 0.0) {
                double r = rng.next_double() * total;
                double run = 0.0;
                pick = n - 1;
                for (std::uint32_t i = 0; i < n; ++i) {
                    run += best_d2[i];
                    if (run > r) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<std::uint32_t>(rng.next_below(n));
            }
            std::copy(point(pick), point(pick) + d, centroid(k));
            for (std::uint32_t i = 0; i < n; ++i)
                best_d2[i] = std::min(best_d2[i], dist2(point(i), centroid(k), d));
        }
    }

    res.assignments.assign(n, 0);
    std::vector<std::uint64_t> counts(c);
    std::vector<double> next(std::size_t(c) * d);
    std::vector<double> assigned_d2(n);
    double prev_inertia = std::numeric_limits<double>::infinity();

    for (std::uint32_t iter = 0; iter < cfg.max_iters; ++iter) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            double best_d = dist2(point(i), centroid(0), d);
            for (std::uint32_t k = 1; k < c; ++k) {
                double dd = dist2(point(i), centroid(k), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = k;
                }
            }
            res.assignments[i] = best;
            assigned_d2[i] = best_d;
            ++counts[best];
        }

        // Any empty cluster adopts the globally worst-fit point; that point's
        // distance drops to zero, so inertia can only fall.
        for (std::uint32_t k = 0; k < c; ++k) {
            if (counts[k] != 0) continue;
            std::uint32_t far = 0;
            for (std::uint32_t i = 1; i < n; ++i)
                if (assigned_d2[i] > assigned_d2[far]) far = i;
            --counts[res.assignments[far]];
            res.assignments[far] = k;
            ++counts[k];
            std::copy(point(far), point(far) + d, centroid(k));
            assigned_d2[far] = 0.0;
        }

        double inertia = std::accumulate(assigned_d2.begin(), assigned_d2.end(), 0.0);
        if (inertia > prev_inertia * (1.0 + 1e-12) + 1e-12)
            throw TrainError("kmeans: inertia increased between iterations");
        res.inertia_trace.push_back(inertia);
        res.iters = iter + 1;

        std::fill(next.begin(), next.end(), 0.0);
        for (std::uint32_t i = 0; i < n; ++i) {
            double* t = next.data() + std::size_t(res.assignments[i]) * d;
            const double* p = point(i);
            for (std::uint32_t j = 0; j < d; ++j) t[j] += p[j];
        }
        double shift2 = 0.0;
        for (std::uint32_t k = 0; k < c; ++k) {
            double* t = next.data() + std::size_t(k) * d;
            for (std::uint32_t j = 0; j < d; ++j) t[j] /= double(counts[k]);
            shift2 = std::max(shift2, dist2(t, centroid(k), d));
        }
        res.centroids.swap(next);
        prev_inertia = inertia;
        if (std::sqrt(shift2) < cfg.tol) break;
    }

    // Reported inertia pairs the last assignments with the final (mean)
    // centroids; the assignment phase already guaranteed no empty clusters.
    double inertia = 0.0;
    for (std::uint32_t i = 0; i < n; ++i)
        inertia += dist2(point(i), centroid(res.assignments[i]), d);
    res.inertia = inertia;
    return res;
}

}  // namespace scan
