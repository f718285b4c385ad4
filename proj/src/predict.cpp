#include "scan/predict.hpp"

#include "scan/error.hpp"
#include "scan/mathutil.hpp"

namespace scan {

Predictions predict(const ClusterHead& head, const EmbeddingDataset& ds, std::uint32_t view) {
    if (head.d != ds.d) throw ValidationError("predict: head dimension != dataset dimension");
    if (view >= ds.v) throw ValidationError("predict: view out of range");

    Predictions out;
    out.n = ds.n;
    out.c = head.c;
    out.probs.resize(std::size_t(ds.n) * head.c);
    out.assign.resize(ds.n);
    out.pmax.resize(ds.n);

    std::vector<double> logits(head.c);
    std::vector<double> hidden_buf;
    for (std::uint32_t i = 0; i < ds.n; ++i) {
        std::span<double> row(out.probs.data() + std::size_t(i) * head.c, head.c);
        head.forward(ds.view(i, view), logits, row,
                     head.kind == HeadKind::mlp ? &hidden_buf : nullptr);
        std::uint32_t best = 0;
        for (std::uint32_t k = 1; k < head.c; ++k)
            if (row[k] > row[best]) best = k;
        out.assign[i] = best;
        out.pmax[i] = row[best];
    }
    return out;
}

std::vector<double> marginal_distribution(const Predictions& p) {
    if (p.n == 0) throw ValidationError("marginal_distribution: empty predictions");
    std::vector<double> m(p.c, 0.0);
    for (std::uint32_t i = 0; i < p.n; ++i) {
        const double* row = p.row(i);
        for (std::uint32_t k = 0; k < p.c; ++k) m[k] += row[k];
    }
    for (auto& x : m) x /= p.n;
    return m;
}

double marginal_entropy(const Predictions& p) {
    auto m = marginal_distribution(p);
    return entropy(m);
}

double confident_fraction(const Predictions& p, double threshold) {
    if (p.n == 0) return 0.0;
    std::uint32_t hits = 0;
    for (double x : p.pmax)
        if (x > threshold) ++hits;
    return double(hits) / p.n;
}

}  // namespace scan
