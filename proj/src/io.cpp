#include "scan/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "scan/error.hpp"
#include "scan/mathutil.hpp"
#include "scan/rng.hpp"

namespace scan {
namespace {

constexpr char kDatasetMagic[8] = {'S', 'C', 'A', 'N', 'E', 'M', 'B', '1'};
constexpr char kNeighborMagic[8] = {'S', 'C', 'A', 'N', 'K', 'N', 'N', '1'};

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }
    void bytes(const void* p, std::size_t len) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
    }
    void u8(std::uint8_t x) { bytes(&x, 1); }
    void u32(std::uint32_t x) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(x >> 8),
                             static_cast<std::uint8_t>(x >> 16), static_cast<std::uint8_t>(x >> 24)};
        bytes(b, 4);
    }
    void f32(float x) { u32(std::bit_cast<std::uint32_t>(x)); }
    void close() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
        out_.close();
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }
    void bytes(void* p, std::size_t len) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
        if (static_cast<std::size_t>(in_.gcount()) != len)
            throw FormatError(FormatError::Reason::truncated, "truncated file");
    }
    std::uint8_t u8() {
        std::uint8_t x;
        bytes(&x, 1);
        return x;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void expect_magic(const char (&magic)[8], const char* what) {
        // A file too short to hold the magic is "not one of ours", not a
        // truncated one of ours.
        char got[8];
        in_.read(got, 8);
        if (static_cast<std::size_t>(in_.gcount()) != 8 || std::memcmp(got, magic, 8) != 0)
            throw FormatError(FormatError::Reason::bad_magic, std::string("bad magic, not a ") + what);
    }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
};

}  // namespace

void write_dataset(const EmbeddingDataset& ds, const std::string& path) {
    ds.validate();
    Writer w(path);
    w.bytes(kDatasetMagic, 8);
    w.u32(1);
    w.u32(ds.n);
    w.u32(ds.d);
    w.u32(ds.v);
    std::uint8_t flags = 0;
    if (ds.labels) flags |= 1;
    if (ds.normalized) flags |= 2;
    w.u8(flags);
    if (ds.labels) {
        w.u32(ds.l);
        for (std::uint32_t y : *ds.labels) w.u32(y);
    }
    for (float f : ds.features) w.f32(f);
    w.close();
}

EmbeddingDataset read_dataset(const std::string& path) {
    Reader r(path);
    r.expect_magic(kDatasetMagic, "dataset file");
    std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(FormatError::Reason::bad_version,
                          "unsupported dataset version " + std::to_string(version));
    EmbeddingDataset ds;
    ds.n = r.u32();
    ds.d = r.u32();
    ds.v = r.u32();
    std::uint8_t flags = r.u8();
    ds.normalized = (flags & 2) != 0;
    if (flags & 1) {
        ds.l = r.u32();
        std::vector<std::uint32_t> labels(ds.n);
        for (auto& y : labels) {
            y = r.u32();
            if (y >= ds.l)
                throw FormatError(FormatError::Reason::out_of_range, "label out of range");
        }
        ds.labels = std::move(labels);
    }
    std::size_t count = static_cast<std::size_t>(ds.n) * ds.v * ds.d;
    ds.features.resize(count);
    for (auto& f : ds.features) {
        f = r.f32();
        if (std::isnan(f))
            throw FormatError(FormatError::Reason::bad_payload, "NaN feature in payload");
    }
    if (!r.at_eof())
        throw FormatError(FormatError::Reason::bad_payload, "trailing bytes after payload");
    ds.validate();
    return ds;
}

void write_neighbors(const NeighborIndex& nbrs, const std::string& path) {
    nbrs.validate();
    Writer w(path);
    w.bytes(kNeighborMagic, 8);
    w.u32(1);
    w.u32(nbrs.n);
    w.u32(nbrs.k);
    for (std::uint32_t id : nbrs.ids) w.u32(id);
    for (float s : nbrs.sims) w.f32(s);
    w.close();
}

NeighborIndex read_neighbors(const std::string& path) {
    Reader r(path);
    r.expect_magic(kNeighborMagic, "neighbor file");
    std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(FormatError::Reason::bad_version,
                          "unsupported neighbor-index version " + std::to_string(version));
    NeighborIndex nbrs;
    nbrs.n = r.u32();
    nbrs.k = r.u32();
    std::size_t count = static_cast<std::size_t>(nbrs.n) * nbrs.k;
    nbrs.ids.resize(count);
    for (auto& id : nbrs.ids) {
        id = r.u32();
        if (id >= nbrs.n && id != kNoNeighbor)
            throw FormatError(FormatError::Reason::out_of_range, "neighbor id out of range");
    }
    nbrs.sims.resize(count);
    for (auto& s : nbrs.sims) s = r.f32();
    if (!r.at_eof())
        throw FormatError(FormatError::Reason::bad_payload, "trailing bytes after payload");
    nbrs.validate();
    return nbrs;
}

EmbeddingDataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n < 1 || cfg.d < 1 || cfg.c_true < 1 || cfg.v < 1)
        throw ValidationError("synth: n, d, c_true, v must all be >= 1");
    if (cfg.n < cfg.c_true) throw ValidationError("synth: n must be >= c_true");
    if (cfg.sep <= 0.0) throw ValidationError("synth: sep must be > 0");
    if (cfg.within_std < 0.0 || cfg.view_jitter_std < 0.0)
        throw ValidationError("synth: noise scales must be >= 0");
    if (cfg.imbalance) {
        if (cfg.imbalance->size() != cfg.c_true)
            throw ValidationError("synth: imbalance vector length != c_true");
        double sum = 0.0;
        for (double p : *cfg.imbalance) {
            if (p < 0.0) throw ValidationError("synth: negative class proportion");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("synth: class proportions must sum to 1");
    }

    Rng rng(cfg.seed);

    // Centroids on the unit sphere. Redraw any centroid closer than the
    // required minimum distance to an earlier one; bail out after a bounded
    // number of attempts so an infeasible sep fails loudly.
    const double min_dist = cfg.sep * cfg.within_std;
    std::vector<std::vector<double>> centroids;
    centroids.reserve(cfg.c_true);
    int attempts = 0;
    const int max_attempts = 100000;
    while (centroids.size() < cfg.c_true) {
        if (++attempts > max_attempts)
            throw ValidationError("synth: could not place centroids with the requested separation");
        std::vector<double> c(cfg.d);
        double nrm2 = 0.0;
        for (auto& x : c) {
            x = rng.next_normal();
            nrm2 += x * x;
        }
        double nrm = std::sqrt(nrm2);
        if (nrm < 1e-12) continue;
        for (auto& x : c) x /= nrm;
        bool ok = true;
        for (const auto& other : centroids) {
            double d2 = 0.0;
            for (std::uint32_t j = 0; j < cfg.d; ++j) d2 += (c[j] - other[j]) * (c[j] - other[j]);
            if (std::sqrt(d2) < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) centroids.push_back(std::move(c));
    }

    // Per-class sample counts: proportional allocation, remainders by largest
    // fractional part, then a floor of one sample per class.
    std::vector<std::uint32_t> counts(cfg.c_true, 0);
    if (cfg.imbalance) {
        std::vector<double> frac(cfg.c_true);
        std::uint32_t assigned = 0;
        for (std::uint32_t c = 0; c < cfg.c_true; ++c) {
            double want = (*cfg.imbalance)[c] * cfg.n;
            counts[c] = static_cast<std::uint32_t>(want);
            frac[c] = want - counts[c];
            assigned += counts[c];
        }
        std::vector<std::uint32_t> order(cfg.c_true);
        for (std::uint32_t c = 0; c < cfg.c_true; ++c) order[c] = c;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return frac[a] > frac[b]; });
        for (std::uint32_t i = 0; assigned < cfg.n; ++i, ++assigned) ++counts[order[i % cfg.c_true]];
        for (std::uint32_t c = 0; c < cfg.c_true; ++c) {
            while (counts[c] == 0) {
                std::uint32_t biggest = 0;
                for (std::uint32_t j = 1; j < cfg.c_true; ++j)
                    if (counts[j] > counts[biggest]) biggest = j;
                --counts[biggest];
                ++counts[c];
            }
        }
    } else {
        for (std::uint32_t c = 0; c < cfg.c_true; ++c)
            counts[c] = cfg.n / cfg.c_true + (c < cfg.n % cfg.c_true ? 1 : 0);
    }

    EmbeddingDataset ds;
    ds.n = cfg.n;
    ds.d = cfg.d;
    ds.v = cfg.v;
    ds.normalized = true;
    ds.l = cfg.c_true;
    ds.features.resize(static_cast<std::size_t>(cfg.n) * cfg.v * cfg.d);
    std::vector<std::uint32_t> labels;
    labels.reserve(cfg.n);

    std::vector<double> base(cfg.d), viewbuf(cfg.d);
    std::uint32_t sample = 0;
    for (std::uint32_t c = 0; c < cfg.c_true; ++c) {
        for (std::uint32_t s = 0; s < counts[c]; ++s, ++sample) {
            labels.push_back(c);
            for (std::uint32_t j = 0; j < cfg.d; ++j)
                base[j] = centroids[c][j] + cfg.within_std * rng.next_normal();
            for (std::uint32_t w = 0; w < cfg.v; ++w) {
                double nrm2 = 0.0;
                for (std::uint32_t j = 0; j < cfg.d; ++j) {
                    viewbuf[j] = base[j] + cfg.view_jitter_std * rng.next_normal();
                    nrm2 += viewbuf[j] * viewbuf[j];
                }
                double nrm = std::sqrt(nrm2);
                if (nrm < 1e-12) nrm = 1.0;
                float* out = ds.view_mut(sample, w);
                for (std::uint32_t j = 0; j < cfg.d; ++j)
                    out[j] = static_cast<float>(viewbuf[j] / nrm);
            }
        }
    }
    ds.labels = std::move(labels);
    ds.validate();
    return ds;
}

SynthConfig preset_config(const std::string& name) {
    SynthConfig cfg;
    if (name == "separated") {
        cfg.n = 5000;
        cfg.d = 64;
        cfg.c_true = 10;
        cfg.v = 3;
        cfg.sep = 10.0;
        cfg.within_std = 0.02;
        cfg.view_jitter_std = 0.01;
        cfg.seed = 2001;
    } else if (name == "overlap") {
        cfg.n = 2000;
        cfg.d = 32;
        cfg.c_true = 10;
        cfg.v = 3;
        cfg.sep = 2.5;
        cfg.within_std = 0.16;
        cfg.view_jitter_std = 0.04;
        cfg.seed = 2002;
    } else {
        throw UsageError("unknown preset '" + name + "' (expected 'separated' or 'overlap')");
    }
    return cfg;
}

}  // namespace scan
