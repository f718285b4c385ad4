#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "scan/error.hpp"
#include "scan/io.hpp"
#include "scan/types.hpp"

using namespace scan;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "scan_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

std::string golden(const std::string& name) {
    return std::string(SCAN_TEST_DATA_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("feature layout is sample-major, view-major, dim-minor") {
    auto ds = oracle::make_ds(2, 3, 2,
                              {0, 1, 2, 10, 11, 12,     // sample 0: view 0, view 1
                               20, 21, 22, 30, 31, 32});  // sample 1
    CHECK(ds.view(0, 0)[0] == 0.0f);
    CHECK(ds.view(0, 1)[2] == 12.0f);
    CHECK(ds.view(1, 0)[1] == 21.0f);
    CHECK(ds.view(1, 1)[0] == 30.0f);
    ds.view_mut(1, 1)[0] = 99.0f;
    CHECK(ds.features[9] == 99.0f);
}

TEST_CASE("dataset validation rejects broken invariants") {
    auto good = oracle::make_ds(2, 2, 1, {1, 0, 0, 1}, std::vector<std::uint32_t>{0, 1}, 2, true);
    CHECK_NOTHROW(good.validate());

    auto nonfinite = good;
    nonfinite.features[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(nonfinite.validate(), ValidationError);

    auto denorm = good;
    denorm.features[0] = 2.0f;
    CHECK_THROWS_AS(denorm.validate(), ValidationError);
    denorm.normalized = false;
    CHECK_NOTHROW(denorm.validate());

    auto bad_label = good;
    (*bad_label.labels)[1] = 2;
    CHECK_THROWS_AS(bad_label.validate(), ValidationError);

    auto empty_class = good;
    empty_class.l = 3;
    CHECK_THROWS_AS(empty_class.validate(), ValidationError);

    auto wrong_size = good;
    wrong_size.features.pop_back();
    CHECK_THROWS_AS(wrong_size.validate(), ValidationError);

    EmbeddingDataset zero;
    CHECK_THROWS_AS(zero.validate(), ValidationError);
}

TEST_CASE("neighbor rows expose their non-sentinel length") {
    NeighborIndex nbrs;
    nbrs.n = 2;
    nbrs.k = 3;
    nbrs.ids = {1, kNoNeighbor, kNoNeighbor, 0, 1, kNoNeighbor};
    nbrs.sims = {0.5f, -std::numeric_limits<float>::infinity(), -std::numeric_limits<float>::infinity(),
                 0.5f, 0.25f, -std::numeric_limits<float>::infinity()};
    // Row 1 contains its own id to exercise validate below; row_size first.
    CHECK(nbrs.row_size(0) == 1);
    CHECK(nbrs.row_size(1) == 2);
    CHECK_THROWS_AS(nbrs.validate(), ValidationError);  // row 1 contains itself

    nbrs.ids[4] = 0;  // duplicate of ids[3]
    CHECK_THROWS_AS(nbrs.validate(), ValidationError);

    nbrs.ids = {1, kNoNeighbor, kNoNeighbor, 0, kNoNeighbor, kNoNeighbor};
    CHECK_NOTHROW(nbrs.validate());

    auto sentinel_mid = nbrs;
    sentinel_mid.ids = {kNoNeighbor, 1, kNoNeighbor, 0, kNoNeighbor, kNoNeighbor};
    CHECK_THROWS_AS(sentinel_mid.validate(), ValidationError);

    auto unsorted = nbrs;
    unsorted.ids = {1, 0, kNoNeighbor, 0, kNoNeighbor, kNoNeighbor};
    unsorted.sims = {0.1f, 0.9f, 0.0f, 0.5f, 0.0f, 0.0f};
    CHECK_THROWS_AS(unsorted.validate(), ValidationError);
}

TEST_CASE("dataset files round-trip bit-exactly") {
    auto ds = oracle::random_ds(17, 5, 3, 404, 4);
    ds.normalized = false;
    auto p = tmp_path("roundtrip.semb");
    write_dataset(ds, p.string());
    auto back = read_dataset(p.string());
    CHECK(back.n == ds.n);
    CHECK(back.d == ds.d);
    CHECK(back.v == ds.v);
    CHECK(back.normalized == ds.normalized);
    CHECK(back.l == ds.l);
    REQUIRE(back.labels.has_value());
    CHECK(*back.labels == *ds.labels);
    REQUIRE(back.features.size() == ds.features.size());
    CHECK(std::memcmp(back.features.data(), ds.features.data(),
                      ds.features.size() * sizeof(float)) == 0);

    // A second write of the same content produces identical bytes.
    auto p2 = tmp_path("roundtrip2.semb");
    write_dataset(back, p2.string());
    CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("neighbor files round-trip bit-exactly, sentinels included") {
    NeighborIndex nbrs;
    nbrs.n = 3;
    nbrs.k = 2;
    nbrs.ids = {1, 2, 0, kNoNeighbor, 0, 1};
    nbrs.sims = {0.5f, 0.25f, 0.5f, -std::numeric_limits<float>::infinity(), 0.25f, 0.125f};
    auto p = tmp_path("roundtrip.sknn");
    write_neighbors(nbrs, p.string());
    auto back = read_neighbors(p.string());
    CHECK(back.n == nbrs.n);
    CHECK(back.k == nbrs.k);
    CHECK(back.ids == nbrs.ids);
    CHECK(std::memcmp(back.sims.data(), nbrs.sims.data(), nbrs.sims.size() * sizeof(float)) == 0);
    CHECK(back.row_size(1) == 1);
}

TEST_CASE("a two-sample unlabeled dataset file is exactly 49 bytes") {
    // 8 magic + 4*4 header + 1 flags + 2*1*3*4 features.
    auto ds = oracle::make_ds(2, 3, 1, {0.25f, -1.5f, 3.0f, 0.5f, 2.0f, -0.125f});
    auto p = tmp_path("tiny49.semb");
    write_dataset(ds, p.string());
    CHECK(std::filesystem::file_size(p) == 49);
}

TEST_CASE("an empty neighbor index file is exactly 20 bytes and valid") {
    NeighborIndex nbrs;
    nbrs.n = 1;
    nbrs.k = 0;
    auto p = tmp_path("empty.sknn");
    write_neighbors(nbrs, p.string());
    CHECK(std::filesystem::file_size(p) == 20);
    auto back = read_neighbors(p.string());
    CHECK(back.n == 1);
    CHECK(back.k == 0);
}

TEST_CASE("golden dataset files parse and re-serialize byte-identically") {
    // tiny_nolabel.semb: written by an independent serializer from the
    // documented layout. n=2 d=3 v=1, no labels, not normalized.
    auto ds = read_dataset(golden("tiny_nolabel.semb"));
    CHECK(ds.n == 2);
    CHECK(ds.d == 3);
    CHECK(ds.v == 1);
    CHECK(!ds.has_labels());
    CHECK(!ds.normalized);
    const std::vector<float> want = {0.25f, -1.5f, 3.0f, 0.5f, 2.0f, -0.125f};
    CHECK(ds.features == want);
    auto p = tmp_path("golden_nolabel.semb");
    write_dataset(ds, p.string());
    CHECK(slurp(p) == slurp(golden("tiny_nolabel.semb")));

    // tiny_labeled.semb: n=4 d=2 v=2, labels 0 1 0 1 over two classes.
    auto lds = read_dataset(golden("tiny_labeled.semb"));
    CHECK(lds.n == 4);
    CHECK(lds.d == 2);
    CHECK(lds.v == 2);
    CHECK(lds.l == 2);
    REQUIRE(lds.has_labels());
    CHECK(*lds.labels == std::vector<std::uint32_t>{0, 1, 0, 1});
    CHECK(lds.view(0, 0)[0] == 1.0f);
    CHECK(lds.view(0, 1)[0] == 0.875f);
    CHECK(lds.view(3, 0)[1] == -2.0f);
    CHECK(lds.view(3, 1)[1] == -1.5f);
    auto lp = tmp_path("golden_labeled.semb");
    write_dataset(lds, lp.string());
    CHECK(slurp(lp) == slurp(golden("tiny_labeled.semb")));
}

TEST_CASE("golden neighbor files parse and re-serialize byte-identically") {
    CHECK(std::filesystem::file_size(golden("empty_k0.sknn")) == 20);
    auto empty = read_neighbors(golden("empty_k0.sknn"));
    CHECK(empty.n == 1);
    CHECK(empty.k == 0);
    auto ep = tmp_path("golden_empty.sknn");
    write_neighbors(empty, ep.string());
    CHECK(slurp(ep) == slurp(golden("empty_k0.sknn")));

    auto nbrs = read_neighbors(golden("tiny.sknn"));
    CHECK(nbrs.n == 3);
    CHECK(nbrs.k == 2);
    CHECK(nbrs.ids == std::vector<std::uint32_t>{1, 2, 0, 2, 0, 1});
    CHECK(nbrs.sims == std::vector<float>{0.5f, 0.25f, 0.5f, 0.125f, 0.25f, 0.125f});
    auto np = tmp_path("golden_tiny.sknn");
    write_neighbors(nbrs, np.string());
    CHECK(slurp(np) == slurp(golden("tiny.sknn")));

    // Sentinel entries (dropped neighbors) survive the round trip.
    auto sent = read_neighbors(golden("sentinel.sknn"));
    CHECK(sent.n == 2);
    CHECK(sent.k == 2);
    CHECK(sent.row_size(0) == 1);
    CHECK(sent.row_ids(0)[0] == 1);
    CHECK(sent.row_ids(0)[1] == kNoNeighbor);
    CHECK(sent.row_sims(0)[1] == -std::numeric_limits<float>::infinity());
    auto sp = tmp_path("golden_sentinel.sknn");
    write_neighbors(sent, sp.string());
    CHECK(slurp(sp) == slurp(golden("sentinel.sknn")));
}

namespace {

FormatError::Reason read_ds_reason(const std::filesystem::path& p) {
    try {
        (void)read_dataset(p.string());
    } catch (const FormatError& e) {
        return e.reason();
    }
    FAIL("expected a FormatError");
    return FormatError::Reason::bad_magic;
}

FormatError::Reason read_nbrs_reason(const std::filesystem::path& p) {
    try {
        (void)read_neighbors(p.string());
    } catch (const FormatError& e) {
        return e.reason();
    }
    FAIL("expected a FormatError");
    return FormatError::Reason::bad_magic;
}

}  // namespace

TEST_CASE("readers reject malformed dataset files with the specific reason") {
    std::string good = slurp(golden("tiny_labeled.semb"));
    auto p = tmp_path("corrupt.semb");

    spit(p, "");
    CHECK(read_ds_reason(p) == FormatError::Reason::bad_magic);

    spit(p, "NOTMAGIC" + good.substr(8));
    CHECK(read_ds_reason(p) == FormatError::Reason::bad_magic);

    std::string v2 = good;
    v2[8] = 2;  // version u32 low byte
    spit(p, v2);
    CHECK(read_ds_reason(p) == FormatError::Reason::bad_version);

    spit(p, good.substr(0, good.size() - 2));
    CHECK(read_ds_reason(p) == FormatError::Reason::truncated);

    spit(p, good + "x");
    CHECK(read_ds_reason(p) == FormatError::Reason::bad_payload);

    std::string nan = good;
    // Last feature f32 -> quiet NaN (little-endian 0x7FC00000).
    nan[nan.size() - 4] = '\x00';
    nan[nan.size() - 3] = '\x00';
    nan[nan.size() - 2] = '\xC0';
    nan[nan.size() - 1] = '\x7F';
    spit(p, nan);
    CHECK(read_ds_reason(p) == FormatError::Reason::bad_payload);

    std::string badlabel = good;
    badlabel[29] = 9;  // first label (offset 8+4+12+1+4), class count is 2
    spit(p, badlabel);
    CHECK(read_ds_reason(p) == FormatError::Reason::out_of_range);

    CHECK_THROWS_AS((void)read_dataset(tmp_path("missing.semb").string()), IoError);
}

TEST_CASE("readers reject malformed neighbor files with the specific reason") {
    std::string good = slurp(golden("tiny.sknn"));
    auto p = tmp_path("corrupt.sknn");

    spit(p, "SCANEMB1" + good.substr(8));  // wrong family
    CHECK(read_nbrs_reason(p) == FormatError::Reason::bad_magic);

    std::string v9 = good;
    v9[8] = 9;
    spit(p, v9);
    CHECK(read_nbrs_reason(p) == FormatError::Reason::bad_version);

    spit(p, good.substr(0, good.size() - 1));
    CHECK(read_nbrs_reason(p) == FormatError::Reason::truncated);

    spit(p, good + "zz");
    CHECK(read_nbrs_reason(p) == FormatError::Reason::bad_payload);

    std::string badid = good;
    badid[20] = 7;  // first id (offset 8+4+4+4), n is 3 and 7 is not the sentinel
    spit(p, badid);
    CHECK(read_nbrs_reason(p) == FormatError::Reason::out_of_range);
}

TEST_CASE("writing to an unwritable path raises an io error") {
    auto ds = oracle::make_ds(1, 1, 1, {1.0f});
    CHECK_THROWS_AS(write_dataset(ds, "/nonexistent_dir_zz/x.semb"), IoError);
    NeighborIndex nbrs;
    nbrs.n = 1;
    nbrs.k = 0;
    CHECK_THROWS_AS(write_neighbors(nbrs, "/nonexistent_dir_zz/x.sknn"), IoError);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
    SynthConfig cfg;
    cfg.n = 60;
    cfg.d = 8;
    cfg.c_true = 4;
    cfg.v = 2;
    cfg.seed = 11;
    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    CHECK(a.features == b.features);
    CHECK(*a.labels == *b.labels);

    cfg.seed = 12;
    auto c = generate_synthetic(cfg);
    CHECK(a.features != c.features);
}

TEST_CASE("synthetic datasets are normalized, labeled and grouped") {
    SynthConfig cfg;
    cfg.n = 45;
    cfg.d = 6;
    cfg.c_true = 4;
    cfg.v = 3;
    cfg.seed = 21;
    auto ds = generate_synthetic(cfg);
    CHECK(ds.n == 45);
    CHECK(ds.v == 3);
    CHECK(ds.l == 4);
    CHECK(ds.normalized);
    CHECK_NOTHROW(ds.validate());
    // Labels ascend in blocks; counts differ by at most one.
    std::vector<std::uint32_t> counts(4, 0);
    for (std::uint32_t i = 1; i < ds.n; ++i) CHECK((*ds.labels)[i] >= (*ds.labels)[i - 1]);
    for (std::uint32_t y : *ds.labels) ++counts[y];
    for (std::uint32_t c : counts) CHECK(std::abs(static_cast<int>(c) - 11) <= 1);
    // Views of one sample differ (jitter) but share the class direction.
    CHECK(std::memcmp(ds.view(0, 0), ds.view(0, 1), ds.d * sizeof(float)) != 0);
}

TEST_CASE("a single synthetic class labels everything zero") {
    SynthConfig cfg;
    cfg.n = 10;
    cfg.d = 4;
    cfg.c_true = 1;
    cfg.seed = 2;
    auto ds = generate_synthetic(cfg);
    for (std::uint32_t y : *ds.labels) CHECK(y == 0);
}

TEST_CASE("well-separated synthetic classes are recoverable by nearest centroid") {
    auto ds = generate_synthetic(preset_config("separated"));
    // Per-class mean of view 0, then nearest-centroid assignment.
    std::vector<double> cent(static_cast<std::size_t>(ds.l) * ds.d, 0.0);
    std::vector<std::uint32_t> count(ds.l, 0);
    for (std::uint32_t i = 0; i < ds.n; ++i) {
        const float* x = ds.view(i, 0);
        double* m = cent.data() + static_cast<std::size_t>((*ds.labels)[i]) * ds.d;
        for (std::uint32_t t = 0; t < ds.d; ++t) m[t] += x[t];
        ++count[(*ds.labels)[i]];
    }
    for (std::uint32_t c = 0; c < ds.l; ++c)
        for (std::uint32_t t = 0; t < ds.d; ++t)
            cent[static_cast<std::size_t>(c) * ds.d + t] /= count[c];
    std::uint32_t hits = 0;
    for (std::uint32_t i = 0; i < ds.n; ++i) {
        const float* x = ds.view(i, 0);
        std::uint32_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < ds.l; ++c) {
            double d2 = 0.0;
            for (std::uint32_t t = 0; t < ds.d; ++t) {
                double diff = x[t] - cent[static_cast<std::size_t>(c) * ds.d + t];
                d2 += diff * diff;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = c;
            }
        }
        hits += best == (*ds.labels)[i];
    }
    CHECK(static_cast<double>(hits) / ds.n >= 0.999);
}

TEST_CASE("infeasible centroid separation fails loudly") {
    SynthConfig cfg;
    cfg.n = 100;
    cfg.d = 2;
    cfg.c_true = 50;
    cfg.sep = 10.0;
    cfg.within_std = 0.5;  // 50 unit-circle points pairwise 5 apart cannot exist
    cfg.seed = 3;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
}

TEST_CASE("class imbalance proportions control the label counts") {
    SynthConfig cfg;
    cfg.n = 10;
    cfg.d = 4;
    cfg.c_true = 3;
    cfg.seed = 5;
    cfg.imbalance = std::vector<double>{0.5, 0.3, 0.2};
    auto ds = generate_synthetic(cfg);
    std::vector<std::uint32_t> counts(3, 0);
    for (std::uint32_t y : *ds.labels) ++counts[y];
    CHECK(counts == std::vector<std::uint32_t>{5, 3, 2});

    cfg.imbalance = std::vector<double>{0.5, 0.5};
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
    cfg.imbalance = std::vector<double>{0.5, 0.4, 0.2};
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
    cfg.imbalance = std::vector<double>{1.2, -0.4, 0.2};
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
    // A zero-proportion class still gets its floor of one sample.
    cfg.imbalance = std::vector<double>{0.8, 0.2, 0.0};
    auto floored = generate_synthetic(cfg);
    std::vector<std::uint32_t> fc(3, 0);
    for (std::uint32_t y : *floored.labels) ++fc[y];
    CHECK(fc[2] >= 1);
}

TEST_CASE("synthetic parameter validation") {
    SynthConfig cfg;
    cfg.n = 5;
    cfg.c_true = 10;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);  // n < c_true
    cfg = SynthConfig{};
    cfg.sep = 0.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
    cfg = SynthConfig{};
    cfg.within_std = -1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
}

TEST_CASE("benchmark presets carry their pinned parameters") {
    auto sep = preset_config("separated");
    CHECK(sep.n == 5000);
    CHECK(sep.d == 64);
    CHECK(sep.c_true == 10);
    CHECK(sep.v == 3);
    CHECK(sep.sep == 10.0);
    CHECK(sep.within_std == 0.02);
    CHECK(sep.seed == 2001);

    auto ovl = preset_config("overlap");
    CHECK(ovl.n == 2000);
    CHECK(ovl.d == 32);
    CHECK(ovl.c_true == 10);
    CHECK(ovl.seed == 2002);
    CHECK(ovl.within_std > sep.within_std);

    CHECK_THROWS_AS(preset_config("nope"), UsageError);
}
