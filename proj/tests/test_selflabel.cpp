#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "scan/error.hpp"
#include "scan/io.hpp"
#include "scan/knn.hpp"
#include "scan/metrics.hpp"
#include "scan/predict.hpp"
#include "scan/selflabel.hpp"
#include "scan/trainer.hpp"

using namespace scan;

namespace {

/// Two linearly separable groups on view 0 (5 of class 0, 3 of class 1) whose
/// strong view is all zeros, so any weight drift during fine-tuning proves a
/// view-0 feature leaked into training.
EmbeddingDataset two_group_ds() {
    std::vector<float> feats;
    for (int i = 0; i < 8; ++i) {
        bool a = i < 5;
        feats.push_back(a ? 3.0f : 0.0f);  // view 0
        feats.push_back(a ? 0.0f : 3.0f);
        feats.push_back(0.0f);  // view 1
        feats.push_back(0.0f);
    }
    return oracle::make_ds(8, 2, 2, std::move(feats),
                           std::vector<std::uint32_t>{0, 0, 0, 0, 0, 1, 1, 1}, 2);
}

ClusterHead confident_head() {
    auto head = ClusterHead::make(2, 2, HeadKind::linear);
    head.params = {2.0, 0.0, 0.0, 2.0, 0.0, 0.0};  // logit gap 6 on view 0
    return head;
}

TrainState make_state(ClusterHead head, std::uint64_t rng_state = 42) {
    TrainState st;
    st.head = std::move(head);
    st.opt = Optimizer::make(OptimizerConfig{}, st.head.param_count());
    st.rng_state = rng_state;
    return st;
}

}  // namespace

TEST_CASE("confidence selection is strict and reads the weak view only") {
    auto ds = two_group_ds();

    // Uniform head: p_max is exactly 0.25 everywhere at C=4.
    auto uniform = ClusterHead::make(4, 2, HeadKind::linear);
    CHECK(select_confident(uniform, ds, 0.99).size() == 0);
    CHECK(select_confident(uniform, ds, 0.26).size() == 0);
    CHECK(select_confident(uniform, ds, 0.25).size() == 0);  // strict >
    CHECK(select_confident(uniform, ds, 0.2499).size() == 8);

    // p_max ~0.995 clears a 0.99 threshold: zero weights, bias [ln 199, 0].
    auto biased = ClusterHead::make(2, 2, HeadKind::linear);
    biased.params = {0.0, 0.0, 0.0, 0.0, std::log(199.0), 0.0};
    auto sel = select_confident(biased, ds, 0.99);
    REQUIRE(sel.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(sel.labels[i] == 0);
        CHECK(sel.confidence[i] == doctest::Approx(0.995).epsilon(1e-9));
    }
    CHECK(select_confident(biased, ds, 0.996).size() == 0);

    // Selection agrees with the weak-view argmax, ids ascending.
    auto head = confident_head();
    auto picked = select_confident(head, ds, 0.99);
    auto pred = predict(head, ds, 0);
    REQUIRE(picked.size() == 8);
    for (std::size_t i = 0; i < picked.size(); ++i) {
        if (i > 0) CHECK(picked.ids[i] > picked.ids[i - 1]);
        CHECK(picked.labels[i] == pred.assign[picked.ids[i]]);
        CHECK(picked.confidence[i] > 0.99);
    }
    // The all-zero strong view would be maximally unconfident; the weak view
    // is what was consulted.
    CHECK(picked.labels == std::vector<std::uint32_t>{0, 0, 0, 0, 0, 1, 1, 1});

    CHECK_THROWS_AS(select_confident(head, ds, 0.0), ValidationError);
    CHECK_THROWS_AS(select_confident(head, ds, 1.0), ValidationError);
}

TEST_CASE("class weights balance the batch and vanish for absent classes") {
    std::vector<std::uint32_t> balanced = {0, 1, 2};
    CHECK(balance_weights(balanced, 3, true) == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(balance_weights(balanced, 3, false) == std::vector<double>{1.0, 1.0, 1.0});

    std::vector<std::uint32_t> skewed = {0, 0, 0, 1};
    auto w = balance_weights(skewed, 2, true);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(balance_weights(skewed, 2, false) == std::vector<double>{1.0, 1.0});

    std::vector<std::uint32_t> partial = {0, 0};
    CHECK(balance_weights(partial, 3, true) == std::vector<double>{1.0, 0.0, 0.0});

    std::vector<std::uint32_t> empty;
    CHECK_THROWS_AS(balance_weights(empty, 2, true), ValidationError);
    std::vector<std::uint32_t> oob = {2};
    CHECK_THROWS_AS(balance_weights(oob, 2, true), ValidationError);
}

TEST_CASE("weighted cross-entropy hits its analytic anchors") {
    // Confidently correct: cost is exactly zero.
    auto sharp = ClusterHead::make(2, 2, HeadKind::linear);
    sharp.params = {1000.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<float> x = {1.0f, 0.0f};
    std::vector<std::uint32_t> y = {0};
    std::vector<double> ones = {1.0, 1.0};
    CHECK(weighted_ce_loss(sharp, x, y, ones, {}) == 0.0);

    // Uniform head: -ln p_y = ln C for every sample, any weights.
    auto uniform = ClusterHead::make(4, 2, HeadKind::linear);
    std::vector<float> xs = {1, 0, 0, 1, 1, 1};
    std::vector<std::uint32_t> ys = {0, 3, 1};
    auto w = balance_weights(ys, 4, true);
    CHECK(weighted_ce_loss(uniform, xs, ys, w, {}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("weighted cross-entropy matches the high-precision reference") {
    Rng rng(71);
    for (int trial = 0; trial < 6; ++trial) {
        bool mlp = trial % 2 == 1;
        auto head = ClusterHead::make(3, 4, mlp ? HeadKind::mlp : HeadKind::linear, 3);
        head.init(rng);
        for (auto& p : head.params) p += rng.next_range(-0.5, 0.5);
        const std::size_t b = 5;
        std::vector<float> feats(b * 4);
        for (auto& f : feats) f = static_cast<float>(rng.next_range(-1.0, 1.0));
        std::vector<std::uint32_t> labels(b);
        for (auto& l : labels) l = static_cast<std::uint32_t>(rng.next_below(3));
        auto weights = balance_weights(labels, 3, trial % 3 != 0);

        double got = weighted_ce_loss(head, feats, labels, weights, {});
        double ref = static_cast<double>(oracle::weighted_ce_ref(head, feats, labels, weights));
        CHECK(got == doctest::Approx(ref).epsilon(1e-12));

        // Scaling every weight leaves the normalized loss unchanged.
        auto scaled = weights;
        for (auto& ww : scaled) ww *= 7.0;
        CHECK(weighted_ce_loss(head, feats, labels, scaled, {}) ==
              doctest::Approx(got).epsilon(1e-12));

        // Duplicating the batch leaves it unchanged too.
        std::vector<float> feats2(feats);
        feats2.insert(feats2.end(), feats.begin(), feats.end());
        std::vector<std::uint32_t> labels2(labels);
        labels2.insert(labels2.end(), labels.begin(), labels.end());
        CHECK(weighted_ce_loss(head, feats2, labels2, weights, {}) ==
              doctest::Approx(got).epsilon(1e-12));
    }
}

TEST_CASE("a balanced batch with balancing on equals the unweighted mean") {
    Rng rng(5);
    auto head = ClusterHead::make(3, 3, HeadKind::linear);
    head.init(rng);
    std::vector<float> feats(6 * 3);
    for (auto& f : feats) f = static_cast<float>(rng.next_range(-1.0, 1.0));
    std::vector<std::uint32_t> labels = {0, 1, 2, 0, 1, 2};
    auto balanced = balance_weights(labels, 3, true);
    auto off = balance_weights(labels, 3, false);
    double a = weighted_ce_loss(head, feats, labels, balanced, {});
    double b = weighted_ce_loss(head, feats, labels, off, {});
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("the cross-entropy gradient matches finite differences") {
    Rng rng(90);
    for (int trial = 0; trial < 6; ++trial) {
        bool mlp = trial % 2 == 1;
        auto head = ClusterHead::make(4, 5, mlp ? HeadKind::mlp : HeadKind::linear, 3);
        head.init(rng);
        for (auto& p : head.params) p += rng.next_range(-0.3, 0.3);
        const std::size_t b = 6;
        std::vector<float> feats(b * 5);
        for (auto& f : feats) f = static_cast<float>(rng.next_range(-1.0, 1.0));
        std::vector<std::uint32_t> labels(b);
        for (auto& l : labels) l = static_cast<std::uint32_t>(rng.next_below(4));
        auto weights = balance_weights(labels, 4, true);

        std::vector<double> grad(head.param_count());
        weighted_ce_loss(head, feats, labels, weights, grad);
        auto f = [&](const std::vector<double>& params) {
            ClusterHead h = head;
            h.params = params;
            return weighted_ce_loss(h, feats, labels, weights, {});
        };
        auto fd = oracle::fd_grad(head.params, f);
        CHECK(oracle::max_rel_err(grad, fd) < 1e-5);
    }
}

TEST_CASE("weighted cross-entropy validates its inputs") {
    auto head = ClusterHead::make(2, 2, HeadKind::linear);
    std::vector<float> x = {1.0f, 0.0f};
    std::vector<std::uint32_t> y = {0};
    std::vector<double> w = {1.0, 1.0};

    std::vector<std::uint32_t> none;
    CHECK_THROWS_AS(weighted_ce_loss(head, x, none, w, {}), ValidationError);
    std::vector<float> short_x = {1.0f};
    CHECK_THROWS_AS(weighted_ce_loss(head, short_x, y, w, {}), ValidationError);
    std::vector<double> short_w = {1.0};
    CHECK_THROWS_AS(weighted_ce_loss(head, x, y, short_w, {}), ValidationError);
    std::vector<std::uint32_t> oob = {2};
    CHECK_THROWS_AS(weighted_ce_loss(head, x, oob, w, {}), ValidationError);
    std::vector<double> grad_wrong(head.param_count() + 1);
    CHECK_THROWS_AS(weighted_ce_loss(head, x, y, w, grad_wrong), ValidationError);
    std::vector<double> zero_w = {0.0, 1.0};
    CHECK_THROWS_AS(weighted_ce_loss(head, x, y, zero_w, {}), ValidationError);
}

TEST_CASE("self-label config validation rejects broken settings") {
    SelfLabelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.threshold = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.plateau_window = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.plateau_growth = -0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.ema_alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.noise_std = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("an empty selection at the start is an error with guidance") {
    auto ds = two_group_ds();
    auto state = make_state(confident_head());  // p_max ~0.9975, below the bar
    SelfLabelConfig cfg;
    cfg.threshold = 0.9999999;
    try {
        self_label_train(ds, std::move(state), cfg);
        FAIL("expected a TrainError");
    } catch (const TrainError& e) {
        CHECK(oracle::msg_contains(e, "lower threshold"));
    }
}

TEST_CASE("fine-tuning never touches the weak view and stops on plateau") {
    auto ds = two_group_ds();
    auto state = make_state(confident_head());

    SelfLabelConfig cfg;
    cfg.threshold = 0.99;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.class_balance = false;  // 5/3 split must push a nonzero bias gradient
    cfg.optimizer.kind = OptimizerConfig::Kind::sgd;
    cfg.optimizer.lr = 0.05;

    auto result = self_label_train(ds, std::move(state), cfg);

    // Strong views are all zero, so weight gradients vanish; any change to W
    // would mean a view-0 row was trained on.
    CHECK(result.state.head.params[0] == 2.0);
    CHECK(result.state.head.params[1] == 0.0);
    CHECK(result.state.head.params[2] == 0.0);
    CHECK(result.state.head.params[3] == 2.0);
    CHECK(result.state.head.params[4] != 0.0);  // biases did train
    CHECK(result.state.head.params[5] != 0.0);

    // All 8 stay confident every epoch: zero growth trips the plateau check
    // the first time it runs.
    CHECK(result.history.plateaued);
    CHECK(result.history.epochs_run == cfg.plateau_window);
    CHECK(result.history.confident_counts ==
          std::vector<std::uint32_t>(cfg.plateau_window + 1, 8));
    CHECK(result.history.ce_loss.size() == cfg.plateau_window);
    REQUIRE(result.history.pseudo_label_accuracy.size() == cfg.plateau_window + 1);
    for (double acc : result.history.pseudo_label_accuracy) CHECK(acc == 1.0);
}

TEST_CASE("fine-tuning starts from the ema shadow when one is present") {
    auto ds = two_group_ds();

    // Confident raw weights, uniform shadow: adopting the shadow must make
    // the very first selection empty.
    auto state = make_state(confident_head());
    state.ema = std::vector<double>(6, 0.0);
    state.ema_alpha = 0.9;
    SelfLabelConfig cfg;
    cfg.threshold = 0.99;
    CHECK_THROWS_AS(self_label_train(ds, std::move(state), cfg), TrainError);

    // Uniform raw weights, confident shadow: the run succeeds, starts from
    // the shadow, and drops it since no new shadow was requested.
    auto flipped = make_state(ClusterHead::make(2, 2, HeadKind::linear));
    flipped.ema = std::vector<double>{2.0, 0.0, 0.0, 2.0, 0.0, 0.0};
    flipped.ema_alpha = 0.9;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.class_balance = false;
    cfg.optimizer.kind = OptimizerConfig::Kind::sgd;
    cfg.optimizer.lr = 0.05;
    auto result = self_label_train(ds, std::move(flipped), cfg);
    CHECK_FALSE(result.state.ema.has_value());
    CHECK(result.state.ema_alpha == 0.0);
    CHECK(result.state.head.params[0] == 2.0);  // adopted shadow, W untouched
    CHECK(result.history.epochs_run == 3);

    // Requesting a fresh shadow produces one that tracks the new weights.
    auto with_ema = make_state(confident_head());
    SelfLabelConfig ecfg = cfg;
    ecfg.ema_alpha = 0.5;
    auto shadowed = self_label_train(ds, std::move(with_ema), ecfg);
    REQUIRE(shadowed.state.ema.has_value());
    CHECK(shadowed.state.ema_alpha == 0.5);
    CHECK(shadowed.state.eval_params() == *shadowed.state.ema);
}

TEST_CASE("single-view data needs noise injection to stand in for strong views") {
    std::vector<float> feats;
    for (int i = 0; i < 8; ++i) {
        bool a = i < 5;
        feats.push_back(a ? 3.0f : 0.0f);
        feats.push_back(a ? 0.0f : 3.0f);
    }
    auto ds = oracle::make_ds(8, 2, 1, std::move(feats),
                              std::vector<std::uint32_t>{0, 0, 0, 0, 0, 1, 1, 1}, 2);

    SelfLabelConfig cfg;
    cfg.threshold = 0.99;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    try {
        self_label_train(ds, make_state(confident_head()), cfg);
        FAIL("expected a TrainError");
    } catch (const TrainError& e) {
        CHECK(oracle::msg_contains(e, "single view"));
    }

    cfg.noise_std = 0.01;
    auto result = self_label_train(ds, make_state(confident_head()), cfg);
    CHECK(result.history.epochs_run >= 1);
    CHECK(result.state.head.params[0] != 2.0);  // jittered view-0 rows did train
}

TEST_CASE("self-label training rejects mismatched heads") {
    auto ds = two_group_ds();
    auto state = make_state(ClusterHead::make(2, 3, HeadKind::linear));
    SelfLabelConfig cfg;
    CHECK_THROWS_AS(self_label_train(ds, std::move(state), cfg), ValidationError);
}

TEST_CASE("fine-tuning preserves a good clustering of separated data") {
    SynthConfig synth;
    synth.n = 300;
    synth.d = 16;
    synth.c_true = 5;
    synth.v = 2;
    synth.sep = 8.0;
    synth.within_std = 0.05;
    synth.view_jitter_std = 0.02;
    synth.seed = 33;
    auto ds = generate_synthetic(synth);
    auto nbrs = mine_neighbors(ds, 6);

    TrainConfig tc;
    tc.clusters = 5;
    tc.k = 6;
    tc.lambda = 3.0;
    tc.epochs = 80;  // long enough for predictions to saturate past the threshold
    tc.batch_size = 64;
    tc.heads = 2;
    tc.optimizer.lr = 5e-3;
    tc.seed = 11;
    tc.workers = 1;
    auto trained = train_clustering(ds, nbrs, tc);

    auto pre = predict(trained.state.eval_head(), ds, 0);
    double pre_acc = accuracy(pre.assign, *ds.labels, AccMode::one_to_one, 5, 5).acc;
    CHECK(pre_acc >= 0.9);

    auto sel = select_confident(trained.state.eval_head(), ds, 0.9);
    CHECK(sel.size() >= 240);  // at least 80% of the data
    std::vector<std::uint32_t> truth(sel.size());
    for (std::size_t i = 0; i < sel.size(); ++i) truth[i] = (*ds.labels)[sel.ids[i]];
    CHECK(accuracy(sel.labels, truth, AccMode::many_to_one).acc >= 0.98);

    SelfLabelConfig sc;
    sc.threshold = 0.9;
    sc.epochs = 30;
    sc.batch_size = 64;
    sc.optimizer.lr = 1e-3;
    auto fin = self_label_train(ds, trained.state, sc);
    auto post = predict(fin.state.eval_head(), ds, 0);
    double post_acc = accuracy(post.assign, *ds.labels, AccMode::one_to_one, 5, 5).acc;
    CHECK(post_acc >= pre_acc - 0.005);
    CHECK(fin.history.epochs_run >= 1);
    for (std::size_t i = 0; i < fin.history.pseudo_label_accuracy.size(); ++i)
        CHECK(fin.history.pseudo_label_accuracy[i] >= 0.95);
}
