#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "grad_check.hpp"
#include "pamm/train.hpp"
#include "test_util.hpp"

using namespace pamm;

TEST_CASE("cross entropy of uniform logits is ln V") {
    const int v = 13;
    Mat logits(4, v);
    std::vector<int> gold = {0, 3, 7, 12};
    CHECK(cross_entropy_loss(logits, gold) == doctest::Approx(std::log(v)).epsilon(1e-12));
}

TEST_CASE("cross entropy vanishes as the correct-class margin grows") {
    Mat logits(2, 5);
    std::vector<int> gold = {1, 4};
    double prev = 1e9;
    for (double margin : {2.0, 8.0, 32.0}) {
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 5; ++j) logits.at(i, j) = j == gold[i] ? margin : 0.0;
        }
        const double loss = cross_entropy_loss(logits, gold);
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK(prev < 1e-10);
}

TEST_CASE("cross entropy matches a naive per-position oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Mat logits(6, 9);
    for (auto& v : logits.a) v = u(rng);
    std::vector<int> gold;
    std::uniform_int_distribution<int> pick(0, 8);
    for (int i = 0; i < 6; ++i) gold.push_back(pick(rng));
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) {
        double z = 0.0;
        for (int j = 0; j < 9; ++j) z += std::exp(logits.at(i, j));
        expect += -std::log(std::exp(logits.at(i, gold[i])) / z);
    }
    expect /= 6.0;
    CHECK(cross_entropy_loss(logits, gold) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("cross entropy skips masked positions and checks ids") {
    Mat logits(3, 4);
    logits.at(1, 2) = 50.0;
    std::vector<int> gold = {0, 2, 1};
    std::vector<uint8_t> mask = {0, 1, 0};
    CHECK(cross_entropy_loss(logits, gold, &mask) == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<int> bad = {0, 9, 1};
    CHECK_THROWS_AS(cross_entropy_loss(logits, bad), std::out_of_range);
}

namespace {

ForwardTrace synthetic_trace(const std::vector<std::vector<Mat>>& scores) {
    ForwardTrace t;
    t.self_scores = scores;
    return t;
}

Mat causal_random_scores(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Mat s(n, n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) sum += (s.at(i, j) = u(rng));
        for (int j = 0; j <= i; ++j) s.at(i, j) /= sum;
    }
    return s;
}

}  // namespace

TEST_CASE("pamm loss is zero when all mass is on-path") {
    auto h = testutil::worked_example();
    auto mask = build_mask(h, bfs_flatten(h, testutil::worked_example_set()));
    Mat onpath(mask.n, mask.n);
    for (int i = 0; i < mask.n; ++i) {
        const auto& c = mask.path_index_sets[i];
        for (int j : c) onpath.at(i, j) = 1.0 / c.size();
    }
    auto trace = synthetic_trace({{onpath, onpath}, {onpath, onpath}});
    CHECK(pamm_loss(trace, mask) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("degenerate single-token trace has zero pamm loss") {
    auto h = testutil::worked_example();
    auto mask = build_mask(h, bfs_flatten(h, {"l1"}));
    // Only consider a 1x1 block: the single row is its own path set.
    PathAdaptiveMask m1;
    m1.n = 1;
    m1.m = {1};
    m1.path_index_sets = {{0}};
    Mat s(1, 1);
    s.at(0, 0) = 1.0;
    auto trace = synthetic_trace({{s}});
    CHECK(pamm_loss(trace, m1) == doctest::Approx(0.0));
    (void)mask;
}

TEST_CASE("pamm loss matches the quadruple-loop oracle") {
    auto h = testutil::worked_example();
    auto mask = build_mask(h, bfs_flatten(h, testutil::worked_example_set()));
    std::mt19937_64 rng(23);
    const int B = 2, H = 2;
    std::vector<std::vector<Mat>> scores(B);
    for (int b = 0; b < B; ++b) {
        for (int hh = 0; hh < H; ++hh) scores[b].push_back(causal_random_scores(rng, mask.n));
    }
    double expect = 0.0;
    for (int b = 0; b < B; ++b) {
        double head_sum = 0.0;
        for (int hh = 0; hh < H; ++hh) {
            for (int i = 0; i < mask.n; ++i) {
                double on = 0.0;
                for (int j = 0; j < mask.n; ++j) {
                    if (mask.at(i, j)) on += scores[b][hh].at(i, j);
                }
                head_sum += 1.0 - on;
            }
        }
        expect += head_sum / H;
    }
    auto trace = synthetic_trace(scores);
    CHECK(pamm_loss(trace, mask) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(pamm_loss(trace, mask) >= 0.0);
}

TEST_CASE("label-row policy restricts the sum") {
    auto h = testutil::worked_example();
    auto ml = bfs_flatten(h, testutil::worked_example_set());
    auto mask = build_mask(h, ml);
    std::vector<uint8_t> is_label;
    for (const auto& t : ml.tokens) is_label.push_back(t.is_label ? 1 : 0);
    std::mt19937_64 rng(29);
    auto s = causal_random_scores(rng, mask.n);
    auto trace = synthetic_trace({{s}});
    const double all = pamm_loss(trace, mask, PammRows::All);
    const double labels_only = pamm_loss(trace, mask, PammRows::Labels, &is_label);
    double label_expect = 0.0;
    auto off = off_path_mass(s, mask);
    for (int i = 0; i < mask.n; ++i) {
        if (is_label[i]) label_expect += off[i];
    }
    CHECK(labels_only == doctest::Approx(label_expect).epsilon(1e-12));
    CHECK(labels_only <= all + 1e-12);
}

TEST_CASE("total loss: rho scaling, consistency and monotonicity") {
    auto mc = testutil::make_micro_case(31);
    auto params = ModelParams::init(mc.cfg, 77);
    const auto base = total_loss(params, mc.batch, 0.0);
    CHECK(base.total == doctest::Approx(base.loss_hia).epsilon(1e-12));
    const auto reg = total_loss(params, mc.batch, 100.0);
    CHECK(reg.loss_hia == doctest::Approx(base.loss_hia).epsilon(1e-12));
    CHECK(reg.total ==
          doctest::Approx(reg.loss_hia + 100.0 * reg.loss_pamm).epsilon(1e-9));
    CHECK(reg.loss_pamm >= 0.0);

    // With identical logits, pushing mass off-path can only raise the total.
    auto h = testutil::worked_example();
    auto mask = build_mask(h, bfs_flatten(h, testutil::worked_example_set()));
    Mat focused(mask.n, mask.n);
    Mat diffuse(mask.n, mask.n);
    for (int i = 0; i < mask.n; ++i) {
        const auto& c = mask.path_index_sets[i];
        for (int j : c) focused.at(i, j) = 1.0 / c.size();
        for (int j = 0; j <= i; ++j) diffuse.at(i, j) = 1.0 / (i + 1);
    }
    auto lo = pamm_loss(synthetic_trace({{focused}}), mask);
    auto hi = pamm_loss(synthetic_trace({{diffuse}}), mask);
    CHECK(lo <= hi);
}

TEST_CASE("gradients match finite differences on micro models") {
    const double rhos[] = {0.0, 1.0, 100.0};
    for (int inst = 0; inst < 3; ++inst) {
        auto mc = testutil::make_micro_case(100 + inst);
        auto params = ModelParams::init(mc.cfg, 500 + inst);
        auto res = testutil::gradient_check(params, mc.batch, rhos[inst]);
        CAPTURE(inst);
        CAPTURE(res.worst_param);
        CHECK(res.max_rel_err <= 1e-4);
        CHECK(res.checked > 1000);
    }
}

TEST_CASE("rho zero gradients equal plain cross-entropy gradients") {
    auto mc = testutil::make_micro_case(41);
    auto params = ModelParams::init(mc.cfg, 41);
    ModelParams g_zero = ModelParams::zeros_like(params);
    ModelParams g_ce = ModelParams::zeros_like(params);
    backward_batch(params, mc.batch, 0.0, PammRows::All, g_zero);
    // A second run with the pamm term structurally absent: flat-encode the
    // same samples so no mask exists.
    std::vector<EncodedSample> no_mask = mc.batch;
    for (auto& s : no_mask) s.has_mask = false;
    backward_batch(params, no_mask, 0.0, PammRows::All, g_ce);
    bool equal = true;
    std::map<std::string, const Mat*> ref;
    g_ce.for_each([&](const std::string& n, const Mat& m) { ref[n] = &m; });
    g_zero.for_each([&](const std::string& n, const Mat& m) {
        if (ref.at(n)->a != m.a) equal = false;
    });
    CHECK(equal);
}

TEST_CASE("PAD embedding row receives zero gradient") {
    auto mc = testutil::make_micro_case(43);
    auto params = ModelParams::init(mc.cfg, 43);
    ModelParams grads = ModelParams::zeros_like(params);
    backward_batch(params, mc.batch, 1.0, PammRows::All, grads);
    for (int j = 0; j < grads.tok_emb.cols; ++j) {
        CHECK(grads.tok_emb.at(Vocabulary::kPadId, j) == 0.0);
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    auto mc = testutil::make_micro_case(47);
    auto params = ModelParams::init(mc.cfg, 47);
    auto before = params;
    AdamState st = AdamState::init(params);
    ModelParams grads = ModelParams::zeros_like(params);
    adam_step(params, grads, st, 0.1);
    bool same = true;
    std::map<std::string, const Mat*> ref;
    before.for_each([&](const std::string& n, const Mat& m) { ref[n] = &m; });
    params.for_each([&](const std::string& n, const Mat& m) {
        if (ref.at(n)->a != m.a) same = false;
    });
    CHECK(same);
}

TEST_CASE("adam moves against the gradient and matches a hand-stepped oracle") {
    // Single-entry "model": drive one scalar through three steps.
    ModelConfig cfg;
    cfg.d_model = 1;
    cfg.heads = 1;
    cfg.blocks = 0;
    cfg.d_ff = 1;
    cfg.vocab_size = 1;
    cfg.max_src_len = 1;
    cfg.max_tgt_len = 1;
    cfg.dropout = 0.0;
    auto params = ModelParams::init(cfg, 1);
    params.w3.a[0] = 2.0;
    AdamState st = AdamState::init(params);
    const double lr = 0.05;

    double x = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        ModelParams grads = ModelParams::zeros_like(params);
        const double g = 2.0 * params.w3.a[0];  // d/dx of x^2
        grads.w3.a[0] = g;
        adam_step(params, grads, st, lr);

        const double gg = 2.0 * x;
        m = 0.9 * m + 0.1 * gg;
        v = 0.999 * v + 0.001 * gg * gg;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        x -= lr * mh / (std::sqrt(vh) + 1e-8);
        CHECK(params.w3.a[0] == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(params.w3.a[0] < 2.0);  // moved against the positive gradient
}

TEST_CASE("gradient clipping caps the global norm") {
    auto mc = testutil::make_micro_case(53);
    auto params = ModelParams::init(mc.cfg, 53);
    ModelParams grads = ModelParams::zeros_like(params);
    grads.w3.a[0] = 30.0;
    grads.tok_emb.a[0] = 40.0;
    const double norm = clip_gradients(grads, 1.0);
    CHECK(norm == doctest::Approx(50.0));
    double sq = 0.0;
    grads.for_each([&](const std::string&, Mat& m) {
        for (double v : m.a) sq += v * v;
    });
    CHECK(std::sqrt(sq) == doctest::Approx(1.0));
}

TEST_CASE("flat targets demand rho zero") {
    auto h = testutil::worked_example();
    Corpus train_corpus = {{{"red"}, {"l1"}}};
    TrainOptions opts;
    opts.model.d_model = 8;
    opts.model.heads = 2;
    opts.model.blocks = 1;
    opts.model.d_ff = 16;
    opts.model.dropout = 0.0;
    opts.train.epochs = 1;
    opts.flat_labels = true;
    opts.train.rho = 100.0;
    opts.out_dir = "train_flat_rho";
    CHECK_THROWS_WITH_AS(train(h, train_corpus, {}, opts), doctest::Contains("rho"),
                         std::runtime_error);
}

TEST_CASE("training rejects an empty corpus") {
    auto h = testutil::worked_example();
    TrainOptions opts;
    opts.out_dir = "train_empty";
    CHECK_THROWS_AS(train(h, {}, {}, opts), std::runtime_error);
}
