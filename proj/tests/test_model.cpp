#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "symcomp/common.hpp"
#include "symcomp/model.hpp"

using namespace symcomp;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.feature_dim = 6;
    cfg.attr_embed_dim = 4;
    cfg.n_attrs = 4;
    cfg.n_objects = 3;
    return cfg;
}

Tensor random_matrix(int64_t r, int64_t c, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({r, c});
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = scale * rng.normal();
    return t;
}

void zero_params_with_prefix(ParamStore& store, const std::string& prefix) {
    for (const auto& name : store.param_names())
        if (name.rfind(prefix, 0) == 0) store.value(name).fill(0.0);
}

// descending argsort, ties by index
std::vector<int64_t> ranking(const Tensor& row) {
    std::vector<int64_t> idx(static_cast<size_t>(row.numel()));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int64_t a, int64_t b) { return row.at(a) > row.at(b); });
    return idx;
}

}  // namespace

TEST_CASE("attention stays strictly inside (0,1) and is pure") {
    ParamStore store(11);
    TransformModel model(small_config(), store);
    Tensor a = random_matrix(3, 4, 21);
    Tape tape;
    Val att = model.attention(tape, tape.input(a), TransformMode::Couple, BnMode::Eval);
    const Tensor& v = tape.value(att);
    CHECK(v.rows() == 3);
    CHECK(v.cols() == 6);
    for (int64_t i = 0; i < v.numel(); ++i) {
        CHECK(v.at(i) > 0.0);
        CHECK(v.at(i) < 1.0);
    }
    Tape tape2;
    Val att2 = model.attention(tape2, tape2.input(a), TransformMode::Couple, BnMode::Eval);
    CHECK(tape2.value(att2) == v);
}

TEST_CASE("zeroed attention weights give 0.5 everywhere") {
    ParamStore store(12);
    TransformModel model(small_config(), store);
    zero_params_with_prefix(store, "con.attn.");
    Tape tape;
    Val att = model.attention(tape, tape.input(random_matrix(2, 4, 5)), TransformMode::Couple,
                              BnMode::Eval);
    for (int64_t i = 0; i < tape.value(att).numel(); ++i)
        CHECK(tape.value(att).at(i) == 0.5);
}

TEST_CASE("couple and decouple use disjoint parameters") {
    ParamStore store(13);
    TransformModel model(small_config(), store);
    Tensor f = random_matrix(2, 6, 31);
    Tensor a = random_matrix(2, 4, 32);
    Tensor couple_before = model.transform_eval(f, a, TransformMode::Couple);
    Tensor decouple_before = model.transform_eval(f, a, TransformMode::Decouple);

    store.value("decon.trunk.fc2.w").at(0) += 0.5;
    store.value("decon.attn.fc1.w").at(3) -= 0.25;
    CHECK(model.transform_eval(f, a, TransformMode::Couple) == couple_before);
    CHECK_FALSE(model.transform_eval(f, a, TransformMode::Decouple) == decouple_before);
}

TEST_CASE("batched transform equals stacked single calls") {
    ParamStore store(14);
    TransformModel model(small_config(), store);
    int64_t batch = 3, n = 4;
    Tensor f = random_matrix(batch, 6, 41);
    Tensor attrs = random_matrix(n, 4, 42);

    Tensor fstack = Tensor::zeros({batch * n, 6});
    Tensor astack = Tensor::zeros({batch * n, 4});
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < 6; ++c) {
                fstack.at(b * n + i, c) = f.at(b, c);
                if (c < 4) astack.at(b * n + i, c) = attrs.at(i, c);
            }
    for (TransformMode mode : {TransformMode::Couple, TransformMode::Decouple}) {
        Tensor batched = model.transform_eval(fstack, astack, mode);
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < n; ++i) {
                Tensor frow = Tensor::zeros({1, 6}), arow = Tensor::zeros({1, 4});
                for (int64_t c = 0; c < 6; ++c) frow.at(0, c) = f.at(b, c);
                for (int64_t c = 0; c < 4; ++c) arow.at(0, c) = attrs.at(i, c);
                Tensor single = model.transform_eval(frow, arow, mode);
                for (int64_t c = 0; c < 6; ++c)
                    CHECK(std::abs(batched.at(b * n + i, c) - single.at(0, c)) <= 1e-9);
            }
    }
}

TEST_CASE("identity transformation is a true skip") {
    Tensor f = random_matrix(1, 3, 51);
    CHECK(identity_transform(f) == f);
    CHECK(identity_transform(identity_transform(f)) == f);

    // composing it around a learned transform changes nothing
    ParamStore store(15);
    TransformModel model(small_config(), store);
    Tensor feats = random_matrix(2, 6, 52), attrs = random_matrix(2, 4, 53);
    Tensor direct = model.transform_eval(feats, attrs, TransformMode::Couple);
    Tensor wrapped = model.transform_eval(identity_transform(feats), attrs, TransformMode::Couple);
    CHECK(identity_transform(wrapped) == direct);
}

TEST_CASE("identity-pinned transforms put every distance at zero") {
    ModelConfig cfg = small_config();
    cfg.identity_pin = true;
    ParamStore store(16);
    TransformModel model(cfg, store);
    Tensor feats = random_matrix(3, 6, 61);
    Tensor embeds = Tensor::eye(4);
    RmdResult scores = model.rmd(feats, embeds);
    for (int64_t i = 0; i < scores.d.numel(); ++i) {
        CHECK(scores.d_plus.at(i) == 0.0);
        CHECK(scores.d_minus.at(i) == 0.0);
        CHECK(scores.d.at(i) == 0.0);
    }
    Tensor p = model.attr_probs(scores);
    for (int64_t i = 0; i < p.numel(); ++i) CHECK(p.at(i) == 0.5);
    // the tie rule reads zero distance as present
    for (char c : attr_decision(scores.d)) CHECK(c == 1);
}

TEST_CASE("batched rmd equals a per-attribute loop") {
    ParamStore store(17);
    ModelConfig cfg = small_config();
    TransformModel model(cfg, store);
    Tensor feats = random_matrix(3, 6, 71);
    Tensor embeds = random_matrix(4, 4, 72);
    RmdResult batched = model.rmd(feats, embeds);
    CHECK(batched.d_plus.rows() == 3);
    CHECK(batched.d_plus.cols() == 4);
    for (int64_t b = 0; b < 3; ++b) {
        Tensor frow = Tensor::zeros({1, 6});
        for (int64_t c = 0; c < 6; ++c) frow.at(0, c) = feats.at(b, c);
        for (int64_t i = 0; i < 4; ++i) {
            Tensor arow = Tensor::zeros({1, 4});
            for (int64_t c = 0; c < 4; ++c) arow.at(0, c) = embeds.at(i, c);
            Tensor plus = model.transform_eval(frow, arow, TransformMode::Couple);
            Tensor minus = model.transform_eval(frow, arow, TransformMode::Decouple);
            double dp = 0, dm = 0;
            for (int64_t c = 0; c < 6; ++c) {
                dp += (frow.at(0, c) - plus.at(0, c)) * (frow.at(0, c) - plus.at(0, c));
                dm += (frow.at(0, c) - minus.at(0, c)) * (frow.at(0, c) - minus.at(0, c));
            }
            CHECK(std::abs(batched.d_plus.at(b, i) - std::sqrt(dp)) <= 1e-9);
            CHECK(std::abs(batched.d_minus.at(b, i) - std::sqrt(dm)) <= 1e-9);
            CHECK(batched.d.at(b, i) ==
                  batched.d_minus.at(b, i) - batched.d_plus.at(b, i));
        }
    }
}

TEST_CASE("attribute probability follows the scaled sigmoid") {
    Tensor d = Tensor::zeros({1, 3});
    d.at(0, 0) = 0.0;
    d.at(0, 1) = 1.0;
    d.at(0, 2) = -2.0;
    Tensor p = attr_prob(d, 2.0);
    CHECK(p.at(0, 0) == 0.5);
    CHECK(p.at(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    CHECK(p.at(0, 2) == doctest::Approx(1.0 / (1.0 + std::exp(4.0))));
    CHECK_THROWS_AS(attr_prob(d, 0.0), ConfigError);

    auto dec = attr_decision(d);
    CHECK(dec == std::vector<char>{1, 1, 0});
}

TEST_CASE("gamma rescaling never flips decisions or rankings") {
    Rng rng(81);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor d = Tensor::zeros({1, 5});
        for (int64_t i = 0; i < 5; ++i) d.at(0, i) = rng.uniform(-2.0, 2.0);
        auto base_dec = attr_decision(d);
        auto base_rank = ranking(attr_prob(d, 1.0));
        for (double gamma : {0.5, 2.0, 7.5}) {
            Tensor p = attr_prob(d, gamma);
            CHECK(attr_decision(d) == base_dec);
            CHECK(ranking(p) == base_rank);
            // the decision boundary sits exactly at p = 0.5
            for (int64_t i = 0; i < 5; ++i)
                CHECK((p.at(0, i) >= 0.5) == (base_dec[static_cast<size_t>(i)] == 1));
        }
    }
}

TEST_CASE("object probabilities form a distribution") {
    ParamStore store(19);
    TransformModel model(small_config(), store);
    Tensor feats = random_matrix(4, 6, 91);
    Tensor p = model.object_probs(feats);
    for (int64_t b = 0; b < 4; ++b) {
        double sum = 0;
        for (int64_t j = 0; j < 3; ++j) sum += p.at(b, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    zero_params_with_prefix(store, "cls_obj.");
    p = model.object_probs(feats);
    for (int64_t i = 0; i < p.numel(); ++i)
        CHECK(p.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("shifting every object logit changes nothing") {
    ParamStore store(20);
    TransformModel model(small_config(), store);
    Tensor feats = random_matrix(2, 6, 95);
    Tensor before = model.object_probs(feats);
    Tensor& bias = store.value("cls_obj.fc2.b");
    for (int64_t i = 0; i < bias.numel(); ++i) bias.at(i) += 3.0;
    Tensor after = model.object_probs(feats);
    CHECK(max_abs_diff(before, after) <= 1e-12);
}

TEST_CASE("pair scores are a masked outer product") {
    PairSpace space;
    space.n_attrs = 2;
    space.n_objects = 2;
    space.pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    space.feasible_mask = {1, 1, 1, 1};
    space.seen_mask = {1, 1, 1, 0};
    space.unseen_mask = {0, 0, 0, 1};

    Tensor p_a = Tensor::zeros({1, 2}), p_o = Tensor::zeros({1, 2});
    p_a.at(0, 0) = 1.0;
    p_o.at(0, 0) = 1.0;
    Tensor s = pair_scores(p_a, p_o, space);
    CHECK(s.at(0, 0) == 1.0);
    CHECK(s.at(0, 3) == 0.0);

    // random probabilities against the brute-force product
    Rng rng(101);
    for (int64_t i = 0; i < 2; ++i) {
        p_a.at(0, i) = rng.uniform();
        p_o.at(0, i) = rng.uniform();
    }
    s = pair_scores(p_a, p_o, space);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(s.at(0, i) == p_a.at(0, i / 2) * p_o.at(0, i % 2));
}

TEST_CASE("masking the best pair promotes the runner-up") {
    PairSpace space;
    space.n_attrs = 2;
    space.n_objects = 2;
    space.pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    space.feasible_mask = {0, 1, 1, 1};  // (0,0) infeasible
    space.seen_mask = {0, 1, 1, 1};
    space.unseen_mask = {0, 0, 0, 0};
    Tensor p_a = Tensor::zeros({1, 2}), p_o = Tensor::zeros({1, 2});
    p_a.at(0, 0) = 0.9;
    p_a.at(0, 1) = 0.1;
    p_o.at(0, 0) = 0.8;
    p_o.at(0, 1) = 0.2;
    Tensor s = pair_scores(p_a, p_o, space);
    CHECK(std::isinf(s.at(0, 0)));
    int64_t best = 0;
    for (int64_t i = 1; i < 4; ++i)
        if (s.at(0, i) > s.at(0, best)) best = i;
    CHECK(best == 1);  // (0, 1) with 0.18

    space.feasible_mask = {0, 0, 0, 0};
    CHECK_THROWS_AS(pair_scores(p_a, p_o, space), DataError);
}

TEST_CASE("coupling and decoupling networks are structural twins") {
    ParamStore store(22);
    TransformModel model(small_config(), store);
    int matched = 0;
    for (const auto& name : store.param_names()) {
        if (name.rfind("con.", 0) != 0) continue;
        std::string twin = "decon." + name.substr(4);
        REQUIRE(store.has(twin));
        CHECK(store.value(name).shape() == store.value(twin).shape());
        ++matched;
    }
    // 4 affine layers x (w, b) plus 2 BatchNorm layers x (gamma, beta)
    CHECK(matched == 12);
}

TEST_CASE("model header rejects mismatched checkpoints") {
    ModelConfig cfg = small_config();
    ParamStore store(23);
    TransformModel model(cfg, store);
    std::vector<std::string> attrs{"a", "b", "c", "d"}, objs{"x", "y", "z"};
    auto meta = model_meta(model.config(), attrs, objs);
    CHECK_NOTHROW(verify_model_meta(meta, model.config(), attrs, objs));

    auto tampered = meta;
    tampered["model.n_attrs"] = "5";
    CHECK_THROWS_AS(verify_model_meta(tampered, model.config(), attrs, objs), DataError);

    tampered = meta;
    tampered.erase("model.feature_dim");
    CHECK_THROWS_AS(verify_model_meta(tampered, model.config(), attrs, objs), DataError);

    // vocab order participates in the hash
    std::vector<std::string> reordered{"b", "a", "c", "d"};
    CHECK_THROWS_AS(verify_model_meta(meta, model.config(), reordered, objs), DataError);

    // gamma may differ between save and load
    ModelConfig warm = cfg;
    warm.gamma = 2.0;
    ParamStore store2(24);
    TransformModel model2(warm, store2);
    CHECK_NOTHROW(verify_model_meta(meta, model2.config(), attrs, objs));
}

TEST_CASE("dimension mismatches and bad configs are rejected") {
    ParamStore store(25);
    TransformModel model(small_config(), store);
    CHECK_THROWS_AS(
        model.transform_eval(random_matrix(1, 7, 1), random_matrix(1, 4, 2), TransformMode::Couple),
        ShapeError);
    CHECK_THROWS_AS(model.rmd(random_matrix(1, 6, 3), random_matrix(4, 5, 4)), ShapeError);

    ModelConfig bad = small_config();
    bad.feature_dim = 0;
    ParamStore s2(26);
    CHECK_THROWS_AS(TransformModel(bad, s2), ConfigError);
    bad = small_config();
    bad.gamma = -1.0;
    ParamStore s3(27);
    CHECK_THROWS_AS(TransformModel(bad, s3), ConfigError);
}

TEST_CASE("non-finite features are caught inside the transform") {
    ParamStore store(28);
    TransformModel model(small_config(), store);
    Tensor f = random_matrix(1, 6, 5);
    f.at(0, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(model.transform_eval(f, random_matrix(1, 4, 6), TransformMode::Couple),
                    NumericError);
}
