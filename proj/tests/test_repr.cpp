#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "fsa/errors.hpp"
#include "fsa/repr.hpp"

using namespace fsa;
using namespace fsa::repr;

namespace {

ReprConfig tiny_config() {
    ReprConfig c;
    c.proj_hidden = 8;
    c.D = 16;
    c.K_T = 8;
    c.K_F = 8;
    c.L = 2;
    c.heads = 2;
    c.freq_channels = 2;
    c.freq_window = 8;
    c.window = 60;
    c.min_overlap = 8;
    c.batch = 2;
    c.steps = 30;
    c.loss_timestamps = 6;
    c.freq_timestamps = 2;
    c.max_encode_len = 64;
    return c;
}

WorkloadSeries sine_series(int T, double period_steps, double phase = 0.0, int64_t step = 600) {
    WorkloadSeries s;
    s.app_id = "app-000";
    s.start = 0;
    s.step = step;
    s.covariates = ad::Tensor::zeros({T, kNumCovariates});
    for (int i = 0; i < T; ++i)
        s.values.push_back(std::sin(2.0 * M_PI * i / period_steps + phase));
    return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("random_crop_pair: invariants over 10000 draws") {
    Rng rng(123);
    for (int it = 0; it < 10000; ++it) {
        int T = static_cast<int>(rng.uniform_int(4, 200));
        int mo = static_cast<int>(rng.uniform_int(1, std::max(2, T - 1)));
        if (T < mo + 2) continue;
        CropPair c = random_crop_pair(T, mo, rng);
        REQUIRE(0 <= c.a1);
        REQUIRE(c.a1 < c.b1);
        REQUIRE(c.b1 < c.a2);
        REQUIRE(c.a2 <= c.b2);
        REQUIRE(c.b2 <= T);
        REQUIRE(c.overlap_len() >= mo);
    }
}

TEST_CASE("random_crop_pair: degenerate T errors") {
    Rng rng(1);
    CHECK_THROWS_AS(random_crop_pair(5, 4, rng), DataError);  // T = min_overlap + 1
}

TEST_CASE("timestamp mask: p=0 identity, p=1 zeros, p=0.5 concentration") {
    Rng rng(7);
    auto m0 = sample_timestamp_mask(100, 0.0, rng);
    for (double v : m0) CHECK(v == 1.0);
    auto m1 = sample_timestamp_mask(100, 1.0, rng);
    for (double v : m1) CHECK(v == 0.0);
    auto mh = sample_timestamp_mask(10000, 0.5, rng);
    double masked = 0;
    for (double v : mh) masked += (v == 0.0);
    masked /= mh.size();
    CHECK(masked >= 0.45);
    CHECK(masked <= 0.55);
}

TEST_CASE("encode_window: shape, determinism, causality") {
    Rng rng(11);
    ReprModel model(tiny_config(), rng);
    WorkloadSeries s = sine_series(40, 12.0);
    std::vector<int> idx(30);
    for (int i = 0; i < 30; ++i) idx[i] = i;
    ad::Tensor w = repr_input_window(s, idx);

    ad::Tensor reps = encode_window(model, w);
    CHECK(reps.rows() == 30);
    CHECK(reps.cols() == model.cfg.K());

    ad::Tensor reps2 = encode_window(model, w);
    CHECK(reps.data == reps2.data);  // deterministic

    ad::Tensor wp = w;
    wp(20, 0) += 5.0;  // future perturbation
    ad::Tensor reps3 = encode_window(model, wp);
    for (int t = 0; t < 20; ++t)
        for (int j = 0; j < reps.cols(); ++j)
            CHECK(std::abs(reps(t, j) - reps3(t, j)) <= 1e-12);
    // and it must actually reach position 20 onward
    double delta = 0;
    for (int j = 0; j < reps.cols(); ++j) delta += std::abs(reps(20, j) - reps3(20, j));
    CHECK(delta > 0);
}

TEST_CASE("time contrastive loss: single timestamp is exactly zero") {
    ad::Graph g;
    ad::Var a = g.leaf(ad::Tensor::mat(1, 2, {0.3, -1.2}));
    ad::Var b = g.leaf(ad::Tensor::mat(1, 2, {2.0, 0.7}));
    CHECK(time_contrastive_loss(a, b).val().data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("time contrastive loss matches hand enumeration on 2x2 instance") {
    // r1, r2 from view A; rh1, rh2 from view B; 2-dim vectors
    std::vector<double> r1{0.5, -0.2}, r2{1.0, 0.3}, rh1{0.1, 0.8}, rh2{-0.4, 0.6};
    auto e = [&](const std::vector<double>& x, const std::vector<double>& y) {
        return std::exp(dot(x, y));
    };
    double l1 = -std::log(e(r1, rh1) / (e(r1, rh1) + e(r1, rh2) + e(r1, r2)));
    double l2 = -std::log(e(r2, rh2) / (e(r2, rh1) + e(r2, rh2) + e(r2, r1)));
    double expected = 0.5 * (l1 + l2);

    ad::Graph g;
    ad::Var a = g.leaf(ad::Tensor::mat(2, 2, {r1[0], r1[1], r2[0], r2[1]}));
    ad::Var b = g.leaf(ad::Tensor::mat(2, 2, {rh1[0], rh1[1], rh2[0], rh2[1]}));
    CHECK(time_contrastive_loss(a, b).val().data[0] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("contrastive losses are non-negative on random instances") {
    Rng rng(13);
    for (int it = 0; it < 50; ++it) {
        int n = static_cast<int>(rng.uniform_int(1, 6));
        int k = static_cast<int>(rng.uniform_int(1, 5));
        ad::Tensor A = ad::Tensor::zeros({n, k}), B = ad::Tensor::zeros({n, k});
        for (auto& v : A.data) v = rng.uniform(-2, 2);
        for (auto& v : B.data) v = rng.uniform(-2, 2);
        ad::Graph g;
        CHECK(time_contrastive_loss(g.leaf(A), g.leaf(B)).val().data[0] >= -1e-12);
    }
}

TEST_CASE("freq contrastive loss: singleton batch zero, hand enumeration, order invariance") {
    ad::Graph g;
    ad::Var a1 = g.leaf(ad::Tensor::mat(1, 2, {0.2, 0.4}));
    ad::Var b1 = g.leaf(ad::Tensor::mat(1, 2, {-0.5, 1.0}));
    CHECK(freq_contrastive_loss(a1, b1).val().data[0] == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> f1{0.9, -0.1}, f2{-0.3, 0.5}, fh1{0.2, 0.2}, fh2{1.1, -0.7};
    auto e = [&](const std::vector<double>& x, const std::vector<double>& y) {
        return std::exp(dot(x, y));
    };
    double l1 = -std::log(e(f1, fh1) / (e(f1, fh1) + e(f1, fh2) + e(f1, f2)));
    double l2 = -std::log(e(f2, fh2) / (e(f2, fh1) + e(f2, fh2) + e(f2, f1)));
    double expected = 0.5 * (l1 + l2);

    ad::Var a = g.leaf(ad::Tensor::mat(2, 2, {f1[0], f1[1], f2[0], f2[1]}));
    ad::Var b = g.leaf(ad::Tensor::mat(2, 2, {fh1[0], fh1[1], fh2[0], fh2[1]}));
    CHECK(freq_contrastive_loss(a, b).val().data[0] == doctest::Approx(expected).epsilon(1e-6));

    // swapping instance order leaves the mean loss unchanged
    ad::Var ap = g.leaf(ad::Tensor::mat(2, 2, {f2[0], f2[1], f1[0], f1[1]}));
    ad::Var bp = g.leaf(ad::Tensor::mat(2, 2, {fh2[0], fh2[1], fh1[0], fh1[1]}));
    CHECK(freq_contrastive_loss(ap, bp).val().data[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("train_repr: loss decreases, determinism, empty dataset error") {
    auto make_data = [] {
        std::vector<WorkloadSeries> data;
        for (int a = 0; a < 2; ++a) data.push_back(sine_series(200, 24.0, a * 1.3));
        return data;
    };
    auto run = [&make_data] {
        Rng rng(99);
        ReprModel model(tiny_config(), rng);
        auto result = train_repr(model, make_data(), rng);
        return std::make_pair(std::move(model), result);
    };
    auto [model, result] = run();
    REQUIRE(result.loss_curve.size() == 30);
    double head = (result.loss_curve[0] + result.loss_curve[1] + result.loss_curve[2]) / 3;
    double tail = 0;
    for (size_t i = result.loss_curve.size() - 3; i < result.loss_curve.size(); ++i)
        tail += result.loss_curve[i] / 3;
    CHECK(tail < head);

    auto [model2, result2] = run();
    CHECK(result2.loss_curve == result.loss_curve);
    auto p1 = model.params(), p2 = model2.params();
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value.data == p2[i]->value.data);

    Rng rng(1);
    ReprModel m(tiny_config(), rng);
    std::vector<WorkloadSeries> empty;
    CHECK_THROWS_AS(train_repr(m, empty, rng), DataError);
}

TEST_CASE("encode_multiscale: availability rule and weekly periodicity probe") {
    Rng rng(21);
    ReprConfig cfg = tiny_config();
    ReprModel model(cfg, rng);

    // noiseless series, daily period (144 steps at 600 s)
    WorkloadSeries s = sine_series(3000, 144.0);

    // exactly one day of history -> only `daily`
    auto r = encode_multiscale(model, s, all_scales(), s.timestamp_at(143));
    CHECK(r.vectors.size() == 1);
    CHECK(r.vectors.count(Scale::daily) == 1);

    // with > 1 week, weekly appears too
    auto r2 = encode_multiscale(model, s, all_scales(), s.timestamp_at(1100));
    CHECK(r2.vectors.count(Scale::daily) == 1);
    CHECK(r2.vectors.count(Scale::weekly) == 1);
    CHECK(r2.vectors.count(Scale::monthly) == 0);

    // insufficient history for every requested scale -> error
    CHECK_THROWS_AS(encode_multiscale(model, s, {Scale::monthly}, s.timestamp_at(200)), DataError);

    // strictly periodic: one week apart (value + calendar phase both repeat)
    auto ra = encode_multiscale(model, s, {Scale::daily}, s.timestamp_at(1200));
    auto rb = encode_multiscale(model, s, {Scale::daily}, s.timestamp_at(1200 + 1008));
    const auto& va = ra.vectors.at(Scale::daily);
    const auto& vb = rb.vectors.at(Scale::daily);
    double cos = dot(va, vb) / std::sqrt(dot(va, va) * dot(vb, vb));
    CHECK(cos >= 0.99);
}

TEST_CASE("repr separability: same-phase closer than opposite-phase") {
    Rng rng(31);
    ReprModel model(tiny_config(), rng);
    WorkloadSeries s = sine_series(2600, 144.0);
    auto vec_at = [&](int i) {
        return encode_multiscale(model, s, {Scale::daily}, s.timestamp_at(i))
            .vectors.at(Scale::daily);
    };
    auto a = vec_at(1200);
    auto same = vec_at(1200 + 1008);   // same phase, one week later
    auto opposite = vec_at(1200 + 72);  // half a day later
    auto dist = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double d = 0;
        for (size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
        return std::sqrt(d);
    };
    CHECK(dist(a, same) < dist(a, opposite));
}

TEST_CASE("repr store: at-or-before lookup and persistence round-trip") {
    ReprStore store;
    CHECK(!store.get("a", Scale::daily, 1000).has_value());

    store.put("a", Scale::daily, 100, {1.0, 2.0});
    store.put("a", Scale::daily, 200, {3.0, 4.0});
    CHECK(store.get("a", Scale::daily, 150).value() == std::vector<double>{1.0, 2.0});
    CHECK(store.get("a", Scale::daily, 200).value() == std::vector<double>{3.0, 4.0});
    CHECK(!store.get("a", Scale::daily, 99).has_value());
    CHECK(!store.get("a", Scale::weekly, 150).has_value());

    store.put("b", Scale::weekly, 50, {7.0});
    std::string path = "/tmp/fsa_store_test.jsonl";
    store.save(path);
    ReprStore back = ReprStore::load(path);
    CHECK(back.size() == store.size());
    CHECK(back.get("a", Scale::daily, 150).value() == std::vector<double>{1.0, 2.0});
    CHECK(back.get("b", Scale::weekly, 60).value() == std::vector<double>{7.0});
    std::remove(path.c_str());
}
