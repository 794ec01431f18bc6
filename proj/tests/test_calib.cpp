#include <array>
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "fsa/adam.hpp"
#include "fsa/calib.hpp"
#include "fsa/errors.hpp"

using namespace fsa;
using namespace fsa::calib;
using ad::Graph;
using ad::Param;
using ad::Tensor;
using ad::Var;

namespace {

CalibConfig tiny_config() {
    CalibConfig c;
    c.E = 4;
    c.hidden = 6;
    c.steps = 20;
    c.batch = 16;
    return c;
}

void zero_params(CalibModel& m) {
    for (Param* p : m.params()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double log_normal_pdf(double y, double mu, double sigma) {
    double d = (y - mu) / sigma;
    return -0.5 * std::log(2 * M_PI * sigma * sigma) - 0.5 * d * d;
}

// posterior over (w, b) for prior N(0, I) and known noise sigma
std::array<double, 2> conjugate_posterior_mean(const std::vector<double>& x,
                                               const std::vector<double>& y, double sigma) {
    double s2 = sigma * sigma;
    // A = I + X^T X / s2 with rows (x_i, 1); solve A mu = X^T y / s2
    double a00 = 1, a01 = 0, a11 = 1, r0 = 0, r1 = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        a00 += x[i] * x[i] / s2;
        a01 += x[i] / s2;
        a11 += 1.0 / s2;
        r0 += x[i] * y[i] / s2;
        r1 += y[i] / s2;
    }
    double det = a00 * a11 - a01 * a01;
    return {(a11 * r0 - a01 * r1) / det, (a00 * r1 - a01 * r0) / det};
}

}  // namespace

TEST_CASE("task_embed: zero-weight bias propagation, determinism, distinctness") {
    Rng rng(3);
    CalibModel m(tiny_config(), {"a", "b"}, rng);
    zero_params(m);
    m.h1.b.value.data = {0.5, -1.0, 0.2, 0.0, 1.5, -0.3};
    m.h2.b.value.data = {0.7, -0.4, 0.0, 1.2};
    auto I = task_embed(m, 0);
    CHECK(I == std::vector<double>{0.7, 0.0, 0.0, 1.2});  // relu(b2) with zero weights

    CalibModel m2(tiny_config(), {"a", "b"}, rng);
    auto Ia = task_embed(m2, 0), Ia2 = task_embed(m2, 0), Ib = task_embed(m2, 1);
    CHECK(Ia == Ia2);
    CHECK(Ia != Ib);

    CHECK_THROWS_AS(task_embed(m2, 2), DataError);
    CHECK_THROWS_AS(m2.app_index("nope"), DataError);
}

TEST_CASE("hyper_params: bias slices, positivity, affine identity") {
    Rng rng(5);
    CalibModel m(tiny_config(), {"a"}, rng);
    zero_params(m);
    m.g_A.b.value.data = {2.5, -1.0, 0.3, -2.0};
    auto p = hyper_params(m, {1.0, 2.0, 3.0, 4.0});
    CHECK(p.mu[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(p.mu[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(p.sigma_diag[0] == doctest::Approx(softplus(0.3)).epsilon(1e-12));
    CHECK(p.sigma_diag[1] == doctest::Approx(softplus(-2.0)).epsilon(1e-12));

    CalibModel mr(tiny_config(), {"a"}, rng);
    std::vector<double> I1{0.3, -0.8, 1.1, 0.4}, I2{-0.6, 0.2, 0.9, -1.3}, I12(4);
    for (int i = 0; i < 4; ++i) I12[i] = I1[i] + I2[i];
    auto p1 = hyper_params(mr, I1), p2 = hyper_params(mr, I2), p12 = hyper_params(mr, I12);
    CHECK(p12.sigma_diag[0] > 0);
    CHECK(p12.sigma_diag[1] > 0);
    // mu is affine in I: mu(I1+I2) = mu(I1) + mu(I2) - b
    for (int j = 0; j < 2; ++j)
        CHECK(p12.mu[j] ==
              doctest::Approx(p1.mu[j] + p2.mu[j] - mr.g_A.b.value.data[j]).epsilon(1e-9));
}

TEST_CASE("elbo matches hand-computed KL + likelihood with fixed noise") {
    Rng rng(7);
    CalibModel m(tiny_config(), {"a"}, rng);
    zero_params(m);
    double s1 = std::log(std::exp(1.0) - 1.0);  // softplus(s1) = 1
    m.sigma_obs_raw.value.data[0] = s1;         // sigma_obs = 1

    std::vector<CalibPoint> batch{{0, 0.3, 1.2}, {0, 0.7, -0.4}, {0, 0.5, 0.9}};
    EpsMap eps{{0, {{0.4, -1.1}, {-0.7, 0.2}}}};

    auto hand_elbo = [&](double mu_w, double mu_b) {
        // sigma_post = 1 => KL = ||mu||^2 / 2
        double kl = 0.5 * (mu_w * mu_w + mu_b * mu_b);
        double nll = 0;
        for (const auto& p : batch) {
            double acc = 0;
            for (const auto& e : eps.at(0)) {
                double w = mu_w + e[0], b = mu_b + e[1];
                acc -= log_normal_pdf(p.y, w * p.cpu + b, 1.0);
            }
            nll += acc / 2.0;  // mean over the two MC draws
        }
        return (kl + nll) / batch.size();
    };

    // q = N(0, I): KL term is exactly zero
    m.g_A.b.value.data = {0.0, 0.0, s1, s1};
    Graph g;
    CHECK(elbo_graph(m, g, batch, eps).val().data[0] ==
          doctest::Approx(hand_elbo(0.0, 0.0)).epsilon(1e-12));

    // q = N(mu, I): KL = ||mu||^2 / 2
    m.g_A.b.value.data = {0.8, -0.5, s1, s1};
    Graph g2;
    CHECK(elbo_graph(m, g2, batch, eps).val().data[0] ==
          doctest::Approx(hand_elbo(0.8, -0.5)).epsilon(1e-12));

    std::vector<CalibPoint> empty;
    Graph g3;
    CHECK_THROWS_AS(elbo_graph(m, g3, empty, eps), DataError);
}

TEST_CASE("elbo MC estimate matches the analytic Gaussian integral within 1%") {
    Rng rng(11);
    CalibModel m(tiny_config(), {"a"}, rng);
    zero_params(m);
    double s1 = std::log(std::exp(1.0) - 1.0);
    m.sigma_obs_raw.value.data[0] = std::log(std::exp(0.5) - 1.0);  // sigma_obs = 0.5
    m.g_A.b.value.data = {1.5, 0.4, s1, std::log(std::exp(0.3) - 1.0)};  // sig = (1, 0.3)

    double x = 0.6, y = 2.0;
    std::vector<CalibPoint> batch{{0, x, y}};
    double sig_o = 0.5;
    double mu_pred = 1.5 * x + 0.4;
    double var_pred = 1.0 * x * x + 0.3 * 0.3;
    double exp_nll = 0.5 * std::log(2 * M_PI * sig_o * sig_o) +
                     ((y - mu_pred) * (y - mu_pred) + var_pred) / (2 * sig_o * sig_o);
    double kl = 0.5 * (1.0 + 1.5 * 1.5 - 1.0 - std::log(1.0)) +
                0.5 * (0.09 + 0.16 - 1.0 - std::log(0.09));
    double analytic = kl + exp_nll;

    Rng mc_rng(2024);
    double mc = elbo_loss(m, batch, 10000, mc_rng);
    CHECK(std::abs(mc - analytic) / std::abs(analytic) < 0.01);
}

TEST_CASE("elbo gradient passes finite differences with noise held fixed") {
    Rng rng(13);
    CalibConfig c = tiny_config();
    c.E = 3;
    c.hidden = 4;
    CalibModel m(c, {"a", "b"}, rng);
    std::vector<CalibPoint> batch{{0, 0.2, 0.8}, {1, 0.6, -0.3}, {0, 0.4, 0.5}};
    EpsMap eps = draw_eps(batch, 3, rng);
    auto params = m.params();

    auto fwd = [&] {
        Graph g;
        return elbo_graph(m, g, batch, eps).val().data[0];
    };
    ad::zero_grad(params);
    Graph g;
    g.backward(elbo_graph(m, g, batch, eps));

    double worst = 0;
    const double h = 1e-5;
    for (Param* p : params) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double orig = p->value.data[i];
            p->value.data[i] = orig + h;
            double fp = fwd();
            p->value.data[i] = orig - h;
            double fm = fwd();
            p->value.data[i] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = p->grad.data[i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("train_calib: recovery of y = 2x + 1 and conjugate oracle agreement") {
    Rng data_rng(101);
    std::vector<CalibRecord> data;
    std::vector<double> xs, ys;
    for (int i = 0; i < 400; ++i) {
        double x = data_rng.uniform(0.2, 0.8);
        double y = 2.0 * x + 1.0 + 0.1 * data_rng.gaussian();
        data.push_back({"svc", x, y});
        xs.push_back(x);
        ys.push_back(y);
    }
    // a sparse app that must be excluded with a warning
    data.push_back({"sparse", 0.5, 2.0});
    data.push_back({"sparse", 0.6, 2.2});

    CalibConfig cfg = tiny_config();
    cfg.steps = 2500;
    cfg.batch = 128;
    cfg.lr = 2e-2;
    cfg.standardize_y = false;
    Rng rng(55);
    auto [model, res] = train_calib(data, cfg, rng);

    CHECK(res.excluded == std::vector<std::string>{"sparse"});
    CHECK(model.app_ids == std::vector<std::string>{"svc"});
    double head = res.elbo_curve[0];
    double tail = (res.elbo_curve[2498] + res.elbo_curve[2499]) / 2;
    CHECK(tail < head);

    PosteriorParams post = posterior_for(model, 0);
    CHECK(std::abs(post.mu[0] - 2.0) <= 3 * post.sigma_diag[0] + 0.1);
    CHECK(std::abs(post.mu[1] - 1.0) <= 3 * post.sigma_diag[1] + 0.1);

    auto oracle = conjugate_posterior_mean(xs, ys, model.sigma_obs());
    CHECK(std::abs(post.mu[0] - oracle[0]) / std::abs(oracle[0]) < 0.05);
    CHECK(std::abs(post.mu[1] - oracle[1]) / std::abs(oracle[1]) < 0.05);

    // same seed, same run
    Rng rng2(55);
    auto [model2, res2] = train_calib(data, cfg, rng2);
    CHECK(res2.elbo_curve == res.elbo_curve);

    std::vector<CalibRecord> none;
    Rng r3(1);
    CHECK_THROWS_AS(train_calib(none, cfg, r3), DataError);
}

TEST_CASE("predict_bounds: degenerate posterior, ordering, CLT, affine mean") {
    Rng rng(17);
    CalibModel m(tiny_config(), {"a"}, rng);
    zero_params(m);
    m.g_A.b.value.data = {500.0, 10.0, -40.0, -40.0};  // sigma ~ softplus(-40) ~ 4e-18

    Rng call(1);
    PodWorkloadBounds b = predict_bounds(m, "a", 0.5, 100, 2.0, call);
    CHECK(b.mean == doctest::Approx(260.0).epsilon(1e-9));
    CHECK(b.std <= 1e-9);
    CHECK(b.lo == doctest::Approx(260.0).epsilon(1e-9));
    CHECK(b.hi == doctest::Approx(260.0).epsilon(1e-9));

    CalibModel mr(tiny_config(), {"a"}, rng);
    Rng c2(2);
    PodWorkloadBounds br = predict_bounds(mr, "a", 0.4, 5000, 1.645, c2);
    CHECK(br.lo <= br.mean);
    CHECK(br.mean <= br.hi);

    // CLT: sample mean near mu_w*x + mu_b within 3 standard errors
    PosteriorParams post = posterior_for(mr, 0);
    double x = 0.4;
    double true_mean = post.mu[0] * x + post.mu[1];
    double true_std = std::sqrt(post.sigma_diag[0] * post.sigma_diag[0] * x * x +
                                post.sigma_diag[1] * post.sigma_diag[1]);
    Rng c3(3);
    PodWorkloadBounds big = predict_bounds(mr, "a", x, 100000, 1.645, c3);
    CHECK(std::abs(big.mean - true_mean) <= 3 * true_std / std::sqrt(100000.0));

    // identical per-call rng => sampled (w, b) sets match => mean affine in target
    auto mean_at = [&](double t) {
        Rng cr(99);
        return predict_bounds(mr, "a", t, 2000, 1.645, cr).mean;
    };
    double m1 = mean_at(0.2), m2 = mean_at(0.4), m3 = mean_at(0.6);
    CHECK(std::abs(m1 + m3 - 2 * m2) <= 1e-9);

    Rng c4(4);
    CHECK_THROWS_AS(predict_bounds(mr, "nope", 0.5, 100, 1.645, c4), DataError);
    CHECK_THROWS_AS(predict_bounds(mr, "a", 0.0, 100, 1.645, c4), ConfigError);
    CHECK_THROWS_AS(predict_bounds(mr, "a", 1.5, 100, 1.645, c4), ConfigError);
    CHECK_THROWS_AS(predict_bounds(mr, "a", 0.5, 1, 1.645, c4), ConfigError);
}

TEST_CASE("calibration checkpoint round-trip") {
    Rng rng(23);
    CalibModel m(tiny_config(), {"a", "b", "c"}, rng);
    m.y_scaler = {120.0, 30.0};
    std::string path = "/tmp/fsa_calib_ckpt_test.bin";
    save_model(m, path);
    CalibModel back = load_model(path);
    std::remove(path.c_str());

    CHECK(back.app_ids == m.app_ids);
    CHECK(back.y_scaler.mean == 120.0);
    auto p1 = m.params(), p2 = back.params();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value.data == p2[i]->value.data);

    Rng ca(5), cb(5);
    PodWorkloadBounds ba = predict_bounds(m, "b", 0.5, 500, 1.645, ca);
    PodWorkloadBounds bb = predict_bounds(back, "b", 0.5, 500, 1.645, cb);
    CHECK(ba.mean == bb.mean);
    CHECK(ba.std == bb.std);
}
