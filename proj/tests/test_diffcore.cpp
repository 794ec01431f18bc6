#include <cmath>
#include <functional>

#include "doctest.h"
#include "fsa/adam.hpp"
#include "fsa/errors.hpp"
#include "fsa/fft.hpp"
#include "fsa/graph.hpp"
#include "fsa/nn.hpp"
#include "fsa/rng.hpp"

using namespace fsa;
using namespace fsa::ad;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// central finite differences against reverse-mode grads
double max_rel_grad_error(std::vector<Param*> params,
                          const std::function<double()>& forward_loss,
                          const std::function<void()>& backward_once, double h = 1e-5) {
    zero_grad(params);
    backward_once();
    double worst = 0.0;
    for (Param* p : params) {
        for (int64_t i = 0; i < p->value.size(); ++i) {
            double orig = p->value.data[i];
            p->value.data[i] = orig + h;
            double fp = forward_loss();
            p->value.data[i] = orig - h;
            double fm = forward_loss();
            p->value.data[i] = orig;
            double fd = (fp - fm) / (2 * h);
            double ad = p->grad.data[i];
            double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
            worst = std::max(worst, std::abs(fd - ad) / denom);
        }
    }
    return worst;
}

// nested-loop convolution oracle
Tensor conv_oracle(const Tensor& x, const Tensor& w, int dilation) {
    int T = x.shape[0], cin = x.shape[1], k = w.shape[0], cout = w.shape[2];
    Tensor y = Tensor::zeros({T, cout});
    for (int t = 0; t < T; ++t)
        for (int co = 0; co < cout; ++co)
            for (int j = 0; j < k; ++j)
                for (int ci = 0; ci < cin; ++ci) {
                    int src = t - (k - 1 - j) * dilation;
                    if (src >= 0) y(t, co) += x(src, ci) * w.at3(j, ci, co);
                }
    return y;
}

// per-row softmax attention oracle
Tensor attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
    int T = q.shape[0], d = q.shape[1];
    Tensor out = Tensor::zeros({T, static_cast<int>(v.shape[1])});
    for (int i = 0; i < T; ++i) {
        int hi = causal ? i + 1 : T;
        std::vector<double> logits(hi);
        double m = -1e300;
        for (int j = 0; j < hi; ++j) {
            double s = 0;
            for (int c = 0; c < d; ++c) s += q(i, c) * k(j, c);
            logits[j] = s / std::sqrt(static_cast<double>(d));
            m = std::max(m, logits[j]);
        }
        double z = 0;
        for (int j = 0; j < hi; ++j) z += std::exp(logits[j] - m);
        for (int j = 0; j < hi; ++j) {
            double p = std::exp(logits[j] - m) / z;
            for (int c = 0; c < v.shape[1]; ++c) out(i, c) += p * v(j, c);
        }
    }
    return out;
}

std::vector<double> naive_dft_magnitude(const std::vector<double>& x) {
    size_t n = x.size();
    std::vector<double> out(n / 2 + 1);
    for (size_t j = 0; j < out.size(); ++j) {
        double re = 0, im = 0;
        for (size_t t = 0; t < n; ++t) {
            double th = 2.0 * M_PI * j * t / n;
            re += x[t] * std::cos(th);
            im -= x[t] * std::sin(th);
        }
        out[j] = std::hypot(re, im);
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_CASE("dilated causal conv: identity kernel") {
    Graph g;
    Rng rng(1);
    Tensor x = random_tensor({8, 1}, rng);
    Tensor w = Tensor::zeros({1, 1, 1});
    w.data[0] = 1.0;
    Var y = dilated_causal_conv(g.leaf(x), g.leaf(w), 1);
    CHECK(max_abs_diff(y.val(), x) == doctest::Approx(0.0));
}

TEST_CASE("dilated causal conv: impulse response at offsets {0, 2}") {
    Graph g;
    Tensor x = Tensor::zeros({8, 1});
    x(0, 0) = 1.0;
    Tensor w = Tensor::zeros({2, 1, 1});
    w.at3(0, 0, 0) = 0.5;  // older tap, offset = dilation
    w.at3(1, 0, 0) = 2.0;  // current tap
    Var y = dilated_causal_conv(g.leaf(x), g.leaf(w), 2);
    CHECK(y.val()(0, 0) == doctest::Approx(2.0));
    CHECK(y.val()(1, 0) == doctest::Approx(0.0));
    CHECK(y.val()(2, 0) == doctest::Approx(0.5));
    for (int t = 3; t < 8; ++t) CHECK(y.val()(t, 0) == doctest::Approx(0.0));
}

TEST_CASE("dilated causal conv vs nested-loop oracle") {
    Rng rng(7);
    for (int dilation : {1, 2, 4}) {
        Graph g;
        Tensor x = random_tensor({20, 3}, rng);
        Tensor w = random_tensor({3, 3, 5}, rng);
        Var y = dilated_causal_conv(g.leaf(x), g.leaf(w), dilation);
        CHECK(max_abs_diff(y.val(), conv_oracle(x, w, dilation)) <= 1e-12);
    }
}

TEST_CASE("masked attention: single row equals V") {
    Graph g;
    Rng rng(2);
    Tensor q = random_tensor({1, 4}, rng), k = random_tensor({1, 4}, rng),
           v = random_tensor({1, 4}, rng);
    Var s = attention(g.leaf(q), g.leaf(k), g.leaf(v), true);
    CHECK(max_abs_diff(s.val(), v) <= 1e-15);
}

TEST_CASE("masked attention: zero Q gives prefix means of V") {
    Graph g;
    Rng rng(3);
    Tensor q = Tensor::zeros({5, 4});
    Tensor k = random_tensor({5, 4}, rng), v = random_tensor({5, 2}, rng);
    Var s = attention(g.leaf(q), g.leaf(k), g.leaf(v), true);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < 2; ++c) {
            double m = 0;
            for (int j = 0; j <= t; ++j) m += v(j, c);
            m /= (t + 1);
            CHECK(s.val()(t, c) == doctest::Approx(m).epsilon(1e-12));
        }
}

TEST_CASE("masked attention vs naive oracle") {
    Rng rng(4);
    Graph g;
    Tensor q = random_tensor({12, 6}, rng), k = random_tensor({12, 6}, rng),
           v = random_tensor({12, 6}, rng);
    Var s = attention(g.leaf(q), g.leaf(k), g.leaf(v), true);
    CHECK(max_abs_diff(s.val(), attention_oracle(q, k, v, true)) <= 1e-12);
    Graph g2;
    Var s2 = attention(g2.leaf(q), g2.leaf(k), g2.leaf(v), false);
    CHECK(max_abs_diff(s2.val(), attention_oracle(q, k, v, false)) <= 1e-12);
}

TEST_CASE("masked attention: causality under future perturbation") {
    Rng rng(5);
    Tensor q = random_tensor({10, 4}, rng), k = random_tensor({10, 4}, rng),
           v = random_tensor({10, 4}, rng);
    Graph g;
    Tensor base = attention(g.leaf(q), g.leaf(k), g.leaf(v), true).val();
    Tensor q2 = q, k2 = k, v2 = v;
    for (int c = 0; c < 4; ++c) {
        q2(7, c) += 10;
        k2(7, c) -= 3;
        v2(7, c) += 5;
    }
    Graph g2;
    Tensor pert = attention(g2.leaf(q2), g2.leaf(k2), g2.leaf(v2), true).val();
    for (int t = 0; t < 7; ++t)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(base(t, c) - pert(t, c)) <= 1e-12);
}

TEST_CASE("attention rejects non-finite input") {
    Graph g;
    Tensor q = Tensor::zeros({2, 2});
    q(0, 0) = std::nan("");
    Tensor k = Tensor::zeros({2, 2}), v = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(attention(g.leaf(q), g.leaf(k), g.leaf(v), true), NumericError);
}

TEST_CASE("fft magnitude: constant vector is DC only") {
    Graph g;
    Var y = fft_magnitude(g.leaf(Tensor::vec(std::vector<double>(8, 3.0))));
    CHECK(y.val().data[0] == doctest::Approx(24.0));
    for (int j = 1; j <= 4; ++j) CHECK(y.val().data[j] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fft magnitude: unit impulse is flat") {
    Graph g;
    std::vector<double> x(16, 0.0);
    x[0] = 1.0;
    Var y = fft_magnitude(g.leaf(Tensor::vec(x)));
    for (double v : y.val().data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("fft magnitude vs naive DFT, n=1024 and non-power-of-two") {
    Rng rng(6);
    for (int n : {1024, 300, 7}) {
        std::vector<double> x(n);
        for (auto& v : x) v = rng.uniform(-1, 1);
        Graph g;
        Var y = fft_magnitude(g.leaf(Tensor::vec(x)));
        auto ref = naive_dft_magnitude(x);
        for (size_t j = 0; j < ref.size(); ++j)
            CHECK(std::abs(y.val().data[j] - ref[j]) <= 1e-9);
    }
}

TEST_CASE("fft satisfies Parseval against naive DFT") {
    Rng rng(8);
    int n = 256;
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1, 1);
    auto spec = fft::dft(x);
    double lhs = 0, rhs = 0;
    for (double v : x) lhs += v * v;
    for (const auto& z : spec) rhs += std::norm(z);
    rhs /= n;
    CHECK(std::abs(lhs - rhs) / lhs <= 1e-9);
}

TEST_CASE("recurrent encode: zero weights give activation(0)") {
    Rng rng(9);
    Gru cell("gru", 2, 3, rng);
    for (auto* d : {&cell.xz, &cell.hz, &cell.xr, &cell.hr, &cell.xh, &cell.hh}) {
        std::fill(d->W.value.data.begin(), d->W.value.data.end(), 0.0);
        std::fill(d->b.value.data.begin(), d->b.value.data.end(), 0.0);
    }
    Graph g;
    Var h = recurrent_encode(g.leaf(Tensor::mat(1, 2, {1.0, -1.0})), cell);
    // z = sigmoid(0) = 0.5, cand = tanh(0) = 0, h0 = 0 -> h1 = 0
    for (double v : h.val().data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("recurrent encode: causality and per-step oracle") {
    Rng rng(10);
    Gru cell("gru", 3, 4, rng);
    Tensor x = random_tensor({6, 3}, rng);
    Graph g;
    Tensor hs = recurrent_encode(g.leaf(x), cell).val();

    // step-by-step oracle
    Graph g2;
    Var h = g2.leaf(Tensor::zeros({1, 4}));
    for (int t = 0; t < 6; ++t) {
        h = cell.step(g2.leaf(Tensor::mat(1, 3, {x(t, 0), x(t, 1), x(t, 2)})), h);
        for (int c = 0; c < 4; ++c) CHECK(std::abs(hs(t, c) - h.val()(0, c)) <= 1e-12);
    }

    // perturbing the future leaves earlier states unchanged
    Tensor x2 = x;
    x2(4, 1) += 100.0;
    Graph g3;
    Tensor hs2 = recurrent_encode(g3.leaf(x2), cell).val();
    for (int t = 0; t < 4; ++t)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(hs(t, c) - hs2(t, c)) <= 1e-12);
}

TEST_CASE("gaussian nll analytic values") {
    Graph g;
    double sig = 1.0 / std::sqrt(2.0 * M_PI);
    Var nll = gaussian_nll(Tensor::scalar(0.7), g.leaf(Tensor::scalar(0.7)),
                           g.leaf(Tensor::scalar(sig)));
    CHECK(nll.val().data[0] == doctest::Approx(0.0).epsilon(1e-12));

    double s = 0.8;
    Var nll2 = gaussian_nll(Tensor::scalar(1.0 + s), g.leaf(Tensor::scalar(1.0)),
                            g.leaf(Tensor::scalar(s)));
    CHECK(nll2.val().data[0] == doctest::Approx(0.5 * std::log(2 * M_PI * s * s) + 0.5));
}

TEST_CASE("gaussian nll gradient wrt mu vanishes at y = mu") {
    Param mu("mu", Tensor::scalar(2.5));
    Graph g;
    Var nll = gaussian_nll(Tensor::scalar(2.5), g.param(mu), g.leaf(Tensor::scalar(1.3)));
    g.backward(nll);
    CHECK(mu.grad.data[0] == doctest::Approx(0.0));
}

TEST_CASE("backward: f(x)=x^2 at 3 gives 6") {
    Param x("x", Tensor::scalar(3.0));
    Graph g;
    Var loss = square(g.param(x));
    g.backward(loss);
    CHECK(x.grad.data[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: softmax gradient rows sum to zero") {
    Rng rng(11);
    Param x("x", random_tensor({1, 5}, rng));
    Tensor v = random_tensor({5, 1}, rng);
    Graph g;
    Var loss = sum(matmul(softmax_rows(g.param(x)), g.leaf(v)));
    g.backward(loss);
    double s = 0;
    for (double gv : x.grad.data) s += gv;
    CHECK(std::abs(s) <= 1e-12);
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    Var v = g.leaf(Tensor::vec({1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(v), NumericError);
}

TEST_CASE("finite differences: composite model through every op family") {
    Rng rng(12);
    Param wconv("wconv", random_tensor({2, 2, 4}, rng, 0.5));
    Param wdense("wdense", random_tensor({4, 4}, rng, 0.5));
    Param bdense("bdense", random_tensor({4}, rng, 0.5));
    Param wsig("wsig", random_tensor({4, 1}, rng, 0.5));
    Gru cell("gru", 4, 4, rng);
    Tensor x = random_tensor({7, 2}, rng);
    Tensor y_obs = random_tensor({7, 1}, rng);

    std::vector<Param*> params{&wconv, &wdense, &bdense, &wsig};
    cell.collect(params);

    auto build = [&](Graph& g) {
        Var h = dilated_causal_conv(g.leaf(x), g.param(wconv), 2);
        h = attention(h, h, h, true);
        h = add_rowvec(matmul(h, g.param(wdense)), g.param(bdense));
        h = relu(h);
        h = recurrent_encode(h, cell);
        Var spec = fft_magnitude(reshape(slice_cols(h, 0, 1), {7}));
        Var mu = slice_cols(h, 1, 2);
        Var sigma = add_scalar(softplus(matmul(h, g.param(wsig))), 1e-3);
        return add(gaussian_nll(y_obs, mu, sigma), mean(spec));
    };
    auto fwd = [&]() {
        Graph g;
        return build(g).val().data[0];
    };
    auto bwd = [&]() {
        Graph g;
        g.backward(build(g));
    };
    CHECK(max_rel_grad_error(params, fwd, bwd) <= 1e-4);
}

TEST_CASE("finite differences: contrastive-style logsumexp losses") {
    Rng rng(13);
    Param a("a", random_tensor({3, 4}, rng));
    Param b("b", random_tensor({3, 4}, rng));
    std::vector<Param*> params{&a, &b};
    auto build = [&](Graph& g) {
        Var av = g.param(a), bv = g.param(b);
        Var logits = matmul(av, transpose(bv));
        return sub(logsumexp(logits), dot(slice_rows(av, 0, 1), slice_rows(bv, 0, 1)));
    };
    auto fwd = [&]() {
        Graph g;
        return build(g).val().data[0];
    };
    auto bwd = [&]() {
        Graph g;
        g.backward(build(g));
    };
    CHECK(max_rel_grad_error(params, fwd, bwd) <= 1e-4);
}

TEST_CASE("adam: zero gradient leaves params unchanged, step count advances") {
    Param p("p", Tensor::vec({1.0, -2.0}));
    Adam opt(0.1);
    zero_grad({&p});
    opt.step({&p});
    CHECK(opt.t == 1);
    CHECK(p.value.data[0] == doctest::Approx(1.0));
    CHECK(p.value.data[1] == doctest::Approx(-2.0));
}

TEST_CASE("adam: first step is approximately -lr * sign(g)") {
    Param p("p", Tensor::vec({0.0, 0.0}));
    p.grad.data = {3.0, -0.5};
    Adam opt(0.01);
    opt.step({&p});
    CHECK(p.value.data[0] == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(p.value.data[1] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam: NaN gradient names the parameter") {
    Param p("offender", Tensor::vec({0.0}));
    p.grad.data = {std::nan("")};
    Adam opt;
    CHECK_THROWS_WITH_AS(opt.step({&p}), doctest::Contains("offender"), NumericError);
}

TEST_CASE("adam: identical runs give identical trajectories") {
    auto run = [] {
        Rng rng(55);
        Param p("p", random_tensor({4}, rng));
        Adam opt(0.05);
        for (int it = 0; it < 20; ++it) {
            zero_grad({&p});
            Graph g;
            Var loss = sum(square(g.param(p)));
            g.backward(loss);
            opt.step({&p});
        }
        return p.value.data;
    };
    CHECK(run() == run());
}
