#include "fsa/nn.hpp"

#include <cmath>

#include "fsa/errors.hpp"

namespace fsa::ad {

Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data) v = rng.uniform(-lim, lim);
    return t;
}

Dense::Dense(const std::string& name, int in, int out, Rng& rng)
    : W(name + ".W", glorot({in, out}, in, out, rng)),
      b(name + ".b", Tensor::zeros({out})) {}

Var Dense::operator()(Var x) const {
    return add_rowvec(matmul(x, x.g->param(const_cast<Param&>(W))),
                      x.g->param(const_cast<Param&>(b)));
}

void Dense::collect(std::vector<Param*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

Mlp::Mlp(const std::string& name, int in, int hidden, int out, Rng& rng)
    : l1(name + ".l1", in, hidden, rng), l2(name + ".l2", hidden, out, rng) {}

Var Mlp::operator()(Var x) const { return l2(relu(l1(x))); }

void Mlp::collect(std::vector<Param*>& out) {
    l1.collect(out);
    l2.collect(out);
}

Gru::Gru(const std::string& name, int in_dim, int hidden_dim, Rng& rng)
    : in(in_dim),
      hidden(hidden_dim),
      xz(name + ".xz", in_dim, hidden_dim, rng),
      hz(name + ".hz", hidden_dim, hidden_dim, rng),
      xr(name + ".xr", in_dim, hidden_dim, rng),
      hr(name + ".hr", hidden_dim, hidden_dim, rng),
      xh(name + ".xh", in_dim, hidden_dim, rng),
      hh(name + ".hh", hidden_dim, hidden_dim, rng) {}

Var Gru::step(Var x_row, Var h) const {
    Var z = sigmoid(add(xz(x_row), hz(h)));
    Var r = sigmoid(add(xr(x_row), hr(h)));
    Var cand = tanh_op(add(xh(x_row), hh(mul(r, h))));
    // h' = (1-z) .* h + z .* cand
    Var one_minus_z = add_scalar(neg(z), 1.0);
    return add(mul(one_minus_z, h), mul(z, cand));
}

void Gru::collect(std::vector<Param*>& out) {
    xz.collect(out);
    hz.collect(out);
    xr.collect(out);
    hr.collect(out);
    xh.collect(out);
    hh.collect(out);
}

std::pair<Var, Var> recurrent_encode_with_last(Var x, const Gru& cell) {
    const Tensor& X = x.val();
    if (X.shape.size() != 2 || X.shape[1] != cell.in)
        throw NumericError("recurrent_encode: input width mismatch");
    int T = X.shape[0];
    Var h = x.g->leaf(Tensor::zeros({1, cell.hidden}));
    std::vector<Var> states;
    states.reserve(T);
    for (int t = 0; t < T; ++t) {
        h = cell.step(slice_rows(x, t, t + 1), h);
        states.push_back(h);
    }
    return {concat_rows(states), h};
}

Var recurrent_encode(Var x, const Gru& cell) {
    return recurrent_encode_with_last(x, cell).first;
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim_, int heads_, Rng& rng)
    : dim(dim_),
      heads(heads_),
      wq(name + ".wq", dim_, dim_, rng),
      wk(name + ".wk", dim_, dim_, rng),
      wv(name + ".wv", dim_, dim_, rng),
      wo(name + ".wo", dim_, dim_, rng) {
    if (dim_ % heads_ != 0) throw NumericError("attention: dim must divide by heads");
}

Var MultiHeadAttention::apply(Var q_in, Var kv_in, bool causal) const {
    Var q = wq(q_in), k = wk(kv_in), v = wv(kv_in);
    int hd = dim / heads;
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        int c0 = h * hd, c1 = (h + 1) * hd;
        outs.push_back(attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1),
                                 slice_cols(v, c0, c1), causal));
    }
    return wo(concat_cols(outs));
}

Var MultiHeadAttention::operator()(Var x, bool causal) const { return apply(x, x, causal); }

void MultiHeadAttention::collect(std::vector<Param*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

}  // namespace fsa::ad
