#pragma once

#include <string>
#include <vector>

#include "fsa/graph.hpp"
#include "fsa/rng.hpp"

namespace fsa::ad {

Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

struct Dense {
    Param W, b;
    Dense() = default;
    Dense(const std::string& name, int in, int out, Rng& rng);
    Var operator()(Var x) const;  // x: [T x in] -> [T x out]
    void collect(std::vector<Param*>& out);
};

// two-layer perceptron with ReLU
struct Mlp {
    Dense l1, l2;
    Mlp() = default;
    Mlp(const std::string& name, int in, int hidden, int out, Rng& rng);
    Var operator()(Var x) const;
    void collect(std::vector<Param*>& out);
};

// Gated recurrent (GRU) cell parameters, unrolled left to right.
struct Gru {
    int in = 0, hidden = 0;
    Dense xz, hz, xr, hr, xh, hh;
    Gru() = default;
    Gru(const std::string& name, int in_dim, int hidden_dim, Rng& rng);
    // h, x_row: [1 x H], [1 x F] -> next state [1 x H]
    Var step(Var x_row, Var h) const;
    void collect(std::vector<Param*>& out);
};

// h_t for t = 1..T; h_0 = 0. Output [T x H].
Var recurrent_encode(Var x, const Gru& cell);
// also returns intermediate handle to the final state
std::pair<Var, Var> recurrent_encode_with_last(Var x, const Gru& cell);

struct MultiHeadAttention {
    int dim = 0, heads = 0;
    Dense wq, wk, wv, wo;
    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, int dim_, int heads_, Rng& rng);
    Var operator()(Var x, bool causal) const;  // self-attention over [T x dim]
    Var apply(Var q_in, Var kv_in, bool causal) const;
    void collect(std::vector<Param*>& out);
};

}  // namespace fsa::ad
