#pragma once

#include <functional>
#include <vector>

#include "fsa/tensor.hpp"

namespace fsa::ad {

class Graph;

// Lightweight handle into a graph node.
struct Var {
    Graph* g = nullptr;
    int id = -1;
    const Tensor& val() const;
};

// Tape of tensor operations. Node ids are topological by construction, so
// backward() is a single reverse sweep. One graph per training step; grads of
// bound Params accumulate across graphs until zero_grad.
class Graph {
  public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Graph&, int)> back;  // nullptr for leaves
        Param* bound = nullptr;
    };

    std::vector<Node> nodes;

    int add(Tensor value, std::vector<int> parents,
            std::function<void(Graph&, int)> back, Param* bound = nullptr);

    Tensor& val(int id) { return nodes[id].value; }
    Tensor& grd(int id) { return nodes[id].grad; }

    // Reverse-mode sweep from a scalar loss; populates node grads and adds
    // into every bound Param's grad buffer.
    void backward(Var loss);

    Var leaf(Tensor t);
    Var param(Param& p);
};

// ---- elementwise / arithmetic ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var relu(Var a);
Var softplus(Var a);
Var tanh_op(Var a);
Var sigmoid(Var a);
Var exp_op(Var a);
Var log_op(Var a);
Var square(Var a);
Var clamp_min(Var a, double lo);

// ---- shape / linear algebra ----
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_rowvec(Var m, Var v);  // broadcast 1xC (or C) over rows of m
Var slice_rows(Var a, int r0, int r1);  // half-open
Var slice_cols(Var a, int c0, int c1);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var reshape(Var a, std::vector<int> shape);

// ---- reductions ----
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);  // flat inner product -> scalar
Var logsumexp(Var a);   // over all elements -> scalar
Var maxpool_rows(Var a);  // [T x C] -> [1 x C]
Var mean_rows(Var a);     // [T x C] -> [1 x C]

// ---- softmax ----
Var softmax_rows(Var a);
// Row-wise softmax restricted to j <= i (additive -inf mask on the strict
// upper triangle); entries above the diagonal are exactly 0.
Var causal_softmax_rows(Var a);

// ---- sequence ops ----
// x: [T x Cin], kernel: [k x Cin x Cout]. Left-padded so output t depends
// only on inputs at positions <= t; tap k-1 aligns with the current step.
Var dilated_causal_conv(Var x, Var kernel, int dilation);

// Scaled dot-product attention over [T x d] with optional causal mask.
// Throws NumericError on non-finite inputs.
Var attention(Var q, Var k, Var v, bool causal);

// |DFT(x)|[0 .. n/2] of a flat vector; differentiable.
Var fft_magnitude(Var x);

// 0.5*log(2*pi*sigma^2) + (y-mu)^2/(2 sigma^2), per element, mean over all.
// sigma is floored at 1e-6.
Var gaussian_nll(const Tensor& y, Var mu, Var sigma);

}  // namespace fsa::ad
