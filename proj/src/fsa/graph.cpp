#include "fsa/graph.hpp"

#include <algorithm>
#include <cmath>

#include "fsa/errors.hpp"
#include "fsa/fft.hpp"

namespace fsa::ad {

const Tensor& Var::val() const { return g->nodes[id].value; }

int Graph::add(Tensor value, std::vector<int> parents,
               std::function<void(Graph&, int)> back, Param* bound) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.back = std::move(back);
    n.bound = bound;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

Var Graph::leaf(Tensor t) { return Var{this, add(std::move(t), {}, nullptr)}; }

Var Graph::param(Param& p) { return Var{this, add(p.value, {}, nullptr, &p)}; }

void Graph::backward(Var loss) {
    if (loss.g != this) throw NumericError("backward: loss from a different graph");
    const Tensor& lv = nodes[loss.id].value;
    if (lv.size() != 1) throw NumericError("backward: loss must be scalar");
    if (!std::isfinite(lv.data[0])) throw NumericError("backward: loss is not finite");

    for (auto& n : nodes) n.grad = Tensor::zeros(n.value.shape);
    nodes[loss.id].grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (nodes[id].back) nodes[id].back(*this, id);
    }
    for (auto& n : nodes) {
        if (n.bound) {
            for (int64_t i = 0; i < n.grad.size(); ++i) n.bound->grad.data[i] += n.grad.data[i];
        }
    }
}

static void check_same_graph(Var a, Var b) {
    if (a.g != b.g) throw NumericError("operands from different graphs");
}

// ---------------- elementwise helpers ----------------

template <typename F, typename DF>
static Var unary(Var a, F f, DF df) {
    const Tensor& x = a.val();
    Tensor y = Tensor::zeros(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
    int id = a.g->add(std::move(y), {a.id}, [df](Graph& g, int self) {
        auto& n = g.nodes[self];
        Tensor& pg = g.grd(n.parents[0]);
        const Tensor& x = g.val(n.parents[0]);
        const Tensor& y = n.value;
        for (int64_t i = 0; i < x.size(); ++i)
            pg.data[i] += n.grad.data[i] * df(x.data[i], y.data[i]);
    });
    return Var{a.g, id};
}

template <typename F, typename DA, typename DB>
static Var binary(Var a, Var b, F f, DA da, DB db) {
    check_same_graph(a, b);
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    if (!x.same_shape(y)) throw NumericError("elementwise op: shape mismatch");
    Tensor z = Tensor::zeros(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) z.data[i] = f(x.data[i], y.data[i]);
    int id = a.g->add(std::move(z), {a.id, b.id}, [da, db](Graph& g, int self) {
        auto& n = g.nodes[self];
        Tensor& ga = g.grd(n.parents[0]);
        Tensor& gb = g.grd(n.parents[1]);
        const Tensor& x = g.val(n.parents[0]);
        const Tensor& y = g.val(n.parents[1]);
        for (int64_t i = 0; i < x.size(); ++i) {
            ga.data[i] += n.grad.data[i] * da(x.data[i], y.data[i]);
            gb.data[i] += n.grad.data[i] * db(x.data[i], y.data[i]);
        }
    });
    return Var{a.g, id};
}

Var add(Var a, Var b) {
    return binary(a, b, [](double x, double y) { return x + y; },
                  [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}
Var sub(Var a, Var b) {
    return binary(a, b, [](double x, double y) { return x - y; },
                  [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}
Var mul(Var a, Var b) {
    return binary(a, b, [](double x, double y) { return x * y; },
                  [](double, double y) { return y; }, [](double x, double) { return x; });
}
Var div(Var a, Var b) {
    return binary(a, b, [](double x, double y) { return x / y; },
                  [](double, double y) { return 1.0 / y; },
                  [](double x, double y) { return -x / (y * y); });
}
Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}
Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
Var neg(Var a) { return scale(a, -1.0); }
Var relu(Var a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
Var softplus(Var a) {
    return unary(a,
                 [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
                 [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}
Var tanh_op(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}
Var sigmoid(Var a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}
Var exp_op(Var a) {
    return unary(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}
Var log_op(Var a) {
    return unary(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}
Var square(Var a) {
    return unary(a, [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
}
Var clamp_min(Var a, double lo) {
    return unary(a, [lo](double x) { return x < lo ? lo : x; },
                 [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---------------- linear algebra ----------------

Var matmul(Var a, Var b) {
    check_same_graph(a, b);
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
        throw NumericError("matmul: shape mismatch");
    int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor C = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = A(i, p);
            if (av == 0.0) continue;
            const double* brow = &B.data[static_cast<size_t>(p) * n];
            double* crow = &C.data[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    int id = a.g->add(std::move(C), {a.id, b.id}, [m, k, n](Graph& g, int self) {
        auto& nd = g.nodes[self];
        const Tensor& G = nd.grad;
        const Tensor& A = g.val(nd.parents[0]);
        const Tensor& B = g.val(nd.parents[1]);
        Tensor& dA = g.grd(nd.parents[0]);
        Tensor& dB = g.grd(nd.parents[1]);
        // dA += G B^T
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double gv = G(i, j);
                if (gv == 0.0) continue;
                for (int p = 0; p < k; ++p) dA.data[static_cast<size_t>(i) * k + p] += gv * B(p, j);
            }
        // dB += A^T G
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = A(i, p);
                if (av == 0.0) continue;
                for (int j = 0; j < n; ++j) dB.data[static_cast<size_t>(p) * n + j] += av * G(i, j);
            }
    });
    return Var{a.g, id};
}

Var transpose(Var a) {
    const Tensor& A = a.val();
    if (A.shape.size() != 2) throw NumericError("transpose: rank-2 only");
    int m = A.shape[0], n = A.shape[1];
    Tensor T = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) T(j, i) = A(i, j);
    int id = a.g->add(std::move(T), {a.id}, [m, n](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) pg.data[static_cast<size_t>(i) * n + j] += nd.grad(j, i);
    });
    return Var{a.g, id};
}

Var add_rowvec(Var m, Var v) {
    check_same_graph(m, v);
    const Tensor& M = m.val();
    const Tensor& V = v.val();
    int rows = M.rows(), cols = M.cols();
    if (V.size() != cols) throw NumericError("add_rowvec: width mismatch");
    Tensor Y = M;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) Y(i, j) += V.data[j];
    int id = m.g->add(std::move(Y), {m.id, v.id}, [rows, cols](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& gm = g.grd(nd.parents[0]);
        Tensor& gv = g.grd(nd.parents[1]);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                double gg = nd.grad(i, j);
                gm.data[static_cast<size_t>(i) * cols + j] += gg;
                gv.data[j] += gg;
            }
    });
    return Var{m.g, id};
}

Var slice_rows(Var a, int r0, int r1) {
    const Tensor& A = a.val();
    int cols = A.cols();
    if (r0 < 0 || r1 > A.rows() || r0 >= r1) throw NumericError("slice_rows: bad range");
    Tensor Y = Tensor::zeros({r1 - r0, cols});
    std::copy(A.data.begin() + static_cast<size_t>(r0) * cols,
              A.data.begin() + static_cast<size_t>(r1) * cols, Y.data.begin());
    int id = a.g->add(std::move(Y), {a.id}, [r0, cols](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int64_t i = 0; i < nd.grad.size(); ++i)
            pg.data[static_cast<size_t>(r0) * cols + i] += nd.grad.data[i];
    });
    return Var{a.g, id};
}

Var slice_cols(Var a, int c0, int c1) {
    const Tensor& A = a.val();
    int rows = A.rows(), cols = A.cols();
    if (c0 < 0 || c1 > cols || c0 >= c1) throw NumericError("slice_cols: bad range");
    int w = c1 - c0;
    Tensor Y = Tensor::zeros({rows, w});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) Y(i, j) = A(i, c0 + j);
    int id = a.g->add(std::move(Y), {a.id}, [rows, cols, c0, w](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < w; ++j)
                pg.data[static_cast<size_t>(i) * cols + c0 + j] += nd.grad(i, j);
    });
    return Var{a.g, id};
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw NumericError("concat_rows: empty");
    Graph* g = xs[0].g;
    int cols = xs[0].val().cols();
    int rows = 0;
    std::vector<int> parents;
    for (const auto& x : xs) {
        if (x.g != g) throw NumericError("concat_rows: different graphs");
        if (x.val().cols() != cols) throw NumericError("concat_rows: width mismatch");
        rows += x.val().rows();
        parents.push_back(x.id);
    }
    Tensor Y = Tensor::zeros({rows, cols});
    size_t off = 0;
    for (const auto& x : xs) {
        const Tensor& X = x.val();
        std::copy(X.data.begin(), X.data.end(), Y.data.begin() + off);
        off += X.data.size();
    }
    int id = g->add(std::move(Y), parents, [](Graph& g, int self) {
        auto& nd = g.nodes[self];
        size_t off = 0;
        for (int p : nd.parents) {
            Tensor& pg = g.grd(p);
            for (int64_t i = 0; i < pg.size(); ++i) pg.data[i] += nd.grad.data[off + i];
            off += pg.data.size();
        }
    });
    return Var{g, id};
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw NumericError("concat_cols: empty");
    Graph* g = xs[0].g;
    int rows = xs[0].val().rows();
    int cols = 0;
    std::vector<int> parents, widths;
    for (const auto& x : xs) {
        if (x.g != g) throw NumericError("concat_cols: different graphs");
        if (x.val().rows() != rows) throw NumericError("concat_cols: height mismatch");
        widths.push_back(x.val().cols());
        cols += x.val().cols();
        parents.push_back(x.id);
    }
    Tensor Y = Tensor::zeros({rows, cols});
    int coff = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const Tensor& X = xs[k].val();
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < widths[k]; ++j) Y(i, coff + j) = X(i, j);
        coff += widths[k];
    }
    int id = g->add(std::move(Y), parents, [rows, widths](Graph& g, int self) {
        auto& nd = g.nodes[self];
        int coff = 0;
        for (size_t k = 0; k < nd.parents.size(); ++k) {
            Tensor& pg = g.grd(nd.parents[k]);
            int w = widths[k];
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < w; ++j) pg.data[static_cast<size_t>(i) * w + j] += nd.grad(i, coff + j);
            coff += w;
        }
    });
    return Var{g, id};
}

Var reshape(Var a, std::vector<int> shape) {
    const Tensor& A = a.val();
    Tensor Y;
    Y.shape = shape;
    Y.data = A.data;
    int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != A.size()) throw NumericError("reshape: size mismatch");
    int id = a.g->add(std::move(Y), {a.id}, [](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int64_t i = 0; i < pg.size(); ++i) pg.data[i] += nd.grad.data[i];
    });
    return Var{a.g, id};
}

// ---------------- reductions ----------------

Var sum(Var a) {
    const Tensor& A = a.val();
    double s = 0.0;
    for (double x : A.data) s += x;
    int id = a.g->add(Tensor::scalar(s), {a.id}, [](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        double gg = nd.grad.data[0];
        for (auto& v : pg.data) v += gg;
    });
    return Var{a.g, id};
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.val().size())); }

Var dot(Var a, Var b) {
    check_same_graph(a, b);
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.size() != B.size()) throw NumericError("dot: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < A.size(); ++i) s += A.data[i] * B.data[i];
    int id = a.g->add(Tensor::scalar(s), {a.id, b.id}, [](Graph& g, int self) {
        auto& nd = g.nodes[self];
        const Tensor& A = g.val(nd.parents[0]);
        const Tensor& B = g.val(nd.parents[1]);
        Tensor& ga = g.grd(nd.parents[0]);
        Tensor& gb = g.grd(nd.parents[1]);
        double gg = nd.grad.data[0];
        for (int64_t i = 0; i < A.size(); ++i) {
            ga.data[i] += gg * B.data[i];
            gb.data[i] += gg * A.data[i];
        }
    });
    return Var{a.g, id};
}

Var logsumexp(Var a) {
    const Tensor& A = a.val();
    double m = A.data[0];
    for (double x : A.data) m = std::max(m, x);
    double s = 0.0;
    for (double x : A.data) s += std::exp(x - m);
    double out = m + std::log(s);
    int id = a.g->add(Tensor::scalar(out), {a.id}, [out](Graph& g, int self) {
        auto& nd = g.nodes[self];
        const Tensor& A = g.val(nd.parents[0]);
        Tensor& pg = g.grd(nd.parents[0]);
        double gg = nd.grad.data[0];
        for (int64_t i = 0; i < A.size(); ++i) pg.data[i] += gg * std::exp(A.data[i] - out);
    });
    return Var{a.g, id};
}

Var maxpool_rows(Var a) {
    const Tensor& A = a.val();
    int rows = A.rows(), cols = A.cols();
    Tensor Y = Tensor::zeros({1, cols});
    std::vector<int> arg(cols, 0);
    for (int j = 0; j < cols; ++j) {
        double best = A(0, j);
        for (int i = 1; i < rows; ++i)
            if (A(i, j) > best) { best = A(i, j); arg[j] = i; }
        Y(0, j) = best;
    }
    int id = a.g->add(std::move(Y), {a.id}, [arg, cols](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int j = 0; j < cols; ++j)
            pg.data[static_cast<size_t>(arg[j]) * cols + j] += nd.grad.data[j];
    });
    return Var{a.g, id};
}

Var mean_rows(Var a) {
    const Tensor& A = a.val();
    int rows = A.rows(), cols = A.cols();
    Tensor Y = Tensor::zeros({1, cols});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) Y(0, j) += A(i, j) / rows;
    int id = a.g->add(std::move(Y), {a.id}, [rows, cols](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                pg.data[static_cast<size_t>(i) * cols + j] += nd.grad.data[j] / rows;
    });
    return Var{a.g, id};
}

// ---------------- softmax ----------------

static Var softmax_impl(Var a, bool causal) {
    const Tensor& A = a.val();
    int rows = A.rows(), cols = A.cols();
    if (causal && rows != cols) throw NumericError("causal_softmax: square matrix required");
    Tensor Y = Tensor::zeros({rows, cols});
    for (int i = 0; i < rows; ++i) {
        int hi = causal ? i + 1 : cols;
        double m = A(i, 0);
        for (int j = 1; j < hi; ++j) m = std::max(m, A(i, j));
        double s = 0.0;
        for (int j = 0; j < hi; ++j) s += std::exp(A(i, j) - m);
        for (int j = 0; j < hi; ++j) Y(i, j) = std::exp(A(i, j) - m) / s;
    }
    int id = a.g->add(std::move(Y), {a.id}, [rows, cols, causal](Graph& g, int self) {
        auto& nd = g.nodes[self];
        const Tensor& Y = nd.value;
        Tensor& pg = g.grd(nd.parents[0]);
        for (int i = 0; i < rows; ++i) {
            int hi = causal ? i + 1 : cols;
            double inner = 0.0;
            for (int j = 0; j < hi; ++j) inner += nd.grad(i, j) * Y(i, j);
            for (int j = 0; j < hi; ++j)
                pg.data[static_cast<size_t>(i) * cols + j] += Y(i, j) * (nd.grad(i, j) - inner);
        }
    });
    return Var{a.g, id};
}

Var softmax_rows(Var a) { return softmax_impl(a, false); }
Var causal_softmax_rows(Var a) { return softmax_impl(a, true); }

// ---------------- sequence ops ----------------

Var dilated_causal_conv(Var x, Var kernel, int dilation) {
    check_same_graph(x, kernel);
    const Tensor& X = x.val();
    const Tensor& W = kernel.val();
    if (dilation < 1) throw NumericError("dilated_causal_conv: dilation must be >= 1");
    if (X.shape.size() != 2 || W.shape.size() != 3 || W.shape[1] != X.shape[1])
        throw NumericError("dilated_causal_conv: shape mismatch");
    int T = X.shape[0], cin = X.shape[1], k = W.shape[0], cout = W.shape[2];
    Tensor Y = Tensor::zeros({T, cout});
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < k; ++j) {
            int src = t - (k - 1 - j) * dilation;
            if (src < 0) continue;  // causal left padding
            for (int ci = 0; ci < cin; ++ci) {
                double xv = X(src, ci);
                if (xv == 0.0) continue;
                for (int co = 0; co < cout; ++co) Y(t, co) += xv * W.at3(j, ci, co);
            }
        }
    int id = x.g->add(std::move(Y), {x.id, kernel.id},
                      [T, cin, k, cout, dilation](Graph& g, int self) {
        auto& nd = g.nodes[self];
        const Tensor& X = g.val(nd.parents[0]);
        const Tensor& W = g.val(nd.parents[1]);
        Tensor& dX = g.grd(nd.parents[0]);
        Tensor& dW = g.grd(nd.parents[1]);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < k; ++j) {
                int src = t - (k - 1 - j) * dilation;
                if (src < 0) continue;
                for (int ci = 0; ci < cin; ++ci)
                    for (int co = 0; co < cout; ++co) {
                        double gg = nd.grad(t, co);
                        dX.data[static_cast<size_t>(src) * cin + ci] += gg * W.at3(j, ci, co);
                        dW.data[(static_cast<size_t>(j) * cin + ci) * cout + co] += gg * X(src, ci);
                    }
            }
    });
    return Var{x.g, id};
}

Var attention(Var q, Var k, Var v, bool causal) {
    if (!q.val().all_finite() || !k.val().all_finite() || !v.val().all_finite())
        throw NumericError("attention: non-finite inputs");
    int dk = q.val().cols();
    if (dk < 1) throw NumericError("attention: d_K must be positive");
    Var logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
    Var w = causal ? causal_softmax_rows(logits) : softmax_rows(logits);
    return matmul(w, v);
}

Var fft_magnitude(Var x) {
    const Tensor& X = x.val();
    int n = static_cast<int>(X.size());
    auto spec = fft::dft(X.data);
    int m = n / 2 + 1;
    Tensor Y = Tensor::zeros({m});
    std::vector<double> re(m), im(m);
    for (int j = 0; j < m; ++j) {
        re[j] = spec[j].real();
        im[j] = spec[j].imag();
        Y.data[j] = std::abs(spec[j]);
    }
    int id = x.g->add(std::move(Y), {x.id}, [n, m, re, im](Graph& g, int self) {
        auto& nd = g.nodes[self];
        Tensor& pg = g.grd(nd.parents[0]);
        for (int j = 0; j < m; ++j) {
            double mag = std::max(std::hypot(re[j], im[j]), 1e-12);
            double gg = nd.grad.data[j] / mag;
            if (gg == 0.0) continue;
            for (int t = 0; t < n; ++t) {
                double th = 2.0 * M_PI * j * t / n;
                pg.data[t] += gg * (re[j] * std::cos(th) - im[j] * std::sin(th));
            }
        }
    });
    return Var{x.g, id};
}

Var gaussian_nll(const Tensor& y, Var mu, Var sigma) {
    if (!y.same_shape(mu.val()) || !y.same_shape(sigma.val()))
        throw NumericError("gaussian_nll: shape mismatch");
    Var s = clamp_min(sigma, 1e-6);
    Var s2 = square(s);
    Var d = sub(mu.g->leaf(y), mu);
    Var quad = div(square(d), scale(s2, 2.0));
    Var logterm = scale(log_op(scale(s2, 2.0 * M_PI)), 0.5);
    return mean(add(logterm, quad));
}

}  // namespace fsa::ad
