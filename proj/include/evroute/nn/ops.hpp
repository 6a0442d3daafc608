#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/nn/kernels.hpp"
#include "evroute/nn/tape.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

inline constexpr double kMaskedLogit = -1e9;
inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T, class F>
Var<T> unary(const char* op, const Var<T>& x, F&& f, auto&& df_from_xy) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t ix = x.id();
    return x.tape().record(op, std::move(out), {x}, [ix, df_from_xy](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.value(ix);
        const Tensor<T>& yv = t.value(self);
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df_from_xy(xv[i], yv[i]);
    });
}

} // namespace detail

/// a [m x k] * b [k x n]
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.cols() != bv.rows())
        throw ShapeError("matmul: shape mismatch " + shape_string(av) + " x " + shape_string(bv));
    Tensor<T> out(av.rows(), bv.cols());
    kernels::gemm(av, bv, out);
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("matmul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        if (t.requires_grad(ia)) kernels::gemm_nt_acc(g, t.value(ib), t.grad(ia));
        if (t.requires_grad(ib)) kernels::gemm_tn_acc(t.value(ia), g, t.grad(ib));
    });
}

/// x [m x in] * W [in x out] + b [1 x out]
template <class T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    auto& tape = same_tape(x, w);
    same_tape(x, b);
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    const Tensor<T>& bv = b.value();
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
        throw ShapeError("affine: shape mismatch x" + shape_string(xv) + " W" + shape_string(wv) + " b" +
                         shape_string(bv));
    Tensor<T> out(xv.rows(), wv.cols());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] = bv[c];
    }
    kernels::gemm_acc(xv, wv, out);
    const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
    return tape.record("affine", std::move(out), {x, w, b}, [ix, iw, ib](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        if (t.requires_grad(ix)) kernels::gemm_nt_acc(g, t.value(iw), t.grad(ix));
        if (t.requires_grad(iw)) kernels::gemm_tn_acc(t.value(ix), g, t.grad(iw));
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row(r);
                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += row[c];
            }
        }
    });
}

/// Elementwise a + b. `b` may also be a single row broadcast over every row of `a`.
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    const bool broadcast = bv.rows() == 1 && av.rows() != 1 && bv.cols() == av.cols();
    if (!broadcast) detail::require_same_shape("add", av, bv);
    Tensor<T> out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        auto brow = bv.row(broadcast ? 0 : r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] += brow[c];
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("add", std::move(out), {a, b}, [ia, ib, broadcast](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        if (t.requires_grad(ia)) detail::add_into(t.grad(ia), g);
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            if (!broadcast) {
                detail::add_into(gb, g);
            } else {
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto row = g.row(r);
                    for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += row[c];
                }
            }
        }
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    detail::require_same_shape("sub", av, bv);
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("sub", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        if (t.requires_grad(ia)) detail::add_into(t.grad(ia), g);
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

/// Elementwise (Hadamard) product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    auto& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    detail::require_same_shape("mul", av, bv);
    Tensor<T> out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("mul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad(ia);
            const Tensor<T>& bv = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            const Tensor<T>& av = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
    return detail::unary<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.rows(), xv.cols());
    kernels::as_array(out) = kernels::as_array(xv).tanh();
    const std::size_t ix = x.id();
    return x.tape().record("tanh", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const auto y = kernels::as_array(t.value(self));
        kernels::as_array(t.grad(ix)) += kernels::as_array(t.grad(self)) * (T{1} - y * y);
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.rows(), xv.cols());
    kernels::as_array(out) = kernels::as_array(xv).logistic();
    const std::size_t ix = x.id();
    return x.tape().record("sigmoid", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const auto y = kernels::as_array(t.value(self));
        kernels::as_array(t.grad(ix)) += kernels::as_array(t.grad(self)) * y * (T{1} - y);
    });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    return detail::unary<T>("relu", x, [](T v) { return v > T{0} ? v : T{0}; },
                            [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class T>
Var<T> gelu(const Var<T>& x) {
    constexpr T k = static_cast<T>(0.7978845608028654); // sqrt(2/pi)
    constexpr T c = static_cast<T>(0.044715);
    const Tensor<T>& xv = x.value();
    const auto v = kernels::as_array(xv);
    Tensor<T> out(xv.rows(), xv.cols());
    kernels::as_array(out) = T{0.5} * v * (T{1} + (k * (v + c * v.cube())).tanh());
    const std::size_t ix = x.id();
    return x.tape().record("gelu", std::move(out), {x}, [ix, k, c](Tape<T>& t, std::size_t self) {
        const auto v = kernels::as_array(t.value(ix));
        const auto th = (k * (v + c * v.cube())).tanh().eval();
        kernels::as_array(t.grad(ix)) +=
            kernels::as_array(t.grad(self)) *
            (T{0.5} * (T{1} + th) + T{0.5} * v * (T{1} - th.square()) * k * (T{1} + T{3} * c * v.square()));
    });
}

/// Row-wise softmax.
template <class T>
Var<T> softmax_last_dim(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        auto in = xv.row(r);
        auto o = out.row(r);
        T mx = in.empty() ? T{0} : in[0];
        for (T v : in) mx = std::max(mx, v);
        T sum{0};
        for (std::size_t c = 0; c < in.size(); ++c) sum += (o[c] = std::exp(in[c] - mx));
        for (auto& v : o) v /= sum;
    }
    const std::size_t ix = x.id();
    return x.tape().record("softmax_last_dim", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            auto yr = y.row(r);
            auto gr = g.row(r);
            T dot{0};
            for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
            auto gxr = gx.row(r);
            for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += yr[c] * (gr[c] - dot);
        }
    });
}

/// Row-wise normalisation to zero mean / unit variance, then gamma * xhat + beta.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
    auto& tape = same_tape(x, gamma);
    same_tape(x, beta);
    const Tensor<T>& xv = x.value();
    const Tensor<T>& gv = gamma.value();
    const Tensor<T>& bv = beta.value();
    const std::size_t n = xv.cols();
    if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != n || bv.cols() != n)
        throw ShapeError("layer_norm: shape mismatch x" + shape_string(xv) + " gamma" + shape_string(gv) + " beta" +
                         shape_string(bv));
    Tensor<T> out(xv.rows(), n);
    Tensor<T> xhat(xv.rows(), n);
    std::vector<T> rstd(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        auto in = xv.row(r);
        T mean{0};
        for (T v : in) mean += v;
        mean /= static_cast<T>(n);
        T var{0};
        for (T v : in) var += (v - mean) * (v - mean);
        var /= static_cast<T>(n);
        rstd[r] = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
        auto xh = xhat.row(r);
        auto o = out.row(r);
        for (std::size_t c = 0; c < n; ++c) {
            xh[c] = (in[c] - mean) * rstd[r];
            o[c] = gv[c] * xh[c] + bv[c];
        }
    }
    const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
    return tape.record("layer_norm", std::move(out), {x, gamma, beta},
                       [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
                           const Tensor<T>& g = t.grad(self);
                           const Tensor<T>& gv = t.value(ig);
                           const std::size_t n = g.cols();
                           if (t.requires_grad(ig) || t.requires_grad(ib)) {
                               Tensor<T>* gg = t.requires_grad(ig) ? &t.grad(ig) : nullptr;
                               Tensor<T>* gb = t.requires_grad(ib) ? &t.grad(ib) : nullptr;
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                   auto gr = g.row(r);
                                   auto xh = xhat.row(r);
                                   for (std::size_t c = 0; c < n; ++c) {
                                       if (gg) (*gg)[c] += gr[c] * xh[c];
                                       if (gb) (*gb)[c] += gr[c];
                                   }
                               }
                           }
                           if (!t.requires_grad(ix)) return;
                           Tensor<T>& gx = t.grad(ix);
                           for (std::size_t r = 0; r < g.rows(); ++r) {
                               auto gr = g.row(r);
                               auto xh = xhat.row(r);
                               T mean_d{0}, mean_dx{0};
                               for (std::size_t c = 0; c < n; ++c) {
                                   const T d = gr[c] * gv[c];
                                   mean_d += d;
                                   mean_dx += d * xh[c];
                               }
                               mean_d /= static_cast<T>(n);
                               mean_dx /= static_cast<T>(n);
                               auto gxr = gx.row(r);
                               for (std::size_t c = 0; c < n; ++c)
                                   gxr[c] += rstd[r] * (gr[c] * gv[c] - mean_d - xh[c] * mean_dx);
                           }
                       });
}

/// Column-wise concatenation of same-height tensors.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    auto& tape = parts.front().tape();
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (&p.tape() != &tape) throw ContractError("concat: inputs live on different tapes");
        if (p.rows() != rows)
            throw ShapeError("concat: row mismatch " + shape_string(parts.front().value()) + " vs " +
                             shape_string(p.value()));
        cols += p.cols();
    }
    Tensor<T> out(rows, cols);
    std::vector<std::size_t> ids, starts;
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const Tensor<T>& pv = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pv.cols(); ++c) out(r, c0 + c) = pv(r, c);
        ids.push_back(p.id());
        starts.push_back(c0);
        c0 += pv.cols();
    }
    return tape.record("concat", std::move(out), parts, [ids, starts](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Tensor<T>& gp = t.grad(ids[k]);
            for (std::size_t r = 0; r < gp.rows(); ++r)
                for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, starts[k] + c);
        }
    });
}

/// Row-wise concatenation of same-width tensors.
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    auto& tape = parts.front().tape();
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (&p.tape() != &tape) throw ContractError("concat_rows: inputs live on different tapes");
        if (p.cols() != cols)
            throw ShapeError("concat_rows: column mismatch " + shape_string(parts.front().value()) + " vs " +
                             shape_string(p.value()));
        rows += p.rows();
    }
    Tensor<T> out(rows, cols);
    std::vector<std::size_t> ids, starts;
    std::size_t r0 = 0;
    for (const auto& p : parts) {
        const Tensor<T>& pv = p.value();
        std::copy(pv.values().begin(), pv.values().end(), out.data() + r0 * cols);
        ids.push_back(p.id());
        starts.push_back(r0);
        r0 += pv.rows();
    }
    return tape.record("concat_rows", std::move(out), parts, [ids, starts](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Tensor<T>& gp = t.grad(ids[k]);
            const T* src = g.data() + starts[k] * g.cols();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
        }
    });
}

/// Columns [begin, end).
template <class T>
Var<T> slice(const Var<T>& x, std::size_t begin, std::size_t end) {
    const Tensor<T>& xv = x.value();
    if (begin > end || end > xv.cols())
        throw ShapeError("slice: column range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for " + shape_string(xv));
    Tensor<T> out(xv.rows(), end - begin);
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = xv(r, c);
    const std::size_t ix = x.id();
    return x.tape().record("slice", std::move(out), {x}, [ix, begin](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
    });
}

/// Rows [begin, end).
template <class T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
    const Tensor<T>& xv = x.value();
    if (begin > end || end > xv.rows())
        throw ShapeError("slice_rows: row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for " + shape_string(xv));
    const std::size_t cols = xv.cols();
    Tensor<T> out(end - begin, cols);
    std::copy(xv.data() + begin * cols, xv.data() + end * cols, out.data());
    const std::size_t ix = x.id();
    return x.tape().record("slice_rows", std::move(out), {x}, [ix, begin](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(ix);
        T* dst = gx.data() + begin * g.cols();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.cols(), xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < xv.cols(); ++c) out(c, r) = xv(r, c);
    const std::size_t ix = x.id();
    return x.tape().record("transpose", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gx(c, r) += g(r, c);
    });
}

/// Square score matrix: entries above the diagonal (future positions) become -1e9.
template <class T>
Var<T> causal_masked_fill(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    if (xv.rows() != xv.cols())
        throw ShapeError("causal_masked_fill: expected a square matrix, got " + shape_string(xv));
    Tensor<T> out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = i + 1; j < out.cols(); ++j) out(i, j) = static_cast<T>(kMaskedLogit);
    const std::size_t ix = x.id();
    return x.tape().record("causal_masked_fill", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j <= i; ++j) gx(i, j) += g(i, j);
    });
}

/// out[k] = x[indices[k]]. Backward scatter-adds, so repeated indices accumulate.
template <class T>
Var<T> gather_rows(const Var<T>& x, std::vector<std::size_t> indices) {
    const Tensor<T>& xv = x.value();
    const std::size_t cols = xv.cols();
    Tensor<T> out(indices.size(), cols);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= xv.rows())
            throw ShapeError("gather_rows: index " + std::to_string(indices[k]) + " out of bounds for " +
                             shape_string(xv));
        std::copy(xv.data() + indices[k] * cols, xv.data() + (indices[k] + 1) * cols, out.data() + k * cols);
    }
    const std::size_t ix = x.id();
    return x.tape().record("gather_rows", std::move(out), {x},
                           [ix, indices = std::move(indices)](Tape<T>& t, std::size_t self) {
                               const Tensor<T>& g = t.grad(self);
                               Tensor<T>& gx = t.grad(ix);
                               const std::size_t cols = g.cols();
                               for (std::size_t k = 0; k < indices.size(); ++k) {
                                   T* dst = gx.data() + indices[k] * cols;
                                   const T* src = g.data() + k * cols;
                                   for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                               }
                           });
}

/// Sum of all entries as a 1 x 1 tensor.
template <class T>
Var<T> sum(const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    T s{0};
    for (T v : xv.values()) s += v;
    const std::size_t ix = x.id();
    return x.tape().record("sum", Tensor<T>(1, 1, s), {x}, [ix](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        Tensor<T>& gx = t.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

} // namespace evroute::nn
