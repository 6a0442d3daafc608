#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evroute/core/error.hpp"
#include "evroute/nn/ops.hpp"
#include "evroute/nn/tape.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

/// Multi-head causal self-attention over a packed batch of sequences.
///
/// `qkv` is [N x 3d] with columns laid out as [q | k | v]; rows offsets[i]..offsets[i+1]
/// belong to sequence i. Head h reads columns [h*hd, (h+1)*hd) of each of q, k, v with
/// hd = d / heads. Position t of a sequence attends to positions <= t of the same
/// sequence only; masked logits are set to -1e9 before the softmax so their weights are
/// exactly zero. Output is [N x d] with heads concatenated in order.
template <class T>
Var<T> causal_self_attention(const Var<T>& qkv, const std::vector<std::size_t>& offsets, std::size_t heads) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Strided = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using StridedMut = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

    const Tensor<T>& x = qkv.value();
    if (heads == 0 || x.cols() % (3 * heads) != 0)
        throw ShapeError("causal_self_attention: width of " + shape_string(x) + " is not 3 * heads * head_dim for " +
                         std::to_string(heads) + " heads");
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows())
        throw ShapeError("causal_self_attention: offsets do not cover the " + std::to_string(x.rows()) + " rows");

    const std::size_t d = x.cols() / 3;
    const std::size_t hd = d / heads;
    const T scale = T{1} / std::sqrt(static_cast<T>(hd));
    const auto stride = static_cast<Eigen::Index>(x.cols());
    const bool keep = qkv.tape().recording() && qkv.tape().requires_grad(qkv.id());

    Tensor<T> out(x.rows(), d);
    // Attention weights per (sequence, head), kept only when a backward pass can follow.
    auto probs = std::make_shared<std::vector<Mat>>();
    if (keep) probs->reserve((offsets.size() - 1) * heads);

    Mat p;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const std::size_t r0 = offsets[s];
        const auto len = static_cast<Eigen::Index>(offsets[s + 1] - r0);
        if (len <= 0) throw ShapeError("causal_self_attention: empty sequence in batch");
        for (std::size_t h = 0; h < heads; ++h) {
            Strided q(x.data() + r0 * x.cols() + h * hd, len, static_cast<Eigen::Index>(hd), Eigen::OuterStride<>(stride));
            Strided k(x.data() + r0 * x.cols() + d + h * hd, len, static_cast<Eigen::Index>(hd),
                      Eigen::OuterStride<>(stride));
            Strided v(x.data() + r0 * x.cols() + 2 * d + h * hd, len, static_cast<Eigen::Index>(hd),
                      Eigen::OuterStride<>(stride));
            p.noalias() = (q * k.transpose()) * scale;
            for (Eigen::Index i = 0; i < len; ++i) {
                for (Eigen::Index j = i + 1; j < len; ++j) p(i, j) = static_cast<T>(kMaskedLogit);
                T mx = p(i, 0);
                for (Eigen::Index j = 1; j < len; ++j) mx = std::max(mx, p(i, j));
                T sum{0};
                for (Eigen::Index j = 0; j < len; ++j) sum += (p(i, j) = std::exp(p(i, j) - mx));
                for (Eigen::Index j = 0; j < len; ++j) p(i, j) /= sum;
            }
            StridedMut o(out.data() + r0 * d + h * hd, len, static_cast<Eigen::Index>(hd),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
            o.noalias() = p * v;
            if (keep) probs->push_back(p);
        }
    }

    const std::size_t ix = qkv.id();
    return qkv.tape().record(
        "causal_self_attention", std::move(out), {qkv},
        [ix, offsets, heads, d, hd, scale, probs](Tape<T>& t, std::size_t self) {
            const Tensor<T>& g = t.grad(self);
            const Tensor<T>& x = t.value(ix);
            Tensor<T>& gx = t.grad(ix);
            const auto stride = static_cast<Eigen::Index>(x.cols());
            const auto gstride = static_cast<Eigen::Index>(d);
            const auto ehd = static_cast<Eigen::Index>(hd);
            Mat dp, ds;
            std::size_t k_idx = 0;
            for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                const std::size_t r0 = offsets[s];
                const auto len = static_cast<Eigen::Index>(offsets[s + 1] - r0);
                for (std::size_t h = 0; h < heads; ++h, ++k_idx) {
                    const Mat& p = (*probs)[k_idx];
                    const T* base = x.data() + r0 * x.cols();
                    T* gbase = gx.data() + r0 * x.cols();
                    Strided q(base + h * hd, len, ehd, Eigen::OuterStride<>(stride));
                    Strided k(base + d + h * hd, len, ehd, Eigen::OuterStride<>(stride));
                    Strided v(base + 2 * d + h * hd, len, ehd, Eigen::OuterStride<>(stride));
                    Strided go(g.data() + r0 * d + h * hd, len, ehd, Eigen::OuterStride<>(gstride));
                    StridedMut gq(gbase + h * hd, len, ehd, Eigen::OuterStride<>(stride));
                    StridedMut gk(gbase + d + h * hd, len, ehd, Eigen::OuterStride<>(stride));
                    StridedMut gv(gbase + 2 * d + h * hd, len, ehd, Eigen::OuterStride<>(stride));

                    gv.noalias() += p.transpose() * go;
                    dp.noalias() = go * v.transpose();
                    ds.resize(len, len);
                    for (Eigen::Index i = 0; i < len; ++i) {
                        T dot{0};
                        for (Eigen::Index j = 0; j < len; ++j) dot += dp(i, j) * p(i, j);
                        for (Eigen::Index j = 0; j < len; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
                    }
                    gq.noalias() += ds * k;
                    gk.noalias() += ds.transpose() * q;
                }
            }
        });
}

} // namespace evroute::nn
