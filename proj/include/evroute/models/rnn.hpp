#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "evroute/models/batch.hpp"
#include "evroute/models/config.hpp"
#include "evroute/nn/ops.hpp"
#include "evroute/nn/parameters.hpp"

namespace evroute::models {

/// Dense embedding -> unidirectional GRU -> dense output embedding -> linear head, one
/// output per step.
///
/// GRU cell (single bias per gate, reset applied before the recurrent product):
///   r = sigmoid(x W_r + h U_r + b_r)
///   z = sigmoid(x W_z + h U_z + b_z)
///   n = tanh(x W_n + (r * h) U_n + b_n)
///   h' = (1 - z) * n + z * h
template <class T>
class Rnn {
public:
    explicit Rnn(RnnConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
        std::mt19937_64 rng(seed);
        const auto H = cfg_.hidden;
        embed_w_ = &params_.add("embed.weight", nn::xavier_uniform<T>(cfg_.input_width, cfg_.embed, rng));
        embed_b_ = &params_.add("embed.bias", nn::Tensor<T>(1, cfg_.embed));
        gru_w_ = &params_.add("gru.input_weight", nn::xavier_uniform<T>(cfg_.embed, 3 * H, rng));
        gru_b_ = &params_.add("gru.bias", nn::Tensor<T>(1, 3 * H));
        gru_urz_ = &params_.add("gru.recurrent_rz", nn::xavier_uniform<T>(H, 2 * H, rng));
        gru_un_ = &params_.add("gru.recurrent_n", nn::xavier_uniform<T>(H, H, rng));
        out_w_ = &params_.add("out.weight", nn::xavier_uniform<T>(H, cfg_.out_embed, rng));
        out_b_ = &params_.add("out.bias", nn::Tensor<T>(1, cfg_.out_embed));
        head_w_ = &params_.add("head.weight", nn::xavier_uniform<T>(cfg_.out_embed, 1, rng));
        head_b_ = &params_.add("head.bias", nn::Tensor<T>(1, 1));
    }

    /// [N x F] packed routes -> [N x 1]
    nn::Var<T> forward(nn::Tape<T>& tape, const PackedBatch<T>& batch) const {
        using nn::Var;
        if (batch.routes() == 0) throw ValidationError("rnn: empty batch");
        if (batch.features.cols() != cfg_.input_width)
            throw ShapeError("rnn: feature width " + std::to_string(batch.features.cols()) + " does not match model width " +
                             std::to_string(cfg_.input_width));
        const std::size_t H = cfg_.hidden;
        const std::size_t R = batch.routes();

        Var<T> x = tape.frozen(batch.features);
        Var<T> e = nn::relu(nn::affine(x, nn::use(tape, *embed_w_), nn::use(tape, *embed_b_)));
        // Input contributions for every step at once.
        Var<T> xg = nn::affine(e, nn::use(tape, *gru_w_), nn::use(tape, *gru_b_));
        Var<T> urz = nn::use(tape, *gru_urz_);
        Var<T> un = nn::use(tape, *gru_un_);

        // Longest routes first so the active set at step t is a prefix.
        std::vector<std::size_t> order(R);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return batch.length(a) > batch.length(b); });

        const std::size_t max_len = batch.length(order.front());
        std::vector<Var<T>> steps;
        steps.reserve(max_len);
        std::vector<std::size_t> packed_to_step(batch.rows());
        std::size_t step_row = 0;
        Var<T> h;
        for (std::size_t t = 0; t < max_len; ++t) {
            std::size_t k = 0;
            while (k < R && batch.length(order[k]) > t) ++k;
            std::vector<std::size_t> rows(k);
            for (std::size_t i = 0; i < k; ++i) {
                rows[i] = batch.offsets[order[i]] + t;
                packed_to_step[rows[i]] = step_row + i;
            }
            step_row += k;

            Var<T> hp = t == 0 ? tape.constant(nn::Tensor<T>(k, H)) : (h.rows() == k ? h : nn::slice_rows(h, 0, k));
            Var<T> g = nn::gather_rows(xg, std::move(rows));
            Var<T> rz = nn::sigmoid(nn::add(nn::slice(g, 0, 2 * H), nn::matmul(hp, urz)));
            Var<T> r = nn::slice(rz, 0, H);
            Var<T> z = nn::slice(rz, H, 2 * H);
            Var<T> n = nn::tanh(nn::add(nn::slice(g, 2 * H, 3 * H), nn::matmul(nn::mul(r, hp), un)));
            h = nn::add(n, nn::mul(z, nn::sub(hp, n)));
            steps.push_back(h);
        }

        Var<T> hs = nn::gather_rows(nn::concat_rows(steps), std::move(packed_to_step));
        Var<T> o = nn::relu(nn::affine(hs, nn::use(tape, *out_w_), nn::use(tape, *out_b_)));
        return nn::affine(o, nn::use(tape, *head_w_), nn::use(tape, *head_b_));
    }

    const RnnConfig& config() const noexcept { return cfg_; }
    nn::ParameterStore<T>& parameters() noexcept { return params_; }
    const nn::ParameterStore<T>& parameters() const noexcept { return params_; }

private:
    RnnConfig cfg_;
    nn::ParameterStore<T> params_;
    nn::Parameter<T>* embed_w_;
    nn::Parameter<T>* embed_b_;
    nn::Parameter<T>* gru_w_;
    nn::Parameter<T>* gru_b_;
    nn::Parameter<T>* gru_urz_;
    nn::Parameter<T>* gru_un_;
    nn::Parameter<T>* out_w_;
    nn::Parameter<T>* out_b_;
    nn::Parameter<T>* head_w_;
    nn::Parameter<T>* head_b_;
};

} // namespace evroute::models
