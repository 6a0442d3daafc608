#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evroute/models/batch.hpp"
#include "evroute/models/config.hpp"
#include "evroute/nn/attention.hpp"
#include "evroute/nn/ops.hpp"
#include "evroute/nn/parameters.hpp"

namespace evroute::models {

/// Decoder-only transformer over encoded segments: feature projection plus learned
/// positions, pre-norm blocks (causal self-attention, GELU MLP), final norm, scalar head.
template <class T>
class Ret {
public:
    explicit Ret(RetConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const std::size_t d = cfg_.dim, h = cfg_.mlp_ratio * cfg_.dim;
        proj_w_ = &params_.add("proj.weight", nn::xavier_uniform<T>(cfg_.input_width, d, rng));
        proj_b_ = &params_.add("proj.bias", nn::Tensor<T>(1, d));
        pos_ = &params_.add("pos_embedding", nn::normal_init<T>(cfg_.context, d, 0.02, rng));
        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            const std::string p = "block" + std::to_string(b) + ".";
            Block blk;
            blk.ln1_g = &params_.add(p + "ln1.gamma", nn::Tensor<T>(1, d, T{1}));
            blk.ln1_b = &params_.add(p + "ln1.beta", nn::Tensor<T>(1, d));
            blk.qkv_w = &params_.add(p + "attn.qkv.weight", nn::xavier_uniform<T>(d, 3 * d, rng));
            blk.qkv_b = &params_.add(p + "attn.qkv.bias", nn::Tensor<T>(1, 3 * d));
            blk.out_w = &params_.add(p + "attn.out.weight", nn::xavier_uniform<T>(d, d, rng));
            blk.out_b = &params_.add(p + "attn.out.bias", nn::Tensor<T>(1, d));
            blk.ln2_g = &params_.add(p + "ln2.gamma", nn::Tensor<T>(1, d, T{1}));
            blk.ln2_b = &params_.add(p + "ln2.beta", nn::Tensor<T>(1, d));
            blk.up_w = &params_.add(p + "mlp.up.weight", nn::xavier_uniform<T>(d, h, rng));
            blk.up_b = &params_.add(p + "mlp.up.bias", nn::Tensor<T>(1, h));
            blk.down_w = &params_.add(p + "mlp.down.weight", nn::xavier_uniform<T>(h, d, rng));
            blk.down_b = &params_.add(p + "mlp.down.bias", nn::Tensor<T>(1, d));
            blocks_.push_back(blk);
        }
        lnf_g_ = &params_.add("ln_f.gamma", nn::Tensor<T>(1, d, T{1}));
        lnf_b_ = &params_.add("ln_f.beta", nn::Tensor<T>(1, d));
        head_w_ = &params_.add("head.weight", nn::xavier_uniform<T>(d, 1, rng));
        head_b_ = &params_.add("head.bias", nn::Tensor<T>(1, 1));
    }

    /// [N x F] packed routes -> [N x 1]
    nn::Var<T> forward(nn::Tape<T>& tape, const PackedBatch<T>& batch) const {
        using nn::Var;
        if (batch.routes() == 0) throw ValidationError("ret: empty batch");
        if (batch.features.cols() != cfg_.input_width)
            throw ShapeError("ret: feature width " + std::to_string(batch.features.cols()) + " does not match model width " +
                             std::to_string(cfg_.input_width));
        if (batch.max_length() > cfg_.context)
            throw ContextError("ret: route of length " + std::to_string(batch.max_length()) + " exceeds the context of " +
                               std::to_string(cfg_.context));

        Var<T> x = nn::affine(tape.frozen(batch.features), nn::use(tape, *proj_w_), nn::use(tape, *proj_b_));
        x = nn::add(x, nn::gather_rows(nn::use(tape, *pos_), batch.positions));
        for (const auto& blk : blocks_) {
            Var<T> a = nn::layer_norm(x, nn::use(tape, *blk.ln1_g), nn::use(tape, *blk.ln1_b));
            a = nn::affine(a, nn::use(tape, *blk.qkv_w), nn::use(tape, *blk.qkv_b));
            a = nn::causal_self_attention(a, batch.offsets, cfg_.heads());
            x = nn::add(x, nn::affine(a, nn::use(tape, *blk.out_w), nn::use(tape, *blk.out_b)));
            Var<T> m = nn::layer_norm(x, nn::use(tape, *blk.ln2_g), nn::use(tape, *blk.ln2_b));
            m = nn::gelu(nn::affine(m, nn::use(tape, *blk.up_w), nn::use(tape, *blk.up_b)));
            x = nn::add(x, nn::affine(m, nn::use(tape, *blk.down_w), nn::use(tape, *blk.down_b)));
        }
        x = nn::layer_norm(x, nn::use(tape, *lnf_g_), nn::use(tape, *lnf_b_));
        return nn::affine(x, nn::use(tape, *head_w_), nn::use(tape, *head_b_));
    }

    const RetConfig& config() const noexcept { return cfg_; }
    nn::ParameterStore<T>& parameters() noexcept { return params_; }
    const nn::ParameterStore<T>& parameters() const noexcept { return params_; }

private:
    struct Block {
        nn::Parameter<T>* ln1_g;
        nn::Parameter<T>* ln1_b;
        nn::Parameter<T>* qkv_w;
        nn::Parameter<T>* qkv_b;
        nn::Parameter<T>* out_w;
        nn::Parameter<T>* out_b;
        nn::Parameter<T>* ln2_g;
        nn::Parameter<T>* ln2_b;
        nn::Parameter<T>* up_w;
        nn::Parameter<T>* up_b;
        nn::Parameter<T>* down_w;
        nn::Parameter<T>* down_b;
    };

    RetConfig cfg_;
    nn::ParameterStore<T> params_;
    nn::Parameter<T>* proj_w_;
    nn::Parameter<T>* proj_b_;
    nn::Parameter<T>* pos_;
    std::vector<Block> blocks_;
    nn::Parameter<T>* lnf_g_;
    nn::Parameter<T>* lnf_b_;
    nn::Parameter<T>* head_w_;
    nn::Parameter<T>* head_b_;
};

} // namespace evroute::models
