#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evroute/models/batch.hpp"
#include "evroute/models/config.hpp"
#include "evroute/nn/ops.hpp"
#include "evroute/nn/parameters.hpp"

namespace evroute::models {

/// Segment-level network. Each row of the batch is predicted on its own.
template <class T>
class Ffn {
public:
    explicit Ffn(FfnConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
        std::mt19937_64 rng(seed);
        std::size_t in = cfg_.input_width;
        for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
            const auto h = cfg_.hidden[i];
            weights_.push_back(&params_.add("dense" + std::to_string(i) + ".weight", nn::xavier_uniform<T>(in, h, rng)));
            biases_.push_back(&params_.add("dense" + std::to_string(i) + ".bias", nn::Tensor<T>(1, h)));
            in = h;
        }
        weights_.push_back(&params_.add("head.weight", nn::xavier_uniform<T>(in, 1, rng)));
        biases_.push_back(&params_.add("head.bias", nn::Tensor<T>(1, 1)));
    }

    /// [N x F] -> [N x 1]
    nn::Var<T> forward(nn::Tape<T>& tape, const PackedBatch<T>& batch) const {
        if (batch.features.cols() != cfg_.input_width)
            throw ShapeError("ffn: feature width " + std::to_string(batch.features.cols()) + " does not match model width " +
                             std::to_string(cfg_.input_width));
        nn::Var<T> h = tape.frozen(batch.features);
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            h = nn::affine(h, nn::use(tape, *weights_[i]), nn::use(tape, *biases_[i]));
            if (i + 1 < weights_.size()) h = nn::relu(h);
        }
        return h;
    }

    const FfnConfig& config() const noexcept { return cfg_; }
    nn::ParameterStore<T>& parameters() noexcept { return params_; }
    const nn::ParameterStore<T>& parameters() const noexcept { return params_; }

private:
    FfnConfig cfg_;
    nn::ParameterStore<T> params_;
    std::vector<nn::Parameter<T>*> weights_;
    std::vector<nn::Parameter<T>*> biases_;
};

} // namespace evroute::models
