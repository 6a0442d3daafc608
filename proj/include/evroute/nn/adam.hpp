#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/nn/tape.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class T>
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
};

template <class T>
AdamState<T> make_adam_state(const std::vector<Parameter<T>*>& params, AdamConfig config = {}) {
    AdamState<T> s;
    s.config = config;
    for (const auto* p : params) {
        s.first_moment.push_back(Tensor<T>::zeros_like(p->value));
        s.second_moment.push_back(Tensor<T>::zeros_like(p->value));
    }
    return s;
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state) {
    if (params.size() != state.first_moment.size())
        throw ContractError("adam_step: optimizer state was built for a different parameter list");
    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (!m.same_shape(p.value)) throw ShapeError("adam_step: moment shape mismatch for " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * g;
            const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = c.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + c.epsilon);
            p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - update);
        }
        p.zero_grad();
    }
}

} // namespace evroute::nn
