#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/nn/tape.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

/// Ordered, address-stable collection of named parameters.
template <class T>
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    Parameter<T>& add(std::string name, Tensor<T> value) {
        for (const auto& p : params_)
            if (p.name == name) throw ContractError("duplicate parameter name " + name);
        return params_.emplace_back(std::move(name), std::move(value));
    }

    Parameter<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    std::size_t size() const noexcept { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::vector<Parameter<T>*> pointers() {
        std::vector<Parameter<T>*> out;
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::vector<Tensor<T>> snapshot() const {
        std::vector<Tensor<T>> out;
        for (const auto& p : params_) out.push_back(p.value);
        return out;
    }

    void restore(const std::vector<Tensor<T>>& values) {
        if (values.size() != params_.size()) throw ContractError("parameter snapshot size mismatch");
        std::size_t i = 0;
        for (auto& p : params_) {
            if (!p.value.same_shape(values[i])) throw ShapeError("parameter snapshot shape mismatch for " + p.name);
            p.value = values[i++];
        }
    }

private:
    std::deque<Parameter<T>> params_;
};

/// Parameters go on the gradient tape when it records; otherwise they are bound read-only.
template <class T>
Var<T> use(Tape<T>& tape, Parameter<T>& p) {
    return tape.recording() ? tape.parameter(p) : tape.frozen(p.value);
}

// Initialisers.

template <class T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor<T> w(fan_in, fan_out);
    for (auto& v : w.values()) v = static_cast<T>(dist(rng));
    return w;
}

template <class T>
Tensor<T> normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> w(rows, cols);
    for (auto& v : w.values()) v = static_cast<T>(dist(rng));
    return w;
}

} // namespace evroute::nn
