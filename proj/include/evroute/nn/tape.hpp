#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

/// A trainable tensor and its accumulated gradient.
template <class T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

    void zero_grad() { grad.fill(T{0}); }
};

template <class T>
class Tape;

/// Handle to a node on a tape.
template <class T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>& tape() const {
        if (tape_ == nullptr) throw ContractError("use of an unbound Var");
        return *tape_;
    }
    std::size_t id() const noexcept { return id_; }
    const Tensor<T>& value() const { return tape().value(id_); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records forward operations in creation order (which is a topological order) and
/// replays their backward rules in reverse. A tape constructed with record=false keeps
/// values only, which is what inference uses.
template <class T>
class Tape {
public:
    // Reads grad(self) and accumulates into the grads of its inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var<T> constant(Tensor<T> value) {
        Node n;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    /// Leaf that references `t` without copying it; never receives a gradient.
    Var<T> frozen(const Tensor<T>& t) {
        Node n;
        n.external = &t;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    /// Leaf bound to a parameter. backward() adds this leaf's gradient into p.grad.
    Var<T> parameter(Parameter<T>& p) {
        if (!record_) return frozen(p.value);
        Node n;
        n.external = &p.value;
        n.param = &p;
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    /// Appends an op result. Every op funnels through here, so this is where non-finite
    /// outputs are caught.
    Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
        if (!all_finite(value))
            throw NonFiniteError(std::string(op) + " produced a non-finite value (output shape " +
                                 shape_string(value) + ")");
        Node n;
        n.value = std::move(value);
        if (record_) {
            for (const auto& in : inputs) {
                if (&in.tape() != this) throw ContractError(std::string(op) + ": inputs live on different tapes");
                n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
            }
            if (n.requires_grad) n.backward = std::move(fn);
        }
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    const Tensor<T>& value(std::size_t id) const {
        const Node& n = nodes_.at(id);
        return n.external != nullptr ? *n.external : n.value;
    }

    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty() || value(id).empty(); }

    /// Gradient buffer of a node, allocated as zeros on first touch.
    Tensor<T>& grad(std::size_t id) {
        Node& n = nodes_.at(id);
        if (n.grad.empty() && !value(id).empty()) n.grad = Tensor<T>::zeros_like(value(id));
        return n.grad;
    }

    /// Seeds d(loss)/d(loss) = 1, runs every recorded backward rule in reverse creation
    /// order, adds leaf gradients into their parameters (+=), then clears the tape.
    void backward(Var<T> loss) {
        if (!record_) throw ContractError("backward on a tape that is not recording");
        if (nodes_.empty()) throw ContractError("backward on an empty tape");
        const Tensor<T>& lv = loss.value();
        if (lv.rows() != 1 || lv.cols() != 1)
            throw ContractError("backward needs a scalar loss, got shape " + shape_string(lv));
        grad(loss.id())[0] = T{1};
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty()) continue;
            if (n.backward) n.backward(*this, i);
            if (n.param != nullptr) {
                auto& pg = n.param->grad;
                for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
            }
        }
        clear();
    }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    // deque: references to existing nodes survive push_back.
    std::deque<Node> nodes_;
    bool record_;
};

template <class T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
    if (&a.tape() != &b.tape()) throw ContractError("inputs live on different tapes");
    return a.tape();
}

} // namespace evroute::nn
