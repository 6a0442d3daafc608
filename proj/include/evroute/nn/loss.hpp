#pragma once

#include <cmath>
#include <string>

#include "evroute/core/error.hpp"
#include "evroute/nn/tape.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

/// sum(|pred - target| * mask) / sum(mask). Mask entries are 0 or 1; 0 marks padding.
template <class T>
Var<T> mae_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
    const Tensor<T>& pv = pred.value();
    if (!pv.same_shape(target) || !pv.same_shape(mask))
        throw ShapeError("mae_loss: shape mismatch pred" + shape_string(pv) + " target" + shape_string(target) +
                         " mask" + shape_string(mask));
    T denom{0};
    for (T m : mask.values()) {
        if (m != T{0} && m != T{1}) throw ValidationError("mae_loss: mask entries must be 0 or 1");
        denom += m;
    }
    if (denom == T{0}) throw EmptyEvaluationError("mae_loss: mask selects no positions");
    T total{0};
    for (std::size_t i = 0; i < pv.size(); ++i) total += std::abs(pv[i] - target[i]) * mask[i];

    const std::size_t ip = pred.id();
    return pred.tape().record("mae_loss", Tensor<T>(1, 1, total / denom), {pred},
                              [ip, target, mask, denom](Tape<T>& t, std::size_t self) {
                                  const T g = t.grad(self)[0] / denom;
                                  const Tensor<T>& pv = t.value(ip);
                                  Tensor<T>& gp = t.grad(ip);
                                  for (std::size_t i = 0; i < pv.size(); ++i) {
                                      const T diff = pv[i] - target[i];
                                      const T sign = diff > T{0} ? T{1} : (diff < T{0} ? T{-1} : T{0});
                                      gp[i] += g * sign * mask[i];
                                  }
                              });
}

} // namespace evroute::nn
