#pragma once

// Finite-difference checks shared by the unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evroute/models/batch.hpp"
#include "evroute/models/config.hpp"
#include "evroute/models/ffn.hpp"
#include "evroute/models/ret.hpp"
#include "evroute/models/rnn.hpp"
#include "evroute/nn/attention.hpp"
#include "evroute/nn/grad_check.hpp"
#include "evroute/nn/loss.hpp"
#include "evroute/nn/ops.hpp"

namespace evtest {

using evroute::nn::GradCheckReport;
using evroute::nn::Parameter;
using evroute::nn::Tape;
using evroute::nn::Tensor;
using evroute::nn::Var;

inline Tensor<double> random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(r, c);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Entries bounded away from zero, for ops with a kink there.
inline Tensor<double> away_from_zero(std::size_t r, std::size_t c, std::uint64_t seed) {
    auto t = random_tensor(r, c, seed, 0.2, 1.0);
    for (std::size_t i = 0; i < t.size(); i += 2) t[i] = -t[i];
    return t;
}

// Smooth scalar readout with fixed, uneven weights so every output entry matters.
inline Var<double> weighted_sum(Var<double> y) {
    Tensor<double> w(y.rows(), y.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
    return evroute::nn::sum(evroute::nn::mul(y, y.tape().constant(std::move(w))));
}

// Everything here runs in double, so a small step keeps truncation error well under the tolerance.
inline evroute::nn::GradCheckOptions fine_step() {
    evroute::nn::GradCheckOptions o;
    o.step = 1e-5;
    return o;
}

template <class F>
GradCheckReport check(std::vector<Parameter<double>*> params, F&& f, double tol = 1e-4,
                      evroute::nn::GradCheckOptions opts = fine_step()) {
    return evroute::nn::grad_check([&](Tape<double>& tape, int) { return f(tape); }, params, 0, tol, opts);
}

inline std::string describe(const GradCheckReport& r) {
    return "checked " + std::to_string(r.checked) + ", max rel error " + std::to_string(r.max_rel_error) + " at " +
           r.worst_parameter + "[" + std::to_string(r.worst_index) + "] (analytic " + std::to_string(r.worst_analytic) +
           ", numeric " + std::to_string(r.worst_numeric) + ")";
}

struct NamedCheck {
    std::string name;
    std::function<GradCheckReport()> run;
};

/// One check per primitive on 5x7 inputs; every coordinate is checked.
inline std::vector<NamedCheck> layer_checks() {
    using namespace evroute::nn;
    using P = Parameter<double>;
    std::vector<NamedCheck> out;

    out.push_back({"linear", [] {
        P w("w", random_tensor(7, 3, 10)), b("b", random_tensor(1, 3, 11));
        const auto x = random_tensor(5, 7, 12);
        return check({&w, &b}, [&](Tape<double>& t) { return weighted_sum(affine(t.frozen(x), use(t, w), use(t, b))); },
                     1e-6);
    }});
    out.push_back({"affine", [] {
        P x("x", random_tensor(5, 7, 13)), w("w", random_tensor(7, 4, 14)), b("b", random_tensor(1, 4, 15));
        return check({&x, &w, &b},
                     [&](Tape<double>& t) { return weighted_sum(tanh(affine(use(t, x), use(t, w), use(t, b)))); });
    }});
    out.push_back({"matmul", [] {
        P a("a", random_tensor(5, 7, 16)), b("b", random_tensor(7, 3, 17));
        return check({&a, &b}, [&](Tape<double>& t) { return weighted_sum(matmul(use(t, a), use(t, b))); });
    }});
    out.push_back({"add/sub/mul", [] {
        P a("a", random_tensor(5, 7, 18)), b("b", random_tensor(5, 7, 19)), r("row", random_tensor(1, 7, 20));
        return check({&a, &b, &r}, [&](Tape<double>& t) {
            const auto x = use(t, a), y = use(t, b);
            return weighted_sum(mul(add(sub(x, y), use(t, r)), add(x, y)));
        });
    }});
    out.push_back({"scale", [] {
        P a("a", random_tensor(5, 7, 21));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(scale(use(t, a), -2.5)); });
    }});
    out.push_back({"tanh", [] {
        P a("a", random_tensor(5, 7, 22, -2, 2));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(tanh(use(t, a))); });
    }});
    out.push_back({"sigmoid", [] {
        P a("a", random_tensor(5, 7, 23, -3, 3));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(sigmoid(use(t, a))); });
    }});
    out.push_back({"relu", [] {
        P a("a", away_from_zero(5, 7, 24));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(relu(use(t, a))); });
    }});
    out.push_back({"gelu", [] {
        P a("a", random_tensor(5, 7, 25, -3, 3));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(gelu(use(t, a))); });
    }});
    out.push_back({"softmax", [] {
        P a("a", random_tensor(5, 7, 26, -2, 2));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(softmax_last_dim(use(t, a))); });
    }});
    out.push_back({"layer_norm", [] {
        P a("a", random_tensor(5, 7, 27, -2, 2)), g("gamma", random_tensor(1, 7, 28, 0.5, 1.5)),
            b("beta", random_tensor(1, 7, 29));
        return check({&a, &g, &b},
                     [&](Tape<double>& t) { return weighted_sum(layer_norm(use(t, a), use(t, g), use(t, b))); });
    }});
    out.push_back({"concat/slice", [] {
        P a("a", random_tensor(5, 7, 30)), b("b", random_tensor(5, 3, 31));
        return check({&a, &b}, [&](Tape<double>& t) {
            const auto c = concat<double>({use(t, a), tanh(use(t, b)), use(t, a)});
            return weighted_sum(mul(slice(c, 2, 9), slice(c, 10, 17)));
        });
    }});
    out.push_back({"row ops", [] {
        P a("a", random_tensor(5, 7, 32)), b("b", random_tensor(3, 7, 33));
        return check({&a, &b}, [&](Tape<double>& t) {
            const auto c = concat_rows<double>({use(t, a), use(t, b)});
            const auto g = gather_rows(c, {7, 0, 0, 3, 6});
            return weighted_sum(mul(g, tanh(slice_rows(c, 1, 6))));
        });
    }});
    out.push_back({"transpose", [] {
        P a("a", random_tensor(5, 7, 34)), b("b", random_tensor(5, 7, 35));
        return check({&a, &b}, [&](Tape<double>& t) { return weighted_sum(matmul(transpose(use(t, a)), use(t, b))); });
    }});
    out.push_back({"masked softmax", [] {
        P a("a", random_tensor(5, 5, 36, -2, 2));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(softmax_last_dim(causal_masked_fill(use(t, a)))); });
    }});
    out.push_back({"mae_loss", [] {
        P a("a", random_tensor(5, 7, 37));
        auto target = a.value;
        for (std::size_t i = 0; i < target.size(); ++i) target[i] += (i % 2 ? 0.3 : -0.4);
        Tensor<double> mask(5, 7, 1.0);
        for (std::size_t i = 0; i < mask.size(); i += 5) mask[i] = 0.0;
        return check({&a}, [&](Tape<double>& t) { return mae_loss(use(t, a), target, mask); });
    }});
    out.push_back({"attention", [] {
        // two heads of width 4, sequences of length 3 and 2
        P a("qkv", random_tensor(5, 24, 38));
        return check({&a}, [&](Tape<double>& t) { return weighted_sum(causal_self_attention(use(t, a), {0, 3, 5}, 2)); });
    }});
    return out;
}

/// Packed batch of random routes with realistic one-hot and stem columns.
inline evroute::models::PackedBatch<double> random_batch(const std::vector<std::size_t>& lengths, std::size_t width,
                                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Tensor<double>> mats;
    for (std::size_t L : lengths) {
        Tensor<double> m(L, width);
        const std::size_t vehicle = rng() % (width - 5);
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t c = 0; c < 4; ++c) m(t, c) = z(rng);
            m(t, 4) = (t == 0 || t + 1 == L) ? 1.0 : 0.0;
            m(t, 5 + vehicle) = 1.0;
        }
        mats.push_back(std::move(m));
    }
    return evroute::models::pack(mats);
}

template <class Net>
GradCheckReport model_grad_check(Net& net, const evroute::models::PackedBatch<double>& batch,
                                 std::size_t coordinates = 256, std::uint64_t seed = 0) {
    auto opts = fine_step();
    opts.coordinates = coordinates;
    opts.seed = seed;
    return check(net.parameters().pointers(), [&](Tape<double>& t) { return weighted_sum(net.forward(t, batch)); },
                 1e-4, opts);
}

/// The three model families at their default sizes (RET at the smallest preset).
inline std::vector<NamedCheck> model_checks(std::size_t coordinates = 256) {
    using namespace evroute::models;
    std::vector<NamedCheck> out;
    out.push_back({"ffn", [=] {
        Ffn<double> net(FfnConfig{}, 1);
        return model_grad_check(net, random_batch({4, 3}, 9, 2), coordinates, 3);
    }});
    out.push_back({"rnn", [=] {
        Rnn<double> net(RnnConfig{}, 4);
        return model_grad_check(net, random_batch({5, 2, 4}, 9, 5), coordinates, 6);
    }});
    out.push_back({"ret-20k", [=] {
        Ret<double> net(ret_preset(ModelKind::ret_20k), 7);
        return model_grad_check(net, random_batch({5, 1, 3}, 9, 8), coordinates, 9);
    }});
    out.push_back({"ret two heads", [=] {
        RetConfig c;
        c.blocks = 2;
        c.dim = 32;
        c.head_dim = 16;
        c.context = 8;
        Ret<double> net(c, 10);
        return model_grad_check(net, random_batch({6, 4}, 9, 11), coordinates, 12);
    }});
    return out;
}

} // namespace evtest
