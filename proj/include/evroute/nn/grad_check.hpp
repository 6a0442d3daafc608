#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/nn/tape.hpp"

namespace evroute::nn {

struct GradCheckOptions {
    double step = 1e-3;            // central-difference half-width
    std::size_t coordinates = 200; // sampled when the model has more than this many
    std::uint64_t seed = 0;
    double denominator_floor = 1e-6;
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares tape gradients against central finite differences, both in double precision.
///
/// `forward(tape, input)` must return a scalar Var and be deterministic. Parameters are
/// perturbed in place and restored.
template <class Forward, class Input>
GradCheckReport grad_check(Forward&& forward, const std::vector<Parameter<double>*>& params, const Input& input,
                           double tolerance, const GradCheckOptions& opts = {}) {
    if (params.empty()) throw ContractError("grad_check: no parameters");
    for (auto* p : params) p->zero_grad();
    {
        Tape<double> tape(true);
        Var<double> loss = forward(tape, input);
        tape.backward(loss);
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->value.size(); ++i) coords.emplace_back(k, i);
    if (coords.size() > opts.coordinates) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(opts.coordinates);
    }

    auto evaluate = [&] {
        Tape<double> tape(false);
        const Var<double> loss = forward(tape, input);
        if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("grad_check: forward must return a scalar");
        return loss.value()[0];
    };

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& [k, i] : coords) {
        double& x = params[k]->value[i];
        const double saved = x;
        x = saved + opts.step;
        const double up = evaluate();
        x = saved - opts.step;
        const double down = evaluate();
        x = saved;

        const double numeric = (up - down) / (2.0 * opts.step);
        const double analytic = params[k]->grad[i];
        const double abs_err = std::abs(analytic - numeric);
        const double rel_err =
            abs_err / std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel_err >= report.max_rel_error) {
            report.max_rel_error = rel_err;
            report.worst_parameter = params[k]->name;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
        ++report.checked;
    }
    for (auto* p : params) p->zero_grad();
    report.passed = report.max_rel_error < tolerance;
    return report;
}

} // namespace evroute::nn
