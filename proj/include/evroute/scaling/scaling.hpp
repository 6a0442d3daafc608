#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "evroute/core/error.hpp"
#include "evroute/models/config.hpp"

namespace evroute::scaling {

// log10(N) = kSlope * log10(D) + kIntercept, D in segments.
inline constexpr double kSlope = 0.51;
inline constexpr double kIntercept = 0.0617;

inline double log10_optimal_params(double segments) {
    if (!(segments >= 1.0) || !std::isfinite(segments))
        throw DomainError("data size must be at least 1 segment, got " + std::to_string(segments));
    return kSlope * std::log10(segments) + kIntercept;
}

/// Compute-optimal parameter count before rounding.
inline double optimal_params_exact(double segments) { return std::pow(10.0, log10_optimal_params(segments)); }

inline std::uint64_t optimal_params(double segments) {
    return static_cast<std::uint64_t>(std::llround(optimal_params_exact(segments)));
}

/// Inverse of the sizing line: segments for which `params` would be optimal.
inline double required_segments(double params) {
    if (!(params > 0.0) || !std::isfinite(params))
        throw DomainError("parameter count must be positive, got " + std::to_string(params));
    return std::pow(10.0, (std::log10(params) - kIntercept) / kSlope);
}

inline constexpr double kBudgetSlack = 1.25;

struct PresetChoice {
    models::ModelKind kind = models::ModelKind::ret_20k;
    models::RetConfig config;
    std::size_t param_count = 0;
    bool undersized = false; // budget is below even the smallest preset
    std::string warning;
};

/// Largest RET preset with param_count <= 1.25 N; the smallest preset otherwise.
inline PresetChoice preset_for_budget(double params, std::size_t input_width = 9) {
    if (!(params > 0.0) || !std::isfinite(params))
        throw DomainError("parameter budget must be positive, got " + std::to_string(params));
    PresetChoice out;
    bool found = false;
    for (auto k : {models::ModelKind::ret_20k, models::ModelKind::ret_300k, models::ModelKind::ret_3m}) {
        const auto cfg = models::ret_preset(k, input_width);
        const auto n = models::param_count(cfg);
        if (static_cast<double>(n) <= kBudgetSlack * params) {
            out.kind = k;
            out.config = cfg;
            out.param_count = n;
            found = true;
        }
    }
    if (!found) {
        out.config = models::ret_preset(models::ModelKind::ret_20k, input_width);
        out.param_count = models::param_count(out.config);
        out.undersized = true;
        out.warning = "budget of " + std::to_string(static_cast<long long>(std::llround(params))) +
                      " parameters is below the smallest preset (" + std::to_string(out.param_count) +
                      "); using ret-20k anyway";
    }
    return out;
}

} // namespace evroute::scaling
