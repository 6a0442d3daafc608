#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/core/error.hpp"

namespace evroute::eval {

inline constexpr double kMinActualWh = 1.0;
inline constexpr double kHotThresholdC = 35.0;
inline constexpr double kColdThresholdC = 0.0;

struct MapeResult {
    double pct = 0.0;
    std::size_t retained = 0;
    std::size_t skipped = 0; // pairs with actual <= kMinActualWh
};

/// 100 * mean(|pred - actual| / actual) over pairs whose actual exceeds `min_actual`.
inline MapeResult mape(std::span<const double> preds, std::span<const double> actuals, double min_actual = kMinActualWh) {
    if (preds.size() != actuals.size())
        throw ShapeError("mape: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(actuals.size()) +
                         " actuals");
    if (preds.empty()) throw ValidationError("mape: no pairs");
    MapeResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!(actuals[i] > min_actual)) {
            ++r.skipped;
            continue;
        }
        sum += std::abs(preds[i] - actuals[i]) / actuals[i];
        ++r.retained;
    }
    if (r.retained == 0)
        throw EmptyEvaluationError("mape: all " + std::to_string(r.skipped) + " pairs have actual <= " +
                                   std::to_string(min_actual) + " Wh");
    r.pct = 100.0 * sum / static_cast<double>(r.retained);
    return r;
}

/// MAPE improvement over the reference in basis points; positive means better.
inline double bps_delta(double reference_mape_pct, double model_mape_pct) {
    return (reference_mape_pct - model_mape_pct) * 100.0;
}

enum class Slice { overall, hot, cold };

inline bool in_slice(const Route& r, Slice s) {
    switch (s) {
        case Slice::overall: return true;
        case Slice::hot: return r.mean_temperature_c() >= kHotThresholdC;
        case Slice::cold: return r.mean_temperature_c() <= kColdThresholdC;
    }
    return false;
}

inline std::vector<const Route*> slice_routes(std::span<const Route* const> routes, Slice s) {
    std::vector<const Route*> out;
    for (const auto* r : routes)
        if (in_slice(*r, s)) out.push_back(r);
    return out;
}

inline std::vector<const Route*> slice_routes(const Dataset& ds, Slice s, Split split = Split::test) {
    return slice_routes(ds.routes_in(split), s);
}

} // namespace evroute::eval
