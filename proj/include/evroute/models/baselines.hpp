#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/core/types.hpp"
#include "evroute/simgen/physics.hpp"

namespace evroute::models {

/// Route energy as an affine function of route distance.
struct DistanceBaseline {
    double slope = 0.0;     // Wh per meter
    double intercept = 0.0; // Wh per route

    double predict_route(double distance_m) const noexcept { return slope * distance_m + intercept; }

    /// Route prediction split over segments in proportion to segment distance. A
    /// zero-distance route gets an even split.
    std::vector<double> predict_segments(const Route& route) const {
        const double total = route.total_distance_m();
        const double e = predict_route(total);
        std::vector<double> out(route.segments.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = total > 0.0 ? e * route.segments[i].distance_m / total : e / static_cast<double>(out.size());
        return out;
    }

    bool operator==(const DistanceBaseline&) const = default;
};

/// Ordinary least squares of (distance, energy) pairs.
inline DistanceBaseline fit_distance_baseline(std::span<const double> distance_m, std::span<const double> energy_wh) {
    if (distance_m.size() != energy_wh.size())
        throw ShapeError("distance baseline: " + std::to_string(distance_m.size()) + " distances vs " +
                         std::to_string(energy_wh.size()) + " energies");
    const std::size_t n = distance_m.size();
    if (n < 2) throw ValidationError("distance baseline needs at least 2 routes, got " + std::to_string(n));
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += distance_m[i];
        my += energy_wh[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (distance_m[i] - mx) * (distance_m[i] - mx);
        sxy += (distance_m[i] - mx) * (energy_wh[i] - my);
    }
    if (!(sxx > 0.0)) throw DegenerateFitError("distance baseline: every route has the same distance");
    DistanceBaseline b;
    b.slope = sxy / sxx;
    b.intercept = my - b.slope * mx;
    return b;
}

inline DistanceBaseline fit_distance_baseline(std::span<const Route* const> train_routes) {
    std::vector<double> x, y;
    x.reserve(train_routes.size());
    y.reserve(train_routes.size());
    for (const auto* r : train_routes) {
        x.push_back(r->total_distance_m());
        y.push_back(r->total_energy_wh());
    }
    return fit_distance_baseline(x, y);
}

/// Oracle physics with nominal latents, per segment.
inline std::vector<double> physics_proxy_segments(const Route& route, const std::vector<VehicleModel>& fleet) {
    if (route.vehicle_id >= fleet.size())
        throw UnknownVehicleError("route " + route.route_id + " uses vehicle " + std::to_string(route.vehicle_id) +
                                  " outside a fleet of " + std::to_string(fleet.size()));
    const auto& v = fleet[route.vehicle_id];
    std::vector<double> out;
    out.reserve(route.segments.size());
    for (const auto& s : route.segments) out.push_back(simgen::physics_energy_proxy(s, v));
    return out;
}

} // namespace evroute::models
