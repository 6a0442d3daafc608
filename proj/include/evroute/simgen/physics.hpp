#pragma once

#include <algorithm>
#include <cmath>

#include "evroute/core/error.hpp"
#include "evroute/core/types.hpp"

namespace evroute::simgen {

inline constexpr double kCabinSetpointC = 21.0;

struct EnergyBreakdown {
    double traction_wh = 0.0;
    double hvac_wh = 0.0;
    double derate = 1.0;
    double total_wh = 0.0;
};

/// Full-knowledge oracle:
///   derate(T) * [d_km (A + B v^2) traffic driver + hvac |T - 21| usage (t_move + t_stat) / 3600] * noise
inline EnergyBreakdown physics_breakdown(const Segment& segment, const VehicleModel& vehicle,
                                         const LatentConditions& latents, double noise_draw) {
    if (!(noise_draw > 0.0) || !std::isfinite(noise_draw))
        throw ValidationError("noise draw must be a finite positive multiplier");
    const double d_km = segment.distance_m / 1000.0;
    const double v = segment.speed_mps;
    const double t_move = segment.distance_m / v;
    const double t = segment.air_temperature_c;

    EnergyBreakdown e;
    e.traction_wh = d_km * (vehicle.traction_base + vehicle.traction_quad * v * v) * latents.traffic_factor *
                    latents.driver_factor;
    e.hvac_wh = vehicle.hvac_coeff * std::abs(t - kCabinSetpointC) * latents.hvac_usage_factor *
                (t_move + segment.time_stationary_s) / 3600.0;
    e.derate = 1.0 + vehicle.cold_derate * std::max(0.0, -t);
    e.total_wh = std::max(0.0, e.derate * (e.traction_wh + e.hvac_wh) * noise_draw);
    return e;
}

inline double physics_energy_full(const Segment& segment, const VehicleModel& vehicle,
                                  const LatentConditions& latents, double noise_draw) {
    return physics_breakdown(segment, vehicle, latents, noise_draw).total_wh;
}

/// The oracle evaluated with nominal latents and no noise: what a planner can compute.
inline double physics_energy_proxy(const Segment& segment, const VehicleModel& vehicle) {
    return physics_energy_full(segment, vehicle, LatentConditions::nominal(), 1.0);
}

} // namespace evroute::simgen
