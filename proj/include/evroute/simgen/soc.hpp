#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/core/error.hpp"
#include "evroute/core/types.hpp"

namespace evroute::simgen {

struct SocTrace {
    std::vector<double> soc_pct; // after each segment, clamped at 0
    double returning_soc_pct = 100.0;
    double unclamped_returning_soc_pct = 100.0;
    bool feasible = true;
};

inline SocTrace soc_trace(const Route& route, const VehicleModel& vehicle) {
    if (!route.actual_energy_wh) throw ValidationError("route " + route.route_id + " has no actual energy");
    const double capacity_wh = vehicle.battery_capacity * 1000.0;
    SocTrace trace;
    trace.soc_pct.reserve(route.actual_energy_wh->size());
    double soc = 100.0;
    for (double e : *route.actual_energy_wh) {
        soc -= 100.0 * e / capacity_wh;
        trace.soc_pct.push_back(std::max(0.0, soc));
    }
    trace.unclamped_returning_soc_pct = soc;
    trace.returning_soc_pct = std::max(0.0, soc);
    trace.feasible = soc >= 0.0;
    return trace;
}

struct ScatterPoint {
    double norm_distance = 0.0;
    double returning_soc_pct = 0.0;
    double mean_temp_c = 0.0;
};

/// One point per route; distance is normalised by the longest route in the dataset.
inline std::vector<ScatterPoint> soc_scatter(const Dataset& ds) {
    double max_distance = 0.0;
    for (const auto& r : ds.routes) max_distance = std::max(max_distance, r.total_distance_m());
    std::vector<ScatterPoint> points;
    points.reserve(ds.routes.size());
    for (const auto& r : ds.routes) {
        const auto trace = soc_trace(r, ds.vehicle(r.vehicle_id));
        points.push_back({max_distance > 0.0 ? r.total_distance_m() / max_distance : 0.0, trace.returning_soc_pct,
                          r.mean_temperature_c()});
    }
    return points;
}

inline void write_soc_scatter(const std::vector<ScatterPoint>& points, std::ostream& out) {
    out << "norm_distance,returning_soc_pct,mean_temp_c\n";
    out << std::setprecision(10);
    for (const auto& p : points) out << p.norm_distance << ',' << p.returning_soc_pct << ',' << p.mean_temp_c << '\n';
}

inline void export_soc_scatter(const Dataset& ds, const std::filesystem::path& path) {
    const auto points = soc_scatter(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_soc_scatter(points, out);
    if (!out) throw IoError("write failed on " + path.string());
}

} // namespace evroute::simgen
