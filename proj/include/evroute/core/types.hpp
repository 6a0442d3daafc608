#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evroute/core/error.hpp"

namespace evroute {

inline constexpr std::size_t kMaxRouteLength = 256;

/// Physics constants for one vehicle make/model. `id` is its one-hot slot.
struct VehicleModel {
    std::size_t id = 0;
    std::string name;
    double traction_base = 0.0;    // Wh per km
    double traction_quad = 0.0;    // Wh s^2 / (m^2 km)
    double hvac_coeff = 0.0;       // W per degC away from the cabin setpoint
    double cold_derate = 0.0;      // fraction per degC below 0
    double battery_capacity = 0.0; // kWh

    void validate() const {
        if (!(traction_base > 0.0) || !std::isfinite(traction_base))
            throw ValidationError("vehicle " + name + ": traction_base must be > 0");
        if (!(traction_quad >= 0.0) || !std::isfinite(traction_quad))
            throw ValidationError("vehicle " + name + ": traction_quad must be >= 0");
        if (!(hvac_coeff >= 0.0) || !std::isfinite(hvac_coeff))
            throw ValidationError("vehicle " + name + ": hvac_coeff must be >= 0");
        if (!(cold_derate >= 0.0 && cold_derate < 0.1))
            throw ValidationError("vehicle " + name + ": cold_derate must be in [0, 0.1)");
        if (!(battery_capacity > 0.0) || !std::isfinite(battery_capacity))
            throw ValidationError("vehicle " + name + ": battery_capacity must be > 0");
    }

    bool operator==(const VehicleModel&) const = default;
};

/// The synthetic four-vehicle fleet used by default everywhere.
inline std::vector<VehicleModel> default_fleet() {
    return {
        {0, "VAN-A", 120.0, 0.8, 50.0, 0.010, 60.0},
        {1, "VAN-B", 150.0, 1.0, 60.0, 0.012, 80.0},
        {2, "CAR-A", 90.0, 0.6, 40.0, 0.008, 40.0},
        {3, "VAN-C", 135.0, 0.9, 55.0, 0.010, 70.0},
    };
}

inline void validate_fleet(const std::vector<VehicleModel>& fleet) {
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        if (fleet[i].id != i)
            throw ValidationError("fleet ids must be dense 0..V-1; slot " + std::to_string(i) +
                                  " holds id " + std::to_string(fleet[i].id));
        fleet[i].validate();
    }
}

/// One travel leg plus the stop operation at its end.
struct Segment {
    double distance_m = 0.0;
    double speed_mps = 1.0;
    double time_stationary_s = 0.0;
    double air_temperature_c = 21.0;
    bool is_stem = false;

    void validate() const {
        if (!std::isfinite(distance_m) || !std::isfinite(speed_mps) ||
            !std::isfinite(time_stationary_s) || !std::isfinite(air_temperature_c))
            throw ValidationError("segment has a non-finite field");
        if (distance_m < 0.0) throw ValidationError("segment distance must be >= 0");
        if (!(speed_mps > 0.0)) throw ValidationError("segment moving speed must be > 0");
        if (time_stationary_s < 0.0) throw ValidationError("segment stationary time must be >= 0");
    }

    bool operator==(const Segment&) const = default;
};

/// Unobserved per-route conditions. Only generated data carries them.
struct LatentConditions {
    double traffic_factor = 1.0;
    double driver_factor = 1.0;
    double hvac_usage_factor = 1.0;
    double noise_sigma = 0.05;

    static LatentConditions nominal() { return {1.0, 1.0, 1.0, 0.0}; }

    void validate() const {
        if (!std::isfinite(traffic_factor) || !std::isfinite(driver_factor) ||
            !std::isfinite(hvac_usage_factor) || !std::isfinite(noise_sigma))
            throw ValidationError("latent conditions must be finite");
        if (traffic_factor < 0.5) throw ValidationError("traffic_factor must be >= 0.5");
        if (driver_factor < 0.5) throw ValidationError("driver_factor must be >= 0.5");
        if (hvac_usage_factor < 0.0 || hvac_usage_factor > 2.0)
            throw ValidationError("hvac_usage_factor must be in [0, 2]");
        if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be >= 0");
    }

    bool operator==(const LatentConditions&) const = default;
};

struct Route {
    std::string route_id;
    std::size_t vehicle_id = 0;
    std::vector<Segment> segments;
    std::optional<std::vector<double>> actual_energy_wh;
    std::optional<LatentConditions> latents;

    std::size_t length() const noexcept { return segments.size(); }

    void validate() const {
        if (segments.empty()) throw ValidationError("route " + route_id + " has no segments");
        if (segments.size() > kMaxRouteLength)
            throw LengthError("route " + route_id + " has " + std::to_string(segments.size()) +
                              " segments; the maximum is " + std::to_string(kMaxRouteLength));
        for (const auto& s : segments) s.validate();
        if (actual_energy_wh) {
            if (actual_energy_wh->size() != segments.size())
                throw ValidationError("route " + route_id + ": energy list length differs from segment count");
            for (double e : *actual_energy_wh)
                if (!std::isfinite(e) || e < 0.0)
                    throw ValidationError("route " + route_id + ": energies must be finite and >= 0");
        }
        if (latents) latents->validate();
    }

    double total_distance_m() const noexcept {
        double d = 0.0;
        for (const auto& s : segments) d += s.distance_m;
        return d;
    }

    double mean_temperature_c() const noexcept {
        if (segments.empty()) return 0.0;
        double t = 0.0;
        for (const auto& s : segments) t += s.air_temperature_c;
        return t / static_cast<double>(segments.size());
    }

    double total_energy_wh() const {
        if (!actual_energy_wh) throw ValidationError("route " + route_id + " has no actual energy");
        double e = 0.0;
        for (double x : *actual_energy_wh) e += x;
        return e;
    }

    bool operator==(const Route&) const = default;
};

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split label '" + std::string(s) + "'");
}

/// 64-bit FNV-1a. Used for split assignment, fingerprints and artifact hashes.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace evroute
