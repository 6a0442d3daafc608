#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/core/error.hpp"
#include "evroute/core/schema.hpp"
#include "evroute/core/types.hpp"
#include "evroute/simgen/physics.hpp"

namespace evroute::simgen {

struct TemperatureComponent {
    double weight = 1.0;
    double mean_c = 15.0;
    double sd_c = 8.0;
};

/// Per-route ambient temperature: Gaussian mixture, clamped.
struct TemperatureMixture {
    std::vector<TemperatureComponent> components;
    double clamp_lo_c = -20.0;
    double clamp_hi_c = 45.0;

    static TemperatureMixture standard() {
        return {{{0.70, 15.0, 8.0}, {0.15, 38.0, 2.0}, {0.15, -5.0, 3.0}}, -20.0, 45.0};
    }

    /// Exact probability that a draw lands at or above `threshold_c` (clamping included).
    double mass_at_or_above(double threshold_c) const {
        if (threshold_c > clamp_hi_c) return 0.0;
        if (threshold_c <= clamp_lo_c) return 1.0;
        double p = 0.0;
        for (const auto& c : components)
            p += c.weight * 0.5 * std::erfc((threshold_c - c.mean_c) / (c.sd_c * std::sqrt(2.0)));
        return p;
    }

    double mass_at_or_below(double threshold_c) const {
        if (threshold_c < clamp_lo_c) return 0.0;
        if (threshold_c >= clamp_hi_c) return 1.0;
        double p = 0.0;
        for (const auto& c : components)
            p += c.weight * 0.5 * std::erfc(-(threshold_c - c.mean_c) / (c.sd_c * std::sqrt(2.0)));
        return p;
    }

    void validate() const {
        if (components.empty()) throw ValidationError("temperature mixture needs at least one component");
        double total = 0.0;
        for (const auto& c : components) {
            if (!(c.weight >= 0.0) || !(c.sd_c >= 0.0) || !std::isfinite(c.mean_c))
                throw ValidationError("temperature component needs weight >= 0, sd >= 0, finite mean");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ValidationError("temperature mixture weights must sum to 1");
        if (!(clamp_lo_c <= clamp_hi_c)) throw ValidationError("temperature clamp range is inverted");
    }
};

struct UniformRange {
    double lo = 0.0;
    double hi = 1.0;
};

struct GeneratorConfig {
    std::uint64_t seed = 0;
    std::size_t n_routes = 1000;
    std::size_t min_length = 20;
    std::size_t max_length = 100;
    TemperatureMixture temperature = TemperatureMixture::standard();
    double stem_fraction = 0.05;
    std::vector<VehicleModel> vehicle_fleet = default_fleet();

    UniformRange traffic{0.8, 1.4};
    UniformRange driver{0.9, 1.2};
    UniformRange hvac_usage{0.5, 2.0};
    double noise_sigma = 0.05;

    UniformRange stem_speed_mps{15.0, 25.0};
    UniformRange stem_distance_m{2000.0, 8000.0};
    UniformRange zone_speed_mps{4.0, 12.0};
    UniformRange zone_distance_m{100.0, 1500.0};
    UniformRange zone_stationary_s{60.0, 420.0};

    // Congested routes move slower: sampled free-flow speeds are divided by the traffic factor.
    bool congestion_slows_speed = true;

    unsigned threads = 1;

    void validate() const {
        if (!(min_length >= 1 && min_length <= max_length && max_length <= kMaxRouteLength))
            throw ValidationError("route length range must satisfy 1 <= min <= max <= " +
                                  std::to_string(kMaxRouteLength));
        temperature.validate();
        if (!(stem_fraction >= 0.0 && stem_fraction <= 0.5))
            throw ValidationError("stem_fraction must be in [0, 0.5]");
        if (vehicle_fleet.empty()) throw ValidationError("vehicle fleet is empty");
        validate_fleet(vehicle_fleet);
        if (traffic.lo < 0.5 || driver.lo < 0.5 || hvac_usage.lo < 0.0 || hvac_usage.hi > 2.0 ||
            traffic.lo > traffic.hi || driver.lo > driver.hi || hvac_usage.lo > hvac_usage.hi)
            throw ValidationError("latent ranges violate their bounds");
        if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
        for (const auto* r : {&stem_speed_mps, &zone_speed_mps})
            if (!(r->lo > 0.0 && r->lo <= r->hi)) throw ValidationError("speed ranges must be positive");
        for (const auto* r : {&stem_distance_m, &zone_distance_m, &zone_stationary_s})
            if (!(r->lo >= 0.0 && r->lo <= r->hi)) throw ValidationError("distance/time ranges must be >= 0");
    }
};

/// Independent stream per route, keyed by (seed, route_index).
inline std::mt19937_64 route_stream(std::uint64_t seed, std::uint64_t route_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(route_index), static_cast<std::uint32_t>(route_index >> 32),
                      0x45565254u};
    return std::mt19937_64(seq);
}

inline std::string route_id_for(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "route-%06zu", index);
    return buf;
}

/// 80/10/10 by hash of the id, so a route keeps its split however the set is generated.
inline Split split_for(const std::string& route_id) {
    const auto bucket = fnv1a64(route_id) % 10;
    if (bucket < 8) return Split::train;
    return bucket == 8 ? Split::val : Split::test;
}

inline std::size_t stem_count_each_end(std::size_t length, double stem_fraction) {
    if (stem_fraction <= 0.0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(stem_fraction * static_cast<double>(length)));
    return std::max<std::size_t>(1, n);
}

namespace detail {

inline double uniform(std::mt19937_64& rng, UniformRange r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

inline double draw_temperature(std::mt19937_64& rng, const TemperatureMixture& mix) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::size_t k = 0;
    for (; k + 1 < mix.components.size(); ++k) {
        if (u < mix.components[k].weight) break;
        u -= mix.components[k].weight;
    }
    const auto& c = mix.components[k];
    const double t = c.sd_c > 0.0 ? std::normal_distribution<double>(c.mean_c, c.sd_c)(rng) : c.mean_c;
    return std::clamp(t, mix.clamp_lo_c, mix.clamp_hi_c);
}

} // namespace detail

inline Route generate_route(const GeneratorConfig& cfg, std::size_t index) {
    auto rng = route_stream(cfg.seed, index);
    Route route;
    route.route_id = route_id_for(index);

    const auto length = std::uniform_int_distribution<std::size_t>(cfg.min_length, cfg.max_length)(rng);
    route.vehicle_id = std::uniform_int_distribution<std::size_t>(0, cfg.vehicle_fleet.size() - 1)(rng);
    const double temperature = detail::draw_temperature(rng, cfg.temperature);

    LatentConditions lat;
    lat.traffic_factor = detail::uniform(rng, cfg.traffic);
    lat.driver_factor = detail::uniform(rng, cfg.driver);
    lat.hvac_usage_factor = detail::uniform(rng, cfg.hvac_usage);
    lat.noise_sigma = cfg.noise_sigma;
    route.latents = lat;

    const auto& vehicle = cfg.vehicle_fleet[route.vehicle_id];
    const auto n_stem = stem_count_each_end(length, cfg.stem_fraction);
    const double speed_scale = cfg.congestion_slows_speed ? 1.0 / lat.traffic_factor : 1.0;
    std::normal_distribution<double> log_noise(0.0, 1.0);

    std::vector<double> energy;
    energy.reserve(length);
    route.segments.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        Segment s;
        s.is_stem = t < n_stem || t + n_stem >= length;
        s.air_temperature_c = temperature;
        if (s.is_stem) {
            s.speed_mps = detail::uniform(rng, cfg.stem_speed_mps) * speed_scale;
            s.distance_m = detail::uniform(rng, cfg.stem_distance_m);
            s.time_stationary_s = 0.0;
        } else {
            s.speed_mps = detail::uniform(rng, cfg.zone_speed_mps) * speed_scale;
            s.distance_m = detail::uniform(rng, cfg.zone_distance_m);
            s.time_stationary_s = detail::uniform(rng, cfg.zone_stationary_s);
        }
        const double z = log_noise(rng);
        const double noise = std::exp(lat.noise_sigma * z);
        energy.push_back(physics_energy_full(s, vehicle, lat, noise));
        route.segments.push_back(s);
    }
    route.actual_energy_wh = std::move(energy);
    return route;
}

/// Pure function of the config: the thread count only changes how the work is divided.
inline Dataset generate_dataset(const GeneratorConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.generator_seed = cfg.seed;
    ds.fleet = cfg.vehicle_fleet;
    ds.routes.resize(cfg.n_routes);

    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.n_routes)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < cfg.n_routes; ++i) ds.routes[i] = generate_route(cfg, i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < cfg.n_routes; i += workers) ds.routes[i] = generate_route(cfg, i);
            });
        for (auto& th : pool) th.join();
    }

    for (const auto& r : ds.routes) ds.split.emplace(r.route_id, split_for(r.route_id));

    const auto train = ds.routes_in(Split::train);
    std::size_t train_segments = 0;
    for (const auto* r : train) train_segments += r->length();
    ds.schema = train_segments >= 2 ? fit_schema(std::span<const Route* const>(train), cfg.vehicle_fleet.size())
                                    : FeatureSchema::identity(cfg.vehicle_fleet.size());
    return ds;
}

} // namespace evroute::simgen
