#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "evroute/core/error.hpp"
#include "evroute/core/schema.hpp"
#include "evroute/core/types.hpp"

namespace evroute {

inline constexpr const char* kRoutesFile = "routes.jsonl";
inline constexpr const char* kSchemaFile = "schema.json";

struct Dataset {
    std::vector<Route> routes;
    std::map<std::string, Split> split;
    std::uint64_t generator_seed = 0;
    FeatureSchema schema;
    std::vector<VehicleModel> fleet;

    Split split_of(const Route& r) const {
        auto it = split.find(r.route_id);
        if (it == split.end()) throw ValidationError("route " + r.route_id + " has no split label");
        return it->second;
    }

    std::vector<const Route*> routes_in(Split s) const {
        std::vector<const Route*> out;
        for (const auto& r : routes)
            if (split_of(r) == s) out.push_back(&r);
        return out;
    }

    std::vector<const Route*> all_routes() const {
        std::vector<const Route*> out;
        out.reserve(routes.size());
        for (const auto& r : routes) out.push_back(&r);
        return out;
    }

    const VehicleModel& vehicle(std::size_t id) const {
        if (id >= fleet.size())
            throw UnknownVehicleError("vehicle id " + std::to_string(id) + " is not in the fleet of " +
                                      std::to_string(fleet.size()));
        return fleet[id];
    }

    void validate() const {
        schema.validate();
        validate_fleet(fleet);
        if (split.size() != routes.size())
            throw ValidationError("split map has " + std::to_string(split.size()) + " entries for " +
                                  std::to_string(routes.size()) + " routes");
        for (const auto& r : routes) {
            r.validate();
            if (r.vehicle_id >= schema.vehicle_vocab)
                throw UnknownVehicleError("route " + r.route_id + " uses vehicle " + std::to_string(r.vehicle_id) +
                                          " outside the vocabulary of " + std::to_string(schema.vehicle_vocab));
            split_of(r);
        }
    }

    bool operator==(const Dataset&) const = default;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson segment_to_json(const Segment& s) {
    return ojson{{"d_m", s.distance_m},
                 {"v_mps", s.speed_mps},
                 {"t_stat_s", s.time_stationary_s},
                 {"temp_c", s.air_temperature_c},
                 {"is_stem", s.is_stem}};
}

inline Segment segment_from_json(const ojson& j) {
    Segment s;
    s.distance_m = j.at("d_m").get<double>();
    s.speed_mps = j.at("v_mps").get<double>();
    s.time_stationary_s = j.at("t_stat_s").get<double>();
    s.air_temperature_c = j.at("temp_c").get<double>();
    s.is_stem = j.at("is_stem").get<bool>();
    return s;
}

inline ojson vehicle_to_json(const VehicleModel& v) {
    return ojson{{"id", v.id},
                 {"name", v.name},
                 {"traction_base", v.traction_base},
                 {"traction_quad", v.traction_quad},
                 {"hvac_coeff", v.hvac_coeff},
                 {"cold_derate", v.cold_derate},
                 {"battery_capacity", v.battery_capacity}};
}

inline VehicleModel vehicle_from_json(const ojson& j) {
    VehicleModel v;
    v.id = j.at("id").get<std::size_t>();
    v.name = j.at("name").get<std::string>();
    v.traction_base = j.at("traction_base").get<double>();
    v.traction_quad = j.at("traction_quad").get<double>();
    v.hvac_coeff = j.at("hvac_coeff").get<double>();
    v.cold_derate = j.at("cold_derate").get<double>();
    v.battery_capacity = j.at("battery_capacity").get<double>();
    return v;
}

} // namespace detail

inline nlohmann::ordered_json schema_to_json(const FeatureSchema& s) {
    return nlohmann::ordered_json{{"version", s.version},
                                  {"feature_names", s.feature_names},
                                  {"vehicle_vocab", s.vehicle_vocab},
                                  {"mean", s.mean},
                                  {"std", s.std}};
}

inline FeatureSchema schema_from_json(const nlohmann::ordered_json& j) {
    FeatureSchema s;
    s.version = j.at("version").get<std::string>();
    if (s.version != kSchemaVersion)
        throw VersionError("feature schema version '" + s.version + "' is not supported (expected '" +
                           kSchemaVersion + "')");
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.vehicle_vocab = j.at("vehicle_vocab").get<std::size_t>();
    s.mean = j.at("mean").get<std::array<double, kContinuousFeatures>>();
    s.std = j.at("std").get<std::array<double, kContinuousFeatures>>();
    s.validate();
    return s;
}

inline std::string route_to_jsonl(const Route& r, Split split) {
    detail::ojson j;
    j["route_id"] = r.route_id;
    j["vehicle_id"] = r.vehicle_id;
    j["split"] = std::string(to_string(split));
    auto segs = detail::ojson::array();
    for (const auto& s : r.segments) segs.push_back(detail::segment_to_json(s));
    j["segments"] = std::move(segs);
    if (r.actual_energy_wh) j["energy_wh"] = *r.actual_energy_wh;
    if (r.latents) {
        j["latents"] = detail::ojson{{"traffic_factor", r.latents->traffic_factor},
                                     {"driver_factor", r.latents->driver_factor},
                                     {"hvac_usage_factor", r.latents->hvac_usage_factor},
                                     {"noise_sigma", r.latents->noise_sigma}};
    }
    return j.dump();
}

/// Writes `routes.jsonl` and the `schema.json` sidecar into `dir` (created if missing).
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    {
        std::ofstream out(dir / kRoutesFile, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + (dir / kRoutesFile).string() + " for writing");
        for (const auto& r : ds.routes) out << route_to_jsonl(r, ds.split_of(r)) << '\n';
        if (!out) throw IoError("write failed on " + (dir / kRoutesFile).string());
    }

    auto meta = schema_to_json(ds.schema);
    meta["generator_seed"] = ds.generator_seed;
    auto fleet = detail::ojson::array();
    for (const auto& v : ds.fleet) fleet.push_back(detail::vehicle_to_json(v));
    meta["fleet"] = std::move(fleet);

    std::ofstream out(dir / kSchemaFile, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + (dir / kSchemaFile).string() + " for writing");
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("write failed on " + (dir / kSchemaFile).string());
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    const auto schema_path = dir / kSchemaFile;
    {
        std::ifstream in(schema_path, std::ios::binary);
        if (!in) throw IoError("cannot open " + schema_path.string());
        detail::ojson meta;
        try {
            meta = detail::ojson::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(schema_path.string(), 1, e.what());
        }
        try {
            ds.schema = schema_from_json(meta);
            ds.generator_seed = meta.at("generator_seed").get<std::uint64_t>();
            for (const auto& v : meta.at("fleet")) ds.fleet.push_back(detail::vehicle_from_json(v));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(schema_path.string(), 1, e.what());
        }
    }

    const auto routes_path = dir / kRoutesFile;
    std::ifstream in(routes_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + routes_path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = detail::ojson::parse(line);
            Route r;
            r.route_id = j.at("route_id").get<std::string>();
            r.vehicle_id = j.at("vehicle_id").get<std::size_t>();
            const Split split = parse_split(j.at("split").get<std::string>());
            for (const auto& s : j.at("segments")) r.segments.push_back(detail::segment_from_json(s));
            if (j.contains("energy_wh")) r.actual_energy_wh = j.at("energy_wh").get<std::vector<double>>();
            if (j.contains("latents")) {
                const auto& l = j.at("latents");
                r.latents = LatentConditions{l.at("traffic_factor").get<double>(), l.at("driver_factor").get<double>(),
                                             l.at("hvac_usage_factor").get<double>(),
                                             l.at("noise_sigma").get<double>()};
            }
            if (!ds.split.emplace(r.route_id, split).second)
                throw ValidationError("duplicate route id " + r.route_id);
            ds.routes.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(routes_path.string(), lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(routes_path.string(), lineno, e.what());
        }
    }
    ds.validate();
    return ds;
}

} // namespace evroute
