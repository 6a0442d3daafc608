#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/core/types.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute {

inline constexpr std::size_t kContinuousFeatures = 4;
inline constexpr std::size_t kFixedFeatures = 5;
inline constexpr double kStdFloor = 1e-6;
inline constexpr const char* kSchemaVersion = "evroute-features/1";

/// Encoded layout: [distance, speed_moving, time_stationary, air_temperature, is_stem,
/// onehot_0 .. onehot_{V-1}]. The first four columns are z-scored.
struct FeatureSchema {
    std::string version = kSchemaVersion;
    std::vector<std::string> feature_names;
    std::size_t vehicle_vocab = 0;
    std::array<double, kContinuousFeatures> mean{};
    std::array<double, kContinuousFeatures> std{1.0, 1.0, 1.0, 1.0};

    std::size_t width() const noexcept { return kFixedFeatures + vehicle_vocab; }

    static std::vector<std::string> names_for(std::size_t vocab) {
        std::vector<std::string> names{"distance", "speed_moving", "time_stationary", "air_temperature",
                                       "is_stem"};
        for (std::size_t i = 0; i < vocab; ++i) names.push_back("onehot_" + std::to_string(i));
        return names;
    }

    static FeatureSchema identity(std::size_t vocab) {
        FeatureSchema s;
        s.vehicle_vocab = vocab;
        s.feature_names = names_for(vocab);
        s.mean = {0.0, 0.0, 0.0, 0.0};
        s.std = {1.0, 1.0, 1.0, 1.0};
        return s;
    }

    void validate() const {
        if (version != kSchemaVersion)
            throw VersionError("feature schema version '" + version + "' is not supported (expected '" +
                               kSchemaVersion + "')");
        if (vehicle_vocab == 0) throw ValidationError("feature schema needs at least one vehicle");
        if (feature_names != names_for(vehicle_vocab))
            throw ValidationError("feature schema names do not match the fixed feature order");
        for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
            if (!std::isfinite(mean[i]) || !std::isfinite(std[i]) || !(std[i] > 0.0))
                throw ValidationError("feature schema statistics must be finite with std > 0");
        }
    }

    /// Stable hash of everything that changes the encoded vectors.
    std::uint64_t fingerprint() const {
        std::string canon = version + "|V=" + std::to_string(vehicle_vocab);
        for (const auto& n : feature_names) canon += "|" + n;
        char buf[64];
        for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
            std::snprintf(buf, sizeof buf, "|%a,%a", mean[i], std[i]);
            canon += buf;
        }
        return fnv1a64(canon);
    }

    bool operator==(const FeatureSchema&) const = default;
};

inline std::array<double, kContinuousFeatures> continuous_values(const Segment& s) noexcept {
    return {s.distance_m, s.speed_mps, s.time_stationary_s, s.air_temperature_c};
}

/// Writes the encoded segment into `out`, which must have schema.width() slots.
template <class T>
void encode_segment_into(const Segment& segment, std::size_t vehicle_id, const FeatureSchema& schema,
                         std::span<T> out) {
    if (vehicle_id >= schema.vehicle_vocab)
        throw UnknownVehicleError("vehicle id " + std::to_string(vehicle_id) + " is outside the vocabulary of " +
                                  std::to_string(schema.vehicle_vocab));
    segment.validate();
    if (out.size() != schema.width())
        throw ShapeError("encode buffer has " + std::to_string(out.size()) + " slots, schema width is " +
                         std::to_string(schema.width()));
    const auto raw = continuous_values(segment);
    for (std::size_t i = 0; i < kContinuousFeatures; ++i)
        out[i] = static_cast<T>((raw[i] - schema.mean[i]) / schema.std[i]);
    out[4] = segment.is_stem ? T{1} : T{0};
    for (std::size_t v = 0; v < schema.vehicle_vocab; ++v) out[kFixedFeatures + v] = T{0};
    out[kFixedFeatures + vehicle_id] = T{1};
}

template <class T = double>
std::vector<T> encode_segment(const Segment& segment, std::size_t vehicle_id, const FeatureSchema& schema) {
    std::vector<T> out(schema.width());
    encode_segment_into<T>(segment, vehicle_id, schema, out);
    return out;
}

/// L x F matrix; row t is the encoding of segment t.
template <class T = float>
nn::Tensor<T> route_to_matrix(const Route& route, const FeatureSchema& schema) {
    if (route.segments.empty()) throw ValidationError("route " + route.route_id + " has no segments");
    if (route.segments.size() > kMaxRouteLength)
        throw LengthError("route " + route.route_id + " has " + std::to_string(route.segments.size()) +
                          " segments; the maximum is " + std::to_string(kMaxRouteLength));
    nn::Tensor<T> m(route.segments.size(), schema.width());
    for (std::size_t t = 0; t < route.segments.size(); ++t)
        encode_segment_into<T>(route.segments[t], route.vehicle_id, schema, m.row(t));
    return m;
}

/// Z-score statistics over every segment of the given routes (population std, floored).
inline FeatureSchema fit_schema(std::span<const Route* const> train_routes, std::size_t vehicle_vocab) {
    if (vehicle_vocab == 0) throw ValidationError("vehicle vocabulary must be non-empty");
    std::size_t n = 0;
    std::array<double, kContinuousFeatures> sum{};
    for (const Route* r : train_routes)
        for (const auto& s : r->segments) {
            const auto v = continuous_values(s);
            for (std::size_t i = 0; i < kContinuousFeatures; ++i) sum[i] += v[i];
            ++n;
        }
    if (n < 2) throw ValidationError("fit_schema needs at least 2 training segments, got " + std::to_string(n));

    FeatureSchema schema = FeatureSchema::identity(vehicle_vocab);
    for (std::size_t i = 0; i < kContinuousFeatures; ++i) schema.mean[i] = sum[i] / static_cast<double>(n);

    std::array<double, kContinuousFeatures> sq{};
    for (const Route* r : train_routes)
        for (const auto& s : r->segments) {
            const auto v = continuous_values(s);
            for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
                const double d = v[i] - schema.mean[i];
                sq[i] += d * d;
            }
        }
    for (std::size_t i = 0; i < kContinuousFeatures; ++i)
        schema.std[i] = std::max(std::sqrt(sq[i] / static_cast<double>(n)), kStdFloor);
    return schema;
}

inline FeatureSchema fit_schema(const std::vector<Route>& train_routes, std::size_t vehicle_vocab) {
    std::vector<const Route*> ptrs;
    ptrs.reserve(train_routes.size());
    for (const auto& r : train_routes) ptrs.push_back(&r);
    return fit_schema(std::span<const Route* const>(ptrs), vehicle_vocab);
}

} // namespace evroute
