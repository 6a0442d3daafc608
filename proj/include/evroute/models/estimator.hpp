#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "evroute/core/dataset.hpp"
#include "evroute/core/error.hpp"
#include "evroute/core/schema.hpp"
#include "evroute/models/baselines.hpp"
#include "evroute/models/batch.hpp"
#include "evroute/models/config.hpp"
#include "evroute/models/ffn.hpp"
#include "evroute/models/ret.hpp"
#include "evroute/models/rnn.hpp"
#include "evroute/nn/checkpoint.hpp"

namespace evroute::models {

inline constexpr std::size_t kDefaultChunkRoutes = 64;

/// Routes prepared for repeated inference. Feature matrices are built once here so that
/// timed forward passes do no encoding work. `routes` are borrowed, not owned.
struct EncodedRoutes {
    std::vector<const Route*> routes;
    std::vector<std::size_t> offsets{0}; // route i owns flat outputs offsets[i]..offsets[i+1]
    std::vector<PackedBatch<float>> chunks;
    std::vector<std::size_t> chunk_first; // first route index of each chunk

    std::size_t size() const noexcept { return routes.size(); }
    std::size_t segments() const noexcept { return offsets.back(); }
};

class Estimator {
public:
    virtual ~Estimator() = default;

    virtual ModelKind kind() const noexcept = 0;
    std::string name() const { return std::string(kind_name(kind())); }
    const FeatureSchema& schema() const noexcept { return schema_; }
    std::uint64_t schema_fingerprint() const { return schema_.fingerprint(); }

    void check_schema(const FeatureSchema& other) const {
        if (other.fingerprint() != schema_fingerprint())
            throw SchemaMismatchError(name() + ": model was built for a different feature schema");
    }

    EncodedRoutes encode(std::span<const Route* const> routes, std::size_t chunk_routes = kDefaultChunkRoutes) const {
        EncodedRoutes enc;
        enc.routes.assign(routes.begin(), routes.end());
        for (const auto* r : routes) {
            if (r->segments.empty()) throw ValidationError("route " + r->route_id + " has no segments");
            enc.offsets.push_back(enc.offsets.back() + r->segments.size());
        }
        if (uses_features()) {
            chunk_routes = std::max<std::size_t>(chunk_routes, 1);
            for (std::size_t first = 0; first < routes.size(); first += chunk_routes) {
                const std::size_t n = std::min(chunk_routes, routes.size() - first);
                enc.chunks.push_back(pack_routes<float>(routes.subspan(first, n), schema_));
                enc.chunk_first.push_back(first);
            }
        }
        return enc;
    }

    /// One full forward pass over every encoded route: flat per-segment raw Wh.
    std::vector<double> forward(const EncodedRoutes& enc, std::size_t threads = 1) const {
        forward_calls_.fetch_add(1, std::memory_order_relaxed);
        std::vector<double> out(enc.segments());
        run(enc, out, std::max<std::size_t>(threads, 1));
        return out;
    }

    std::vector<double> predict_segments(std::span<const Route* const> routes, std::size_t threads = 1) const {
        return forward(encode(routes), threads);
    }

    std::size_t forward_calls() const noexcept { return forward_calls_.load(std::memory_order_relaxed); }

    virtual nn::Checkpoint to_checkpoint() const = 0;

protected:
    explicit Estimator(FeatureSchema schema) : schema_(std::move(schema)) {}

    virtual bool uses_features() const noexcept { return false; }
    virtual void run(const EncodedRoutes& enc, std::vector<double>& out, std::size_t threads) const = 0;

    nn::Checkpoint base_checkpoint(nlohmann::ordered_json arch) const {
        nn::Checkpoint c;
        c.config["kind"] = name();
        c.config["arch"] = std::move(arch);
        c.config["schema"] = schema_to_json(schema_);
        c.schema_fingerprint = schema_fingerprint();
        return c;
    }

    FeatureSchema schema_;

private:
    mutable std::atomic<std::size_t> forward_calls_{0};
};

class DistanceEstimator final : public Estimator {
public:
    DistanceEstimator(FeatureSchema schema, DistanceBaseline fit) : Estimator(std::move(schema)), fit_(fit) {}

    ModelKind kind() const noexcept override { return ModelKind::distance; }
    const DistanceBaseline& fit() const noexcept { return fit_; }

    nn::Checkpoint to_checkpoint() const override {
        return base_checkpoint({{"slope", fit_.slope}, {"intercept", fit_.intercept}});
    }

protected:
    void run(const EncodedRoutes& enc, std::vector<double>& out, std::size_t) const override {
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const auto seg = fit_.predict_segments(*enc.routes[i]);
            std::copy(seg.begin(), seg.end(), out.begin() + static_cast<std::ptrdiff_t>(enc.offsets[i]));
        }
    }

private:
    DistanceBaseline fit_;
};

class PhysicsEstimator final : public Estimator {
public:
    PhysicsEstimator(FeatureSchema schema, std::vector<VehicleModel> fleet)
        : Estimator(std::move(schema)), fleet_(std::move(fleet)) {
        validate_fleet(fleet_);
    }

    ModelKind kind() const noexcept override { return ModelKind::physics; }

    nn::Checkpoint to_checkpoint() const override {
        auto fleet = nlohmann::ordered_json::array();
        for (const auto& v : fleet_) fleet.push_back(detail::vehicle_to_json(v));
        return base_checkpoint({{"fleet", std::move(fleet)}});
    }

protected:
    void run(const EncodedRoutes& enc, std::vector<double>& out, std::size_t) const override {
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const auto seg = physics_proxy_segments(*enc.routes[i], fleet_);
            std::copy(seg.begin(), seg.end(), out.begin() + static_cast<std::ptrdiff_t>(enc.offsets[i]));
        }
    }

private:
    std::vector<VehicleModel> fleet_;
};

/// A trainable network behind the Estimator interface. Networks predict kWh; outputs are
/// reported in Wh.
template <class Net>
class NetworkEstimator final : public Estimator {
public:
    NetworkEstimator(ModelKind kind, FeatureSchema schema, Net net)
        : Estimator(std::move(schema)), kind_(kind), net_(std::move(net)) {
        if (net_.config().input_width != schema_.width())
            throw ShapeError(name() + ": network width " + std::to_string(net_.config().input_width) +
                             " does not match schema width " + std::to_string(schema_.width()));
    }

    ModelKind kind() const noexcept override { return kind_; }
    Net& net() noexcept { return net_; }
    const Net& net() const noexcept { return net_; }

    nn::Checkpoint to_checkpoint() const override {
        auto c = base_checkpoint(to_json(net_.config()));
        nn::store_parameters(net_.parameters(), c);
        return c;
    }

    /// Raw kWh outputs for one packed batch, inference only.
    void predict_chunk(const PackedBatch<float>& batch, double* out) const {
        nn::Tape<float> tape(false);
        const auto& y = net_.forward(tape, batch).value();
        for (std::size_t r = 0; r < y.rows(); ++r) out[r] = 1000.0 * static_cast<double>(y(r, 0));
    }

protected:
    bool uses_features() const noexcept override { return true; }

    void run(const EncodedRoutes& enc, std::vector<double>& out, std::size_t threads) const override {
        const std::size_t n = enc.chunks.size();
        auto work = [&](std::size_t k0) {
            for (std::size_t k = k0; k < n; k += threads)
                predict_chunk(enc.chunks[k], out.data() + enc.offsets[enc.chunk_first[k]]);
        };
        if (threads <= 1 || n <= 1) {
            threads = 1;
            work(0);
            return;
        }
        threads = std::min(threads, n);
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    }

private:
    ModelKind kind_;
    Net net_;
};

using FfnEstimator = NetworkEstimator<Ffn<float>>;
using RnnEstimator = NetworkEstimator<Rnn<float>>;
using RetEstimator = NetworkEstimator<Ret<float>>;

/// Freshly initialised network for a learned kind.
inline std::unique_ptr<Estimator> make_network(ModelKind kind, const FeatureSchema& schema, std::uint64_t seed) {
    const std::size_t F = schema.width();
    switch (kind) {
        case ModelKind::ffn: {
            FfnConfig c;
            c.input_width = F;
            return std::make_unique<FfnEstimator>(kind, schema, Ffn<float>(c, seed));
        }
        case ModelKind::rnn: {
            RnnConfig c;
            c.input_width = F;
            return std::make_unique<RnnEstimator>(kind, schema, Rnn<float>(c, seed));
        }
        case ModelKind::ret_20k:
        case ModelKind::ret_300k:
        case ModelKind::ret_3m: return std::make_unique<RetEstimator>(kind, schema, Ret<float>(ret_preset(kind, F), seed));
        default: throw ValidationError("'" + std::string(kind_name(kind)) + "' is not a trainable network");
    }
}

inline std::unique_ptr<Estimator> fit_distance(const Dataset& ds) {
    const auto train = ds.routes_in(Split::train);
    return std::make_unique<DistanceEstimator>(ds.schema, fit_distance_baseline(train));
}

inline std::unique_ptr<Estimator> make_physics(const Dataset& ds) {
    return std::make_unique<PhysicsEstimator>(ds.schema, ds.fleet);
}

inline std::unique_ptr<Estimator> load_estimator(const nn::Checkpoint& ckpt) {
    const auto& cfg = ckpt.config;
    if (!cfg.contains("kind") || !cfg.contains("arch") || !cfg.contains("schema"))
        throw VersionError("checkpoint config lacks kind/arch/schema");
    const ModelKind kind = parse_kind(cfg.at("kind").get<std::string>());
    FeatureSchema schema = schema_from_json(cfg.at("schema"));
    if (schema.fingerprint() != ckpt.schema_fingerprint)
        throw SchemaMismatchError("checkpoint schema does not match its recorded fingerprint");
    const auto& arch = cfg.at("arch");

    switch (kind) {
        case ModelKind::distance:
            return std::make_unique<DistanceEstimator>(
                std::move(schema), DistanceBaseline{arch.at("slope").get<double>(), arch.at("intercept").get<double>()});
        case ModelKind::physics: {
            std::vector<VehicleModel> fleet;
            for (const auto& v : arch.at("fleet")) fleet.push_back(detail::vehicle_from_json(v));
            return std::make_unique<PhysicsEstimator>(std::move(schema), std::move(fleet));
        }
        case ModelKind::ffn: {
            auto e = std::make_unique<FfnEstimator>(kind, std::move(schema), Ffn<float>(ffn_config_from_json(arch)));
            nn::load_parameters(ckpt, e->net().parameters());
            return e;
        }
        case ModelKind::rnn: {
            auto e = std::make_unique<RnnEstimator>(kind, std::move(schema), Rnn<float>(rnn_config_from_json(arch)));
            nn::load_parameters(ckpt, e->net().parameters());
            return e;
        }
        case ModelKind::ret_20k:
        case ModelKind::ret_300k:
        case ModelKind::ret_3m: {
            auto e = std::make_unique<RetEstimator>(kind, std::move(schema), Ret<float>(ret_config_from_json(arch)));
            nn::load_parameters(ckpt, e->net().parameters());
            return e;
        }
    }
    throw VersionError("unhandled model kind in checkpoint");
}

struct RouteEnergy {
    double raw = 0.0;
    double reported = 0.0; // raw floored at 0
};

inline RouteEnergy sum_route_energy(std::span<const double> segment_wh) {
    RouteEnergy e;
    for (double x : segment_wh) e.raw += x;
    e.reported = std::max(0.0, e.raw);
    return e;
}

inline RouteEnergy route_energy(const Estimator& model, const Route& route, const FeatureSchema& schema) {
    model.check_schema(schema);
    const Route* one[] = {&route};
    const auto seg = model.predict_segments(one);
    return sum_route_energy(seg);
}

} // namespace evroute::models
