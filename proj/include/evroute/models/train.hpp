#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/core/error.hpp"
#include "evroute/models/batch.hpp"
#include "evroute/models/estimator.hpp"
#include "evroute/nn/adam.hpp"
#include "evroute/nn/loss.hpp"

namespace evroute::models {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32; // routes
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    bool early_stopping = true;

    void validate() const {
        if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0 || patience == 0)
            throw ValidationError("train: learning rate, batch size, epochs and patience must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0; // mean per-batch MAE in kWh
    double val_mape_pct = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mape_pct = std::numeric_limits<double>::infinity();
    double final_loss = 0.0;
    bool stopped_early = false;
};

/// Route-level MAPE (%) of raw summed predictions; routes with actual total <= 1 Wh skipped.
inline double route_mape_pct(const Estimator& model, std::span<const Route* const> routes) {
    const auto enc = model.encode(routes);
    const auto seg = model.forward(enc);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const double actual = routes[i]->total_energy_wh();
        if (actual <= 1.0) continue;
        double pred = 0.0;
        for (std::size_t k = enc.offsets[i]; k < enc.offsets[i + 1]; ++k) pred += seg[k];
        sum += std::abs(pred - actual) / actual;
        ++n;
    }
    if (n == 0) throw EmptyEvaluationError("no route with actual energy above 1 Wh");
    return 100.0 * sum / static_cast<double>(n);
}

inline void write_history_csv(const TrainResult& r, std::ostream& out) {
    out << "epoch,train_loss_kwh,val_mape_pct,seconds\n";
    for (const auto& e : r.history) out << e.epoch << ',' << e.train_loss << ',' << e.val_mape_pct << ',' << e.seconds << '\n';
}

/// Minibatch Adam on masked per-segment MAE (kWh targets). Early stopping watches
/// validation route MAPE and restores the best parameters seen. Single-threaded and
/// deterministic for a fixed seed.
template <class Net>
TrainResult train(NetworkEstimator<Net>& model, const Dataset& ds, const TrainConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    model.check_schema(ds.schema);
    const auto train_routes = ds.routes_in(Split::train);
    const auto val_routes = ds.routes_in(Split::val);
    if (train_routes.empty()) throw ValidationError("train: the train split is empty");
    if (val_routes.empty()) throw ValidationError("train: the val split is empty");

    std::vector<nn::Tensor<float>> features, targets;
    features.reserve(train_routes.size());
    targets.reserve(train_routes.size());
    for (const auto* r : train_routes) {
        if (!r->actual_energy_wh) throw ValidationError("train: route " + r->route_id + " has no energy labels");
        features.push_back(route_to_matrix<float>(*r, ds.schema));
        nn::Tensor<float> y(r->segments.size(), 1);
        for (std::size_t t = 0; t < y.rows(); ++t) y(t, 0) = static_cast<float>((*r->actual_energy_wh)[t] / 1000.0);
        targets.push_back(std::move(y));
    }

    auto& params = model.net().parameters();
    const auto plist = params.pointers();
    nn::AdamConfig acfg;
    acfg.learning_rate = cfg.learning_rate;
    auto adam = nn::make_adam_state(plist, acfg);
    params.zero_grad();

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_routes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    auto best = params.snapshot();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - first);
            std::vector<const nn::Tensor<float>*> xs, ys;
            for (std::size_t i = first; i < first + n; ++i) {
                xs.push_back(&features[order[i]]);
                ys.push_back(&targets[order[i]]);
            }
            const auto batch = pack<float>(std::span<const nn::Tensor<float>* const>(xs));
            const auto target = pack<float>(std::span<const nn::Tensor<float>* const>(ys)).features;
            const nn::Tensor<float> mask(target.rows(), 1, 1.0f);

            nn::Tape<float> tape;
            float loss = 0.0f;
            try {
                auto l = nn::mae_loss(model.net().forward(tape, batch), target, mask);
                loss = l.value()[0];
                tape.backward(l);
            } catch (const NonFiniteError& e) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batches) + ": " + e.what());
            }
            nn::adam_step(plist, adam);
            for (const auto* p : plist)
                if (!nn::all_finite(p->value))
                    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": parameter " +
                                          p->name + " became non-finite");
            loss_sum += loss;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        try {
            rec.val_mape_pct = route_mape_pct(model, val_routes);
        } catch (const NonFiniteError& e) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " (validation): " + e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        result.final_loss = rec.train_loss;
        if (log)
            *log << model.name() << " epoch " << epoch << " loss " << rec.train_loss << " val_mape " << rec.val_mape_pct
                 << "% (" << rec.seconds << " s)\n";

        if (rec.val_mape_pct < result.best_val_mape_pct) {
            result.best_val_mape_pct = rec.val_mape_pct;
            result.best_epoch = epoch;
            best = params.snapshot();
            since_best = 0;
        } else if (cfg.early_stopping && ++since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    if (cfg.early_stopping) params.restore(best);
    return result;
}

/// Dispatches to the concrete network type behind `model`.
inline TrainResult train_network(Estimator& model, const Dataset& ds, const TrainConfig& cfg, std::ostream* log = nullptr) {
    if (auto* m = dynamic_cast<FfnEstimator*>(&model)) return train(*m, ds, cfg, log);
    if (auto* m = dynamic_cast<RnnEstimator*>(&model)) return train(*m, ds, cfg, log);
    if (auto* m = dynamic_cast<RetEstimator*>(&model)) return train(*m, ds, cfg, log);
    throw ValidationError("'" + model.name() + "' is not a trainable network");
}

} // namespace evroute::models
