#include <gtest/gtest.h>

#include <sstream>

#include "evroute/models/baselines.hpp"
#include "evroute/models/estimator.hpp"
#include "evroute/models/train.hpp"
#include "grad_suite.hpp"
#include "helpers.hpp"

using namespace evroute;
using namespace evroute::models;
using evtest::random_batch;

namespace {

template <class T>
PackedBatch<T> cast_batch(const PackedBatch<double>& b) {
    std::vector<nn::Tensor<T>> mats;
    for (std::size_t r = 0; r < b.routes(); ++r) {
        nn::Tensor<T> m(b.length(r), b.features.cols());
        for (std::size_t t = 0; t < m.rows(); ++t)
            for (std::size_t c = 0; c < m.cols(); ++c) m(t, c) = static_cast<T>(b.features(b.offsets[r] + t, c));
        mats.push_back(std::move(m));
    }
    return pack(mats);
}

// Runs in the network's own precision, returns doubles.
template <template <class> class Net, class T>
nn::Tensor<double> infer(const Net<T>& net, const PackedBatch<double>& b) {
    nn::Tape<T> tape(false);
    const auto y = net.forward(tape, cast_batch<T>(b)).value();
    nn::Tensor<double> out(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i];
    return out;
}

template <class Net>
void zero_all(Net& net) {
    for (auto& p : net.parameters()) p.value.fill(0.0);
}

// Moves one later segment of route `route` far away and checks the earlier outputs.
template <class Net>
void expect_causal(const Net& net, std::uint64_t seed) {
    auto batch = random_batch({7, 3, 5}, 9, seed);
    const auto base = infer(net, batch);
    for (std::size_t route = 0; route < batch.routes(); ++route) {
        const std::size_t r0 = batch.offsets[route], L = batch.length(route);
        for (std::size_t t = 0; t + 1 < L; ++t) {
            auto changed = batch;
            for (std::size_t c = 0; c < 4; ++c) changed.features(r0 + t + 1, c) += 2.5;
            const auto out = infer(net, changed);
            for (std::size_t s = 0; s <= t; ++s) ASSERT_EQ(out(r0 + s, 0), base(r0 + s, 0)) << "route " << route;
            EXPECT_NE(out(r0 + t + 1, 0), base(r0 + t + 1, 0));
            // Other routes in the batch are untouched too.
            for (std::size_t k = 0; k < batch.rows(); ++k)
                if (k < r0 || k >= r0 + L) {
                    ASSERT_EQ(out(k, 0), base(k, 0));
                }
        }
    }
}

template <class Net>
void expect_packing_invariant(const Net& net) {
    const auto batch = random_batch({6, 2, 9, 4}, 9, 77);
    const auto all = infer(net, batch);
    for (std::size_t route = 0; route < batch.routes(); ++route) {
        nn::Tensor<double> alone_x(batch.length(route), 9);
        for (std::size_t t = 0; t < alone_x.rows(); ++t)
            for (std::size_t c = 0; c < 9; ++c) alone_x(t, c) = batch.features(batch.offsets[route] + t, c);
        const auto alone = infer(net, pack(std::vector<nn::Tensor<double>>{alone_x}));
        for (std::size_t t = 0; t < alone.rows(); ++t)
            EXPECT_NEAR(alone(t, 0), all(batch.offsets[route] + t, 0), 1e-5 * (1 + std::abs(alone(t, 0))));
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

TEST(ParamCount, Ffn) {
    EXPECT_EQ(param_count(FfnConfig{}), 1409u);
    EXPECT_EQ(Ffn<float>(FfnConfig{}).parameters().count(), 1409u);
}

TEST(ParamCount, Rnn) {
    EXPECT_EQ(param_count(RnnConfig{}), 21057u);
    EXPECT_EQ(Rnn<float>(RnnConfig{}).parameters().count(), 21057u);
}

TEST(ParamCount, RetPresets) {
    const std::pair<ModelKind, std::pair<std::size_t, std::size_t>> bands[] = {
        {ModelKind::ret_20k, {15'000, 30'000}},
        {ModelKind::ret_300k, {250'000, 450'000}},
        {ModelKind::ret_3m, {2'500'000, 3'500'000}},
    };
    for (const auto& [kind, band] : bands) {
        const auto cfg = ret_preset(kind);
        const auto n = param_count(cfg);
        EXPECT_GE(n, band.first) << kind_name(kind);
        EXPECT_LE(n, band.second) << kind_name(kind);
        EXPECT_EQ(Ret<float>(cfg).parameters().count(), n);
        EXPECT_EQ(block_core_params(cfg), 12 * cfg.blocks * cfg.dim * cfg.dim);
        EXPECT_EQ(cfg.heads() * 32, cfg.dim);
    }
    EXPECT_EQ(ret_preset(ModelKind::ret_3m).blocks, 6u);
    EXPECT_EQ(ret_preset(ModelKind::ret_3m).dim, 192u);
}

TEST(Ffn, ZeroNetworkOutputsHeadBias) {
    Ffn<double> net(FfnConfig{}, 3);
    zero_all(net);
    net.parameters().find("head.bias")->value[0] = 0.7;
    const auto out = infer(net, random_batch({4, 2}, 9, 1));
    for (double y : out.values()) EXPECT_EQ(y, 0.7);
}

TEST(Ffn, SegmentsAreIndependent) {
    Ffn<double> net(FfnConfig{}, 3);
    const auto batch = random_batch({5, 4}, 9, 2);
    const auto base = infer(net, batch);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        auto changed = batch;
        for (std::size_t c = 0; c < 4; ++c) changed.features(r, c) -= 1.7;
        const auto out = infer(net, changed);
        for (std::size_t k = 0; k < batch.rows(); ++k)
            if (k != r) {
                ASSERT_EQ(out(k, 0), base(k, 0));
            }
    }
}

TEST(Rnn, ZeroNetworkOutputsHeadBias) {
    Rnn<double> net(RnnConfig{}, 3);
    zero_all(net);
    net.parameters().find("head.bias")->value[0] = -1.25;
    const auto out = infer(net, random_batch({4, 2}, 9, 1));
    for (double y : out.values()) EXPECT_EQ(y, -1.25);
}

TEST(Rnn, Causal) { expect_causal(Rnn<double>(RnnConfig{}, 5), 11); }

TEST(Rnn, PackingInvariant) { expect_packing_invariant(Rnn<float>(RnnConfig{}, 6)); }

TEST(Rnn, SingleStepIsOneGruCell) {
    RnnConfig cfg;
    Rnn<double> net(cfg, 9);
    for (auto& p : net.parameters())
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.01 * std::cos(static_cast<double>(i));
    const auto batch = random_batch({1}, 9, 4);
    const double got = infer(net, batch)(0, 0);

    auto P = [&](const char* n) -> const nn::Tensor<double>& { return net.parameters().find(n)->value; };
    const std::size_t E = cfg.embed, H = cfg.hidden, O = cfg.out_embed;
    std::vector<double> e(E), h(H), o(O);
    for (std::size_t j = 0; j < E; ++j) {
        double s = P("embed.bias")[j];
        for (std::size_t i = 0; i < 9; ++i) s += batch.features(0, i) * P("embed.weight")(i, j);
        e[j] = std::max(0.0, s);
    }
    for (std::size_t j = 0; j < H; ++j) {
        auto gate = [&](std::size_t col) {
            double s = P("gru.bias")[col];
            for (std::size_t i = 0; i < E; ++i) s += e[i] * P("gru.input_weight")(i, col);
            return s;
        };
        // zero initial state: the recurrent terms vanish
        const double z = sigmoid(gate(H + j));
        const double n = std::tanh(gate(2 * H + j));
        h[j] = (1 - z) * n;
    }
    double y = P("head.bias")[0];
    for (std::size_t j = 0; j < O; ++j) {
        double s = P("out.bias")[j];
        for (std::size_t i = 0; i < H; ++i) s += h[i] * P("out.weight")(i, j);
        y += std::max(0.0, s) * P("head.weight")(j, 0);
    }
    EXPECT_NEAR(got, y, 1e-12);
}

TEST(Rnn, RejectsWrongWidthAndEmptyBatch) {
    Rnn<double> net(RnnConfig{}, 1);
    nn::Tape<double> tape(false);
    EXPECT_THROW(net.forward(tape, random_batch({3}, 10, 1)), ShapeError);
    EXPECT_THROW(net.forward(tape, PackedBatch<double>{}), ValidationError);
}

TEST(Ret, Causal) { expect_causal(Ret<double>(ret_preset(ModelKind::ret_20k), 5), 12); }

TEST(Ret, CausalWithSeveralHeads) {
    RetConfig c;
    c.blocks = 2;
    c.dim = 64;
    c.context = 16;
    expect_causal(Ret<double>(c, 8), 13);
}

TEST(Ret, PackingInvariant) { expect_packing_invariant(Ret<float>(ret_preset(ModelKind::ret_300k), 6)); }

TEST(Ret, ContextError) {
    RetConfig c;
    c.context = 8;
    Ret<double> net(c, 1);
    nn::Tape<double> tape(false);
    EXPECT_NO_THROW(net.forward(tape, random_batch({8}, 9, 1)));
    EXPECT_THROW(net.forward(tape, random_batch({3, 9}, 9, 1)), ContextError);
}

TEST(Ret, BadConfig) {
    RetConfig c;
    c.dim = 48;
    EXPECT_THROW(Ret<float>(c, 0), ValidationError);
}

TEST(ModelGradCheck, AllFamilies) {
    for (const auto& c : evtest::model_checks()) {
        SCOPED_TRACE(c.name);
        const auto r = c.run();
        EXPECT_TRUE(r.passed) << evtest::describe(r);
        EXPECT_GE(r.checked, 200u);
    }
}

TEST(DistanceBaseline, TwoPointOls) {
    const std::vector<double> x{1000, 3000}, y{500, 1100};
    const auto f = fit_distance_baseline(x, y);
    EXPECT_NEAR(f.slope, 0.3, 1e-12);
    EXPECT_NEAR(f.intercept, 200.0, 1e-9);
}

TEST(DistanceBaseline, ExactLineFromRoutes) {
    std::vector<Route> routes;
    for (double d : {500.0, 1200.0, 4000.0}) routes.push_back(evtest::route("r" + std::to_string(d), 0,
                                                                             {evtest::seg(d / 2, 5, 0, 10),
                                                                              evtest::seg(d / 2, 5, 0, 10)},
                                                                             {d, d}));
    std::vector<const Route*> ptrs;
    for (const auto& r : routes) ptrs.push_back(&r);
    const auto f = fit_distance_baseline(std::span<const Route* const>(ptrs));
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 0.0, 1e-9);
    const auto segs = f.predict_segments(routes[1]);
    EXPECT_NEAR(segs[0] + segs[1], 2400.0, 1e-9);
}

TEST(DistanceBaseline, Degenerate) {
    const std::vector<double> x{1000, 1000, 1000}, y{1, 2, 3};
    EXPECT_THROW(fit_distance_baseline(x, y), DegenerateFitError);
    const std::vector<double> one{1000};
    EXPECT_THROW(fit_distance_baseline(one, one), ValidationError);
}

TEST(PhysicsBaseline, MatchesProxy) {
    const auto ds = evtest::small_dataset(3);
    const auto& r = ds.routes[0];
    const auto segs = physics_proxy_segments(r, ds.fleet);
    ASSERT_EQ(segs.size(), r.length());
    for (std::size_t t = 0; t < segs.size(); ++t)
        EXPECT_EQ(segs[t], simgen::physics_energy_proxy(r.segments[t], ds.fleet[r.vehicle_id]));
}

TEST(RouteEnergy, Sums) {
    const std::vector<double> a{100, 150, 50};
    EXPECT_EQ(sum_route_energy(a).reported, 300.0);
    const std::vector<double> one{42.5};
    EXPECT_EQ(sum_route_energy(one).reported, 42.5);
    const std::vector<double> neg{-8, 3};
    const auto e = sum_route_energy(neg);
    EXPECT_EQ(e.raw, -5.0);
    EXPECT_EQ(e.reported, 0.0);
}

TEST(RouteEnergy, SingleSegmentRouteEqualsSegmentPrediction) {
    const auto ds = evtest::small_dataset(5);
    auto model = make_network(ModelKind::ffn, ds.schema, 1);
    auto r = ds.routes[0];
    r.segments.resize(1);
    r.actual_energy_wh->resize(1);
    const Route* one[] = {&r};
    EXPECT_EQ(route_energy(*model, r, ds.schema).raw, model->predict_segments(one)[0]);
}

TEST(RouteEnergy, SchemaMismatch) {
    const auto ds = evtest::small_dataset(5);
    auto model = make_network(ModelKind::ffn, ds.schema, 1);
    EXPECT_THROW(route_energy(*model, ds.routes[0], FeatureSchema::identity(4)), SchemaMismatchError);
}

TEST(Estimator, CheckpointRoundTripEveryKind) {
    const auto ds = evtest::small_dataset(40);
    const auto routes = ds.all_routes();
    evtest::TempDir dir("ckpt");
    for (auto kind : kAllKinds) {
        SCOPED_TRACE(kind_name(kind));
        std::unique_ptr<Estimator> m;
        if (kind == ModelKind::distance) m = fit_distance(ds);
        else if (kind == ModelKind::physics) m = make_physics(ds);
        else m = make_network(kind, ds.schema, 17);
        const auto path = dir / (std::string(kind_name(kind)) + ".ckpt");
        nn::write_checkpoint(m->to_checkpoint(), path);
        const auto back = load_estimator(nn::read_checkpoint(path));
        EXPECT_EQ(back->kind(), kind);
        EXPECT_EQ(back->schema_fingerprint(), m->schema_fingerprint());
        EXPECT_EQ(back->to_checkpoint(), m->to_checkpoint());
        EXPECT_EQ(back->predict_segments(routes), m->predict_segments(routes));
    }
}

TEST(Estimator, TamperedFingerprintRejected) {
    const auto ds = evtest::small_dataset(10);
    auto ck = make_network(ModelKind::ffn, ds.schema, 1)->to_checkpoint();
    ck.schema_fingerprint ^= 1;
    EXPECT_THROW(load_estimator(ck), SchemaMismatchError);
}

TEST(Estimator, ThreadsDoNotChangeOutput) {
    const auto ds = evtest::small_dataset(150);
    const auto routes = ds.all_routes();
    auto m = make_network(ModelKind::ret_20k, ds.schema, 2);
    const auto enc = m->encode(routes, 16);
    EXPECT_EQ(m->forward(enc, 1), m->forward(enc, 3));
}

TEST(Estimator, ChunkSizeDoesNotChangeOutputMuch) {
    const auto ds = evtest::small_dataset(40);
    const auto routes = ds.all_routes();
    auto m = make_network(ModelKind::rnn, ds.schema, 2);
    const auto a = m->forward(m->encode(routes, 1));
    const auto b = m->forward(m->encode(routes, 64));
    ASSERT_EQ(a.size(), b.size());
    // float32 GEMM blocking depends on the batch height; the drift compounds along the recurrence.
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4 * (1 + std::abs(a[i])));
}

namespace {

Dataset with_splits(std::vector<Route> train, std::vector<Route> val, const Dataset& like) {
    Dataset ds;
    ds.fleet = like.fleet;
    ds.generator_seed = like.generator_seed;
    for (auto& r : train) {
        ds.split[r.route_id] = Split::train;
        ds.routes.push_back(std::move(r));
    }
    for (auto& r : val) {
        r.route_id += "-val";
        ds.split[r.route_id] = Split::val;
        ds.routes.push_back(std::move(r));
    }
    const auto tr = ds.routes_in(Split::train);
    ds.schema = fit_schema(std::span<const Route* const>(tr), ds.fleet.size());
    return ds;
}

} // namespace

TEST(Train, SameSeedSameBits) {
    const auto ds = evtest::small_dataset(80, 4);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 21;
    for (auto kind : {ModelKind::ffn, ModelKind::rnn, ModelKind::ret_20k}) {
        SCOPED_TRACE(kind_name(kind));
        auto a = make_network(kind, ds.schema, 5);
        auto b = make_network(kind, ds.schema, 5);
        const auto ra = train_network(*a, ds, cfg);
        const auto rb = train_network(*b, ds, cfg);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(ra.final_loss), std::bit_cast<std::uint64_t>(rb.final_loss));
        EXPECT_EQ(a->to_checkpoint(), b->to_checkpoint());
    }
}

TEST(Train, OverfitsTenRoutes) {
    const auto src = evtest::small_dataset(11, 8);
    std::vector<Route> train(src.routes.begin(), src.routes.begin() + 10);
    const auto ds = with_splits(train, {src.routes[10]}, src);
    auto model = make_network(ModelKind::rnn, ds.schema, 3);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.early_stopping = false;
    cfg.learning_rate = 3e-3;
    const auto r = train_network(*model, ds, cfg);
    EXPECT_EQ(r.history.size(), 500u);
    const auto tr = ds.routes_in(Split::train);
    EXPECT_LT(route_mape_pct(*model, tr), 1.0);
}

TEST(Train, LearnsLinearSignal) {
    auto src = evtest::small_dataset(300, 9);
    for (auto& r : src.routes)
        for (std::size_t t = 0; t < r.length(); ++t) (*r.actual_energy_wh)[t] = 0.05 * r.segments[t].distance_m;
    auto model = make_network(ModelKind::ffn, src.schema, 2);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 3e-3;
    cfg.patience = 300;
    const auto r = train_network(*model, src, cfg);
    EXPECT_LT(r.best_val_mape_pct, 0.5);
    EXPECT_LT(route_mape_pct(*model, src.routes_in(Split::val)), 0.5);
}

TEST(Train, RestoresBestEpoch) {
    const auto ds = evtest::small_dataset(60, 10);
    auto model = make_network(ModelKind::ffn, ds.schema, 1);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.patience = 3;
    const auto r = train_network(*model, ds, cfg);
    ASSERT_GE(r.best_epoch, 1u);
    EXPECT_DOUBLE_EQ(route_mape_pct(*model, ds.routes_in(Split::val)), r.best_val_mape_pct);
    std::ostringstream csv;
    write_history_csv(r, csv);
    EXPECT_EQ(csv.str().rfind("epoch,train_loss_kwh,val_mape_pct,seconds\n", 0), 0u);
}

TEST(Train, RejectsBaselinesAndBadConfig) {
    const auto ds = evtest::small_dataset(30);
    auto d = fit_distance(ds);
    EXPECT_THROW(train_network(*d, ds, {}), ValidationError);
    auto f = make_network(ModelKind::ffn, ds.schema, 1);
    TrainConfig bad;
    bad.learning_rate = 0;
    EXPECT_THROW(train_network(*f, ds, bad), ValidationError);
}

TEST(Train, DivergenceIsReported) {
    const auto ds = evtest::small_dataset(30);
    auto f = make_network(ModelKind::ffn, ds.schema, 1);
    TrainConfig cfg;
    cfg.learning_rate = 1e38;
    cfg.epochs = 5;
    EXPECT_THROW(train_network(*f, ds, cfg), DivergenceError);
}

TEST(Kinds, ParseAndList) {
    for (auto k : kAllKinds) EXPECT_EQ(parse_kind(kind_name(k)), k);
    try {
        parse_kind("gpt");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("ret-300k"), std::string::npos);
    }
}
