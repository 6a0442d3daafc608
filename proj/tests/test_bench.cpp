#include <gtest/gtest.h>

#include <sstream>

#include "evroute/bench/bench.hpp"
#include "helpers.hpp"

using namespace evroute;
using namespace evroute::bench;

TEST(Bench, CountsEveryForwardPass) {
    const auto ds = evtest::small_dataset(20);
    const auto routes = ds.all_routes();
    auto m = models::make_network(models::ModelKind::ffn, ds.schema, 1);
    const auto before = m->forward_calls();
    const auto r = time_inference(*m, routes);
    EXPECT_EQ(r.forward_passes, 7u);
    EXPECT_EQ(m->forward_calls() - before, 7u);
    EXPECT_EQ(r.warmups, 2u);
    EXPECT_EQ(r.repeats, 5u);
    EXPECT_EQ(r.times_s.size(), 5u);
    EXPECT_EQ(r.n_routes, 20u);
    EXPECT_DOUBLE_EQ(r.mean_s, mean_of(r.times_s));
    EXPECT_GT(r.throughput, 0.0);
}

TEST(Bench, CustomProtocol) {
    std::size_t calls = 0;
    BenchOptions opt;
    opt.warmups = 0;
    opt.repeats = 3;
    const auto r = time_passes([&] { ++calls; }, opt);
    EXPECT_EQ(calls, 3u);
    EXPECT_EQ(r.forward_passes, 3u);
    opt.repeats = 0;
    EXPECT_THROW(time_passes([] {}, opt), ValidationError);
}

TEST(Bench, Mean) {
    const std::vector<double> t{1.0, 1.2, 1.1, 0.9, 1.3};
    EXPECT_NEAR(mean_of(t), 1.1, 1e-12);
}

TEST(Bench, EmptyRoutes) {
    const auto ds = evtest::small_dataset(5);
    auto m = models::make_network(models::ModelKind::ffn, ds.schema, 1);
    EXPECT_THROW(time_inference(*m, {}), ValidationError);
}

TEST(Bench, GridContinuesPastFailure) {
    const auto ds = evtest::small_dataset(10);
    const auto routes = ds.all_routes();
    BenchOptions opt;
    opt.warmups = 0;
    opt.repeats = 1;
    const std::vector<BenchEntry> entries{
        {"ffn", [&] { return models::make_network(models::ModelKind::ffn, ds.schema, 1); }},
        {"broken", []() -> std::unique_ptr<models::Estimator> { throw IoError("cannot open broken.ckpt"); }},
        {"rnn", [&] { return models::make_network(models::ModelKind::rnn, ds.schema, 1); }},
    };
    const auto rows = bench_grid(entries, routes, opt);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_FALSE(rows[0].failed);
    EXPECT_TRUE(rows[1].failed);
    EXPECT_NE(rows[1].error.find("broken.ckpt"), std::string::npos);
    EXPECT_FALSE(rows[2].failed);

    std::ostringstream csv;
    write_bench_csv(rows, csv);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kBenchHeader);
    std::getline(in, line);
    EXPECT_EQ(line.rfind("ffn,10,1,0,1,", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "broken,10,1,0,1,,");
}

TEST(Bench, ThreadCountRecorded) {
    const auto ds = evtest::small_dataset(10);
    auto m = models::make_network(models::ModelKind::ffn, ds.schema, 1);
    BenchOptions opt;
    opt.threads = 2;
    opt.chunk_routes = 3;
    EXPECT_EQ(time_inference(*m, ds.all_routes(), opt).threads, 2u);
}
