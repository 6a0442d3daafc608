#include <gtest/gtest.h>

#include <fstream>

#include "evroute/core/dataset.hpp"
#include "evroute/core/schema.hpp"
#include "helpers.hpp"

using namespace evroute;
using evtest::seg;

TEST(Encode, IdentityStatsGiveRawValues) {
    const auto schema = FeatureSchema::identity(4);
    const auto v = encode_segment(seg(1000, 10, 200, 21), 1, schema);
    const std::vector<double> expected{1000, 10, 200, 21, 0, 0, 1, 0, 0};
    EXPECT_EQ(v, expected);
}

TEST(Encode, ZScoreAtMeanIsZero) {
    auto schema = FeatureSchema::identity(4);
    schema.mean = {1000, 10, 200, 21};
    schema.std = {500, 5, 100, 10};
    const auto v = encode_segment(seg(1000, 10, 200, 21), 1, schema);
    const std::vector<double> expected{0, 0, 0, 0, 0, 0, 1, 0, 0};
    EXPECT_EQ(v, expected);
}

TEST(Encode, StemFlagAndOneHot) {
    const auto v = encode_segment(seg(5, 1, 0, 0, true), 3, FeatureSchema::identity(4));
    EXPECT_EQ(v[4], 1.0);
    EXPECT_EQ(v[8], 1.0);
    EXPECT_EQ(v[5] + v[6] + v[7], 0.0);
}

TEST(Encode, UnknownVehicle) {
    EXPECT_THROW(encode_segment(seg(1000, 10, 200, 21), 7, FeatureSchema::identity(4)), UnknownVehicleError);
}

TEST(Encode, NonFiniteInputRejected) {
    EXPECT_THROW(encode_segment(seg(std::nan(""), 10, 0, 21), 0, FeatureSchema::identity(4)), ValidationError);
    EXPECT_THROW(encode_segment(seg(10, 0, 0, 21), 0, FeatureSchema::identity(4)), ValidationError);
}

TEST(RouteMatrix, SingleRowMatchesEncodeSegment) {
    const auto schema = FeatureSchema::identity(4);
    const auto r = evtest::route("r", 2, {seg(300, 7, 30, 12)});
    const auto m = route_to_matrix<double>(r, schema);
    ASSERT_EQ(m.rows(), 1u);
    ASSERT_EQ(m.cols(), 9u);
    const auto v = encode_segment(r.segments[0], 2, schema);
    for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(m(0, c), v[c]);
}

TEST(RouteMatrix, RowsAreIndependent) {
    const auto schema = FeatureSchema::identity(4);
    auto r = evtest::route("r", 0, {seg(100, 5, 0, 10), seg(200, 6, 10, 10), seg(300, 7, 20, 10)});
    const auto a = route_to_matrix<double>(r, schema);
    r.segments[1].distance_m = 9999;
    const auto b = route_to_matrix<double>(r, schema);
    for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_EQ(a(0, c), b(0, c));
        EXPECT_EQ(a(2, c), b(2, c));
    }
    EXPECT_NE(a(1, 0), b(1, 0));
}

TEST(RouteMatrix, EmptyRouteRejected) {
    EXPECT_THROW(route_to_matrix<float>(evtest::route("r", 0, {}), FeatureSchema::identity(4)), ValidationError);
}

TEST(RouteMatrix, TooLong) {
    std::vector<Segment> segs(kMaxRouteLength + 1, seg(10, 5, 0, 10));
    EXPECT_THROW(route_to_matrix<float>(evtest::route("r", 0, segs), FeatureSchema::identity(4)), LengthError);
    segs.pop_back();
    EXPECT_NO_THROW(route_to_matrix<float>(evtest::route("r", 0, segs), FeatureSchema::identity(4)));
}

TEST(FitSchema, PopulationStd) {
    const std::vector<Route> routes{evtest::route("a", 0, {seg(1000, 5, 0, 10), seg(3000, 5, 0, 10)})};
    const auto s = fit_schema(routes, 4);
    EXPECT_DOUBLE_EQ(s.mean[0], 2000.0);
    EXPECT_DOUBLE_EQ(s.std[0], 1000.0);
}

TEST(FitSchema, ConstantColumnFloored) {
    const std::vector<Route> routes{evtest::route("a", 0, {seg(1000, 5, 0, 10), seg(3000, 5, 0, 10)})};
    const auto s = fit_schema(routes, 4);
    EXPECT_EQ(s.std[1], kStdFloor);
    const auto v = encode_segment(seg(1000, 5, 0, 10), 0, s);
    for (double x : v) EXPECT_TRUE(std::isfinite(x));
    EXPECT_EQ(v[1], 0.0);
}

TEST(FitSchema, Width) {
    EXPECT_EQ(FeatureSchema::identity(4).width(), 9u);
}

TEST(FitSchema, EmptyInput) {
    EXPECT_THROW(fit_schema(std::vector<Route>{}, 4), ValidationError);
}

TEST(FitSchema, FingerprintTracksStatistics) {
    auto a = FeatureSchema::identity(4);
    auto b = a;
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    b.mean[2] = 1e-12;
    EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(DatasetIo, RoundTrip) {
    const auto ds = evtest::small_dataset(10);
    evtest::TempDir dir("core-rt");
    write_dataset(ds, dir.path());
    const auto back = read_dataset(dir.path());
    EXPECT_EQ(back.routes, ds.routes);
    EXPECT_EQ(back.split, ds.split);
    EXPECT_EQ(back.schema, ds.schema);
    EXPECT_EQ(back.fleet, ds.fleet);
    EXPECT_EQ(back.generator_seed, ds.generator_seed);
}

TEST(DatasetIo, SplitLabelsPreserved) {
    auto ds = evtest::small_dataset(10);
    // Relabel everything by hand; the file must carry labels, not recompute them.
    for (auto& [id, s] : ds.split) s = Split::val;
    evtest::TempDir dir("core-split");
    write_dataset(ds, dir.path());
    for (const auto& [id, s] : read_dataset(dir.path()).split) EXPECT_EQ(s, Split::val) << id;
}

TEST(DatasetIo, TruncatedLineNamesLine) {
    const auto ds = evtest::small_dataset(5);
    evtest::TempDir dir("core-trunc");
    write_dataset(ds, dir.path());
    const auto path = dir / kRoutesFile;
    auto text = evtest::slurp(path);
    text.resize(text.size() - 40);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
    try {
        read_dataset(dir.path());
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 5u);
        EXPECT_NE(std::string(e.what()).find(":5:"), std::string::npos);
    }
}

TEST(DatasetIo, VersionMismatch) {
    const auto ds = evtest::small_dataset(3);
    evtest::TempDir dir("core-ver");
    write_dataset(ds, dir.path());
    const auto path = dir / kSchemaFile;
    auto text = evtest::slurp(path);
    const auto pos = text.find(kSchemaVersion);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, std::string(kSchemaVersion).size(), "evroute-features/99");
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
    EXPECT_THROW(read_dataset(dir.path()), VersionError);
}

TEST(DatasetIo, MissingDirectory) {
    EXPECT_THROW(read_dataset("/nonexistent/evroute"), IoError);
}

TEST(Split, ParseAndPrint) {
    for (auto s : {Split::train, Split::val, Split::test}) EXPECT_EQ(parse_split(to_string(s)), s);
    EXPECT_THROW(parse_split("holdout"), ValidationError);
}
