#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/models/estimator.hpp"

namespace evroute::bench {

inline constexpr std::size_t kDefaultWarmups = 2;
inline constexpr std::size_t kDefaultRepeats = 5;
inline constexpr std::size_t kDefaultBenchRoutes = 10000;

inline constexpr const char* kBenchHeader = "model,n_routes,threads,warmups,repeats,mean_s,throughput_routes_per_s";

struct BenchOptions {
    std::size_t warmups = kDefaultWarmups;
    std::size_t repeats = kDefaultRepeats;
    std::size_t threads = 1;
    std::size_t chunk_routes = models::kDefaultChunkRoutes;
};

struct BenchResult {
    std::string model;
    std::size_t n_routes = 0;
    double mean_length = 0.0;
    std::size_t threads = 1;
    std::size_t warmups = 0;
    std::size_t repeats = 0;
    std::size_t forward_passes = 0; // counted, must equal warmups + repeats
    std::vector<double> times_s;
    double mean_s = 0.0;
    double throughput = 0.0; // routes per second
    bool failed = false;
    std::string error;
};

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Runs `pass` warmups times untimed, then repeats times under a monotonic clock.
/// `pass` must perform exactly one full forward pass over the batch per call.
template <class Pass>
BenchResult time_passes(Pass&& pass, const BenchOptions& opt) {
    if (opt.repeats == 0) throw ValidationError("bench: repeats must be at least 1");
    BenchResult r;
    r.threads = opt.threads;
    r.warmups = opt.warmups;
    r.repeats = opt.repeats;
    for (std::size_t i = 0; i < opt.warmups; ++i) {
        pass();
        ++r.forward_passes;
    }
    for (std::size_t i = 0; i < opt.repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        const auto t1 = std::chrono::steady_clock::now();
        ++r.forward_passes;
        r.times_s.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    r.mean_s = mean_of(r.times_s);
    return r;
}

/// Encodes the routes once, then times whole-batch forward passes.
inline BenchResult time_inference(const models::Estimator& model, std::span<const Route* const> routes,
                                  const BenchOptions& opt = {}) {
    if (routes.empty()) throw ValidationError("bench: empty route set");
    const auto enc = model.encode(routes, opt.chunk_routes);
    volatile double sink = 0.0;
    auto r = time_passes(
        [&] {
            const auto out = model.forward(enc, opt.threads);
            sink = sink + out.front();
        },
        opt);
    r.model = model.name();
    r.n_routes = routes.size();
    r.mean_length = static_cast<double>(enc.segments()) / static_cast<double>(routes.size());
    r.throughput = r.mean_s > 0.0 ? static_cast<double>(routes.size()) / r.mean_s : 0.0;
    return r;
}

struct BenchEntry {
    std::string name;
    std::function<std::unique_ptr<models::Estimator>()> load;
};

/// One row per entry over the identical batch. A failed load or run marks its row and the
/// grid moves on.
inline std::vector<BenchResult> bench_grid(std::span<const BenchEntry> entries, std::span<const Route* const> routes,
                                           const BenchOptions& opt = {}, std::ostream* log = nullptr) {
    if (routes.empty()) throw ValidationError("bench: empty route set");
    std::vector<BenchResult> rows;
    for (const auto& e : entries) {
        try {
            auto model = e.load();
            rows.push_back(time_inference(*model, routes, opt));
            rows.back().model = e.name;
        } catch (const std::exception& ex) {
            BenchResult r;
            r.model = e.name;
            r.n_routes = routes.size();
            r.threads = opt.threads;
            r.warmups = opt.warmups;
            r.repeats = opt.repeats;
            r.failed = true;
            r.error = ex.what();
            rows.push_back(std::move(r));
        }
        if (log) {
            const auto& r = rows.back();
            if (r.failed)
                *log << r.model << ": failed: " << r.error << '\n';
            else
                *log << r.model << ": mean " << r.mean_s << " s over " << r.repeats << " passes\n";
        }
    }
    return rows;
}

/// Times in seconds with 3 decimals. Failed rows keep their identity columns and leave
/// the measurements blank.
inline void write_bench_csv(std::span<const BenchResult> rows, std::ostream& out) {
    out << kBenchHeader << '\n';
    char buf[64];
    for (const auto& r : rows) {
        out << r.model << ',' << r.n_routes << ',' << r.threads << ',' << r.warmups << ',' << r.repeats << ',';
        if (!r.failed) {
            std::snprintf(buf, sizeof buf, "%.3f,%.3f", r.mean_s, r.throughput);
            out << buf;
        } else {
            out << ',';
        }
        out << '\n';
    }
}

} // namespace evroute::bench
