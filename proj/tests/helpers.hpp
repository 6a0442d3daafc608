#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evroute/core/dataset.hpp"
#include "evroute/core/types.hpp"
#include "evroute/simgen/generator.hpp"

namespace evtest {

inline evroute::Segment seg(double d, double v, double t_stat, double temp, bool stem = false) {
    return {d, v, t_stat, temp, stem};
}

inline evroute::Route route(std::string id, std::size_t vehicle, std::vector<evroute::Segment> segments,
                            std::vector<double> energy = {}) {
    evroute::Route r;
    r.route_id = std::move(id);
    r.vehicle_id = vehicle;
    r.segments = std::move(segments);
    if (!energy.empty()) r.actual_energy_wh = std::move(energy);
    return r;
}

inline evroute::Dataset small_dataset(std::size_t n, std::uint64_t seed = 11) {
    evroute::simgen::GeneratorConfig cfg;
    cfg.n_routes = n;
    cfg.seed = seed;
    return evroute::simgen::generate_dataset(cfg);
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("evroute-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace evtest
