#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evroute/core/error.hpp"
#include "evroute/nn/parameters.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::nn {

// Layout (all integers little-endian):
//   magic "EVRCKPT\0" | u32 version | u64 config_len | config JSON bytes |
//   u64 schema_fingerprint | u32 n_tensors |
//   n_tensors x { u32 name_len | name | u32 rank | rank x u64 dim | prod(dims) x f32 }
inline constexpr std::array<char, 8> kCheckpointMagic{'E', 'V', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;

    bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::uint64_t schema_fingerprint = 0;
    std::vector<NamedTensor> tensors;

    const NamedTensor& tensor(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw VersionError("checkpoint has no tensor named " + name);
    }

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in, const std::string& path) {
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw ParseError(path, 0, "truncated checkpoint");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

} // namespace detail

inline void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_le<std::uint32_t>(out, ckpt.version);
    const std::string cfg = ckpt.config.dump();
    detail::put_le<std::uint64_t>(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    detail::put_le<std::uint64_t>(out, ckpt.schema_fingerprint);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        std::uint64_t n = 1;
        for (auto d : t.shape) {
            detail::put_le<std::uint64_t>(out, d);
            n *= d;
        }
        if (n != t.values.size()) throw ShapeError("checkpoint tensor " + t.name + " shape does not match its data");
        for (float f : t.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    }
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& path = "<stream>") {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
        throw ParseError(path, 0, "not a checkpoint file (bad magic)");
    Checkpoint ckpt;
    ckpt.version = detail::get_le<std::uint32_t>(in, path);
    if (ckpt.version != kCheckpointVersion)
        throw VersionError(path + ": checkpoint version " + std::to_string(ckpt.version) + " is not supported");
    const auto cfg_len = detail::get_le<std::uint64_t>(in, path);
    std::string cfg(cfg_len, '\0');
    if (!in.read(cfg.data(), static_cast<std::streamsize>(cfg_len))) throw ParseError(path, 0, "truncated config");
    try {
        ckpt.config = nlohmann::ordered_json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, std::string("bad checkpoint config: ") + e.what());
    }
    ckpt.schema_fingerprint = detail::get_le<std::uint64_t>(in, path);
    const auto n_tensors = detail::get_le<std::uint32_t>(in, path);
    for (std::uint32_t k = 0; k < n_tensors; ++k) {
        NamedTensor t;
        t.name.resize(detail::get_le<std::uint32_t>(in, path));
        if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size())))
            throw ParseError(path, 0, "truncated tensor name");
        const auto rank = detail::get_le<std::uint32_t>(in, path);
        std::uint64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.shape.push_back(detail::get_le<std::uint64_t>(in, path));
            n *= t.shape.back();
        }
        t.values.resize(n);
        for (auto& f : t.values) f = std::bit_cast<float>(detail::get_le<std::uint32_t>(in, path));
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

inline void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_checkpoint(ckpt, out);
    if (!out) throw IoError("write failed on " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_checkpoint(in, path.string());
}

inline void store_parameters(const ParameterStore<float>& params, Checkpoint& ckpt) {
    for (const auto& p : params) {
        NamedTensor t;
        t.name = p.name;
        t.shape = {p.value.rows(), p.value.cols()};
        t.values.assign(p.value.values().begin(), p.value.values().end());
        ckpt.tensors.push_back(std::move(t));
    }
}

/// Copies every named tensor into the matching parameter; shapes must agree exactly.
inline void load_parameters(const Checkpoint& ckpt, ParameterStore<float>& params) {
    if (ckpt.tensors.size() != params.size())
        throw ShapeError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                         std::to_string(params.size()));
    for (auto& p : params) {
        const auto& t = ckpt.tensor(p.name);
        if (t.shape.size() != 2 || t.shape[0] != p.value.rows() || t.shape[1] != p.value.cols())
            throw ShapeError("checkpoint tensor " + p.name + " has the wrong shape for " + shape_string(p.value));
        std::copy(t.values.begin(), t.values.end(), p.value.data());
    }
}

} // namespace evroute::nn
