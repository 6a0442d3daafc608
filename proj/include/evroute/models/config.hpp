#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evroute/core/error.hpp"
#include "evroute/core/types.hpp"

namespace evroute::models {

enum class ModelKind { distance, physics, ffn, rnn, ret_20k, ret_300k, ret_3m };

// Report/row order.
inline constexpr std::array<ModelKind, 7> kAllKinds{ModelKind::distance, ModelKind::physics, ModelKind::ffn,
                                                   ModelKind::rnn,      ModelKind::ret_20k, ModelKind::ret_300k,
                                                   ModelKind::ret_3m};

inline std::string_view kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::distance: return "distance";
        case ModelKind::physics: return "physics";
        case ModelKind::ffn: return "ffn";
        case ModelKind::rnn: return "rnn";
        case ModelKind::ret_20k: return "ret-20k";
        case ModelKind::ret_300k: return "ret-300k";
        case ModelKind::ret_3m: return "ret-3m";
    }
    return "?";
}

inline std::string valid_kind_names() {
    std::string out;
    for (auto k : kAllKinds) {
        if (!out.empty()) out += "|";
        out += kind_name(k);
    }
    return out;
}

inline ModelKind parse_kind(std::string_view name) {
    for (auto k : kAllKinds)
        if (kind_name(k) == name) return k;
    throw ValidationError("unknown model '" + std::string(name) + "'; valid names: " + valid_kind_names());
}

inline std::size_t kind_rank(ModelKind k) { return static_cast<std::size_t>(k); }

inline bool is_ret(ModelKind k) {
    return k == ModelKind::ret_20k || k == ModelKind::ret_300k || k == ModelKind::ret_3m;
}

inline bool is_learned(ModelKind k) { return k == ModelKind::ffn || k == ModelKind::rnn || is_ret(k); }

/// Per-segment network: F -> 32 -> 32 -> 1.
struct FfnConfig {
    std::size_t input_width = 9;
    std::vector<std::size_t> hidden{32, 32};

    bool operator==(const FfnConfig&) const = default;
};

/// Route-level recurrent model: dense embedding, unidirectional GRU, dense output embedding, linear head.
struct RnnConfig {
    std::size_t input_width = 9;
    std::size_t embed = 32;
    std::size_t hidden = 64;
    std::size_t out_embed = 32;

    bool operator==(const RnnConfig&) const = default;
};

/// Decoder-only transformer over segment features.
struct RetConfig {
    std::size_t input_width = 9;
    std::size_t blocks = 1;
    std::size_t dim = 32;
    std::size_t head_dim = 32;
    std::size_t context = kMaxRouteLength;
    std::size_t mlp_ratio = 4;

    std::size_t heads() const noexcept { return dim / head_dim; }

    void validate() const {
        if (blocks == 0 || dim == 0 || head_dim == 0 || dim % head_dim != 0)
            throw ValidationError("RET dimension must be a positive multiple of the head size " +
                                  std::to_string(head_dim));
        if (context == 0 || context > kMaxRouteLength)
            throw ValidationError("RET context must be in [1, " + std::to_string(kMaxRouteLength) + "]");
    }

    bool operator==(const RetConfig&) const = default;
};

inline RetConfig ret_preset(ModelKind k, std::size_t input_width = 9) {
    RetConfig c;
    c.input_width = input_width;
    switch (k) {
        case ModelKind::ret_20k: c.blocks = 1; c.dim = 32; break;
        case ModelKind::ret_300k: c.blocks = 3; c.dim = 96; break;
        case ModelKind::ret_3m: c.blocks = 6; c.dim = 192; break;
        default: throw ValidationError("'" + std::string(kind_name(k)) + "' is not a RET preset");
    }
    return c;
}

// Closed-form trainable-parameter counts. Tests check these against the constructed models.

inline std::size_t param_count(const FfnConfig& c) {
    std::size_t n = 0, in = c.input_width;
    for (auto h : c.hidden) {
        n += in * h + h;
        in = h;
    }
    return n + in + 1;
}

inline std::size_t param_count(const RnnConfig& c) {
    const std::size_t embed = c.input_width * c.embed + c.embed;
    const std::size_t gru = 3 * (c.embed * c.hidden + c.hidden * c.hidden + c.hidden);
    const std::size_t out = c.hidden * c.out_embed + c.out_embed;
    const std::size_t head = c.out_embed + 1;
    return embed + gru + out + head;
}

/// 12 d^2 per block (attention 4 d^2, MLP 8 d^2 at ratio 4), without biases or norms.
inline std::size_t block_core_params(const RetConfig& c) {
    return c.blocks * (4 + 2 * c.mlp_ratio) * c.dim * c.dim;
}

inline std::size_t param_count(const RetConfig& c) {
    const std::size_t d = c.dim, h = c.mlp_ratio * d;
    const std::size_t proj = c.input_width * d + d;
    const std::size_t pos = c.context * d;
    const std::size_t per_block = 2 * d                // ln1
                                  + d * 3 * d + 3 * d  // qkv
                                  + d * d + d          // attention output
                                  + 2 * d              // ln2
                                  + d * h + h          // mlp up
                                  + h * d + d;         // mlp down
    const std::size_t final_norm = 2 * d;
    const std::size_t head = d + 1;
    return proj + pos + c.blocks * per_block + final_norm + head;
}

inline nlohmann::ordered_json to_json(const FfnConfig& c) {
    return {{"input_width", c.input_width}, {"hidden", c.hidden}};
}
inline nlohmann::ordered_json to_json(const RnnConfig& c) {
    return {{"input_width", c.input_width}, {"embed", c.embed}, {"hidden", c.hidden}, {"out_embed", c.out_embed}};
}
inline nlohmann::ordered_json to_json(const RetConfig& c) {
    return {{"input_width", c.input_width}, {"blocks", c.blocks}, {"dim", c.dim},
            {"head_dim", c.head_dim},       {"context", c.context}, {"mlp_ratio", c.mlp_ratio}};
}

inline FfnConfig ffn_config_from_json(const nlohmann::ordered_json& j) {
    return {j.at("input_width").get<std::size_t>(), j.at("hidden").get<std::vector<std::size_t>>()};
}
inline RnnConfig rnn_config_from_json(const nlohmann::ordered_json& j) {
    return {j.at("input_width").get<std::size_t>(), j.at("embed").get<std::size_t>(),
            j.at("hidden").get<std::size_t>(), j.at("out_embed").get<std::size_t>()};
}
inline RetConfig ret_config_from_json(const nlohmann::ordered_json& j) {
    RetConfig c{j.at("input_width").get<std::size_t>(), j.at("blocks").get<std::size_t>(),
                j.at("dim").get<std::size_t>(),         j.at("head_dim").get<std::size_t>(),
                j.at("context").get<std::size_t>(),     j.at("mlp_ratio").get<std::size_t>()};
    c.validate();
    return c;
}

} // namespace evroute::models
