#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "evroute/core/error.hpp"
#include "evroute/core/schema.hpp"
#include "evroute/core/types.hpp"
#include "evroute/nn/tensor.hpp"

namespace evroute::models {

/// Several routes stacked row-wise without padding. Route i owns rows
/// offsets[i]..offsets[i+1]; positions[r] is row r's index within its route.
template <class T>
struct PackedBatch {
    nn::Tensor<T> features;
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> positions;

    std::size_t routes() const noexcept { return offsets.size() - 1; }
    std::size_t rows() const noexcept { return features.rows(); }
    std::size_t length(std::size_t route) const { return offsets.at(route + 1) - offsets.at(route); }
    std::size_t max_length() const noexcept {
        std::size_t m = 0;
        for (std::size_t i = 0; i + 1 < offsets.size(); ++i) m = std::max(m, offsets[i + 1] - offsets[i]);
        return m;
    }
};

template <class T>
PackedBatch<T> pack(std::span<const nn::Tensor<T>* const> matrices) {
    PackedBatch<T> b;
    if (matrices.empty()) return b;
    const std::size_t width = matrices.front()->cols();
    std::size_t rows = 0;
    for (const auto* m : matrices) {
        if (m->cols() != width) throw ShapeError("pack: route matrices have different widths");
        if (m->rows() == 0) throw ValidationError("pack: empty route matrix");
        rows += m->rows();
    }
    b.features = nn::Tensor<T>(rows, width);
    b.positions.reserve(rows);
    std::size_t r0 = 0;
    for (const auto* m : matrices) {
        std::copy(m->values().begin(), m->values().end(), b.features.data() + r0 * width);
        for (std::size_t t = 0; t < m->rows(); ++t) b.positions.push_back(t);
        r0 += m->rows();
        b.offsets.push_back(r0);
    }
    return b;
}

template <class T>
PackedBatch<T> pack(const std::vector<nn::Tensor<T>>& matrices) {
    std::vector<const nn::Tensor<T>*> ptrs;
    for (const auto& m : matrices) ptrs.push_back(&m);
    return pack<T>(std::span<const nn::Tensor<T>* const>(ptrs));
}

template <class T>
PackedBatch<T> pack_routes(std::span<const Route* const> routes, const FeatureSchema& schema) {
    std::vector<nn::Tensor<T>> mats;
    mats.reserve(routes.size());
    for (const auto* r : routes) mats.push_back(route_to_matrix<T>(*r, schema));
    return pack(mats);
}

} // namespace evroute::models
