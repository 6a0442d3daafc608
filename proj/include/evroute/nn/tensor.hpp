#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "evroute/core/error.hpp"

namespace evroute::nn {

// Cache-line aligned storage. Eigen picks its vector peeling from the buffer address, so
// unaligned heaps would let the last bit of a result depend on where a tensor happened to land.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Dense row-major matrix. Vectors are stored as 1 x n.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<T> values)
        : rows_(rows), cols_(cols), data_(values.begin(), values.end()) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("tensor buffer of " + std::to_string(data_.size()) +
                             " values does not match shape [" + std::to_string(rows_) + ", " +
                             std::to_string(cols_) + "]");
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.rows_, other.cols_); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    T& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Tensor&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T, AlignedAllocator<T>> data_;
};

template <class T>
std::string shape_string(const Tensor<T>& t) {
    return "[" + std::to_string(t.rows()) + ", " + std::to_string(t.cols()) + "]";
}

template <class T>
bool all_finite(const Tensor<T>& t) noexcept {
    for (T v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace evroute::nn
