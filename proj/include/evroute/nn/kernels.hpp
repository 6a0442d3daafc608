#pragma once

#include <Eigen/Core>

#include "evroute/nn/tensor.hpp"

// Dense products over row-major tensors. Eigen provides the blocked GEMM; everything
// above this file is written against these entry points.
namespace evroute::nn::kernels {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<RowMatrix<T>> as_matrix(Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class T>
Eigen::Map<const RowMatrix<T>> as_matrix(const Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class T>
Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> as_array(Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.size())};
}

template <class T>
Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> as_array(const Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.size())};
}

// c = a b
template <class T>
void gemm(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
}

// c += a b
template <class T>
void gemm_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    as_matrix(c).noalias() += as_matrix(a) * as_matrix(b);
}

// c += a b^T
template <class T>
void gemm_nt_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    as_matrix(c).noalias() += as_matrix(a) * as_matrix(b).transpose();
}

// c += a^T b
template <class T>
void gemm_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    as_matrix(c).noalias() += as_matrix(a).transpose() * as_matrix(b);
}

} // namespace evroute::nn::kernels
