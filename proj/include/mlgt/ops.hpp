#pragma once

#include <cstddef>
#include <vector>

#include "mlgt/tensor.hpp"

// Differentiable tensor operations. Every op checks shapes up front and
// throws DimensionError naming the offending shapes.
namespace mlgt {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset);

/// x[m×n] + b[n] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Normalizes over the last dimension, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// x[c_in×H×W], w[c_out×c_in×k×k], bias[c_out] -> [c_out×H'×W'] with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Rows of a matrix picked by index, in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& rows);

/// Columns [begin, end) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

/// Euclidean norm of all elements. The subgradient at zero is zero.
template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a);

}  // namespace mlgt
