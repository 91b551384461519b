#pragma once

#include <random>

#include "mlgt/tensor.hpp"

namespace mlgt {

/// Leaf tensor with i.i.d. normal(0, stddev) entries.
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

}  // namespace mlgt
