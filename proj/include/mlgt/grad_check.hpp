#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlgt/tensor.hpp"

namespace mlgt {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;

    bool passed() const;
    double worst() const;
    const GradCheckEntry* find(const std::string& name) const;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

/// Central differences of the scalar function `f` w.r.t. every element of
/// `input`, with step cbrt(eps) * max(1, |x|). `f` is re-evaluated from
/// scratch each time and must read `input`'s current values.
template <typename T>
std::vector<double> numeric_gradient(const std::function<Tensor<T>()>& f, Tensor<T>& input);

/// Relative error is measured against the gradient's own scale:
/// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|). All-zero pairs count as exact.
GradCheckEntry compare_gradients(const std::string& name, std::span<const double> analytic,
                                 std::span<const double> numeric, double tol);

/// Runs backward once on f(), then compares each input's gradient with
/// central differences. Throws CheckError when f is not deterministic.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f, NamedTensors<T> inputs, double tol);

}  // namespace mlgt
