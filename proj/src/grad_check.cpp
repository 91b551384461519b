#include "mlgt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mlgt/errors.hpp"

namespace mlgt {

bool GradCheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_error);
    return w;
}

const GradCheckEntry* GradCheckReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

template <typename T>
std::vector<double> numeric_gradient(const std::function<Tensor<T>()>& f, Tensor<T>& input) {
    NoGradGuard no_grad;
    const T step_base = std::cbrt(std::numeric_limits<T>::epsilon());
    auto values = input.values_mut();
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const T x0 = values[i];
        const T h = step_base * std::max(T(1), std::abs(x0));
        const T xp = x0 + h;
        const T xm = x0 - h;
        values[i] = xp;
        const double fp = f().item();
        values[i] = xm;
        const double fm = f().item();
        values[i] = x0;
        out[i] = (fp - fm) / (double(xp) - double(xm));
    }
    return out;
}

GradCheckEntry compare_gradients(const std::string& name, std::span<const double> analytic,
                                 std::span<const double> numeric, double tol) {
    if (analytic.size() != numeric.size()) {
        throw CheckError("gradient size mismatch for " + name);
    }
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    GradCheckEntry e;
    e.name = name;
    e.max_rel_error = scale > 0.0 ? diff / scale : 0.0;
    e.passed = e.max_rel_error <= tol;
    return e;
}

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f, NamedTensors<T> inputs, double tol) {
    for (auto& [name, t] : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor<T> loss = f();
    if (loss.numel() != 1) throw ContractError("grad_check: f must return a scalar");
    backward(loss);
    {
        NoGradGuard no_grad;
        if (f().item() != loss.item()) throw CheckError("grad_check: f is not deterministic");
    }

    GradCheckReport report;
    report.tolerance = tol;
    for (auto& [name, t] : inputs) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        const auto numeric = numeric_gradient(f, t);
        report.entries.push_back(compare_gradients(name, analytic, numeric, tol));
    }
    return report;
}

template std::vector<double> numeric_gradient<float>(const std::function<Tensor<float>()>&, Tensor<float>&);
template std::vector<double> numeric_gradient<double>(const std::function<Tensor<double>()>&, Tensor<double>&);
template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&, NamedTensors<float>, double);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&, NamedTensors<double>, double);

}  // namespace mlgt
