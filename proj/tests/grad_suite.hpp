#pragma once

// Finite-difference checks shared by the unit tests and the acceptance run.

#include <functional>
#include <string>
#include <vector>

#include "mlgt/grad_check.hpp"
#include "mlgt/model.hpp"
#include "mlgt/ops.hpp"
#include "mlgt/training.hpp"
#include "test_util.hpp"

namespace mlgt::test {

using D = Tensor<double>;

// Values bounded away from zero so relu/l2_norm kinks stay out of the stencil.
inline D away_from_zero(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return D::from(std::move(shape), std::move(v), true);
}

/// One grad_check per op; entry names are "<op>/<input>".
inline std::vector<GradCheckEntry> op_suite(std::uint64_t seed, double tol = 1e-5) {
    std::vector<GradCheckEntry> out;
    auto check = [&](const std::string& op, const std::function<D()>& f, NamedTensors<double> inputs) {
        for (auto e : grad_check(f, std::move(inputs), tol).entries) {
            e.name = op + "/" + e.name;
            out.push_back(std::move(e));
        }
    };
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 4);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_tensor<double>({m, k}, rng);
    auto b = random_tensor<double>({k, n}, rng);
    auto c = random_tensor<double>({m, k}, rng);
    auto bias = random_tensor<double>({k}, rng);
    auto nz = away_from_zero({m, k}, rng);
    auto r1 = random_tensor<double>({m, n}, rng, -1, 1, false);
    auto rk = random_tensor<double>({m, k}, rng, -1, 1, false);
    auto rt = random_tensor<double>({k, m}, rng, -1, 1, false);

    check("matmul", [&] { return sum(mul(matmul(a, b), r1)); }, {{"a", a}, {"b", b}});
    check("transpose", [&] { return sum(mul(transpose(a), rt)); }, {{"a", a}});
    check("add", [&] { return sum(mul(add(a, c), rk)); }, {{"a", a}, {"c", c}});
    check("sub", [&] { return sum(mul(sub(a, c), rk)); }, {{"a", a}, {"c", c}});
    check("mul", [&] { return sum(mul(mul(a, c), rk)); }, {{"a", a}, {"c", c}});
    check("scale", [&] { return sum(mul(scale(a, 1.7), rk)); }, {{"a", a}});
    check("add_scalar", [&] { return sum(mul(add_scalar(a, -0.3), rk)); }, {{"a", a}});
    check("add_bias", [&] { return sum(mul(add_bias(a, bias), rk)); }, {{"a", a}, {"bias", bias}});
    check("relu", [&] { return sum(mul(relu(nz), rk)); }, {{"x", nz}});
    check("gelu", [&] { return sum(mul(gelu(a), rk)); }, {{"a", a}});
    check("softmax_rows", [&] { return sum(mul(softmax_rows(a), rk)); }, {{"a", a}});
    {
        auto x = random_tensor<double>({m, k + 1}, rng, -2, 2);
        auto g = random_tensor<double>({k + 1}, rng, 0.5, 1.5);
        auto be = random_tensor<double>({k + 1}, rng);
        auto r = random_tensor<double>({m, k + 1}, rng, -1, 1, false);
        check("layer_norm", [&] { return sum(mul(layer_norm(x, g, be), r)); }, {{"x", x}, {"gamma", g}, {"beta", be}});
    }
    {
        const std::size_t cin = dim(rng), cout = dim(rng), ks = 1 + seed % 3, stride = 1 + seed % 2, pad = seed % 2;
        auto x = random_tensor<double>({cin, 5, 6}, rng);
        auto w = random_tensor<double>({cout, cin, ks, ks}, rng);
        auto bb = random_tensor<double>({cout}, rng);
        const auto probe = conv2d(x, w, bb, stride, pad);
        auto r = random_tensor<double>(probe.shape(), rng, -1, 1, false);
        check("conv2d", [&] { return sum(mul(conv2d(x, w, bb, stride, pad), r)); }, {{"x", x}, {"w", w}, {"b", bb}});
    }
    check("reshape", [&] { return sum(mul(reshape(a, {k, m}), rt)); }, {{"a", a}});
    {
        std::vector<std::size_t> rows{m - 1, 0, m - 1};
        auto r = random_tensor<double>({3, k}, rng, -1, 1, false);
        check("gather_rows", [&] { return sum(mul(gather_rows(a, rows), r)); }, {{"a", a}});
    }
    {
        auto x = random_tensor<double>({m, k + 2}, rng);
        auto r = random_tensor<double>({m, 2}, rng, -1, 1, false);
        check("slice_cols", [&] { return sum(mul(slice_cols(x, 1, 3), r)); }, {{"x", x}});
    }
    {
        auto r = random_tensor<double>({2 * m, k}, rng, -1, 1, false);
        check("concat_rows", [&] { return sum(mul(concat_rows<double>({a, c}), r)); }, {{"a", a}, {"c", c}});
        auto r2 = random_tensor<double>({m, 2 * k}, rng, -1, 1, false);
        check("concat_cols", [&] { return sum(mul(concat_cols<double>({a, c}), r2)); }, {{"a", a}, {"c", c}});
    }
    check("sum", [&] { return sum(a); }, {{"a", a}});
    check("mean", [&] { return mean(mul(a, a)); }, {{"a", a}});
    check("l2_norm", [&] { return l2_norm(nz); }, {{"x", nz}});
    return out;
}

// Moves every parameter off its structured init (zero biases, unit gammas)
// to a generic point, so no ReLU sits exactly on its kink.
template <typename T>
void jitter_parameters(Model<T>& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& [name, t] : model.parameters())
        for (auto& v : t.values_mut()) v += T(u(rng));
}

template <typename T>
struct TripletFixture {
    Model<T> model;
    Tensor<T> sketch, pos, neg;

    Tensor<T> loss() const {
        std::vector<EncodedTriplet<T>> batch{{model.embed(sketch, Modality::Sketch), model.embed(pos, Modality::Image),
                                              model.embed(neg, Modality::Image)}};
        return triplet_loss(batch, model.cross, T(5), LossMode::Both);  // margin keeps the hinge active
    }
};

template <typename T>
TripletFixture<T> make_fixture(const ModelConfig& cfg, std::uint64_t seed) {
    auto model = Model<T>::init(cfg, seed);
    jitter_parameters(model, seed + 1);
    std::mt19937_64 rng(seed + 2);
    auto sketch = random_tensor<T>({1, cfg.image_size, cfg.image_size}, rng, 0, 1, false);
    auto pos = random_tensor<T>({3, cfg.image_size, cfg.image_size}, rng, -1, 1, false);
    auto neg = random_tensor<T>({3, cfg.image_size, cfg.image_size}, rng, -1, 1, false);
    return {model, sketch, pos, neg};
}

/// Tokenizer -> encoder (with one filtering step) -> cross-attention ->
/// triplet loss at d=8, L=1, h=2, n=4, every parameter checked in 64-bit.
inline GradCheckReport composed_suite(std::uint64_t seed = 7, double tol = 1e-5) {
    auto cfg = tiny_config();
    cfg.filter_layers = std::vector<std::size_t>{1};  // keeps 3 of 4 tokens
    auto fx = make_fixture<double>(cfg, seed);
    auto params = fx.model.parameters();
    for (auto& [name, t] : params) t.set_requires_grad(true);
    return grad_check<double>([&] { return fx.loss(); }, params, tol);
}

}  // namespace mlgt::test
