#include "mlgt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mlgt/errors.hpp"

namespace mlgt {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value, std::vector<NodePtr<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
    for (const T& v : value) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (grad_enabled()) {
        bool any = std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n->requires_grad; });
        if (any) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor<T>(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input is not differentiated.
template <typename T>
T* input_grad(Node<T>& self, std::size_t i) {
    auto& in = *self.inputs[i];
    return in.requires_grad ? in.grad_buffer() : nullptr;
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
    }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

template <typename T>
Tensor<T> elementwise_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, T sign_b, bool product) {
    require_same_shape(a, b, op);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(av.size());
    if (product) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign_b * bv[i];
    }
    return make_result<T>(op, a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                          [sign_b, product](Node<T>& self) {
                              const auto& g = self.grad;
                              const auto& x = self.inputs[0]->value;
                              const auto& y = self.inputs[1]->value;
                              if (T* ga = input_grad(self, 0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += product ? g[i] * y[i] : g[i];
                              }
                              if (T* gb = input_grad(self, 1)) {
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      gb[i] += product ? g[i] * x[i] : sign_b * g[i];
                              }
                          });
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    const T* A = a.values().data();
    const T* B = b.values().data();
    std::vector<T> c(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            const T* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return make_result<T>("matmul", {m, n}, std::move(c), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node<T>& self) {
        const T* G = self.grad.data();
        const T* A = self.inputs[0]->value.data();
        const T* B = self.inputs[1]->value.data();
        // dA = G * B^T
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const T* brow = B + p * n;
                    T acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        // dB = A^T * G
        if (T* gb = input_grad(self, 1)) {
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const T aip = A[i * k + p];
                    T* gbrow = gb + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.size(0), c = a.size(1);
    const auto av = a.values();
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return make_result<T>("transpose", {c, r}, std::move(out), {a.node_ptr()}, [r, c](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>("add", a, b, T(1), false);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>("sub", a, b, T(-1), false);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>("mul", a, b, T(1), true);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    return make_result<T>("scale", a.shape(), std::move(out), {a.node_ptr()}, [factor](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v += offset;
    return make_result<T>("add_scalar", a.shape(), std::move(out), {a.node_ptr()}, [](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_matrix(x, "add_bias");
    const std::size_t m = x.size(0), n = x.size(1);
    if (bias.numel() != n) {
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match rows of " +
                             shape_string(x.shape()));
    }
    std::vector<T> out(x.values().begin(), x.values().end());
    const auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return make_result<T>("add_bias", x.shape(), std::move(out), {x.node_ptr(), bias.node_ptr()},
                          [m, n](Node<T>& self) {
                              if (T* gx = input_grad(self, 0)) {
                                  for (std::size_t i = 0; i < m * n; ++i) gx[i] += self.grad[i];
                              }
                              if (T* gb = input_grad(self, 1)) {
                                  for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                              }
                          });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return make_result<T>("relu", a.shape(), std::move(out), {a.node_ptr()}, [](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] > T(0)) ga[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    const auto av = a.values();
    std::vector<T> out(av.size());
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
    return make_result<T>("gelu", a.shape(), std::move(out), {a.node_ptr()}, [inv_sqrt2](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value;
            const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
                const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
                ga[i] += self.grad[i] * (cdf + x[i] * pdf);
            }
        }
    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    require_matrix(x, "softmax_rows");
    const std::size_t r = x.size(0), c = x.size(1);
    const auto xv = x.values();
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = xv.data() + i * c;
        T* orow = out.data() + i * c;
        const T mx = *std::max_element(row, row + c);
        T total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            total += orow[j];
        }
        for (std::size_t j = 0; j < c; ++j) orow[j] /= total;
    }
    return make_result<T>("softmax_rows", x.shape(), std::move(out), {x.node_ptr()}, [r, c](Node<T>& self) {
        if (T* gx = input_grad(self, 0)) {
            for (std::size_t i = 0; i < r; ++i) {
                const T* y = self.value.data() + i * c;
                const T* g = self.grad.data() + i * c;
                T dot = 0;
                for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[j] * (g[j] - dot);
            }
        }
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() == 0) throw DimensionError("layer_norm on a scalar");
    const std::size_t d = x.shape().back();
    if (gamma.numel() != d || beta.numel() != d) {
        throw DimensionError("layer_norm: width " + std::to_string(d) + " of " + shape_string(x.shape()) +
                             " vs gamma " + shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
    }
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    std::vector<T> out(x.numel());
    // normalized values and reciprocal std are kept for the backward pass
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto rstd = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(d);
        const T rs = T(1) / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - mu) * rs;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return make_result<T>(
        "layer_norm", x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [rows, d, xhat, rstd](Node<T>& self) {
            const T* g = self.grad.data();
            const auto& gam = self.inputs[1]->value;
            T* gx = input_grad(self, 0);
            T* gg = input_grad(self, 1);
            T* gb = input_grad(self, 2);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* gr = g + r * d;
                const T* hr = xhat->data() + r * d;
                if (gg || gb) {
                    for (std::size_t j = 0; j < d; ++j) {
                        if (gg) gg[j] += gr[j] * hr[j];
                        if (gb) gb[j] += gr[j];
                    }
                }
                if (gx) {
                    T mean_dh = 0, mean_dh_h = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = gr[j] * gam[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= T(d);
                    mean_dh_h /= T(d);
                    const T rs = (*rstd)[r];
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = gr[j] * gam[j];
                        gx[r * d + j] += rs * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw DimensionError("conv2d: stride must be at least 1");
    if (in + 2 * pad < kernel) {
        throw DimensionError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                             std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.size(1) != x.size(0) || w.size(2) != w.size(3)) {
        throw DimensionError("conv2d: input " + shape_string(x.shape()) + " incompatible with kernel " +
                             shape_string(w.shape()));
    }
    const std::size_t cin = x.size(0), H = x.size(1), W = x.size(2);
    const std::size_t cout = w.size(0), k = w.size(2);
    if (bias.numel() != cout) {
        throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " for " + std::to_string(cout) +
                             " output channels");
    }
    const std::size_t Ho = conv_output_size(H, k, stride, pad);
    const std::size_t Wo = conv_output_size(W, k, stride, pad);
    const auto xv = x.values();
    const auto wv = w.values();
    const auto bv = bias.values();
    std::vector<T> out(cout * Ho * Wo);

    // Visits every (output pixel, tap) pair that lands inside the input.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t widx = ((o * cin + c) * k + ky) * k + kx;
                        for (std::size_t oy = 0; oy < Ho; ++oy) {
                            const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
                            if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
                            const std::size_t obase = (o * Ho + oy) * Wo;
                            const std::size_t ibase = (c * H + std::size_t(iy)) * W;
                            // ox range with 0 <= ox*stride + kx - pad < W
                            std::size_t ox0 = 0;
                            if (kx < pad) ox0 = (pad - kx + stride - 1) / stride;
                            for (std::size_t ox = ox0; ox < Wo; ++ox) {
                                const std::size_t ix = ox * stride + kx - pad;
                                if (ix >= W) break;
                                fn(obase + ox, ibase + ix, widx);
                            }
                        }
                    }
    };

    for (std::size_t o = 0; o < cout; ++o)
        std::fill(out.begin() + o * Ho * Wo, out.begin() + (o + 1) * Ho * Wo, bv[o]);
    for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += wv[wi] * xv[ii]; });

    return make_result<T>("conv2d", {cout, Ho, Wo}, std::move(out), {x.node_ptr(), w.node_ptr(), bias.node_ptr()},
                          [for_each_tap, cout, Ho, Wo](Node<T>& self) {
                              const T* g = self.grad.data();
                              const auto& xval = self.inputs[0]->value;
                              const auto& wval = self.inputs[1]->value;
                              T* gx = input_grad(self, 0);
                              T* gw = input_grad(self, 1);
                              T* gb = input_grad(self, 2);
                              if (gb) {
                                  for (std::size_t o = 0; o < cout; ++o)
                                      for (std::size_t i = 0; i < Ho * Wo; ++i) gb[o] += g[o * Ho * Wo + i];
                              }
                              if (gx || gw) {
                                  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                                      if (gx) gx[ii] += wval[wi] * g[oi];
                                      if (gw) gw[wi] += xval[ii] * g[oi];
                                  });
                              }
                          });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    std::vector<T> out(a.values().begin(), a.values().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {a.node_ptr()}, [](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& rows) {
    require_matrix(a, "gather_rows");
    const std::size_t r = a.size(0), c = a.size(1);
    std::vector<T> out(rows.size() * c);
    const auto av = a.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= r) {
            throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                                 shape_string(a.shape()));
        }
        std::copy_n(av.data() + rows[i] * c, c, out.data() + i * c);
    }
    return make_result<T>("gather_rows", {rows.size(), c}, std::move(out), {a.node_ptr()},
                          [rows, c](Node<T>& self) {
                              if (T* ga = input_grad(self, 0)) {
                                  for (std::size_t i = 0; i < rows.size(); ++i)
                                      for (std::size_t j = 0; j < c; ++j) ga[rows[i] * c + j] += self.grad[i * c + j];
                              }
                          });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_cols");
    const std::size_t r = a.size(0), c = a.size(1);
    if (begin >= end || end > c) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for " + shape_string(a.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<T> out(r * w);
    const auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + begin, w, out.data() + i * w);
    return make_result<T>("slice_cols", {r, w}, std::move(out), {a.node_ptr()}, [r, c, w, begin](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += self.grad[i * w + j];
        }
    });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
    const std::size_t c = parts.front().size(1);
    std::size_t rows = 0;
    std::vector<NodePtr<T>> inputs;
    for (const auto& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.size(1) != c) {
            throw DimensionError("concat_rows: width mismatch " + shape_string(parts.front().shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        rows += p.size(0);
        inputs.push_back(p.node_ptr());
    }
    std::vector<T> out;
    out.reserve(rows * c);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_result<T>("concat_rows", {rows, c}, std::move(out), std::move(inputs), [](Node<T>& self) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const std::size_t n = self.inputs[i]->value.size();
            if (T* gi = input_grad(self, i)) {
                for (std::size_t j = 0; j < n; ++j) gi[j] += self.grad[offset + j];
            }
            offset += n;
        }
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
    const std::size_t r = parts.front().size(0);
    std::size_t cols = 0;
    std::vector<NodePtr<T>> inputs;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.size(0) != r) {
            throw DimensionError("concat_cols: height mismatch " + shape_string(parts.front().shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        cols += p.size(1);
        inputs.push_back(p.node_ptr());
    }
    std::vector<T> out(r * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.size(1);
        for (std::size_t i = 0; i < r; ++i) std::copy_n(p.values().data() + i * w, w, out.data() + i * cols + offset);
        offset += w;
    }
    return make_result<T>("concat_cols", {r, cols}, std::move(out), std::move(inputs), [r, cols](Node<T>& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.inputs.size(); ++p) {
            const std::size_t w = self.inputs[p]->shape[1];
            if (T* gp = input_grad(self, p)) {
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += self.grad[i * cols + offset + j];
            }
            offset += w;
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = 0;
    for (T v : a.values()) total += v;
    return make_result<T>("sum", {}, {total}, {a.node_ptr()}, [](Node<T>& self) {
        if (T* ga = input_grad(self, 0)) {
            const std::size_t n = self.inputs[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(a), T(1) / T(a.numel()));
}

template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a) {
    T ss = 0;
    for (T v : a.values()) ss += v * v;
    const T norm = std::sqrt(ss);
    return make_result<T>("l2_norm", {}, {norm}, {a.node_ptr()}, [](Node<T>& self) {
        const T n = self.value[0];
        if (n == T(0)) return;
        if (T* ga = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value;
            const T s = self.grad[0] / n;
            for (std::size_t i = 0; i < x.size(); ++i) ga[i] += s * x[i];
        }
    });
}

#define MLGT_INSTANTIATE_OPS(T)                                                                               \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> transpose(const Tensor<T>&);                                                           \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> scale(const Tensor<T>&, T);                                                            \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                       \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> relu(const Tensor<T>&);                                                                \
    template Tensor<T> gelu(const Tensor<T>&);                                                                \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                                        \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                   \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
    template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);                        \
    template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                                \
    template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                            \
    template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                            \
    template Tensor<T> sum(const Tensor<T>&);                                                                 \
    template Tensor<T> mean(const Tensor<T>&);                                                                \
    template Tensor<T> l2_norm(const Tensor<T>&);

MLGT_INSTANTIATE_OPS(float)
MLGT_INSTANTIATE_OPS(double)

#undef MLGT_INSTANTIATE_OPS

}  // namespace mlgt
