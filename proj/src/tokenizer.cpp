#include "mlgt/tokenizer.hpp"

#include <cmath>

#include "mlgt/errors.hpp"
#include "mlgt/init.hpp"
#include "mlgt/ops.hpp"

namespace mlgt {

const char* modality_name(Modality m) { return m == Modality::Sketch ? "sketch" : "image"; }

template <typename T>
TokenizerParams<T> TokenizerParams<T>::init(Modality modality, const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    TokenizerParams p;
    p.modality = modality;
    if (modality == Modality::Sketch) {
        const auto channels = config.sketch_channels();
        std::size_t cin = 1;
        for (std::size_t i = 0; i < config.sketch_kernels.size(); ++i) {
            const std::size_t k = config.sketch_kernels[i];
            const std::size_t fan_in = cin * k * k;
            ConvLayer<T> layer;
            layer.weight = normal_tensor<T>({channels[i], cin, k, k}, std::sqrt(2.0 / double(fan_in)), rng);
            layer.bias = Tensor<T>::zeros({channels[i]});
            layer.stride = config.stride;
            layer.pad = k / 2;
            p.convs.push_back(std::move(layer));
            cin = channels[i];
        }
    } else {
        const std::size_t k = config.patch;
        ConvLayer<T> layer;
        layer.weight = normal_tensor<T>({config.dim, 3, k, k}, std::sqrt(2.0 / double(3 * k * k)), rng);
        layer.bias = Tensor<T>::zeros({config.dim});
        layer.stride = k;
        layer.pad = 0;
        p.convs.push_back(std::move(layer));
    }
    p.pos_embed = normal_tensor<T>({config.tokens() + 1, config.dim}, config.init_std, rng);
    p.rt_seed = normal_tensor<T>({config.dim}, config.init_std, rng);
    return p;
}

template <typename T>
void TokenizerParams<T>::collect(NamedTensors<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < convs.size(); ++i) {
        out.emplace_back(prefix + "conv" + std::to_string(i) + ".weight", convs[i].weight);
        out.emplace_back(prefix + "conv" + std::to_string(i) + ".bias", convs[i].bias);
    }
    out.emplace_back(prefix + "pos_embed", pos_embed);
    out.emplace_back(prefix + "rt_seed", rt_seed);
}

template <typename T>
Tensor<T> preprocess_sketch(const Image& image, std::size_t size) {
    const auto planes = resize_bilinear(image, size, size);
    const std::size_t hw = size * size;
    std::vector<T> out(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const float r = planes[i], g = planes[hw + i], b = planes[2 * hw + i];
        const double gray = std::round(0.299 * r + 0.587 * g + 0.114 * b);
        const bool background = (r >= 250.0f && g >= 250.0f && b >= 250.0f) || gray >= 250.0;
        out[i] = background ? T(0) : T((255.0 - gray) / 255.0);
    }
    return Tensor<T>::from({1, size, size}, std::move(out));
}

template <typename T>
Tensor<T> preprocess_image(const Image& image, std::size_t size, const std::array<float, 3>& mean,
                           const std::array<float, 3>& std) {
    const auto planes = resize_bilinear(image, size, size);
    const std::size_t hw = size * size;
    std::vector<T> out(3 * hw);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out[c * hw + i] = T((double(planes[c * hw + i]) / 255.0 - mean[c]) / std[c]);
    return Tensor<T>::from({3, size, size}, std::move(out));
}

namespace {

template <typename T>
Tensor<T> conv_stack_tokens(const Tensor<T>& x, const TokenizerParams<T>& params) {
    Tensor<T> h = x;
    for (const auto& layer : params.convs) h = relu(conv2d(h, layer.weight, layer.bias, layer.stride, layer.pad));
    const std::size_t d = h.size(0), n = h.size(1) * h.size(2);
    return transpose(reshape(h, {d, n}));
}

template <typename T>
void require_divisible(const Tensor<T>& x, std::size_t factor, const char* what) {
    if (x.rank() != 3) throw DimensionError(std::string(what) + ": expected [C×H×W], got " + shape_string(x.shape()));
    if (x.size(1) % factor != 0 || x.size(2) % factor != 0) {
        throw ConfigError(std::string(what) + ": input " + std::to_string(x.size(1)) + "x" + std::to_string(x.size(2)) +
                          " not divisible by " + std::to_string(factor));
    }
}

}  // namespace

template <typename T>
Tensor<T> embed_sketch_multilevel(const Tensor<T>& x, const TokenizerParams<T>& params) {
    std::size_t reduction = 1;
    for (const auto& l : params.convs) reduction *= l.stride;
    require_divisible(x, reduction, "embed_sketch_multilevel");
    return conv_stack_tokens(x, params);
}

template <typename T>
Tensor<T> embed_image(const Tensor<T>& x, const TokenizerParams<T>& params) {
    require_divisible(x, params.convs.front().stride, "embed_image");
    return conv_stack_tokens(x, params);
}

template <typename T>
TokenEmbedding<T> prepend_rt(const Tensor<T>& e, const TokenizerParams<T>& params) {
    if (e.rank() != 2 || e.size(1) != params.dim()) {
        throw DimensionError("prepend_rt: tokens " + shape_string(e.shape()) + " vs [RT] width " +
                             std::to_string(params.dim()));
    }
    if (params.pos_embed.size(0) != e.size(0) + 1) {
        throw DimensionError("prepend_rt: positional table " + shape_string(params.pos_embed.shape()) + " for " +
                             std::to_string(e.size(0)) + " tokens");
    }
    auto rt = reshape(params.rt_seed, {1, params.dim()});
    return {add(concat_rows<T>({rt, e}), params.pos_embed), params.modality};
}

template <typename T>
TokenEmbedding<T> tokenize(const Tensor<T>& x, const TokenizerParams<T>& params) {
    return prepend_rt(params.modality == Modality::Sketch ? embed_sketch_multilevel(x, params) : embed_image(x, params),
                      params);
}

#define MLGT_INSTANTIATE_TOKENIZER(T)                                                                     \
    template struct TokenizerParams<T>;                                                                   \
    template Tensor<T> preprocess_sketch<T>(const Image&, std::size_t);                                   \
    template Tensor<T> preprocess_image<T>(const Image&, std::size_t, const std::array<float, 3>&,        \
                                           const std::array<float, 3>&);                                  \
    template Tensor<T> embed_sketch_multilevel(const Tensor<T>&, const TokenizerParams<T>&);              \
    template Tensor<T> embed_image(const Tensor<T>&, const TokenizerParams<T>&);                          \
    template TokenEmbedding<T> prepend_rt(const Tensor<T>&, const TokenizerParams<T>&);                   \
    template TokenEmbedding<T> tokenize(const Tensor<T>&, const TokenizerParams<T>&);

MLGT_INSTANTIATE_TOKENIZER(float)
MLGT_INSTANTIATE_TOKENIZER(double)

}  // namespace mlgt
