#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mlgt/config.hpp"
#include "mlgt/grad_check.hpp"
#include "mlgt/image.hpp"
#include "mlgt/tensor.hpp"

namespace mlgt {

enum class Modality { Sketch, Image };

const char* modality_name(Modality m);

/// (n+1)×d token matrix; row 0 is the retrieval token throughout the pipeline.
template <typename T>
struct TokenEmbedding {
    Tensor<T> tokens;
    Modality modality = Modality::Sketch;

    std::size_t n() const { return tokens.size(0) - 1; }
    std::size_t d() const { return tokens.size(1); }
};

template <typename T>
struct ConvLayer {
    Tensor<T> weight;  // [c_out×c_in×k×k]
    Tensor<T> bias;    // [c_out]
    std::size_t stride = 1;
    std::size_t pad = 0;
};

/// One branch's tokenizer: a conv stack (four layers for sketches, a single
/// patch conv for images), a learned positional table and the [RT] seed.
template <typename T>
struct TokenizerParams {
    Modality modality = Modality::Sketch;
    std::vector<ConvLayer<T>> convs;
    Tensor<T> pos_embed;  // [(n+1)×d]
    Tensor<T> rt_seed;    // [d]

    static TokenizerParams init(Modality modality, const ModelConfig& config, std::mt19937_64& rng);

    std::size_t dim() const { return rt_seed.numel(); }
    void collect(NamedTensors<T>& out, const std::string& prefix) const;
};

/// Grayscale sketch tensor [1×H×W]: near-white background (all channels or
/// rounded luminance >= 250) becomes 0, strokes become (255 - gray) / 255.
template <typename T>
Tensor<T> preprocess_sketch(const Image& image, std::size_t size);

/// [3×H×W] tensor: bilinear resize, scale to [0,1], then (v - mean) / std per channel.
template <typename T>
Tensor<T> preprocess_image(const Image& image, std::size_t size, const std::array<float, 3>& mean,
                           const std::array<float, 3>& std);

/// Multi-level conv stack with ReLU after every layer, flattened row-major
/// over the spatial grid into [n×d].
template <typename T>
Tensor<T> embed_sketch_multilevel(const Tensor<T>& x, const TokenizerParams<T>& params);

/// Patch conv (kernel = stride = patch) with ReLU, flattened to [n×d].
template <typename T>
Tensor<T> embed_image(const Tensor<T>& x, const TokenizerParams<T>& params);

/// [RT; e] plus positional embeddings on all n+1 rows.
template <typename T>
TokenEmbedding<T> prepend_rt(const Tensor<T>& e, const TokenizerParams<T>& params);

/// Embedding for either branch, dispatched on params.modality.
template <typename T>
TokenEmbedding<T> tokenize(const Tensor<T>& x, const TokenizerParams<T>& params);

}  // namespace mlgt
