#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "mlgt/config.hpp"
#include "mlgt/encoder.hpp"
#include "mlgt/tokenizer.hpp"

namespace mlgt {

/// Single cross-attention layer shared by both directions of the query swap.
template <typename T>
struct CrossAttnParams {
    std::size_t heads = 1;
    AttentionScale scale = AttentionScale::PerHead;
    double ln_eps = 1e-5;
    Tensor<T> ln_gamma, ln_beta;
    AttentionWeights<T> attn;
    /// Optional position-wise MLP after the exchange (off by default).
    std::optional<EncoderBlock<T>> mlp;

    static CrossAttnParams init(const ModelConfig& config, std::mt19937_64& rng);
    void collect(NamedTensors<T>& out, const std::string& prefix) const;
};

/// Swaps queries between modalities: the sketch side becomes
/// E_S + Attn(Q_S, K_R, V_R) and the image side E_R + Attn(Q_R, K_S, V_S),
/// with Q/K/V taken from the layer-normed inputs. All rows, [RT] included,
/// are updated.
template <typename T>
std::pair<TokenEmbedding<T>, TokenEmbedding<T>> cross_attend(const TokenEmbedding<T>& sketch,
                                                             const TokenEmbedding<T>& image,
                                                             const CrossAttnParams<T>& params,
                                                             AttentionScores<T>* sketch_scores = nullptr,
                                                             AttentionScores<T>* image_scores = nullptr);

enum class DistanceMode { Pre, Post };

template <typename T>
struct PairScore {
    Tensor<T> distance;  // scalar, differentiable
    Tensor<T> rt_sketch;
    Tensor<T> rt_image;

    double value() const { return double(distance.item()); }
};

/// Euclidean distance between the row-0 vectors of two embeddings.
template <typename T>
Tensor<T> rt_distance(const TokenEmbedding<T>& a, const TokenEmbedding<T>& b);

/// Pre: distance between the encoder outputs' [RT] rows.
/// Post: distance after cross_attend.
template <typename T>
PairScore<T> pair_distance(const TokenEmbedding<T>& sketch, const TokenEmbedding<T>& image,
                           const CrossAttnParams<T>& params, DistanceMode mode);

}  // namespace mlgt
