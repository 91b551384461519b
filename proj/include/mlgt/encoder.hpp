#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlgt/config.hpp"
#include "mlgt/grad_check.hpp"
#include "mlgt/tensor.hpp"
#include "mlgt/tokenizer.hpp"

namespace mlgt {

/// Per-head row-stochastic attention matrices of one attention call.
template <typename T>
struct AttentionScores {
    std::vector<Tensor<T>> heads;

    /// Attention of the [RT] query (row 0) over the visual tokens (columns
    /// 1..n), averaged across heads.
    std::vector<double> rt_attention() const;
};

/// Projection weights of one multi-head attention layer. Q/K/V carry no bias.
template <typename T>
struct AttentionWeights {
    Tensor<T> w_q, w_k, w_v;  // [d×d], head h owns columns [h*d/h, (h+1)*d/h)
    Tensor<T> w_o;            // [d×d]
    Tensor<T> b_o;            // [d]

    static AttentionWeights init(std::size_t d, double stddev, std::mt19937_64& rng);
    void collect(NamedTensors<T>& out, const std::string& prefix) const;
};

template <typename T>
struct MlpWeights {
    Tensor<T> w_fc1, b_fc1;  // d -> 4d
    Tensor<T> w_fc2, b_fc2;  // 4d -> d

    static MlpWeights init(std::size_t d, double stddev, std::mt19937_64& rng);
    void collect(NamedTensors<T>& out, const std::string& prefix) const;
};

template <typename T>
struct EncoderBlock {
    Tensor<T> ln1_gamma, ln1_beta;
    AttentionWeights<T> attn;
    Tensor<T> ln2_gamma, ln2_beta;
    MlpWeights<T> mlp;
};

struct EncoderSettings {
    std::size_t heads = 1;
    std::vector<std::size_t> filter_layers;  // 1-based
    double keep_ratio = 1.0;
    AttentionScale scale = AttentionScale::PerHead;
    double ln_eps = 1e-5;
};

template <typename T>
struct EncoderParams {
    EncoderSettings settings;
    std::vector<EncoderBlock<T>> blocks;

    static EncoderParams init(const ModelConfig& config, std::mt19937_64& rng);
    void collect(NamedTensors<T>& out, const std::string& prefix) const;
};

/// softmax(Q K^T / s) V over h heads followed by the output projection.
/// Queries come from `query_src`, keys and values from `kv_src`.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query_src, const Tensor<T>& kv_src, const AttentionWeights<T>& w,
                               std::size_t heads, AttentionScale scale, AttentionScores<T>* scores = nullptr);

template <typename T>
struct MsaResult {
    TokenEmbedding<T> out;
    AttentionScores<T> scores;
};

/// E + MSA(LN(E)).
template <typename T>
MsaResult<T> msa(const TokenEmbedding<T>& e, const EncoderBlock<T>& block, const EncoderSettings& settings);

/// E + MLP(LN(E)), GELU between the two layers.
template <typename T>
TokenEmbedding<T> mlp_block(const TokenEmbedding<T>& e, const EncoderBlock<T>& block, const EncoderSettings& settings);

/// 0-based visual-token indices of the k highest scores, returned in
/// ascending index order. Ties go to the lower index.
std::vector<std::size_t> select_tokens(std::span<const double> rt_attention, std::size_t k);

/// ceil(ratio * n), clamped to [1, n].
std::size_t keep_count(std::size_t n, double ratio);

/// Keeps [RT] plus the k visual tokens most attended by [RT].
template <typename T>
TokenEmbedding<T> filter_tokens(const TokenEmbedding<T>& e, const AttentionScores<T>& scores, std::size_t k);

/// Per-block record of an encode() call.
template <typename T>
struct EncodeTrace {
    std::vector<std::size_t> tokens_in;
    std::vector<AttentionScores<T>> scores;
};

/// L blocks of msa + mlp_block, filtering after each block listed in
/// settings.filter_layers with k = keep_count(current n, keep_ratio).
template <typename T>
TokenEmbedding<T> encode(const TokenEmbedding<T>& e, const EncoderParams<T>& params, EncodeTrace<T>* trace = nullptr);

}  // namespace mlgt
