#include "mlgt/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlgt/errors.hpp"
#include "mlgt/init.hpp"
#include "mlgt/ops.hpp"

namespace mlgt {

template <typename T>
std::vector<double> AttentionScores<T>::rt_attention() const {
    if (heads.empty()) throw ContractError("rt_attention: no attention heads recorded");
    const std::size_t cols = heads.front().size(1);
    std::vector<double> out(cols - 1, 0.0);
    for (const auto& h : heads) {
        const auto v = h.values();
        for (std::size_t j = 1; j < cols; ++j) out[j - 1] += double(v[j]);
    }
    for (auto& x : out) x /= double(heads.size());
    return out;
}

template <typename T>
AttentionWeights<T> AttentionWeights<T>::init(std::size_t d, double stddev, std::mt19937_64& rng) {
    AttentionWeights w;
    w.w_q = normal_tensor<T>({d, d}, stddev, rng);
    w.w_k = normal_tensor<T>({d, d}, stddev, rng);
    w.w_v = normal_tensor<T>({d, d}, stddev, rng);
    w.w_o = normal_tensor<T>({d, d}, stddev, rng);
    w.b_o = Tensor<T>::zeros({d});
    return w;
}

template <typename T>
void AttentionWeights<T>::collect(NamedTensors<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + "w_q", w_q);
    out.emplace_back(prefix + "w_k", w_k);
    out.emplace_back(prefix + "w_v", w_v);
    out.emplace_back(prefix + "w_o", w_o);
    out.emplace_back(prefix + "b_o", b_o);
}

template <typename T>
MlpWeights<T> MlpWeights<T>::init(std::size_t d, double stddev, std::mt19937_64& rng) {
    MlpWeights m;
    m.w_fc1 = normal_tensor<T>({d, 4 * d}, stddev, rng);
    m.b_fc1 = Tensor<T>::zeros({4 * d});
    m.w_fc2 = normal_tensor<T>({4 * d, d}, stddev, rng);
    m.b_fc2 = Tensor<T>::zeros({d});
    return m;
}

template <typename T>
void MlpWeights<T>::collect(NamedTensors<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + "w_fc1", w_fc1);
    out.emplace_back(prefix + "b_fc1", b_fc1);
    out.emplace_back(prefix + "w_fc2", w_fc2);
    out.emplace_back(prefix + "b_fc2", b_fc2);
}

template <typename T>
EncoderParams<T> EncoderParams<T>::init(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    EncoderParams p;
    p.settings.heads = config.heads;
    p.settings.filter_layers = config.effective_filter_layers();
    p.settings.keep_ratio = config.keep_ratio;
    p.settings.scale = config.scale;
    p.settings.ln_eps = config.ln_eps;
    const std::size_t d = config.dim;
    for (std::size_t l = 0; l < config.depth; ++l) {
        EncoderBlock<T> b;
        b.ln1_gamma = Tensor<T>::full({d}, T(1));
        b.ln1_beta = Tensor<T>::zeros({d});
        b.attn = AttentionWeights<T>::init(d, config.init_std, rng);
        b.ln2_gamma = Tensor<T>::full({d}, T(1));
        b.ln2_beta = Tensor<T>::zeros({d});
        b.mlp = MlpWeights<T>::init(d, config.init_std, rng);
        p.blocks.push_back(std::move(b));
    }
    return p;
}

template <typename T>
void EncoderParams<T>::collect(NamedTensors<T>& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const std::string bp = prefix + "block" + std::to_string(l) + ".";
        const auto& b = blocks[l];
        out.emplace_back(bp + "ln1.gamma", b.ln1_gamma);
        out.emplace_back(bp + "ln1.beta", b.ln1_beta);
        b.attn.collect(out, bp + "attn.");
        out.emplace_back(bp + "ln2.gamma", b.ln2_gamma);
        out.emplace_back(bp + "ln2.beta", b.ln2_beta);
        b.mlp.collect(out, bp + "mlp.");
    }
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query_src, const Tensor<T>& kv_src, const AttentionWeights<T>& w,
                               std::size_t heads, AttentionScale scale, AttentionScores<T>* scores) {
    if (query_src.rank() != 2 || kv_src.rank() != 2 || query_src.size(1) != kv_src.size(1)) {
        throw DimensionError("attention: query tokens " + shape_string(query_src.shape()) + " vs key/value tokens " +
                             shape_string(kv_src.shape()));
    }
    const std::size_t d = query_src.size(1);
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) + " not divisible into " + std::to_string(heads) +
                             " heads");
    }
    const std::size_t dh = d / heads;
    const T inv_scale = T(1) / std::sqrt(T(scale == AttentionScale::PerHead ? dh : d));

    const auto q = matmul(query_src, w.w_q);
    const auto k = matmul(kv_src, w.w_k);
    const auto v = matmul(kv_src, w.w_v);
    std::vector<Tensor<T>> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
        const auto kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
        const auto vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
        const auto attn = softmax_rows(mlgt::scale(matmul(qh, transpose(kh)), inv_scale));
        if (scores) scores->heads.push_back(attn);
        outputs.push_back(matmul(attn, vh));
    }
    const auto merged = heads == 1 ? outputs.front() : concat_cols(outputs);
    return add_bias(matmul(merged, w.w_o), w.b_o);
}

template <typename T>
MsaResult<T> msa(const TokenEmbedding<T>& e, const EncoderBlock<T>& block, const EncoderSettings& settings) {
    MsaResult<T> r;
    const auto x = layer_norm(e.tokens, block.ln1_gamma, block.ln1_beta, T(settings.ln_eps));
    const auto a = multi_head_attention(x, x, block.attn, settings.heads, settings.scale, &r.scores);
    r.out = {add(e.tokens, a), e.modality};
    return r;
}

template <typename T>
TokenEmbedding<T> mlp_block(const TokenEmbedding<T>& e, const EncoderBlock<T>& block, const EncoderSettings& settings) {
    const auto x = layer_norm(e.tokens, block.ln2_gamma, block.ln2_beta, T(settings.ln_eps));
    const auto h = gelu(add_bias(matmul(x, block.mlp.w_fc1), block.mlp.b_fc1));
    const auto y = add_bias(matmul(h, block.mlp.w_fc2), block.mlp.b_fc2);
    return {add(e.tokens, y), e.modality};
}

std::vector<std::size_t> select_tokens(std::span<const double> rt_attention, std::size_t k) {
    const std::size_t n = rt_attention.size();
    if (k < 1 || k > n) {
        throw ContractError("filter: k=" + std::to_string(k) + " outside 1.." + std::to_string(n));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return rt_attention[a] > rt_attention[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t keep_count(std::size_t n, double ratio) {
    // the small slack keeps exact products such as 0.7 * 10 from rounding up
    const auto k = static_cast<std::size_t>(std::ceil(ratio * double(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

template <typename T>
TokenEmbedding<T> filter_tokens(const TokenEmbedding<T>& e, const AttentionScores<T>& scores, std::size_t k) {
    const auto rt = scores.rt_attention();
    if (rt.size() != e.n()) {
        throw DimensionError("filter_tokens: scores cover " + std::to_string(rt.size()) + " tokens, embedding has " +
                             std::to_string(e.n()));
    }
    const auto keep = select_tokens(rt, k);
    std::vector<std::size_t> rows{0};
    for (auto i : keep) rows.push_back(i + 1);
    return {gather_rows(e.tokens, rows), e.modality};
}

template <typename T>
TokenEmbedding<T> encode(const TokenEmbedding<T>& e, const EncoderParams<T>& params, EncodeTrace<T>* trace) {
    const auto& s = params.settings;
    TokenEmbedding<T> cur = e;
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        if (trace) trace->tokens_in.push_back(cur.n());
        auto attn = msa(cur, params.blocks[l], s);
        cur = mlp_block(attn.out, params.blocks[l], s);
        const bool filter = std::find(s.filter_layers.begin(), s.filter_layers.end(), l + 1) != s.filter_layers.end();
        if (filter && cur.n() > 0) cur = filter_tokens(cur, attn.scores, keep_count(cur.n(), s.keep_ratio));
        if (trace) trace->scores.push_back(std::move(attn.scores));
    }
    return cur;
}

#define MLGT_INSTANTIATE_ENCODER(T)                                                                              \
    template struct AttentionScores<T>;                                                                          \
    template struct AttentionWeights<T>;                                                                         \
    template struct MlpWeights<T>;                                                                               \
    template struct EncoderParams<T>;                                                                            \
    template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,     \
                                           std::size_t, AttentionScale, AttentionScores<T>*);                  \
    template MsaResult<T> msa(const TokenEmbedding<T>&, const EncoderBlock<T>&, const EncoderSettings&);        \
    template TokenEmbedding<T> mlp_block(const TokenEmbedding<T>&, const EncoderBlock<T>&, const EncoderSettings&); \
    template TokenEmbedding<T> filter_tokens(const TokenEmbedding<T>&, const AttentionScores<T>&, std::size_t);  \
    template TokenEmbedding<T> encode(const TokenEmbedding<T>&, const EncoderParams<T>&, EncodeTrace<T>*);

MLGT_INSTANTIATE_ENCODER(float)
MLGT_INSTANTIATE_ENCODER(double)

}  // namespace mlgt
