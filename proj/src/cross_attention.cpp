#include "mlgt/cross_attention.hpp"

#include "mlgt/errors.hpp"
#include "mlgt/ops.hpp"

namespace mlgt {

template <typename T>
CrossAttnParams<T> CrossAttnParams<T>::init(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    CrossAttnParams p;
    const std::size_t d = config.dim;
    p.heads = config.cross_heads;
    p.scale = config.scale;
    p.ln_eps = config.ln_eps;
    p.ln_gamma = Tensor<T>::full({d}, T(1));
    p.ln_beta = Tensor<T>::zeros({d});
    p.attn = AttentionWeights<T>::init(d, config.init_std, rng);
    if (config.cross_mlp) {
        EncoderBlock<T> b;
        b.ln2_gamma = Tensor<T>::full({d}, T(1));
        b.ln2_beta = Tensor<T>::zeros({d});
        b.mlp = MlpWeights<T>::init(d, config.init_std, rng);
        p.mlp = std::move(b);
    }
    return p;
}

template <typename T>
void CrossAttnParams<T>::collect(NamedTensors<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + "ln.gamma", ln_gamma);
    out.emplace_back(prefix + "ln.beta", ln_beta);
    attn.collect(out, prefix + "attn.");
    if (mlp) {
        out.emplace_back(prefix + "ln2.gamma", mlp->ln2_gamma);
        out.emplace_back(prefix + "ln2.beta", mlp->ln2_beta);
        mlp->mlp.collect(out, prefix + "mlp.");
    }
}

template <typename T>
std::pair<TokenEmbedding<T>, TokenEmbedding<T>> cross_attend(const TokenEmbedding<T>& sketch,
                                                             const TokenEmbedding<T>& image,
                                                             const CrossAttnParams<T>& params,
                                                             AttentionScores<T>* sketch_scores,
                                                             AttentionScores<T>* image_scores) {
    if (sketch.d() != image.d()) {
        throw DimensionError("cross_attend: sketch tokens " + shape_string(sketch.tokens.shape()) + " vs image tokens " +
                             shape_string(image.tokens.shape()));
    }
    const T eps = T(params.ln_eps);
    const auto xs = layer_norm(sketch.tokens, params.ln_gamma, params.ln_beta, eps);
    const auto xr = layer_norm(image.tokens, params.ln_gamma, params.ln_beta, eps);
    const auto as = multi_head_attention(xs, xr, params.attn, params.heads, params.scale, sketch_scores);
    const auto ar = multi_head_attention(xr, xs, params.attn, params.heads, params.scale, image_scores);
    TokenEmbedding<T> s{add(sketch.tokens, as), sketch.modality};
    TokenEmbedding<T> r{add(image.tokens, ar), image.modality};
    if (params.mlp) {
        EncoderSettings settings;
        settings.ln_eps = params.ln_eps;
        s = mlp_block(s, *params.mlp, settings);
        r = mlp_block(r, *params.mlp, settings);
    }
    return {std::move(s), std::move(r)};
}

template <typename T>
Tensor<T> rt_distance(const TokenEmbedding<T>& a, const TokenEmbedding<T>& b) {
    if (a.d() != b.d()) {
        throw DimensionError("rt_distance: widths " + std::to_string(a.d()) + " and " + std::to_string(b.d()));
    }
    return l2_norm(sub(gather_rows(a.tokens, {0}), gather_rows(b.tokens, {0})));
}

template <typename T>
PairScore<T> pair_distance(const TokenEmbedding<T>& sketch, const TokenEmbedding<T>& image,
                           const CrossAttnParams<T>& params, DistanceMode mode) {
    TokenEmbedding<T> s = sketch, r = image;
    if (mode == DistanceMode::Post) std::tie(s, r) = cross_attend(sketch, image, params);
    PairScore<T> out;
    out.rt_sketch = reshape(gather_rows(s.tokens, {0}), {s.d()});
    out.rt_image = reshape(gather_rows(r.tokens, {0}), {r.d()});
    out.distance = l2_norm(sub(out.rt_sketch, out.rt_image));
    return out;
}

#define MLGT_INSTANTIATE_CROSS(T)                                                                               \
    template struct CrossAttnParams<T>;                                                                         \
    template std::pair<TokenEmbedding<T>, TokenEmbedding<T>> cross_attend(                                      \
        const TokenEmbedding<T>&, const TokenEmbedding<T>&, const CrossAttnParams<T>&, AttentionScores<T>*,      \
        AttentionScores<T>*);                                                                                   \
    template Tensor<T> rt_distance(const TokenEmbedding<T>&, const TokenEmbedding<T>&);                         \
    template PairScore<T> pair_distance(const TokenEmbedding<T>&, const TokenEmbedding<T>&,                     \
                                        const CrossAttnParams<T>&, DistanceMode);

MLGT_INSTANTIATE_CROSS(float)
MLGT_INSTANTIATE_CROSS(double)

}  // namespace mlgt
