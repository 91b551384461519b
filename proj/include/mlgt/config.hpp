#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mlgt {

/// How attention logits are scaled: by sqrt(d/h) per head, or by sqrt(d)
/// of the full embedding width.
enum class AttentionScale { PerHead, FullWidth };

/// Architecture of the whole model. Defaults are the full-size configuration
/// (224x224 input, 196 tokens of width 768, 12 blocks, 12 heads).
struct ModelConfig {
    std::size_t image_size = 224;
    std::size_t dim = 768;
    std::size_t depth = 12;
    std::size_t heads = 12;
    std::size_t cross_heads = 12;
    /// Kernel sizes of the multi-level sketch stack; every layer has the same stride.
    std::vector<std::size_t> sketch_kernels{7, 3, 3, 3};
    std::size_t stride = 2;
    /// Image patch size. Must equal stride^layers so both branches yield the same token grid.
    std::size_t patch = 16;
    /// 1-based block indices followed by token filtering; nullopt means the
    /// default {ceil(L/3), ceil(2L/3)}.
    std::optional<std::vector<std::size_t>> filter_layers;
    double keep_ratio = 0.7;
    AttentionScale scale = AttentionScale::PerHead;
    bool tied_encoders = true;
    bool cross_mlp = false;
    double ln_eps = 1e-5;
    double init_std = 0.02;
    std::array<float, 3> norm_mean{0.5f, 0.5f, 0.5f};
    std::array<float, 3> norm_std{0.5f, 0.5f, 0.5f};

    static ModelConfig full();
    /// Desk-scale model: 64x64 input, d=32, 2 blocks, 4 heads.
    static ModelConfig toy();

    /// Visual tokens per input (excluding the retrieval token).
    std::size_t tokens() const;
    std::size_t grid() const;
    std::vector<std::size_t> effective_filter_layers() const;
    /// Channels produced by each sketch conv layer, widening to dim.
    std::vector<std::size_t> sketch_channels() const;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace mlgt
