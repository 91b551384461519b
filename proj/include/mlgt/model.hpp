#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlgt/config.hpp"
#include "mlgt/cross_attention.hpp"
#include "mlgt/encoder.hpp"
#include "mlgt/image.hpp"
#include "mlgt/tokenizer.hpp"

namespace mlgt {

/// All learnable weights: two tokenizers, the (by default shared) encoder
/// and the cross-attention layer.
template <typename T>
struct Model {
    ModelConfig config;
    TokenizerParams<T> sketch_tokenizer;
    TokenizerParams<T> image_tokenizer;
    EncoderParams<T> encoder;
    /// Present only when config.tied_encoders is false.
    std::optional<EncoderParams<T>> image_encoder;
    CrossAttnParams<T> cross;

    static Model init(const ModelConfig& config, std::uint64_t seed);

    /// Every parameter with a stable dotted name, in a fixed order.
    NamedTensors<T> parameters() const;
    /// Deep copy; copies of a Model otherwise share parameter storage.
    Model clone() const;

    const TokenizerParams<T>& tokenizer(Modality m) const;
    const EncoderParams<T>& encoder_for(Modality m) const;

    Tensor<T> preprocess(const Image& image, Modality m) const;
    /// Tokenize + encode a preprocessed input; row 0 of the result is the final [RT].
    TokenEmbedding<T> embed(const Tensor<T>& input, Modality m) const;
    TokenEmbedding<T> embed(const Image& image, Modality m) const;
};

/// Row 0 of an encoded embedding as a float vector.
template <typename T>
std::vector<float> retrieval_vector(const TokenEmbedding<T>& e);

using Fingerprint = std::array<std::uint8_t, 32>;

Fingerprint sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Fingerprint& fp);

/// Checkpoint layout: "MLGTCKPT", u32 version, u64 manifest length, JSON
/// manifest {config, metadata, params:[{name, shape}]}, then each parameter
/// as raw little-endian f32 in manifest order.
std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const nlohmann::json& metadata = {});

struct Checkpoint {
    Model<float> model;
    nlohmann::json metadata;
    Fingerprint fingerprint{};
};

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes the checkpoint and returns its fingerprint.
Fingerprint save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                            const nlohmann::json& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 of the model's serialized checkpoint with empty metadata.
Fingerprint model_fingerprint(const Model<float>& model);

}  // namespace mlgt
