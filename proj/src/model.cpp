#include "mlgt/model.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <map>

#include "mlgt/byte_io.hpp"
#include "mlgt/errors.hpp"

namespace mlgt {

namespace {
constexpr std::string_view kCheckpointMagic = "MLGTCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

template <typename T>
Model<T> Model<T>::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    Model m;
    m.config = config;
    m.sketch_tokenizer = TokenizerParams<T>::init(Modality::Sketch, config, rng);
    m.image_tokenizer = TokenizerParams<T>::init(Modality::Image, config, rng);
    m.encoder = EncoderParams<T>::init(config, rng);
    if (!config.tied_encoders) m.image_encoder = EncoderParams<T>::init(config, rng);
    m.cross = CrossAttnParams<T>::init(config, rng);
    return m;
}

template <typename T>
Model<T> Model<T>::clone() const {
    Model out = init(config, 0);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto from = src[i].second.values();
        auto to = dst[i].second.values_mut();
        std::copy(from.begin(), from.end(), to.begin());
        dst[i].second.set_requires_grad(src[i].second.requires_grad());
    }
    return out;
}

template <typename T>
NamedTensors<T> Model<T>::parameters() const {
    NamedTensors<T> out;
    sketch_tokenizer.collect(out, "sketch_tokenizer.");
    image_tokenizer.collect(out, "image_tokenizer.");
    encoder.collect(out, "encoder.");
    if (image_encoder) image_encoder->collect(out, "image_encoder.");
    cross.collect(out, "cross.");
    return out;
}

template <typename T>
const TokenizerParams<T>& Model<T>::tokenizer(Modality m) const {
    return m == Modality::Sketch ? sketch_tokenizer : image_tokenizer;
}

template <typename T>
const EncoderParams<T>& Model<T>::encoder_for(Modality m) const {
    return (m == Modality::Image && image_encoder) ? *image_encoder : encoder;
}

template <typename T>
Tensor<T> Model<T>::preprocess(const Image& image, Modality m) const {
    return m == Modality::Sketch ? preprocess_sketch<T>(image, config.image_size)
                                 : preprocess_image<T>(image, config.image_size, config.norm_mean, config.norm_std);
}

template <typename T>
TokenEmbedding<T> Model<T>::embed(const Tensor<T>& input, Modality m) const {
    return encode(tokenize(input, tokenizer(m)), encoder_for(m));
}

template <typename T>
TokenEmbedding<T> Model<T>::embed(const Image& image, Modality m) const {
    return embed(preprocess(image, m), m);
}

template <typename T>
std::vector<float> retrieval_vector(const TokenEmbedding<T>& e) {
    const auto v = e.tokens.values();
    return std::vector<float>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(e.d()));
}

template struct Model<float>;
template struct Model<double>;
template std::vector<float> retrieval_vector(const TokenEmbedding<float>&);
template std::vector<float> retrieval_vector(const TokenEmbedding<double>&);

Fingerprint sha256(std::span<const std::uint8_t> bytes) {
    Fingerprint out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    return out;
}

std::string to_hex(const Fingerprint& fp) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : fp) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const nlohmann::json& metadata) {
    const auto params = model.parameters();
    nlohmann::json manifest;
    manifest["config"] = model.config;
    manifest["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
    auto& list = manifest["params"] = nlohmann::json::array();
    for (const auto& [name, t] : params) list.push_back({{"name", name}, {"shape", t.shape()}});
    const std::string text = manifest.dump();

    ByteWriter w;
    w.text(kCheckpointMagic);
    w.uint<std::uint32_t>(kCheckpointVersion);
    w.uint<std::uint64_t>(text.size());
    w.text(text);
    for (const auto& [name, t] : params)
        for (float v : t.values()) w.f32(v);
    return std::move(w.buffer());
}

Fingerprint model_fingerprint(const Model<float>& model) { return sha256(serialize_checkpoint(model)); }

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.text(kCheckpointMagic.size(), "checkpoint magic") != kCheckpointMagic) {
        throw FormatError("not a checkpoint (bad magic)", 0);
    }
    const auto version_at = r.offset();
    if (r.uint<std::uint32_t>("checkpoint version") != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version", version_at);
    }
    const auto manifest_len = r.uint<std::uint64_t>("manifest length");
    const auto manifest_at = r.offset();
    if (manifest_len > r.remaining()) throw FormatError("truncated manifest", manifest_at);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(r.text(manifest_len, "manifest"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid checkpoint manifest: ") + e.what(), manifest_at);
    }

    Checkpoint ck;
    try {
        ck.model = Model<float>::init(manifest.at("config").get<ModelConfig>(), 0);
        ck.metadata = manifest.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid checkpoint manifest: ") + e.what(), manifest_at);
    }
    auto params = ck.model.parameters();
    const auto& list = manifest.at("params");
    if (list.size() != params.size()) {
        throw FormatError("checkpoint lists " + std::to_string(list.size()) + " parameters, architecture has " +
                              std::to_string(params.size()),
                          manifest_at);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = params[i];
        if (list[i].at("name").get<std::string>() != name || list[i].at("shape").get<Shape>() != t.shape()) {
            throw FormatError("parameter " + std::to_string(i) + " does not match architecture (expected " + name +
                                  " " + shape_string(t.shape()) + ")",
                              manifest_at);
        }
        for (float& v : t.values_mut()) v = r.f32(name.c_str());
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after parameters", r.offset());
    ck.fingerprint = model_fingerprint(ck.model);
    return ck;
}

Fingerprint save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                            const nlohmann::json& metadata) {
    const auto bytes = serialize_checkpoint(model, metadata);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing checkpoint " + path.string());
    return model_fingerprint(model);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace mlgt
