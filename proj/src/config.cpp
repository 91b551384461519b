#include "mlgt/config.hpp"

#include <algorithm>
#include <cmath>

#include "mlgt/errors.hpp"

namespace mlgt {

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.image_size = 64;
    c.dim = 32;
    c.depth = 2;
    c.heads = 4;
    c.cross_heads = 4;
    return c;
}

std::size_t ModelConfig::grid() const {
    std::size_t g = image_size;
    for (std::size_t i = 0; i < sketch_kernels.size(); ++i) g /= stride;
    return g;
}

std::size_t ModelConfig::tokens() const { return grid() * grid(); }

std::vector<std::size_t> ModelConfig::effective_filter_layers() const {
    if (filter_layers) return *filter_layers;
    if (depth == 0) return {};
    std::vector<std::size_t> out{(depth + 2) / 3, (2 * depth + 2) / 3};
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::size_t> ModelConfig::sketch_channels() const {
    std::vector<std::size_t> ch(sketch_kernels.size());
    std::size_t c = dim;
    for (std::size_t i = ch.size(); i-- > 0;) {
        ch[i] = c;
        c /= 2;
    }
    return ch;
}

void ModelConfig::validate() const {
    if (dim == 0 || heads == 0 || cross_heads == 0) throw ConfigError("dim and head counts must be positive");
    if (dim % heads != 0) throw ConfigError("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
    if (dim % cross_heads != 0) {
        throw ConfigError("dim " + std::to_string(dim) + " not divisible by cross_heads " + std::to_string(cross_heads));
    }
    if (sketch_kernels.empty() || stride == 0) throw ConfigError("sketch stack needs at least one layer and stride >= 1");
    std::size_t reduction = 1;
    for (std::size_t i = 0; i < sketch_kernels.size(); ++i) reduction *= stride;
    if (image_size % reduction != 0) {
        throw ConfigError("image size " + std::to_string(image_size) + " not divisible by sketch stack reduction " +
                          std::to_string(reduction));
    }
    if (dim % (std::size_t(1) << (sketch_kernels.size() - 1)) != 0) {
        throw ConfigError("dim must be divisible by 2^(layers-1) for the sketch channel progression");
    }
    if (patch != reduction) {
        throw ConfigError("image patch " + std::to_string(patch) + " must equal sketch reduction " +
                          std::to_string(reduction) + " so both branches emit the same token grid");
    }
    if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("keep_ratio must lie in (0, 1]");
    for (auto l : effective_filter_layers()) {
        if (l < 1 || l > depth) throw ConfigError("filter layer " + std::to_string(l) + " outside 1.." + std::to_string(depth));
    }
    for (float s : norm_std)
        if (!(s > 0.0f)) throw ConfigError("normalization std must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"image_size", c.image_size},
                       {"dim", c.dim},
                       {"depth", c.depth},
                       {"heads", c.heads},
                       {"cross_heads", c.cross_heads},
                       {"sketch_kernels", c.sketch_kernels},
                       {"stride", c.stride},
                       {"patch", c.patch},
                       {"keep_ratio", c.keep_ratio},
                       {"scale", c.scale == AttentionScale::PerHead ? "per_head" : "full_width"},
                       {"tied_encoders", c.tied_encoders},
                       {"cross_mlp", c.cross_mlp},
                       {"ln_eps", c.ln_eps},
                       {"init_std", c.init_std},
                       {"norm_mean", c.norm_mean},
                       {"norm_std", c.norm_std}};
    if (c.filter_layers) j["filter_layers"] = *c.filter_layers;
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c = j.value("preset", std::string("full")) == "toy" ? ModelConfig::toy() : ModelConfig::full();
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("image_size", c.image_size);
    get("dim", c.dim);
    get("depth", c.depth);
    get("heads", c.heads);
    get("cross_heads", c.cross_heads);
    get("sketch_kernels", c.sketch_kernels);
    get("stride", c.stride);
    get("patch", c.patch);
    get("keep_ratio", c.keep_ratio);
    get("tied_encoders", c.tied_encoders);
    get("cross_mlp", c.cross_mlp);
    get("ln_eps", c.ln_eps);
    get("init_std", c.init_std);
    get("norm_mean", c.norm_mean);
    get("norm_std", c.norm_std);
    if (j.contains("filter_layers")) c.filter_layers = j.at("filter_layers").get<std::vector<std::size_t>>();
    if (j.contains("scale")) {
        const auto s = j.at("scale").get<std::string>();
        if (s == "per_head") {
            c.scale = AttentionScale::PerHead;
        } else if (s == "full_width") {
            c.scale = AttentionScale::FullWidth;
        } else {
            throw ConfigError("unknown attention scale '" + s + "'");
        }
    }
}

}  // namespace mlgt
