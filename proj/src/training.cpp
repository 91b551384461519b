#include "mlgt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include "mlgt/errors.hpp"
#include "mlgt/ops.hpp"

namespace mlgt {

void TrainConfig::validate() const {
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (steps == 0 && epochs == 0) throw ConfigError("either steps or epochs must be positive");
}

namespace {

const char* loss_mode_name(LossMode m) {
    switch (m) {
        case LossMode::Pre:
            return "pre";
        case LossMode::Post:
            return "post";
        case LossMode::Both:
            return "both";
    }
    return "both";
}

LossMode parse_loss_mode(const std::string& s) {
    if (s == "pre") return LossMode::Pre;
    if (s == "post") return LossMode::Post;
    if (s == "both") return LossMode::Both;
    throw ConfigError("unknown loss mode '" + s + "' (expected pre, post or both)");
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"margin", c.margin},         {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                       {"batch", c.batch},           {"epochs", c.epochs},               {"steps", c.steps},
                       {"seed", c.seed},             {"fold", c.fold},                   {"loss_mode", loss_mode_name(c.loss_mode)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("margin", c.margin);
    get("learning_rate", c.learning_rate);
    get("weight_decay", c.weight_decay);
    get("batch", c.batch);
    get("epochs", c.epochs);
    get("steps", c.steps);
    get("seed", c.seed);
    get("fold", c.fold);
    if (j.contains("loss_mode")) c.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
}

template <typename T>
Tensor<T> triplet_hinge(const Tensor<T>& d_pos, const Tensor<T>& d_neg, T margin) {
    return relu(add_scalar(sub(d_pos, d_neg), margin));
}

template <typename T>
Tensor<T> triplet_loss_from_distances(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& distances, T margin) {
    if (distances.empty()) throw ContractError("triplet loss over an empty batch");
    Tensor<T> total;
    for (const auto& [dp, dn] : distances) {
        auto h = triplet_hinge(dp, dn, margin);
        total = total.defined() ? add(total, h) : h;
    }
    return scale(total, T(1) / T(distances.size()));
}

template <typename T>
Tensor<T> triplet_loss(const std::vector<EncodedTriplet<T>>& triplets, const CrossAttnParams<T>& cross, T margin,
                       LossMode mode) {
    if (triplets.empty()) throw ContractError("triplet loss over an empty batch");
    Tensor<T> loss;
    if (mode != LossMode::Post) {
        std::vector<std::pair<Tensor<T>, Tensor<T>>> d;
        for (const auto& t : triplets) d.emplace_back(rt_distance(t.sketch, t.positive), rt_distance(t.sketch, t.negative));
        loss = triplet_loss_from_distances(d, margin);
    }
    if (mode != LossMode::Pre) {
        std::vector<std::pair<Tensor<T>, Tensor<T>>> d;
        for (const auto& t : triplets) {
            d.emplace_back(pair_distance(t.sketch, t.positive, cross, DistanceMode::Post).distance,
                           pair_distance(t.sketch, t.negative, cross, DistanceMode::Post).distance);
        }
        auto post = triplet_loss_from_distances(d, margin);
        loss = loss.defined() ? add(loss, post) : post;
    }
    return loss;
}

template <typename T>
Tensor<T> triplet_loss(const TripletBatch& batch, const Model<T>& model, const std::vector<Tensor<T>>& inputs,
                       T margin, LossMode mode) {
    std::vector<EncodedTriplet<T>> encoded;
    encoded.reserve(batch.triplets.size());
    for (const auto& t : batch.triplets) {
        encoded.push_back({model.embed(inputs.at(t.sketch), Modality::Sketch),
                           model.embed(inputs.at(t.positive), Modality::Image),
                           model.embed(inputs.at(t.negative), Modality::Image)});
    }
    return triplet_loss(encoded, model.cross, margin, mode);
}

TripletSampler::TripletSampler(const Dataset& train) : data_(&train) {
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < train.items.size(); ++i) {
        const auto& item = train.items[i];
        if (item.modality != Modality::Image) continue;
        auto [it, inserted] = class_index.emplace(item.label, images_by_class_.size());
        if (inserted) images_by_class_.emplace_back();
        images_by_class_[it->second].push_back(i);
    }
    std::set<std::size_t> sketch_classes;
    for (std::size_t i = 0; i < train.items.size(); ++i) {
        const auto& item = train.items[i];
        if (item.modality != Modality::Sketch) continue;
        auto it = class_index.find(item.label);
        if (it == class_index.end()) continue;  // no positive available
        sketches_.push_back(i);
        class_of_sketch_.push_back(it->second);
        sketch_classes.insert(it->second);
    }
    for (std::size_t c = 0; c < images_by_class_.size(); ++c) {
        for (auto idx : images_by_class_[c]) {
            image_pool_.push_back(idx);
            class_of_image_.push_back(c);
        }
    }
    if (sketches_.empty() || images_by_class_.size() < 2) {
        throw SamplingError("triplet sampling needs sketches and images from at least two classes");
    }
}

TripletBatch TripletSampler::sample(std::size_t count, std::mt19937_64& rng) const {
    TripletBatch batch;
    std::uniform_int_distribution<std::size_t> pick_sketch(0, sketches_.size() - 1);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t s = pick_sketch(rng);
        const std::size_t cls = class_of_sketch_[s];
        const auto& positives = images_by_class_[cls];
        std::uniform_int_distribution<std::size_t> pick_pos(0, positives.size() - 1);
        const std::size_t pos = positives[pick_pos(rng)];
        // uniform over images of every other class
        const std::size_t others = image_pool_.size() - positives.size();
        std::uniform_int_distribution<std::size_t> pick_neg(0, others - 1);
        std::size_t r = pick_neg(rng), neg = 0;
        for (std::size_t i = 0; i < image_pool_.size(); ++i) {
            if (class_of_image_[i] == cls) continue;
            if (r-- == 0) {
                neg = image_pool_[i];
                break;
            }
        }
        batch.triplets.push_back({sketches_[s], pos, neg, data_->items[sketches_[s]].label, data_->items[neg].label});
    }
    return batch;
}

TripletBatch sample_triplets(const Dataset& train, std::size_t count, std::mt19937_64& rng) {
    return TripletSampler(train).sample(count, rng);
}

template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, AdamWState<T>& state, const AdamWOptions& opt) {
    if (param.size() != grad.size()) {
        throw ContractError("adamw_step: " + std::to_string(param.size()) + " parameters vs " +
                            std::to_string(grad.size()) + " gradients");
    }
    if (state.m.empty()) {
        state.m.assign(param.size(), T(0));
        state.v.assign(param.size(), T(0));
    }
    if (state.m.size() != param.size()) throw ContractError("adamw_step: optimizer state does not match parameter");
    ++state.step;
    const T b1 = T(opt.beta1), b2 = T(opt.beta2);
    const T c1 = T(1) - std::pow(b1, T(state.step));
    const T c2 = T(1) - std::pow(b2, T(state.step));
    const T lr = T(opt.learning_rate), wd = T(opt.weight_decay), eps = T(opt.eps);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
        const T m_hat = state.m[i] / c1;
        const T v_hat = state.v[i] / c2;
        param[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * param[i]);
    }
}

template <typename T>
AdamW<T>::AdamW(NamedTensors<T> params, AdamWOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {}

template <typename T>
void AdamW<T>::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_[i].second;
        std::vector<T> zeros;
        std::span<const T> g = t.grad();
        if (!t.has_grad()) {
            zeros.assign(t.numel(), T(0));
            g = zeros;
        }
        adamw_step(t.values_mut(), g, states_[i], options_);
        t.zero_grad();
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

TrainResult train_on(const Dataset& train_set, Model<float> initial, const TrainConfig& cfg,
                     const StepCallback& on_step) {
    cfg.validate();
    TrainResult result;
    result.model = initial.clone();
    Model<float>& model = result.model;
    const TripletSampler sampler(train_set);

    std::vector<Tensor<float>> inputs(train_set.items.size());
    for (std::size_t i = 0; i < train_set.items.size(); ++i) {
        const auto& item = train_set.items[i];
        inputs[i] = model.preprocess(train_set.load(item), item.modality);
    }

    const std::size_t steps =
        cfg.steps ? cfg.steps : cfg.epochs * ((sampler.sketch_count() + cfg.batch - 1) / cfg.batch);
    std::mt19937_64 rng(cfg.seed);
    AdamW<float> optimizer(model.parameters(), {cfg.learning_rate, cfg.weight_decay});
    for (auto& [name, t] : model.parameters()) t.set_requires_grad(true);

    result.losses.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto batch = sampler.sample(cfg.batch, rng);
        for (const auto& t : batch.triplets) {
            result.batch_labels.insert(t.label);
            result.batch_labels.insert(t.negative_label);
        }
        const auto loss = triplet_loss(batch, model, inputs, float(cfg.margin), cfg.loss_mode);
        backward(loss);
        optimizer.step();
        result.losses.push_back(loss.item());
        if (on_step) on_step(step, loss.item());
    }
    for (auto& [name, t] : model.parameters()) t.set_requires_grad(false);
    return result;
}

TrainResult train(const Dataset& dataset, const FoldSpec& fold, const TrainConfig& cfg, const ModelConfig& model_config,
                  const StepCallback& on_step) {
    const auto split = split_seen(dataset, fold, cfg.seed);
    return train_on(split.train, Model<float>::init(model_config, cfg.seed), cfg, on_step);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "step,loss\n" << std::setprecision(9);
    for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
}

#define MLGT_INSTANTIATE_TRAINING(T)                                                                         \
    template Tensor<T> triplet_hinge(const Tensor<T>&, const Tensor<T>&, T);                                 \
    template Tensor<T> triplet_loss_from_distances(const std::vector<std::pair<Tensor<T>, Tensor<T>>>&, T);   \
    template Tensor<T> triplet_loss(const std::vector<EncodedTriplet<T>>&, const CrossAttnParams<T>&, T,      \
                                    LossMode);                                                               \
    template Tensor<T> triplet_loss(const TripletBatch&, const Model<T>&, const std::vector<Tensor<T>>&, T,   \
                                    LossMode);                                                               \
    template void adamw_step(std::span<T>, std::span<const T>, AdamWState<T>&, const AdamWOptions&);         \
    template class AdamW<T>;

MLGT_INSTANTIATE_TRAINING(float)
MLGT_INSTANTIATE_TRAINING(double)

}  // namespace mlgt
