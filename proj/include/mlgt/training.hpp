#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlgt/config.hpp"
#include "mlgt/data.hpp"
#include "mlgt/folds.hpp"
#include "mlgt/model.hpp"

namespace mlgt {

/// Which [RT] pairs the triplet loss is computed on; Both sums the two losses.
enum class LossMode { Pre, Post, Both };

struct TrainConfig {
    double margin = 0.3;
    double learning_rate = 2e-5;
    double weight_decay = 0.01;
    std::size_t batch = 16;
    std::size_t epochs = 1;
    /// When nonzero, overrides epochs.
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::string fold = "S1";
    LossMode loss_mode = LossMode::Both;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Triplet {
    std::size_t sketch = 0;  // indices into the training Dataset's items
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::string label;           // sketch and positive
    std::string negative_label;  // always differs from label
};

struct TripletBatch {
    std::vector<Triplet> triplets;
};

/// Per-triplet hinge max(d+ - d- + m, 0).
template <typename T>
Tensor<T> triplet_hinge(const Tensor<T>& d_pos, const Tensor<T>& d_neg, T margin);

/// (1/T) * sum of hinges over (d+, d-) pairs. Throws ContractError when empty.
template <typename T>
Tensor<T> triplet_loss_from_distances(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& distances, T margin);

/// Encoded sketch / positive / negative embeddings of one triplet.
template <typename T>
struct EncodedTriplet {
    TokenEmbedding<T> sketch, positive, negative;
};

/// Triplet loss over encoded triplets in the chosen mode.
template <typename T>
Tensor<T> triplet_loss(const std::vector<EncodedTriplet<T>>& triplets, const CrossAttnParams<T>& cross, T margin,
                       LossMode mode);

/// Full forward for a batch: tokenize + encode every member from the given
/// preprocessed inputs, then triplet_loss.
template <typename T>
Tensor<T> triplet_loss(const TripletBatch& batch, const Model<T>& model, const std::vector<Tensor<T>>& inputs,
                       T margin, LossMode mode);

/// Uniform triplet sampling over a training dataset: a uniform sketch, a
/// uniform image of its class, a uniform image of any other class.
class TripletSampler {
   public:
    /// Throws SamplingError unless at least two classes have both a sketch
    /// and an image.
    explicit TripletSampler(const Dataset& train);

    TripletBatch sample(std::size_t count, std::mt19937_64& rng) const;
    std::size_t sketch_count() const { return sketches_.size(); }

   private:
    const Dataset* data_;
    std::vector<std::size_t> sketches_;
    std::vector<std::vector<std::size_t>> images_by_class_;
    std::vector<std::size_t> class_of_sketch_;
    std::vector<std::size_t> image_pool_;
    std::vector<std::size_t> class_of_image_;
};

TripletBatch sample_triplets(const Dataset& train, std::size_t count, std::mt19937_64& rng);

struct AdamWOptions {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamWState {
    std::vector<T> m, v;
    std::size_t step = 0;
};

/// One AdamW update with decoupled decay:
/// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, AdamWState<T>& state, const AdamWOptions& opt);

template <typename T>
class AdamW {
   public:
    AdamW(NamedTensors<T> params, AdamWOptions options);

    /// Updates every parameter from its accumulated gradient (missing
    /// gradients count as zero), then clears the gradients.
    void step();
    void zero_grad();
    const AdamWOptions& options() const { return options_; }

   private:
    NamedTensors<T> params_;
    std::vector<AdamWState<T>> states_;
    AdamWOptions options_;
};

struct TrainResult {
    Model<float> model;
    std::vector<double> losses;  // one entry per step
    /// Every class label that entered a batch (as sketch, positive or negative).
    std::set<std::string> batch_labels;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Triplet training on the fold's seen-train data only (split_seen with
/// cfg.seed). Single-threaded and deterministic under the seed.
TrainResult train(const Dataset& dataset, const FoldSpec& fold, const TrainConfig& cfg, const ModelConfig& model_config,
                  const StepCallback& on_step = {});

/// Same loop on an already split training set, starting from `initial`.
TrainResult train_on(const Dataset& train_set, Model<float> initial, const TrainConfig& cfg,
                     const StepCallback& on_step = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses);

}  // namespace mlgt
