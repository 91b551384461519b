#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlgt/data.hpp"
#include "mlgt/model.hpp"

namespace mlgt {

struct IndexEntry {
    std::string id;
    std::string label;
    std::vector<float> vector;  // pre-mode image [RT]

    bool operator==(const IndexEntry&) const = default;
};

struct RetrievalIndex {
    std::uint32_t d = 0;
    std::vector<IndexEntry> entries;
    Fingerprint fingerprint{};

    std::size_t size() const { return entries.size(); }
    /// Throws ContractError on width mismatch or duplicate ids.
    void validate() const;
    bool operator==(const RetrievalIndex&) const = default;
};

struct RankedEntry {
    std::string id;
    std::string label;
    double distance = 0.0;
    DistanceMode mode = DistanceMode::Pre;
};

struct RankedResult {
    std::string query_id;
    std::vector<RankedEntry> entries;
    /// Candidates dropped by rerank.
    std::vector<std::string> warnings;
};

/// Produces pre-mode [RT] vectors for dataset items. Evaluation and index
/// building go through this so a stub can stand in for a trained model.
class Embedder {
   public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<float> embed(const Dataset& dataset, const DatasetItem& item) = 0;
    virtual bool supports_rerank() const { return false; }
    /// Post-mode rescoring of the first M candidates for `query`.
    virtual RankedResult rerank(const Dataset& dataset, const DatasetItem& query, const RankedResult& candidates,
                                std::size_t m);
};

/// Embeds through a model, caching the full encoded sequence per item id
/// (so rerank reuses what embed computed). Not thread-safe.
class ModelEmbedder : public Embedder {
   public:
    explicit ModelEmbedder(const Model<float>& model) : model_(&model) {}
    std::size_t dim() const override { return model_->config.dim; }
    std::vector<float> embed(const Dataset& dataset, const DatasetItem& item) override;
    bool supports_rerank() const override { return true; }
    RankedResult rerank(const Dataset& dataset, const DatasetItem& query, const RankedResult& candidates,
                        std::size_t m) override;

    const TokenEmbedding<float>& encoded(const Dataset& dataset, const DatasetItem& item);

   private:
    const Model<float>* model_;
    std::map<std::string, TokenEmbedding<float>> cache_;
};

struct BuildReport {
    std::vector<std::string> warnings;  // one per skipped image
};

/// One entry per image item of `images`; items that fail to load are skipped
/// and reported. Entries are sorted by id.
RetrievalIndex build_index(Embedder& embedder, const Dataset& images, const Fingerprint& fingerprint,
                           BuildReport* report = nullptr);
RetrievalIndex build_index(const Model<float>& model, const Dataset& images, BuildReport* report = nullptr);

/// Exact top-k by Euclidean distance (accumulated in double), ties by
/// ascending id. k larger than the index returns everything.
RankedResult knn(const RetrievalIndex& index, std::span<const float> query, std::size_t k);

/// Returns the encoded image sequence for an id, or nullopt when the image
/// is unavailable.
using EncodedLookup = std::function<std::optional<TokenEmbedding<float>>(const std::string& id)>;

/// Rescores the first M candidates in post mode and re-sorts them; the rest
/// keep their pre-mode order after the head. Unavailable candidates in the
/// head are dropped with a warning.
RankedResult rerank(const CrossAttnParams<float>& cross, const TokenEmbedding<float>& sketch,
                    const RankedResult& candidates, std::size_t m, const EncodedLookup& lookup);

struct MetricReport {
    double value = 0.0;
    std::size_t queries = 0;              // queries that counted
    std::vector<std::string> excluded;    // query ids without relevant items
};

/// Mean average precision; relevance is label equality with the query's
/// label. Queries with no relevant item are excluded and reported.
MetricReport map_metric(std::span<const RankedResult> results, std::span<const std::string> query_labels);

/// Mean precision@K; the denominator is min(K, results available).
double topk_accuracy(std::span<const RankedResult> results, std::span<const std::string> query_labels,
                     std::size_t k);

/// Mean mAP over `permutations` uniform shuffles of each ranking.
double random_baseline_map(std::span<const RankedResult> results, std::span<const std::string> query_labels,
                           std::size_t permutations, std::uint64_t seed);

/// "MLGT", u32 version, u32 d, u64 count, entries {u16 id_len, id, u16
/// label_len, label, d x f32 LE}, 32-byte fingerprint.
std::vector<std::uint8_t> serialize_index(const RetrievalIndex& index);
/// Throws FormatError (with offset) on bad magic, version, truncation or
/// trailing bytes.
RetrievalIndex deserialize_index(std::span<const std::uint8_t> bytes);
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

/// Warning text when the index was not built by the model with `expected`.
std::optional<std::string> fingerprint_warning(const RetrievalIndex& index, const Fingerprint& expected);

}  // namespace mlgt
