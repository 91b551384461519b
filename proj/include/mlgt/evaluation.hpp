#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlgt/data.hpp"
#include "mlgt/folds.hpp"
#include "mlgt/index.hpp"

namespace mlgt {

struct SplitMetrics {
    double map = 0.0;
    double top10 = 0.0;
    double top50 = 0.0;
    double top100 = 0.0;
    std::size_t queries = 0;
    std::vector<std::string> excluded;
};

struct EvalOptions {
    std::uint64_t split_seed = 0;
    /// Post-mode rerank depth; 0 disables.
    std::size_t rerank_m = 0;
    Fingerprint fingerprint{};
};

struct EvalReport {
    std::string fold;
    SplitMetrics seen, unseen;
    // Rankings behind the numbers, for inspection; not part of the JSON.
    RetrievalIndex gallery;
    std::vector<RankedResult> seen_results, unseen_results;
    std::vector<std::string> seen_labels, unseen_labels;

    /// Exactly {fold, seen:{mAP,top10,top50,top100}, unseen:{...}}.
    nlohmann::json to_json() const;
};

/// Gallery: every held-out image of the fold (seen-class test half plus all
/// unseen-class images). Seen queries are the seen-class sketches, unseen
/// queries the unseen-class sketches; each ranks the whole gallery.
EvalReport evaluate_fold(const Dataset& dataset, const FoldSpec& fold, Embedder& embedder, const EvalOptions& options);

/// Stub that embeds each item as the one-hot vector of its label; a perfect
/// ranker for testing the evaluation path.
class LabelOracleEmbedder : public Embedder {
   public:
    explicit LabelOracleEmbedder(std::vector<std::string> classes) : classes_(std::move(classes)) {}
    std::size_t dim() const override { return classes_.size(); }
    std::vector<float> embed(const Dataset& dataset, const DatasetItem& item) override;

   private:
    std::vector<std::string> classes_;
};

}  // namespace mlgt
