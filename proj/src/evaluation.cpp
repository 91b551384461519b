#include "mlgt/evaluation.hpp"

#include <algorithm>

#include "mlgt/errors.hpp"

namespace mlgt {

nlohmann::json EvalReport::to_json() const {
    auto block = [](const SplitMetrics& m) {
        return nlohmann::json{{"mAP", m.map}, {"top10", m.top10}, {"top50", m.top50}, {"top100", m.top100}};
    };
    return {{"fold", fold}, {"seen", block(seen)}, {"unseen", block(unseen)}};
}

namespace {

SplitMetrics score(const std::vector<RankedResult>& results, const std::vector<std::string>& labels) {
    SplitMetrics m;
    const auto map = map_metric(results, labels);
    m.map = map.value;
    m.queries = map.queries;
    m.excluded = map.excluded;
    m.top10 = topk_accuracy(results, labels, 10);
    m.top50 = topk_accuracy(results, labels, 50);
    m.top100 = topk_accuracy(results, labels, 100);
    return m;
}

}  // namespace

EvalReport evaluate_fold(const Dataset& dataset, const FoldSpec& fold, Embedder& embedder,
                         const EvalOptions& options) {
    const auto split = split_seen(dataset, fold, options.split_seed);
    Dataset gallery_set = split.test_seen;
    for (const auto& item : split.test_unseen.items)
        if (item.modality == Modality::Image) gallery_set.items.push_back(item);
    std::sort(gallery_set.items.begin(), gallery_set.items.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    if (gallery_set.items.empty()) throw ContractError("fold " + fold.id + " leaves an empty gallery");

    EvalReport report;
    report.fold = fold.id;
    report.gallery = build_index(embedder, gallery_set, options.fingerprint);
    const std::size_t all = report.gallery.size();

    for (const auto& item : dataset.items) {
        if (item.modality != Modality::Sketch) continue;
        auto ranked = knn(report.gallery, embedder.embed(dataset, item), all);
        ranked.query_id = item.id;
        if (options.rerank_m > 0 && embedder.supports_rerank()) {
            ranked = embedder.rerank(dataset, item, ranked, options.rerank_m);
        }
        const bool seen = std::find(fold.seen.begin(), fold.seen.end(), item.label) != fold.seen.end();
        if (!seen) {
            report.unseen_results.push_back(std::move(ranked));
            report.unseen_labels.push_back(item.label);
        } else {
            report.seen_results.push_back(std::move(ranked));
            report.seen_labels.push_back(item.label);
        }
    }
    report.seen = score(report.seen_results, report.seen_labels);
    report.unseen = score(report.unseen_results, report.unseen_labels);
    return report;
}

std::vector<float> LabelOracleEmbedder::embed(const Dataset&, const DatasetItem& item) {
    std::vector<float> v(classes_.size(), 0.0f);
    const auto it = std::find(classes_.begin(), classes_.end(), item.label);
    if (it == classes_.end()) throw ContractError("oracle: unknown label " + item.label);
    v[static_cast<std::size_t>(it - classes_.begin())] = 1.0f;
    return v;
}

}  // namespace mlgt
