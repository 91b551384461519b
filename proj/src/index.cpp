#include "mlgt/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "mlgt/byte_io.hpp"
#include "mlgt/errors.hpp"

namespace mlgt {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'G', 'T'};
constexpr std::uint32_t kVersion = 1;

bool ranked_before(const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
}

}  // namespace

void RetrievalIndex::validate() const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (e.vector.size() != d) {
            throw ContractError("index entry " + e.id + " has width " + std::to_string(e.vector.size()) +
                                ", index width is " + std::to_string(d));
        }
        if (!ids.insert(e.id).second) throw ContractError("duplicate index id " + e.id);
    }
}

RankedResult Embedder::rerank(const Dataset&, const DatasetItem&, const RankedResult& candidates, std::size_t) {
    return candidates;
}

const TokenEmbedding<float>& ModelEmbedder::encoded(const Dataset& dataset, const DatasetItem& item) {
    auto it = cache_.find(item.id);
    if (it != cache_.end()) return it->second;
    NoGradGuard no_grad;
    auto e = model_->embed(dataset.load(item), item.modality);
    return cache_.emplace(item.id, std::move(e)).first->second;
}

std::vector<float> ModelEmbedder::embed(const Dataset& dataset, const DatasetItem& item) {
    return retrieval_vector(encoded(dataset, item));
}

RankedResult ModelEmbedder::rerank(const Dataset& dataset, const DatasetItem& query, const RankedResult& candidates,
                                   std::size_t m) {
    const auto& sketch = encoded(dataset, query);
    EncodedLookup lookup = [&](const std::string& id) -> std::optional<TokenEmbedding<float>> {
        const auto* item = dataset.find(id);
        if (!item) return std::nullopt;
        try {
            return encoded(dataset, *item);
        } catch (const InputError&) {
            return std::nullopt;
        }
    };
    return mlgt::rerank(model_->cross, sketch, candidates, m, lookup);
}

RetrievalIndex build_index(Embedder& embedder, const Dataset& images, const Fingerprint& fingerprint,
                           BuildReport* report) {
    RetrievalIndex index;
    index.d = static_cast<std::uint32_t>(embedder.dim());
    index.fingerprint = fingerprint;
    for (const auto& item : images.items) {
        if (item.modality != Modality::Image) continue;
        try {
            index.entries.push_back({item.id, item.label, embedder.embed(images, item)});
        } catch (const InputError& e) {
            if (report) report->warnings.push_back("skipped " + item.id + ": " + e.what());
        }
    }
    std::sort(index.entries.begin(), index.entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    index.validate();
    return index;
}

RetrievalIndex build_index(const Model<float>& model, const Dataset& images, BuildReport* report) {
    ModelEmbedder embedder(model);
    return build_index(embedder, images, model_fingerprint(model), report);
}

RankedResult knn(const RetrievalIndex& index, std::span<const float> query, std::size_t k) {
    if (query.size() != index.d) {
        throw DimensionError("knn: query width " + std::to_string(query.size()) + ", index width " +
                             std::to_string(index.d));
    }
    if (k == 0) throw ContractError("knn: k must be at least 1");
    RankedResult out;
    out.entries.reserve(index.entries.size());
    for (const auto& e : index.entries) {
        double acc = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = double(query[j]) - double(e.vector[j]);
            acc += diff * diff;
        }
        out.entries.push_back({e.id, e.label, std::sqrt(acc), DistanceMode::Pre});
    }
    const std::size_t keep = std::min(k, out.entries.size());
    std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(keep), out.entries.end(),
                      ranked_before);
    out.entries.resize(keep);
    return out;
}

RankedResult rerank(const CrossAttnParams<float>& cross, const TokenEmbedding<float>& sketch,
                    const RankedResult& candidates, std::size_t m, const EncodedLookup& lookup) {
    NoGradGuard no_grad;
    RankedResult out;
    out.query_id = candidates.query_id;
    out.warnings = candidates.warnings;
    const std::size_t head = std::min(m, candidates.entries.size());
    for (std::size_t i = 0; i < head; ++i) {
        const auto& c = candidates.entries[i];
        const auto image = lookup(c.id);
        if (!image) {
            out.warnings.push_back("rerank: image " + c.id + " unavailable; dropped");
            continue;
        }
        const auto score = pair_distance(sketch, *image, cross, DistanceMode::Post);
        out.entries.push_back({c.id, c.label, double(score.distance.item()), DistanceMode::Post});
    }
    std::sort(out.entries.begin(), out.entries.end(), ranked_before);
    out.entries.insert(out.entries.end(), candidates.entries.begin() + static_cast<std::ptrdiff_t>(head),
                       candidates.entries.end());
    return out;
}

namespace {

// AP of one ranking, or nullopt when nothing is relevant.
std::optional<double> average_precision(const std::vector<RankedEntry>& entries, const std::string& label) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < entries.size(); ++r) {
        if (entries[r].label != label) continue;
        ++hits;
        sum += double(hits) / double(r + 1);
    }
    if (hits == 0) return std::nullopt;
    return sum / double(hits);
}

void check_lengths(std::size_t results, std::size_t labels) {
    if (results != labels) {
        throw ContractError("metric: " + std::to_string(results) + " rankings but " + std::to_string(labels) +
                            " query labels");
    }
}

}  // namespace

MetricReport map_metric(std::span<const RankedResult> results, std::span<const std::string> query_labels) {
    check_lengths(results.size(), query_labels.size());
    MetricReport out;
    double sum = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto ap = average_precision(results[q].entries, query_labels[q]);
        if (!ap) {
            out.excluded.push_back(results[q].query_id);
            continue;
        }
        sum += *ap;
        ++out.queries;
    }
    out.value = out.queries ? sum / double(out.queries) : 0.0;
    return out;
}

double topk_accuracy(std::span<const RankedResult> results, std::span<const std::string> query_labels,
                     std::size_t k) {
    check_lengths(results.size(), query_labels.size());
    if (k == 0) throw ContractError("topk_accuracy: K must be at least 1");
    if (results.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto& entries = results[q].entries;
        const std::size_t n = std::min(k, entries.size());
        if (n == 0) continue;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < n; ++r) hits += entries[r].label == query_labels[q];
        sum += double(hits) / double(n);
    }
    return sum / double(results.size());
}

double random_baseline_map(std::span<const RankedResult> results, std::span<const std::string> query_labels,
                           std::size_t permutations, std::uint64_t seed) {
    if (permutations == 0) throw ContractError("random baseline needs at least one permutation");
    std::mt19937_64 rng(seed);
    std::vector<RankedResult> shuffled(results.begin(), results.end());
    double total = 0.0;
    for (std::size_t p = 0; p < permutations; ++p) {
        for (auto& r : shuffled) std::shuffle(r.entries.begin(), r.entries.end(), rng);
        total += map_metric(shuffled, query_labels).value;
    }
    return total / double(permutations);
}

std::vector<std::uint8_t> serialize_index(const RetrievalIndex& index) {
    index.validate();
    ByteWriter w;
    w.text(std::string_view(kMagic, 4));
    w.uint<std::uint32_t>(kVersion);
    w.uint<std::uint32_t>(index.d);
    w.uint<std::uint64_t>(index.entries.size());
    for (const auto& e : index.entries) {
        for (const auto* s : {&e.id, &e.label}) {
            if (s->size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("index string too long");
            w.uint<std::uint16_t>(static_cast<std::uint16_t>(s->size()));
            w.text(*s);
        }
        for (float v : e.vector) w.f32(v);
    }
    w.bytes(index.fingerprint);
    return std::move(w.buffer());
}

RetrievalIndex deserialize_index(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.text(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("bad index magic", 0);
    const std::size_t version_at = r.offset();
    if (const auto v = r.uint<std::uint32_t>("version"); v != kVersion) {
        throw FormatError("unsupported index version " + std::to_string(v), version_at);
    }
    RetrievalIndex index;
    index.d = r.uint<std::uint32_t>("width");
    const std::size_t count_at = r.offset();
    const auto count = r.uint<std::uint64_t>("entry count");
    // Each entry needs at least 4 + 4*d bytes; reject absurd counts before allocating.
    if (count > r.remaining() / (4 + 4 * std::uint64_t(index.d))) {
        throw FormatError("entry count " + std::to_string(count) + " exceeds file size", count_at);
    }
    index.entries.reserve(count);
    std::set<std::string> ids;
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        const std::size_t entry_at = r.offset();
        e.id = r.text(r.uint<std::uint16_t>("id length"), "id");
        e.label = r.text(r.uint<std::uint16_t>("label length"), "label");
        e.vector.resize(index.d);
        for (auto& v : e.vector) v = r.f32("vector");
        if (!ids.insert(e.id).second) throw FormatError("duplicate id " + e.id, entry_at);
        index.entries.push_back(std::move(e));
    }
    const auto fp = r.bytes(index.fingerprint.size(), "fingerprint");
    std::copy(fp.begin(), fp.end(), index.fingerprint.begin());
    if (r.remaining() != 0) throw FormatError("trailing bytes after index", r.offset());
    return index;
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
    const auto bytes = serialize_index(index);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

RetrievalIndex load_index(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return deserialize_index(bytes);
}

std::optional<std::string> fingerprint_warning(const RetrievalIndex& index, const Fingerprint& expected) {
    if (index.fingerprint == expected) return std::nullopt;
    return "index fingerprint " + to_hex(index.fingerprint) + " does not match model " + to_hex(expected);
}

}  // namespace mlgt
