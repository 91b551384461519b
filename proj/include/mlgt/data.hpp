#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlgt/folds.hpp"
#include "mlgt/image.hpp"
#include "mlgt/tokenizer.hpp"

namespace mlgt {

struct DatasetItem {
    /// Relative path inside the dataset root, e.g. "images/<class>/<file>.png".
    std::string id;
    Modality modality = Modality::Image;
    std::string label;
    /// Backing file; empty for purely in-memory items.
    std::filesystem::path path;
    /// Decoded raster when the item lives in memory.
    std::shared_ptr<const Image> raster;
};

struct Dataset {
    std::vector<DatasetItem> items;
    /// Sorted class names; every class has at least one sketch and one image.
    std::vector<std::string> classes;
    std::vector<std::string> warnings;

    /// Decoded raster of an item, reading from disk when it is not in memory.
    Image load(const DatasetItem& item) const;

    std::vector<std::size_t> indices(Modality m) const;
    Dataset subset(const std::function<bool(const DatasetItem&)>& keep) const;
    const DatasetItem* find(const std::string& id) const;

    /// JSON array of {id, path, modality, label}.
    nlohmann::json manifest() const;

    /// Throws ContractError if ids repeat or a label is missing from the catalog.
    void validate() const;
};

/// Reads root/{sketches,images}/<class>/<file>.{png,jpg,jpeg}. Classes
/// present in only one modality are excluded with a warning.
Dataset load_dataset(const std::filesystem::path& root);

/// Writes every item to root/<id> as PNG plus root/manifest.json.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// Names of the procedural shape classes, in generation order.
const std::vector<std::string>& synthetic_vocabulary();

struct SyntheticOptions {
    std::size_t classes = 8;
    std::size_t sketches_per_class = 12;
    std::size_t images_per_class = 24;
    std::size_t size = 64;
    std::uint64_t seed = 0;
};

/// Filled, textured shape renderings (images) and jittered black-on-white
/// outline drawings (sketches) of the same shape classes.
Dataset generate_synthetic(const SyntheticOptions& options);

struct DataSplit {
    Dataset train;        // seen-class sketches + half of each seen class's images
    Dataset test_seen;    // the other half of the seen-class images
    Dataset test_unseen;  // every item of an unseen class
};

/// Partitions the dataset for one fold. Seen-class images are shuffled per
/// class under `seed` and split 50/50 (train gets the odd one). Catalog
/// classes the fold does not mention are treated as unseen.
DataSplit split_seen(const Dataset& dataset, const FoldSpec& fold, std::uint64_t seed);

}  // namespace mlgt
