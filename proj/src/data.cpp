#include "mlgt/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "mlgt/errors.hpp"

namespace fs = std::filesystem;

namespace mlgt {

Image Dataset::load(const DatasetItem& item) const {
    if (item.raster) return *item.raster;
    if (item.path.empty()) throw InputError("item " + item.id + " has neither a raster nor a file");
    return read_image(item.path);
}

std::vector<std::size_t> Dataset::indices(Modality m) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].modality == m) out.push_back(i);
    return out;
}

Dataset Dataset::subset(const std::function<bool(const DatasetItem&)>& keep) const {
    Dataset out;
    std::set<std::string> labels;
    for (const auto& item : items) {
        if (!keep(item)) continue;
        out.items.push_back(item);
        labels.insert(item.label);
    }
    for (const auto& c : classes)
        if (labels.count(c)) out.classes.push_back(c);
    return out;
}

const DatasetItem* Dataset::find(const std::string& id) const {
    for (const auto& item : items)
        if (item.id == id) return &item;
    return nullptr;
}

nlohmann::json Dataset::manifest() const {
    auto out = nlohmann::json::array();
    for (const auto& item : items) {
        out.push_back({{"id", item.id},
                       {"path", item.path.empty() ? item.id : item.path.generic_string()},
                       {"modality", modality_name(item.modality)},
                       {"label", item.label}});
    }
    return out;
}

void Dataset::validate() const {
    std::set<std::string> ids;
    const std::set<std::string> catalog(classes.begin(), classes.end());
    for (const auto& item : items) {
        if (!ids.insert(item.id).second) throw ContractError("duplicate dataset id " + item.id);
        if (!catalog.count(item.label)) throw ContractError("item " + item.id + " has unknown label " + item.label);
    }
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// class name -> sorted file names
std::map<std::string, std::vector<std::string>> scan_modality(const fs::path& dir) {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        auto& files = out[entry.path().filename().string()];
        for (const auto& f : fs::directory_iterator(entry.path())) {
            if (f.is_regular_file() && is_image_file(f.path())) files.push_back(f.path().filename().string());
        }
        std::sort(files.begin(), files.end());
    }
    return out;
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
    const fs::path sketch_dir = root / "sketches";
    const fs::path image_dir = root / "images";
    for (const auto& dir : {sketch_dir, image_dir}) {
        if (!fs::is_directory(dir)) throw LayoutError("missing directory " + dir.string());
    }
    const auto sketches = scan_modality(sketch_dir);
    const auto images = scan_modality(image_dir);

    Dataset ds;
    std::set<std::string> names;
    for (const auto& [c, _] : sketches) names.insert(c);
    for (const auto& [c, _] : images) names.insert(c);
    for (const auto& c : names) {
        const auto s = sketches.find(c);
        const auto i = images.find(c);
        const bool has_s = s != sketches.end() && !s->second.empty();
        const bool has_i = i != images.end() && !i->second.empty();
        if (!has_s || !has_i) {
            ds.warnings.push_back("class '" + c + "' has no " + (has_s ? "images" : "sketches") + "; excluded");
            continue;
        }
        ds.classes.push_back(c);
        for (const auto& f : s->second)
            ds.items.push_back({"sketches/" + c + "/" + f, Modality::Sketch, c, sketch_dir / c / f, nullptr});
        for (const auto& f : i->second)
            ds.items.push_back({"images/" + c + "/" + f, Modality::Image, c, image_dir / c / f, nullptr});
    }
    std::sort(ds.items.begin(), ds.items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    ds.validate();
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
    for (const auto& item : dataset.items) {
        const fs::path out = root / item.id;
        fs::create_directories(out.parent_path());
        write_png(out, dataset.load(item));
    }
    std::ofstream manifest(root / "manifest.json");
    if (!manifest) throw InputError("cannot write " + (root / "manifest.json").string());
    manifest << dataset.manifest().dump(2) << '\n';
}

DataSplit split_seen(const Dataset& dataset, const FoldSpec& fold, std::uint64_t seed) {
    const std::set<std::string> catalog(dataset.classes.begin(), dataset.classes.end());
    for (const auto* list : {&fold.seen, &fold.unseen}) {
        for (const auto& c : *list) {
            if (!catalog.count(c)) throw ContractError("fold " + fold.id + " names class '" + c + "' not in the catalog");
        }
    }
    const std::set<std::string> seen(fold.seen.begin(), fold.seen.end());

    std::mt19937_64 rng(seed);
    std::set<std::string> train_ids;
    for (const auto& c : dataset.classes) {
        if (!seen.count(c)) continue;
        std::vector<const DatasetItem*> imgs;
        for (const auto& item : dataset.items)
            if (item.label == c && item.modality == Modality::Image) imgs.push_back(&item);
        std::shuffle(imgs.begin(), imgs.end(), rng);
        const std::size_t n_train = (imgs.size() + 1) / 2;
        for (std::size_t i = 0; i < n_train; ++i) train_ids.insert(imgs[i]->id);
    }

    DataSplit split;
    split.train = dataset.subset([&](const DatasetItem& it) {
        return seen.count(it.label) && (it.modality == Modality::Sketch || train_ids.count(it.id));
    });
    split.test_seen = dataset.subset([&](const DatasetItem& it) {
        return seen.count(it.label) && it.modality == Modality::Image && !train_ids.count(it.id);
    });
    split.test_unseen = dataset.subset([&](const DatasetItem& it) { return !seen.count(it.label); });
    return split;
}

}  // namespace mlgt
