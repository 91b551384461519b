#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mlgt/data.hpp"
#include "mlgt/errors.hpp"
#include "mlgt/folds.hpp"

using namespace mlgt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void put_png(const fs::path& p, std::uint8_t shade = 128) {
    fs::create_directories(p.parent_path());
    write_png(p, Image(4, 4, shade));
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

// Seven Hu invariants of a binary mask, log-scaled.
std::array<double, 7> hu_moments(const std::vector<int>& mask, std::size_t w, std::size_t h) {
    double m00 = 0, m10 = 0, m01 = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (mask[y * w + x]) {
                m00 += 1;
                m10 += double(x);
                m01 += double(y);
            }
    const double cx = m10 / m00, cy = m01 / m00;
    auto mu = [&](int p, int q) {
        double s = 0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (mask[y * w + x]) s += std::pow(double(x) - cx, p) * std::pow(double(y) - cy, q);
        return s;
    };
    auto eta = [&](int p, int q) { return mu(p, q) / std::pow(m00, 1.0 + (p + q) / 2.0); };
    const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
    const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
    std::array<double, 7> hu{};
    hu[0] = n20 + n02;
    hu[1] = std::pow(n20 - n02, 2) + 4 * n11 * n11;
    hu[2] = std::pow(n30 - 3 * n12, 2) + std::pow(3 * n21 - n03, 2);
    hu[3] = std::pow(n30 + n12, 2) + std::pow(n21 + n03, 2);
    hu[4] = (n30 - 3 * n12) * (n30 + n12) * (std::pow(n30 + n12, 2) - 3 * std::pow(n21 + n03, 2)) +
            (3 * n21 - n03) * (n21 + n03) * (3 * std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2));
    hu[5] = (n20 - n02) * (std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2)) + 4 * n11 * (n30 + n12) * (n21 + n03);
    hu[6] = (3 * n21 - n03) * (n30 + n12) * (std::pow(n30 + n12, 2) - 3 * std::pow(n21 + n03, 2)) -
            (n30 - 3 * n12) * (n21 + n03) * (3 * std::pow(n30 + n12, 2) - std::pow(n21 + n03, 2));
    for (auto& v : hu) v = -std::copysign(1.0, v) * std::log10(std::abs(v) + 1e-30);
    return hu;
}

}  // namespace

TEST_CASE("benchmark classes reproduce the published folds") {
    const auto folds = make_folds(rsketch_classes());
    CHECK(rsketch_classes().size() == 20);
    CHECK(folds[0].id == "S1");
    CHECK(as_set(folds[0].unseen) ==
          std::set<std::string>{"airplane", "bridge", "golf course", "railway", "storage tank"});
    CHECK(as_set(folds[1].unseen) ==
          std::set<std::string>{"baseball diamond", "closed road", "intersection", "river", "swimming pool"});
    CHECK(as_set(folds[2].unseen) ==
          std::set<std::string>{"basketball court", "crosswalk", "oil gas field", "runway", "tennis court"});
    CHECK(as_set(folds[3].unseen) ==
          std::set<std::string>{"beach", "football field", "overpass", "runway marking", "wwtp"});
    std::multiset<std::string> all;
    for (const auto& f : folds) {
        CHECK(f.seen.size() == 15);
        for (const auto& u : f.unseen) {
            all.insert(u);
            CHECK(std::find(f.seen.begin(), f.seen.end(), u) == f.seen.end());
        }
    }
    CHECK(all.size() == 20);
    CHECK(std::set<std::string>(all.begin(), all.end()) == as_set(rsketch_classes()));
}

TEST_CASE("synthetic classes are dealt round-robin") {
    const auto& vocab = synthetic_vocabulary();
    const std::vector<std::string> eight(vocab.begin(), vocab.begin() + 8);
    const auto folds = make_folds(eight);
    std::set<std::string> seen_unseen;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(folds[i].unseen.size() == 2);
        CHECK(folds[i].seen.size() == 6);
        for (const auto& u : folds[i].unseen) CHECK(seen_unseen.insert(u).second);
    }
    CHECK(seen_unseen.size() == 8);
    CHECK(fold_by_id(eight, "S3").unseen == folds[2].unseen);
    CHECK_THROWS_AS(fold_by_id(eight, "S5"), ContractError);
    CHECK_THROWS_AS(make_folds({"a", "b", "a", "c"}), ContractError);
    CHECK_THROWS_AS(make_folds({"a", "b", "c"}), ContractError);
}

TEST_CASE("directory class names map to benchmark names") {
    CHECK(canonical_class_name("storage_tanks") == "storage tank");
    CHECK(canonical_class_name("Golf_Course") == "golf course");
    CHECK(canonical_class_name("Widget") == "widget");
}

TEST_CASE("loader counts items and classes") {
    TempDir dir("mlgt_test_loader");
    for (const std::string c : {"alpha", "beta"}) {
        for (int i = 0; i < 2; ++i) put_png(dir.path / "sketches" / c / ("s" + std::to_string(i) + ".png"));
        for (int i = 0; i < 3; ++i) put_png(dir.path / "images" / c / ("r" + std::to_string(i) + ".png"));
    }
    const auto ds = load_dataset(dir.path);
    CHECK(ds.items.size() == 10);
    CHECK(ds.classes == std::vector<std::string>{"alpha", "beta"});
    CHECK(ds.indices(Modality::Sketch).size() == 4);
    CHECK(ds.indices(Modality::Image).size() == 6);
    CHECK(ds.warnings.empty());
    const auto* item = ds.find("images/beta/r2.png");
    REQUIRE(item != nullptr);
    CHECK(item->label == "beta");
    CHECK(ds.load(*item) == Image(4, 4, 128));

    const auto again = load_dataset(dir.path);
    REQUIRE(again.items.size() == ds.items.size());
    for (std::size_t i = 0; i < ds.items.size(); ++i) CHECK(again.items[i].id == ds.items[i].id);
    CHECK(std::is_sorted(ds.items.begin(), ds.items.end(),
                         [](const auto& a, const auto& b) { return a.id < b.id; }));

    const auto manifest = ds.manifest();
    REQUIRE(manifest.size() == 10);
    CHECK(manifest[0].contains("id"));
    CHECK(manifest[0].contains("path"));
    CHECK(manifest[0].contains("label"));
    CHECK((manifest[0]["modality"] == "sketch" || manifest[0]["modality"] == "image"));
}

TEST_CASE("one-sided and empty classes are excluded with a warning") {
    TempDir dir("mlgt_test_loader_partial");
    put_png(dir.path / "sketches/alpha/a.png");
    put_png(dir.path / "images/alpha/a.png");
    put_png(dir.path / "sketches/beta/b.png");
    fs::create_directories(dir.path / "images/gamma");
    fs::create_directories(dir.path / "sketches/gamma");
    const auto ds = load_dataset(dir.path);
    CHECK(ds.classes == std::vector<std::string>{"alpha"});
    CHECK(ds.items.size() == 2);
    CHECK(ds.warnings.size() == 2);
}

TEST_CASE("missing top-level directories are a layout error") {
    TempDir dir("mlgt_test_loader_layout");
    put_png(dir.path / "sketches/alpha/a.png");
    CHECK_THROWS_AS(load_dataset(dir.path), LayoutError);
    CHECK_THROWS_AS(load_dataset(dir.path / "nope"), LayoutError);
}

TEST_CASE("saved datasets load back") {
    TempDir dir("mlgt_test_roundtrip");
    const auto ds = generate_synthetic({3, 2, 3, 16, 4});
    save_dataset(ds, dir.path);
    CHECK(fs::exists(dir.path / "manifest.json"));
    const auto back = load_dataset(dir.path);
    CHECK(back.items.size() == ds.items.size());
    CHECK(back.classes == ds.classes);
    for (const auto& item : ds.items) {
        const auto* b = back.find(item.id);
        REQUIRE(b != nullptr);
        CHECK(b->label == item.label);
        CHECK(back.load(*b) == ds.load(item));
    }
}

TEST_CASE("synthetic generation") {
    const auto a = generate_synthetic({8, 8, 16, 64, 11});
    CHECK(a.items.size() == 192);
    CHECK(a.classes.size() == 8);
    a.validate();
    const auto b = generate_synthetic({8, 8, 16, 64, 11});
    REQUIRE(b.items.size() == a.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        CHECK(a.items[i].id == b.items[i].id);
        CHECK(a.load(a.items[i]).rgb == b.load(b.items[i]).rgb);
    }
    const auto c = generate_synthetic({8, 8, 16, 64, 12});
    CHECK(a.load(a.items[0]).rgb != c.load(c.items[0]).rgb);
    for (const auto& item : a.items) {
        const auto img = a.load(item);
        CHECK(img.width == 64);
        CHECK(img.height == 64);
    }
    CHECK(synthetic_vocabulary().size() == 12);
    CHECK_NOTHROW(generate_synthetic({12, 1, 1, 16, 0}));
    CHECK_THROWS_AS(generate_synthetic({13, 1, 1, 16, 0}), ContractError);
}

TEST_CASE("sketches are dark strokes on white") {
    const auto ds = generate_synthetic({4, 4, 1, 64, 3});
    for (auto i : ds.indices(Modality::Sketch)) {
        const auto img = ds.load(ds.items[i]);
        std::size_t white = 0, dark = 0;
        for (std::size_t p = 0; p < img.width * img.height; ++p) {
            const auto* px = img.rgb.data() + 3 * p;
            CHECK((px[0] == px[1] && px[1] == px[2]));
            white += px[0] == 255;
            dark += px[0] < 128;
        }
        CHECK(white > img.width * img.height / 2);
        CHECK(dark > 20);
    }
}

TEST_CASE("a Hu-moment nearest-centroid classifier separates generated images") {
    SyntheticOptions opt{8, 1, 20, 64, 5};
    const auto ds = generate_synthetic(opt);
    std::map<std::string, std::vector<std::array<double, 7>>> features;
    for (auto i : ds.indices(Modality::Image)) {
        const auto img = ds.load(ds.items[i]);
        std::vector<int> mask(64 * 64);
        for (std::size_t p = 0; p < mask.size(); ++p) {
            const auto* px = img.rgb.data() + 3 * p;
            mask[p] = (int(px[0]) + px[1] + px[2]) / 3 > 150;
        }
        features[ds.items[i].label].push_back(hu_moments(mask, 64, 64));
    }
    // First half trains the centroids, second half is classified.
    std::map<std::string, std::array<double, 7>> centroid;
    for (auto& [label, f] : features) {
        std::array<double, 7> c{};
        for (std::size_t i = 0; i < 10; ++i)
            for (int k = 0; k < 7; ++k) c[k] += f[i][k] / 10.0;
        centroid[label] = c;
    }
    std::size_t separated = 0;
    for (auto& [label, f] : features) {
        std::size_t correct = 0;
        for (std::size_t i = 10; i < 20; ++i) {
            std::string best;
            double best_d = 1e300;
            for (auto& [other, c] : centroid) {
                double d = 0;
                for (int k = 0; k < 4; ++k) d += std::pow(f[i][k] - c[k], 2);
                if (d < best_d) best_d = d, best = other;
            }
            correct += best == label;
        }
        if (correct >= 3) ++separated;  // chance is 10/8 per class
    }
    CHECK(separated >= 3);
}

TEST_CASE("split_seen partitions the data") {
    const auto ds = generate_synthetic({4, 2, 5, 16, 6});
    const auto fold = fold_by_id(ds.classes, "S1");
    const auto split = split_seen(ds, fold, 0);
    std::set<std::string> train_ids, test_ids;
    for (const auto& it : split.train.items) {
        CHECK_FALSE(fold.is_unseen(it.label));
        train_ids.insert(it.id);
    }
    for (const auto& it : split.test_seen.items) {
        CHECK(it.modality == Modality::Image);
        CHECK_FALSE(fold.is_unseen(it.label));
        CHECK(test_ids.insert(it.id).second);
    }
    for (const auto& it : split.test_unseen.items) {
        CHECK(fold.is_unseen(it.label));
        CHECK(test_ids.insert(it.id).second);
    }
    for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);
    CHECK(train_ids.size() + test_ids.size() == ds.items.size());
    // 5 images per seen class: 3 train, 2 test; every seen sketch trains.
    for (const auto& c : fold.seen) {
        auto count = [&](const Dataset& d, Modality m) {
            return std::count_if(d.items.begin(), d.items.end(),
                                 [&](const auto& it) { return it.label == c && it.modality == m; });
        };
        CHECK(count(split.train, Modality::Image) == 3);
        CHECK(count(split.test_seen, Modality::Image) == 2);
        CHECK(count(split.train, Modality::Sketch) == 2);
    }
    const auto again = split_seen(ds, fold, 0);
    for (std::size_t i = 0; i < split.train.items.size(); ++i) CHECK(again.train.items[i].id == split.train.items[i].id);
}

TEST_CASE("even image counts split in half") {
    const auto ds = generate_synthetic({4, 1, 4, 16, 6});
    const auto split = split_seen(ds, fold_by_id(ds.classes, "S2"), 3);
    CHECK(split.train.indices(Modality::Image).size() == 6);
    CHECK(split.test_seen.items.size() == 6);
}

TEST_CASE("a fold naming classes outside the catalog is rejected") {
    const auto ds = generate_synthetic({4, 1, 2, 16, 6});
    FoldSpec bad{"S1", {"nonexistent"}, {ds.classes[0]}};
    CHECK_THROWS_AS(split_seen(ds, bad, 0), ContractError);
}
