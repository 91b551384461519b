#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "mlgt/errors.hpp"
#include "mlgt/ops.hpp"
#include "mlgt/training.hpp"
#include "test_util.hpp"

using namespace mlgt;
using mlgt::test::random_tensor;
using D = Tensor<double>;

namespace {

D scalar(double v) { return D::from({1}, {v}); }

DatasetItem item(const std::string& id, Modality m, const std::string& label) {
    DatasetItem it;
    it.id = id;
    it.modality = m;
    it.label = label;
    it.raster = std::make_shared<Image>(8, 8);
    return it;
}

// `sketches` and `images` per class for each label.
Dataset small_dataset(const std::vector<std::string>& labels, std::size_t sketches, std::size_t images) {
    Dataset ds;
    for (const auto& l : labels) {
        for (std::size_t i = 0; i < sketches; ++i)
            ds.items.push_back(item("sketches/" + l + "/" + std::to_string(i) + ".png", Modality::Sketch, l));
        for (std::size_t i = 0; i < images; ++i)
            ds.items.push_back(item("images/" + l + "/" + std::to_string(i) + ".png", Modality::Image, l));
    }
    ds.classes = labels;
    return ds;
}

// Textbook AdamW, written out independently of the library.
void reference_adamw(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                     std::vector<double>& v, int t, double lr, double wd) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(b1, t));
        const double vh = v[i] / (1 - std::pow(b2, t));
        p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps) + wd * p[i]);
    }
}

TrainConfig toy_train(std::size_t steps) {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.steps = steps;
    cfg.batch = 16;
    return cfg;
}

}  // namespace

TEST_CASE("triplet hinge examples") {
    CHECK(triplet_hinge(scalar(0.2), scalar(0.9), 0.3).item() == 0.0);
    CHECK(triplet_hinge(scalar(0.7), scalar(0.7), 0.3).item() == 0.3);
    const auto loss = triplet_loss_from_distances<double>({{scalar(0.2), scalar(0.9)}, {scalar(1.0), scalar(0.8)}}, 0.3);
    CHECK(loss.item() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(triplet_loss_from_distances<double>({}, 0.3), ContractError);
}

TEST_CASE("triplet loss is zero exactly when every margin holds") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::pair<D, D>> pairs;
        bool all_ok = true;
        for (int i = 0; i < 3; ++i) {
            const double dp = u(rng), dn = u(rng);
            all_ok = all_ok && dn >= dp + 0.3;
            pairs.emplace_back(scalar(dp), scalar(dn));
        }
        const double loss = triplet_loss_from_distances(pairs, 0.3).item();
        CHECK(loss >= 0.0);
        CHECK((loss == 0.0) == all_ok);
    }
}

TEST_CASE("triplet loss on encoded triplets in each mode") {
    ModelConfig c = mlgt::test::tiny_config();
    std::mt19937_64 rng(2);
    const auto cross = CrossAttnParams<double>::init(c, rng);
    auto e = [&](Modality m) { return TokenEmbedding<double>{random_tensor<double>({3, 8}, rng, -1, 1, false), m}; };
    std::vector<EncodedTriplet<double>> ts;
    for (int i = 0; i < 2; ++i) ts.push_back({e(Modality::Sketch), e(Modality::Image), e(Modality::Image)});
    const double m = 0.3;
    auto expected = [&](DistanceMode mode) {
        double sum = 0;
        for (const auto& t : ts) {
            const double dp = pair_distance(t.sketch, t.positive, cross, mode).value();
            const double dn = pair_distance(t.sketch, t.negative, cross, mode).value();
            sum += std::max(dp - dn + m, 0.0);
        }
        return sum / double(ts.size());
    };
    const double pre = expected(DistanceMode::Pre), post = expected(DistanceMode::Post);
    CHECK(triplet_loss(ts, cross, m, LossMode::Pre).item() == doctest::Approx(pre).epsilon(1e-12));
    CHECK(triplet_loss(ts, cross, m, LossMode::Post).item() == doctest::Approx(post).epsilon(1e-12));
    CHECK(triplet_loss(ts, cross, m, LossMode::Both).item() == doctest::Approx(pre + post).epsilon(1e-12));
    CHECK_THROWS_AS(triplet_loss(std::vector<EncodedTriplet<double>>{}, cross, m, LossMode::Pre), ContractError);
}

TEST_CASE("two classes with one image each force the negative") {
    const auto ds = small_dataset({"a", "b"}, 3, 1);
    TripletSampler sampler(ds);
    std::mt19937_64 rng(3);
    const auto batch = sampler.sample(100, rng);
    REQUIRE(batch.triplets.size() == 100);
    for (const auto& t : batch.triplets) {
        const auto& s = ds.items[t.sketch];
        const auto& n = ds.items[t.negative];
        CHECK(n.modality == Modality::Image);
        CHECK(n.label != s.label);
        CHECK(n.id == "images/" + std::string(s.label == "a" ? "b" : "a") + "/0.png");
    }
}

TEST_CASE("sampled triplets keep label invariants") {
    const auto ds = small_dataset({"a", "b", "c", "d"}, 4, 5);
    TripletSampler sampler(ds);
    std::mt19937_64 rng(4);
    std::map<std::string, int> negatives;
    for (const auto& t : sampler.sample(1000, rng).triplets) {
        const auto& s = ds.items[t.sketch];
        const auto& p = ds.items[t.positive];
        const auto& n = ds.items[t.negative];
        CHECK(s.modality == Modality::Sketch);
        CHECK(p.modality == Modality::Image);
        CHECK(s.label == p.label);
        CHECK(n.label != s.label);
        CHECK(t.label == s.label);
        CHECK(t.negative_label == n.label);
        ++negatives[n.label];
    }
    CHECK(negatives.size() == 4);
}

TEST_CASE("sampling is reproducible under a seed") {
    const auto ds = small_dataset({"a", "b", "c"}, 4, 4);
    TripletSampler sampler(ds);
    std::mt19937_64 r1(9), r2(9);
    for (int k = 0; k < 5; ++k) {
        const auto a = sampler.sample(16, r1), b = sampler.sample(16, r2);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(a.triplets[i].sketch == b.triplets[i].sketch);
            CHECK(a.triplets[i].positive == b.triplets[i].positive);
            CHECK(a.triplets[i].negative == b.triplets[i].negative);
        }
    }
}

TEST_CASE("single-class data cannot be sampled") {
    CHECK_THROWS_AS(TripletSampler(small_dataset({"a"}, 3, 3)), SamplingError);
    CHECK_THROWS_AS(TripletSampler(small_dataset({"a", "b"}, 0, 3)), SamplingError);
}

TEST_CASE("adamw matches the reference formula") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (double wd : {0.0, 0.01, 0.3}) {
        std::vector<double> p(20), ref;
        for (auto& x : p) x = u(rng);
        ref = p;
        std::vector<double> m(20, 0.0), v(20, 0.0);
        AdamWState<double> state;
        AdamWOptions opt;
        opt.learning_rate = 1e-2;
        opt.weight_decay = wd;
        for (int t = 1; t <= 10; ++t) {
            std::vector<double> g(20);
            for (auto& x : g) x = u(rng);
            adamw_step<double>(p, g, state, opt);
            reference_adamw(ref, g, m, v, t, 1e-2, wd);
            for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ref[i]) <= 1e-12);
        }
        CHECK(state.step == 10);
    }
}

TEST_CASE("adamw edge cases") {
    AdamWOptions opt;
    opt.learning_rate = 0.1;
    SUBCASE("zero gradient without decay") {
        std::vector<double> p{1.5, -2.0}, g{0.0, 0.0};
        AdamWState<double> s;
        adamw_step<double>(p, g, s, opt);
        CHECK(p == std::vector<double>{1.5, -2.0});
    }
    SUBCASE("zero gradient with decay is a pure shrink") {
        opt.weight_decay = 0.05;
        std::vector<double> p{1.5, -2.0}, g{0.0, 0.0};
        AdamWState<double> s;
        adamw_step<double>(p, g, s, opt);
        CHECK(p[0] == doctest::Approx(1.5 * (1 - 0.1 * 0.05)).epsilon(1e-15));
        CHECK(p[1] == doctest::Approx(-2.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
    }
    SUBCASE("first step moves by lr against the gradient sign") {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        std::vector<double> p{0.0, 0.0}, g{1e3, -1e3};
        AdamWState<double> s;
        adamw_step<double>(p, g, s, opt);
        CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-9));
        CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-9));
    }
    SUBCASE("size mismatch") {
        std::vector<double> p{0.0, 0.0}, g{1.0};
        AdamWState<double> s;
        CHECK_THROWS_AS(adamw_step<double>(p, g, s, opt), ContractError);
    }
}

TEST_CASE("train config validation and json") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.margin = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.learning_rate = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.epochs = 0;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    cfg.loss_mode = LossMode::Post;
    cfg.steps = 42;
    cfg.fold = "S3";
    const nlohmann::json j = cfg;
    CHECK(j.at("loss_mode") == "post");
    const auto back = j.get<TrainConfig>();
    CHECK(back.loss_mode == LossMode::Post);
    CHECK(back.steps == 42);
    CHECK(back.fold == "S3");
    CHECK(back.margin == cfg.margin);
}

TEST_CASE("training with lr 0 leaves the parameters unchanged") {
    const auto ds = generate_synthetic({4, 3, 4, 32, 1});
    ModelConfig mc = mlgt::test::tiny_config();
    const auto initial = Model<float>::init(mc, 7);
    TrainConfig cfg = toy_train(3);
    cfg.learning_rate = 0;
    cfg.weight_decay = 0.5;
    const auto result = train_on(ds, initial, cfg);
    const auto a = initial.parameters(), b = result.model.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO(a[i].first);
        CHECK(mlgt::test::to_vector(a[i].second) == mlgt::test::to_vector(b[i].second));
    }
    CHECK(result.losses.size() == 3);
}

TEST_CASE("training does not modify the initial model") {
    const auto ds = generate_synthetic({4, 3, 4, 32, 1});
    const auto initial = Model<float>::init(mlgt::test::tiny_config(), 7);
    const auto before = mlgt::test::to_vector(initial.parameters().front().second);
    const auto result = train_on(ds, initial, toy_train(3));
    CHECK(mlgt::test::to_vector(initial.parameters().front().second) == before);
    CHECK(mlgt::test::to_vector(result.model.parameters().front().second) != before);
}

TEST_CASE("toy training lowers the loss and never sees unseen classes") {
    const auto ds = generate_synthetic({});
    const auto fold = fold_by_id(ds.classes, "S1");
    std::vector<std::size_t> steps_seen;
    const auto result = train(ds, fold, toy_train(300), ModelConfig::toy(),
                              [&](std::size_t step, double) { steps_seen.push_back(step); });
    REQUIRE(result.losses.size() == 300);
    CHECK(steps_seen.size() == 300);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        first += result.losses[i];
        last += result.losses[250 + i];
    }
    CHECK(last < first);
    for (const auto& l : result.batch_labels) CHECK_FALSE(fold.is_unseen(l));
    CHECK(result.batch_labels.size() == fold.seen.size());
}

TEST_CASE("same seed gives the same loss curve") {
    const auto ds = generate_synthetic({4, 3, 4, 32, 2});
    const auto fold = fold_by_id(ds.classes, "S2");
    auto cfg = toy_train(8);
    cfg.batch = 4;
    const auto a = train(ds, fold, cfg, mlgt::test::tiny_config());
    const auto b = train(ds, fold, cfg, mlgt::test::tiny_config());
    CHECK(a.losses == b.losses);
    cfg.seed = 1;
    const auto c = train(ds, fold, cfg, mlgt::test::tiny_config());
    CHECK(a.losses != c.losses);
}

TEST_CASE("loss csv") {
    const auto path = std::filesystem::temp_directory_path() / "mlgt_test_loss.csv";
    write_loss_csv(path, std::vector<double>{0.5, 0.25});
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    CHECK(all == "step,loss\n0,0.5\n1,0.25\n");
    std::filesystem::remove(path);
}
