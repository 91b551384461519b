#include <doctest.h>

#include <filesystem>

#include "mlgt/errors.hpp"
#include "mlgt/model.hpp"
#include "test_util.hpp"

using namespace mlgt;
using mlgt::test::to_vector;

TEST_CASE("checkpoint round trip preserves every parameter") {
    const auto model = Model<float>::init(ModelConfig::toy(), 3);
    const auto bytes = serialize_checkpoint(model, {{"seed", 3}});
    const auto ck = deserialize_checkpoint(bytes);
    CHECK(ck.metadata.at("seed") == 3);
    CHECK(ck.model.config.dim == model.config.dim);
    const auto a = model.parameters(), b = ck.model.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.shape() == b[i].second.shape());
        CHECK(to_vector(a[i].second) == to_vector(b[i].second));
    }
    CHECK(ck.fingerprint == model_fingerprint(model));
}

TEST_CASE("fingerprint ignores metadata but not weights") {
    auto model = Model<float>::init(mlgt::test::tiny_config(), 4);
    const auto fp = model_fingerprint(model);
    const auto path = std::filesystem::temp_directory_path() / "mlgt_test.ckpt";
    CHECK(save_checkpoint(path, model, {{"note", "x"}}) == fp);
    CHECK(load_checkpoint(path).fingerprint == fp);
    std::filesystem::remove(path);

    auto copy = model.clone();
    copy.cross.ln_beta.values_mut()[0] += 1e-3f;
    CHECK(model_fingerprint(copy) != fp);
    CHECK(model_fingerprint(model) == fp);
    CHECK(model_fingerprint(Model<float>::init(mlgt::test::tiny_config(), 4)) == fp);
    CHECK(model_fingerprint(Model<float>::init(mlgt::test::tiny_config(), 5)) != fp);
}

TEST_CASE("clone is deep") {
    const auto model = Model<float>::init(mlgt::test::tiny_config(), 6);
    auto copy = model.clone();
    const auto before = to_vector(model.encoder.blocks[0].attn.w_q);
    copy.encoder.blocks[0].attn.w_q.values_mut()[0] += 1.0f;
    CHECK(to_vector(model.encoder.blocks[0].attn.w_q) == before);
}

TEST_CASE("corrupt checkpoints are format errors") {
    const auto bytes = serialize_checkpoint(Model<float>::init(mlgt::test::tiny_config(), 7));
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(deserialize_checkpoint(cut), FormatError);
}

TEST_CASE("sha256 known answer") {
    const std::string abc = "abc";
    CHECK(to_hex(sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()})) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("embedding puts the retrieval token first") {
    const auto model = Model<float>::init(mlgt::test::tiny_config(), 8);
    const Image img(32, 32, 200);
    const auto e = model.embed(img, Modality::Image);
    CHECK(e.d() == 8);
    CHECK(e.n() == 4);
    const auto v = retrieval_vector(e);
    REQUIRE(v.size() == 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(v[j] == e.tokens.at(0, j));
}
