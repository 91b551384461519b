#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mlgt/config.hpp"
#include "mlgt/data.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(MLGT_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

struct Workspace {
    fs::path dir = fs::temp_directory_path() / "mlgt_test_cli";
    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        json cfg{{"model", mlgt::test::tiny_config()}, {"train", {{"steps", 6}, {"batch", 4}, {"learning_rate", 1e-3}}}};
        std::ofstream(dir / "train.json") << cfg.dump(2);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("full lifecycle through the command line") {
    Workspace ws;
    REQUIRE(run("gen-data --out " + ws.p("data") + " --classes 4 --sketches 2 --images 4 --size 32 --seed 3").code == 0);
    CHECK(fs::exists(ws.dir / "data/manifest.json"));

    const auto tr = run("train --data " + ws.p("data") + " --fold S1 --config " + ws.p("train.json") + " --out " +
                        ws.p("m.ckpt") + " --seed 5");
    REQUIRE(tr.code == 0);
    CHECK(fs::exists(ws.dir / "m.ckpt"));
    const auto csv = slurp(ws.dir / "m.ckpt.loss.csv");
    CHECK(csv.rfind("step,loss\n", 0) == 0);
    CHECK(count_lines(csv) == 7);

    REQUIRE(run("build-index --ckpt " + ws.p("m.ckpt") + " --data " + ws.p("data") + " --out " + ws.p("idx.bin")).code == 0);
    const auto sketch = ws.p("data/sketches/circle/circle_000.png");
    REQUIRE(fs::exists(sketch));

    SUBCASE("query prints one row for k = 1") {
        const auto q = run("query --ckpt " + ws.p("m.ckpt") + " --index " + ws.p("idx.bin") + " --sketch " + sketch + " --k 1");
        CHECK(q.code == 0);
        CHECK(count_lines(q.out) == 2);  // header + 1 row
        CHECK(q.out.rfind("rank\tid\tlabel\tdistance\tmode\n", 0) == 0);
        const auto q5 = run("query --ckpt " + ws.p("m.ckpt") + " --index " + ws.p("idx.bin") + " --sketch " + sketch +
                            " --k 5 --rerank 3 --assets " + ws.p("data"));
        CHECK(q5.code == 0);
        CHECK(count_lines(q5.out) == 6);
        CHECK(q5.out.find("post") != std::string::npos);
    }
    SUBCASE("evaluate writes the report fields and is deterministic") {
        const auto e1 = run("evaluate --ckpt " + ws.p("m.ckpt") + " --data " + ws.p("data") + " --fold S1 --report " +
                            ws.p("r1.json"));
        REQUIRE(e1.code == 0);
        CHECK(e1.out.find("seen: mAP=") != std::string::npos);
        CHECK(e1.out.find("unseen: mAP=") != std::string::npos);
        const auto j = json::parse(slurp(ws.dir / "r1.json"));
        CHECK(j.size() == 3);
        CHECK(j["fold"] == "S1");
        for (const char* split : {"seen", "unseen"}) {
            REQUIRE(j.contains(split));
            CHECK(j[split].size() == 4);
            for (const char* key : {"mAP", "top10", "top50", "top100"}) CHECK(j[split][key].is_number());
        }
        REQUIRE(run("evaluate --ckpt " + ws.p("m.ckpt") + " --data " + ws.p("data") + " --fold S1 --report " +
                    ws.p("r2.json"))
                    .code == 0);
        CHECK(slurp(ws.dir / "r1.json") == slurp(ws.dir / "r2.json"));
    }
    SUBCASE("same seed end to end gives identical artifacts") {
        REQUIRE(run("train --data " + ws.p("data") + " --fold S1 --config " + ws.p("train.json") + " --out " +
                    ws.p("m2.ckpt") + " --seed 5")
                    .code == 0);
        CHECK(slurp(ws.dir / "m.ckpt") == slurp(ws.dir / "m2.ckpt"));
        CHECK(slurp(ws.dir / "m.ckpt.loss.csv") == slurp(ws.dir / "m2.ckpt.loss.csv"));
    }
    SUBCASE("oracle evaluation scores 1") {
        const auto e = run("evaluate --oracle --data " + ws.p("data") + " --fold S2 --report " + ws.p("o.json"));
        REQUIRE(e.code == 0);
        CHECK(e.out.find("seen: mAP=1.0000") != std::string::npos);
        CHECK(e.out.find("unseen: mAP=1.0000") != std::string::npos);
    }
    SUBCASE("mismatched index is refused without --force") {
        REQUIRE(run("train --data " + ws.p("data") + " --fold S1 --config " + ws.p("train.json") + " --out " +
                    ws.p("other.ckpt") + " --seed 6")
                    .code == 0);
        const std::string base = "query --ckpt " + ws.p("other.ckpt") + " --index " + ws.p("idx.bin") + " --sketch " + sketch;
        CHECK(run(base).code != 0);
        CHECK(run(base + " --force").code == 0);
    }
}

TEST_CASE("exit codes") {
    Workspace ws;
    CHECK(run("").code == 2);
    CHECK(run("train --bogus").code == 2);
    CHECK(run("query --ckpt /nonexistent --index /nonexistent --sketch /nonexistent").code == 2);
    fs::create_directories(ws.dir / "empty");
    CHECK(run("evaluate --oracle --data " + ws.p("empty")).code == 3);
    std::ofstream(ws.dir / "bad.ckpt") << "not a checkpoint";
    fs::create_directories(ws.dir / "d/sketches");
    fs::create_directories(ws.dir / "d/images");
    CHECK(run("build-index --ckpt " + ws.p("bad.ckpt") + " --data " + ws.p("d") + " --out " + ws.p("i.bin")).code == 3);
    CHECK(run("--help").code == 0);
}
