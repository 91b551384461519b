// mlgt: command-line front end (data generation, training, indexing, query,
// evaluation, serving).

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "mlgt/errors.hpp"
#include "mlgt/evaluation.hpp"
#include "mlgt/service.hpp"
#include "mlgt/training.hpp"

namespace fs = std::filesystem;
using namespace mlgt;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

struct GenArgs {
    std::string out;
    SyntheticOptions opts;
};

struct TrainArgs {
    std::string data, fold, config, out, loss_csv;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps, batch;
    std::optional<double> lr;
};

struct IndexArgs {
    std::string ckpt, data, out;
};

struct QueryArgs {
    std::string ckpt, index, sketch, assets;
    std::size_t k = 10, rerank = 0;
    bool force = false;
};

struct EvalArgs {
    std::string ckpt, data, fold = "S1", report;
    std::optional<std::uint64_t> seed;
    std::size_t rerank = 0;
    bool oracle = false;
};

struct ServeArgs {
    std::string config;
    std::optional<int> port;
    std::optional<std::string> bind;
    bool force = false;
};

int gen_data(const GenArgs& a) {
    const auto ds = generate_synthetic(a.opts);
    save_dataset(ds, a.out);
    std::cout << "wrote " << ds.items.size() << " items in " << ds.classes.size() << " classes to " << a.out << "\n";
    return kOk;
}

int train_cmd(const TrainArgs& a) {
    ModelConfig mc = ModelConfig::toy();
    TrainConfig tc;
    if (!a.config.empty()) {
        const auto j = read_json(a.config);
        if (j.contains("model")) mc = j.at("model").get<ModelConfig>();
        if (j.contains("train")) tc = j.at("train").get<TrainConfig>();
    }
    if (!a.fold.empty()) tc.fold = a.fold;
    if (a.seed) tc.seed = *a.seed;
    if (a.steps) tc.steps = *a.steps;
    if (a.batch) tc.batch = *a.batch;
    if (a.lr) tc.learning_rate = *a.lr;

    const auto ds = load_dataset(a.data);
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
    const auto fold = fold_by_id(ds.classes, tc.fold);
    const auto result = train(ds, fold, tc, mc, [](std::size_t step, double loss) {
        if (step % 50 == 0) std::cerr << "step " << step << " loss " << loss << "\n";
    });
    const nlohmann::json meta{{"seed", tc.seed}, {"fold", tc.fold}, {"train", tc}, {"steps", result.losses.size()}};
    const auto fp = save_checkpoint(a.out, result.model, meta);
    const fs::path csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
    write_loss_csv(csv, result.losses);
    std::cout << "checkpoint " << a.out << " (" << to_hex(fp) << "), loss curve " << csv.string() << "\n";
    return kOk;
}

int build_index_cmd(const IndexArgs& a) {
    const auto ckpt = load_checkpoint(a.ckpt);
    const auto ds = load_dataset(a.data);
    const auto images = ds.subset([](const DatasetItem& it) { return it.modality == Modality::Image; });
    BuildReport report;
    ModelEmbedder embedder(ckpt.model);
    const auto index = build_index(embedder, images, ckpt.fingerprint, &report);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    save_index(index, a.out);
    std::cout << "indexed " << index.size() << " images (d=" << index.d << ") into " << a.out << "\n";
    return kOk;
}

int query_cmd(const QueryArgs& a) {
    const auto ckpt = load_checkpoint(a.ckpt);
    const auto index = load_index(a.index);
    if (auto w = fingerprint_warning(index, ckpt.fingerprint)) {
        if (!a.force) throw ConfigError(*w + " (use --force to query anyway)");
        std::cerr << "warning: " << *w << "\n";
    }
    const auto ranked =
        retrieve(ckpt.model, index, read_image(a.sketch), a.k, a.rerank, asset_lookup(ckpt.model, a.assets));
    for (const auto& w : ranked.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "rank\tid\tlabel\tdistance\tmode\n" << std::setprecision(6) << std::fixed;
    for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
        const auto& e = ranked.entries[i];
        std::cout << i + 1 << '\t' << e.id << '\t' << e.label << '\t' << e.distance << '\t'
                  << (e.mode == DistanceMode::Post ? "post" : "pre") << '\n';
    }
    return kOk;
}

int evaluate_cmd(const EvalArgs& a) {
    if (a.ckpt.empty() && !a.oracle) throw CLI::ValidationError("--ckpt", "required unless --oracle is given");
    const auto ds = load_dataset(a.data);
    const auto fold = fold_by_id(ds.classes, a.fold);
    EvalOptions opts;
    opts.rerank_m = a.rerank;
    EvalReport report;
    if (a.oracle) {
        opts.split_seed = a.seed.value_or(0);
        LabelOracleEmbedder oracle(ds.classes);
        report = evaluate_fold(ds, fold, oracle, opts);
    } else {
        const auto ckpt = load_checkpoint(a.ckpt);
        opts.split_seed = a.seed.value_or(ckpt.metadata.value("seed", std::uint64_t{0}));
        opts.fingerprint = ckpt.fingerprint;
        ModelEmbedder embedder(ckpt.model);
        report = evaluate_fold(ds, fold, embedder, opts);
    }
    std::cout << "fold " << report.fold << "\n" << std::fixed << std::setprecision(4);
    for (const auto& [name, m] : {std::pair{"seen", &report.seen}, std::pair{"unseen", &report.unseen}}) {
        std::cout << name << ": mAP=" << m->map << " top10=" << m->top10 << " top50=" << m->top50
                  << " top100=" << m->top100 << " (" << m->queries << " queries)\n";
        for (const auto& q : m->excluded) std::cerr << "warning: query " << q << " has no relevant gallery item\n";
    }
    const fs::path out = a.report.empty() ? fs::path("evaluation_" + report.fold + ".json") : fs::path(a.report);
    write_json(out, report.to_json());
    std::cout << "report " << out.string() << "\n";
    return kOk;
}

Service* g_service = nullptr;

int serve_cmd(const ServeArgs& a) {
    auto cfg = read_json(a.config).get<ServiceConfig>();
    // Relative paths in the config resolve against the config file.
    const auto base = fs::path(a.config).parent_path();
    for (auto* p : {&cfg.checkpoint, &cfg.index, &cfg.asset_root})
        if (!p->empty() && p->is_relative()) *p = base / *p;
    if (a.port) cfg.port = *a.port;
    if (a.bind) cfg.bind = *a.bind;
    if (a.force) cfg.force = true;
    Service service(cfg);
    for (const auto& w : service.warnings()) std::cerr << "warning: " << w << "\n";
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    std::cerr << "serving on " << cfg.bind << ":" << cfg.port << "\n";
    service.run();
    g_service = nullptr;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mlgt: sketch-to-image retrieval"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen-data", "write a synthetic dataset");
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--classes", gen.opts.classes, "number of shape classes")->capture_default_str();
    g->add_option("--sketches", gen.opts.sketches_per_class, "sketches per class")->capture_default_str();
    g->add_option("--images", gen.opts.images_per_class, "images per class")->capture_default_str();
    g->add_option("--size", gen.opts.size, "raster size in pixels")->capture_default_str();
    g->add_option("--seed", gen.opts.seed, "random seed")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "triplet training on one fold");
    t->add_option("--data", tr.data, "dataset root")->required()->check(CLI::ExistingDirectory);
    t->add_option("--fold", tr.fold, "S1..S4 (overrides config)");
    t->add_option("--config", tr.config, "JSON config with model/train sections")->check(CLI::ExistingFile);
    t->add_option("--out", tr.out, "checkpoint path")->required();
    t->add_option("--loss-csv", tr.loss_csv, "loss curve path (default CKPT.loss.csv)");
    t->add_option("--seed", tr.seed, "random seed (overrides config)");
    t->add_option("--steps", tr.steps, "optimizer steps (overrides config)");
    t->add_option("--batch", tr.batch, "triplets per step (overrides config)");
    t->add_option("--lr", tr.lr, "learning rate (overrides config)");

    IndexArgs ix;
    auto* b = app.add_subcommand("build-index", "precompute image retrieval vectors");
    b->add_option("--ckpt", ix.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    b->add_option("--data", ix.data, "dataset root")->required()->check(CLI::ExistingDirectory);
    b->add_option("--out", ix.out, "index path")->required();

    QueryArgs q;
    auto* qc = app.add_subcommand("query", "rank indexed images for one sketch");
    qc->add_option("--ckpt", q.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    qc->add_option("--index", q.index, "index")->required()->check(CLI::ExistingFile);
    qc->add_option("--sketch", q.sketch, "sketch PNG/JPEG")->required()->check(CLI::ExistingFile);
    qc->add_option("--k", q.k, "results")->capture_default_str()->check(CLI::PositiveNumber);
    qc->add_option("--rerank", q.rerank, "post-mode rerank depth M")->capture_default_str();
    qc->add_option("--assets", q.assets, "dataset root holding the indexed images (for rerank)");
    qc->add_flag("--force", q.force, "ignore a fingerprint mismatch");

    EvalArgs ev;
    auto* e = app.add_subcommand("evaluate", "mAP and Top-K for one fold");
    e->add_option("--ckpt", ev.ckpt, "checkpoint")->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "dataset root")->required()->check(CLI::ExistingDirectory);
    e->add_option("--fold", ev.fold, "S1..S4")->capture_default_str();
    e->add_option("--seed", ev.seed, "split seed (default: the checkpoint's training seed)");
    e->add_option("--rerank", ev.rerank, "post-mode rerank depth M")->capture_default_str();
    e->add_option("--report", ev.report, "JSON report path (default evaluation_<fold>.json)");
    e->add_flag("--oracle", ev.oracle, "use the label-oracle stub instead of a checkpoint");

    ServeArgs sv;
    auto* s = app.add_subcommand("serve", "HTTP retrieval service");
    s->add_option("--config", sv.config, "service JSON config")->required()->check(CLI::ExistingFile);
    s->add_option("--port", sv.port, "port (overrides config)");
    s->add_option("--bind", sv.bind, "address (overrides config)");
    s->add_flag("--force", sv.force, "start despite a fingerprint mismatch");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*g) return gen_data(gen);
        if (*t) return train_cmd(tr);
        if (*b) return build_index_cmd(ix);
        if (*qc) return query_cmd(q);
        if (*e) return evaluate_cmd(ev);
        if (*s) return serve_cmd(sv);
    } catch (const CLI::ParseError& err) {
        std::cerr << err.what() << "\n" << app.help();
        return kUsage;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const InputError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const LayoutError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const FormatError& err) {
        std::cerr << "error: " << err.what() << " (offset " << err.offset() << ")\n";
        return kData;
    } catch (const SamplingError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const ContractError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << "\n";
        return kInternal;
    }
    return kUsage;
}
