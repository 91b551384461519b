#include "mlgt/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>

#include "mlgt/errors.hpp"

namespace fs = std::filesystem;

namespace mlgt {

void ServiceConfig::validate() const {
    if (k < 1) throw ConfigError("service k must be at least 1");
    if (port < 0 || port > 65535) throw ConfigError("service port out of range");
}

void to_json(nlohmann::json& j, const ServiceConfig& c) {
    j = nlohmann::json{{"bind", c.bind},
                       {"port", c.port},
                       {"checkpoint", c.checkpoint.string()},
                       {"index", c.index.string()},
                       {"k", c.k},
                       {"rerank_m", c.rerank_m},
                       {"asset_root", c.asset_root.string()},
                       {"force", c.force}};
}

void from_json(const nlohmann::json& j, ServiceConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    auto get_path = [&](const char* key, fs::path& field) {
        if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    get("bind", c.bind);
    get("port", c.port);
    get_path("checkpoint", c.checkpoint);
    get_path("index", c.index);
    get("k", c.k);
    get("rerank_m", c.rerank_m);
    get_path("asset_root", c.asset_root);
    get("force", c.force);
}

RankedResult retrieve(const Model<float>& model, const RetrievalIndex& index, const Image& sketch, std::size_t k,
                      std::size_t rerank_m, const EncodedLookup& lookup) {
    NoGradGuard no_grad;
    const auto embedded = model.embed(sketch, Modality::Sketch);
    auto ranked = knn(index, retrieval_vector(embedded), std::max(k, rerank_m));
    if (rerank_m > 0) ranked = rerank(model.cross, embedded, ranked, rerank_m, lookup);
    if (ranked.entries.size() > k) ranked.entries.resize(k);
    return ranked;
}

namespace {

// Ids are dataset-relative paths; refuse anything that could leave the root.
bool safe_relative(const std::string& id) {
    if (id.empty() || id.front() == '/' || id.find('\\') != std::string::npos) return false;
    for (const auto& part : fs::path(id))
        if (part == ".." || part == ".") return false;
    return true;
}

}  // namespace

EncodedLookup asset_lookup(const Model<float>& model, const fs::path& root) {
    return [&model, root](const std::string& id) -> std::optional<TokenEmbedding<float>> {
        if (root.empty() || !safe_relative(id)) return std::nullopt;
        try {
            NoGradGuard no_grad;
            return model.embed(read_image(root / id), Modality::Image);
        } catch (const InputError&) {
            return std::nullopt;
        }
    };
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::string clean;
    clean.reserve(text.size());
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
    if (clean.size() % 4 != 0) throw InputError("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw InputError("invalid base64");
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    std::size_t pad = 0;
    if (!clean.empty() && clean.back() == '=') ++pad;
    if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto ckpt = load_checkpoint(cfg_.checkpoint);
    auto index = load_index(cfg_.index);
    if (index.d != ckpt.model.config.dim) {
        throw ConfigError("index width " + std::to_string(index.d) + " does not match model width " +
                          std::to_string(ckpt.model.config.dim));
    }
    if (auto w = fingerprint_warning(index, ckpt.fingerprint)) {
        if (!cfg_.force) throw ConfigError(*w + " (use --force to start anyway)");
        warnings_.push_back(*w);
    }
    fingerprint_ = ckpt.fingerprint;
    model_ = std::make_shared<const Model<float>>(std::move(ckpt.model));
    index_ = std::make_shared<const RetrievalIndex>(std::move(index));
}

Service::Service(ServiceConfig cfg, Model<float> model, RetrievalIndex index) : cfg_(std::move(cfg)) {
    cfg_.validate();
    fingerprint_ = model_fingerprint(model);
    if (auto w = fingerprint_warning(index, fingerprint_)) {
        if (!cfg_.force) throw ConfigError(*w);
        warnings_.push_back(*w);
    }
    model_ = std::make_shared<const Model<float>>(std::move(model));
    index_ = std::make_shared<const RetrievalIndex>(std::move(index));
}

Service::~Service() { stop(); }

std::shared_ptr<const RetrievalIndex> Service::index() const {
    std::lock_guard lock(index_mutex_);
    return index_;
}

HttpReply Service::health() const {
    const auto idx = index();
    return {200, {{"status", "ok"}, {"d", idx->d}, {"index_size", idx->size()}}};
}

HttpReply Service::classes() const {
    const auto idx = index();
    std::set<std::string> labels;
    for (const auto& e : idx->entries) labels.insert(e.label);
    return {200, {{"classes", std::vector<std::string>(labels.begin(), labels.end())}}};
}

HttpReply Service::query(const std::string& body) const {
    const auto t0 = std::chrono::steady_clock::now();
    if (body.size() > kMaxRequestBytes) return {413, {{"error", "request body exceeds 2 MiB"}}};
    nlohmann::json req;
    try {
        req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        return {400, {{"error", "body is not valid JSON"}}};
    }
    if (!req.is_object() || !req.contains("sketch_png_base64") || !req["sketch_png_base64"].is_string()) {
        return {400, {{"error", "missing string field sketch_png_base64"}}};
    }
    std::size_t k = cfg_.k;
    if (req.contains("k")) {
        if (!req["k"].is_number_integer() || req["k"].get<long long>() < 1) {
            return {400, {{"error", "k must be a positive integer"}}};
        }
        k = req["k"].get<std::size_t>();
    }
    bool use_rerank = false;
    if (req.contains("rerank")) {
        if (!req["rerank"].is_boolean()) return {400, {{"error", "rerank must be a boolean"}}};
        use_rerank = req["rerank"].get<bool>();
    }
    Image sketch;
    try {
        sketch = decode_image(base64_decode(req["sketch_png_base64"].get<std::string>()));
    } catch (const InputError& e) {
        return {400, {{"error", std::string("undecodable sketch: ") + e.what()}}};
    }

    const auto idx = index();
    const auto ranked = retrieve(*model_, *idx, sketch, k, use_rerank ? cfg_.rerank_m : 0,
                                 asset_lookup(*model_, cfg_.asset_root));
    auto results = nlohmann::json::array();
    for (const auto& e : ranked.entries) {
        results.push_back({{"id", e.id},
                           {"label", e.label},
                           {"distance", e.distance},
                           {"thumbnail_url", "/image/" + e.id},
                           {"mode", e.mode == DistanceMode::Post ? "post" : "pre"}});
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json out{{"results", results}, {"latency_ms", ms}};
    if (!ranked.warnings.empty()) out["warnings"] = ranked.warnings;
    return {200, out};
}

HttpReply Service::rebuild() {
    if (cfg_.asset_root.empty()) return {400, {{"error", "service has no asset root to index"}}};
    std::lock_guard rebuild_lock(rebuild_mutex_);
    const auto data = load_dataset(cfg_.asset_root);
    const auto images = data.subset([](const DatasetItem& it) { return it.modality == Modality::Image; });
    BuildReport report;
    ModelEmbedder embedder(*model_);
    auto fresh = std::make_shared<const RetrievalIndex>(build_index(embedder, images, fingerprint_, &report));
    {
        std::lock_guard lock(index_mutex_);
        index_ = fresh;
    }
    return {200, {{"status", "ok"}, {"index_size", fresh->size()}, {"warnings", report.warnings}}};
}

namespace {

std::string opaque_id() {
    static std::atomic<std::uint64_t> counter{0};
    static const std::uint64_t salt = std::random_device{}();
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << (salt ^ (counter.fetch_add(1) * 0x9E3779B97F4A7C15ull));
    return s.str();
}

void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
}

void send_internal_error(httplib::Response& res, const std::string& detail) {
    const auto id = opaque_id();
    std::fprintf(stderr, "[mlgt] internal error %s: %s\n", id.c_str(), detail.c_str());
    send(res, {500, {{"error", "internal error"}, {"id", id}}});
}

const char* content_type(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    return "application/octet-stream";
}

}  // namespace

void Service::install_routes() {
    auto& s = *server_;
    s.set_payload_max_length(kMaxRequestBytes);
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            send_internal_error(res, e.what());
        } catch (...) {
            send_internal_error(res, "unknown exception");
        }
    });
    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) send(res, {413, {{"error", "request body exceeds 2 MiB"}}});
        else if (res.status == 404) send(res, {404, {{"error", "not found"}}});
    });
    s.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    s.Get("/classes", [this](const httplib::Request&, httplib::Response& res) { send(res, classes()); });
    s.Post("/query", [this](const httplib::Request& req, httplib::Response& res) { send(res, query(req.body)); });
    s.Post("/index/rebuild", [this](const httplib::Request&, httplib::Response& res) { send(res, rebuild()); });
    s.Get("/image/(.+)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto path = cfg_.asset_root / id;
        if (cfg_.asset_root.empty() || !safe_relative(id) || !fs::is_regular_file(path)) {
            send(res, {404, {{"error", "no image " + id}}});
            return;
        }
        const auto bytes = read_file_bytes(path);
        res.set_content(std::string(bytes.begin(), bytes.end()), content_type(path));
    });
}

int Service::bind() {
    server_ = std::make_unique<httplib::Server>();
    install_routes();
    int port = cfg_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(cfg_.bind);
        if (port < 0) throw ConfigError("cannot bind " + cfg_.bind);
    } else if (!server_->bind_to_port(cfg_.bind, port)) {
        throw ConfigError("cannot bind " + cfg_.bind + ":" + std::to_string(port));
    }
    return port;
}

int Service::start() {
    const int port = bind();
    thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::run() {
    bind();
    server_->listen_after_bind();
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_ && thread_->joinable()) thread_->join();
    thread_.reset();
}

}  // namespace mlgt
