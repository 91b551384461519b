#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlgt/index.hpp"
#include "mlgt/model.hpp"

namespace httplib {
class Server;
}

namespace mlgt {

/// Request bodies above this size are answered with 413.
inline constexpr std::size_t kMaxRequestBytes = 2 * 1024 * 1024;

struct ServiceConfig {
    std::string bind = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path checkpoint;
    std::filesystem::path index;
    std::size_t k = 10;
    std::size_t rerank_m = 20;
    /// Dataset root: /image/{id} serves asset_root/id, rebuild re-indexes its images.
    std::filesystem::path asset_root;
    /// Start even when index and checkpoint fingerprints differ.
    bool force = false;

    void validate() const;
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

/// The single ranking path shared by the service and the CLI: knn over
/// max(k, M) candidates, optional post-mode rerank of the first M, then the
/// first k.
RankedResult retrieve(const Model<float>& model, const RetrievalIndex& index, const Image& sketch, std::size_t k,
                      std::size_t rerank_m, const EncodedLookup& lookup);

/// Loads and encodes dataset images by id from a root directory.
EncodedLookup asset_lookup(const Model<float>& model, const std::filesystem::path& root);

/// Standard base64 (whitespace ignored). Throws InputError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

struct HttpReply {
    int status = 200;
    nlohmann::json body;
};

class Service {
   public:
    /// Loads checkpoint and index; throws ConfigError on a fingerprint
    /// mismatch unless cfg.force.
    explicit Service(ServiceConfig cfg);
    Service(ServiceConfig cfg, Model<float> model, RetrievalIndex index);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

    const std::vector<std::string>& warnings() const { return warnings_; }
    std::shared_ptr<const RetrievalIndex> index() const;

    // Handlers, callable without HTTP.
    HttpReply health() const;
    HttpReply query(const std::string& body) const;
    HttpReply classes() const;
    HttpReply rebuild();

   private:
    void install_routes();
    int bind();

    ServiceConfig cfg_;
    std::shared_ptr<const Model<float>> model_;
    Fingerprint fingerprint_{};
    mutable std::mutex index_mutex_;
    std::shared_ptr<const RetrievalIndex> index_;
    std::mutex rebuild_mutex_;
    std::vector<std::string> warnings_;
    std::unique_ptr<httplib::Server> server_;
    std::unique_ptr<std::thread> thread_;
};

}  // namespace mlgt
