#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include "qtitle/inference.hpp"
#include "qtitle/retrieval.hpp"

namespace qtitle {

struct ServiceOptions {
    std::size_t beam = 5;
    std::size_t generated_k = 3;
    std::size_t retrieved_k = 5;
    std::size_t max_tokens = 4096;
    std::size_t max_body_bytes = 1u << 20;
};

/// Everything a request needs, loaded once and read-only afterwards.
struct ServiceState {
    Seq2SeqModel model;
    EmbeddingIndex index;
    LshIndex lsh;
    std::string model_version;
    ServiceOptions options;
    std::chrono::steady_clock::time_point started;

    // Monotonic counters; the only state requests write.
    mutable std::atomic<std::uint64_t> queries{0};
    mutable std::atomic<std::uint64_t> query_micros{0};

    ServiceState(Seq2SeqModel m, IndexArtifact a, std::string version, ServiceOptions opts);
};

/// Throws std::runtime_error naming the offending path and the reason.
std::unique_ptr<ServiceState> load_artifacts(const std::string& model_path, const std::string& index_path,
                                             const ServiceOptions& options = {});

struct Response {
    int status = 200;
    std::string body;
};

/// Body is the raw request JSON: {"code": string, "language": string?}.
Response handle_query(const ServiceState& state, const std::string& body);
Response handle_health(const ServiceState& state);

/// HTTP front end over a loaded state: POST /api/query, GET /api/health, and
/// optional static files under /.
class HttpService {
  public:
    HttpService(const ServiceState& state, std::string static_dir = {});
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port, throws on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void serve();
    /// bind + serve on a background thread.
    int start(const std::string& host, int port);
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qtitle
