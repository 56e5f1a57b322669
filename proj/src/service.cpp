#include "qtitle/service.hpp"

#include <filesystem>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qtitle/checkpoint.hpp"

namespace qtitle {

namespace {

std::string quote(const std::string& s) {
    return nlohmann::json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

Response error(int status, const std::string& code, const std::string& message) {
    return {status, fmt::format("{{\"error\":{},\"message\":{}}}", quote(code), quote(message))};
}

}  // namespace

ServiceState::ServiceState(Seq2SeqModel m, IndexArtifact a, std::string version, ServiceOptions opts)
    : model(std::move(m)),
      index(std::move(a.index)),
      lsh(index, a.lsh),
      model_version(std::move(version)),
      options(opts),
      started(std::chrono::steady_clock::now()) {
    if (index.dim() != model.config.annotation_dim())
        throw std::runtime_error(fmt::format("index dimension {} does not match model embedding dimension {}",
                                             index.dim(), model.config.annotation_dim()));
}

std::unique_ptr<ServiceState> load_artifacts(const std::string& model_path, const std::string& index_path,
                                             const ServiceOptions& options) {
    auto wrap = [](const std::string& path, const std::exception& e) {
        const std::string what = e.what();
        return std::runtime_error(what.rfind(path, 0) == 0 ? what : fmt::format("{}: {}", path, what));
    };
    std::optional<Seq2SeqModel> model;
    try {
        model.emplace(load_checkpoint(model_path));
    } catch (const std::exception& e) {
        throw wrap(model_path, e);
    }
    std::string version = file_fingerprint(model_path);
    IndexArtifact artifact;
    try {
        artifact = load_index(index_path);
    } catch (const std::exception& e) {
        throw wrap(index_path, e);
    }
    try {
        return std::make_unique<ServiceState>(std::move(*model), std::move(artifact), std::move(version), options);
    } catch (const std::exception& e) {
        throw wrap(index_path, e);
    }
}

Response handle_query(const ServiceState& state, const std::string& body) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& opt = state.options;
    if (body.size() > opt.max_body_bytes)
        return error(413, "too_large", fmt::format("request body exceeds {} bytes", opt.max_body_bytes));

    std::string code;
    try {
        const auto j = nlohmann::json::parse(body);
        if (!j.is_object() || !j.contains("code") || !j["code"].is_string())
            return error(400, "bad_request", "expected a JSON object with a string field \"code\"");
        if (j.contains("language") && !j["language"].is_string() && !j["language"].is_null())
            return error(400, "bad_request", "\"language\" must be a string");
        code = j["code"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return error(400, "bad_request", "request body is not valid JSON");
    }

    const auto tokens = preprocess_code(code);
    if (tokens.empty()) return error(400, "empty_input", "code is empty");
    if (tokens.size() > opt.max_tokens)
        return error(400, "too_long",
                     fmt::format("code has {} tokens after preprocessing; the limit is {}", tokens.size(), opt.max_tokens));

    std::string out;
    try {
        BeamConfig bc;
        bc.beam = opt.beam;
        bc.k = std::min(opt.generated_k, opt.beam);
        const auto generated = beam_search(tokens, state.model, bc);
        const auto hits = lsh_topk(embed_snippet(tokens, state.model), state.index, state.lsh, opt.retrieved_k);

        out = "{\"generated\":[";
        for (std::size_t i = 0; i < generated.size(); ++i) {
            if (i) out += ',';
            out += fmt::format("{{\"title\":{},\"score\":{:.6f}}}", quote(join_tokens(generated[i].title)),
                               generated[i].score);
        }
        out += "],\"retrieved\":[";
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (i) out += ',';
            const auto& m = state.index.meta[hits[i].row];
            out += fmt::format("{{\"title\":{},\"url\":{},\"score\":{:.6f}}}", quote(m.title), quote(m.url),
                               hits[i].cosine);
        }
        out += "]}";
    } catch (const std::exception& e) {
        return error(500, "model_error", e.what());
    }

    ++state.queries;
    state.query_micros += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count());
    return {200, std::move(out)};
}

Response handle_health(const ServiceState& state) {
    const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - state.started).count();
    return {200, fmt::format("{{\"status\":\"ok\",\"model_version\":{},\"corpus_size\":{},\"uptime_seconds\":{:.6f}}}",
                             quote(state.model_version), state.index.rows(), uptime)};
}

struct HttpService::Impl {
    httplib::Server server;
    std::thread thread;
};

HttpService::HttpService(const ServiceState& state, std::string static_dir)
    : impl_(std::make_unique<Impl>()) {
    auto& srv = impl_->server;
    const ServiceState* st = &state;
    // Oversized bodies still reach handle_query so it can answer with the JSON error shape.
    srv.set_payload_max_length(state.options.max_body_bytes * 4);
    srv.Post("/api/query", [st](const httplib::Request& req, httplib::Response& res) {
        const auto r = handle_query(*st, req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    });
    srv.Get("/api/health", [st](const httplib::Request&, httplib::Response& res) {
        const auto r = handle_health(*st);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        const auto r = error(500, "internal", what);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    });
    if (!static_dir.empty()) {
        if (!std::filesystem::is_directory(static_dir))
            throw std::runtime_error(fmt::format("{}: static directory not found", static_dir));
        srv.set_mount_point("/", static_dir);
    }
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        const int bound = srv.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error(fmt::format("cannot bind {}:<any>", host));
        return bound;
    }
    if (!srv.bind_to_port(host, port)) throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
    return port;
}

void HttpService::serve() { impl_->server.listen_after_bind(); }

int HttpService::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { serve(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HttpService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace qtitle
