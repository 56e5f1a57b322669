#pragma once

// A trained copy model plus its index, written to disk and loaded the way
// the server loads them.

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "qtitle/checkpoint.hpp"
#include "qtitle/retrieval.hpp"
#include "qtitle/service.hpp"
#include "support.hpp"

namespace qtitle::fixtures {

struct ServiceArtifacts {
    std::string model_path;
    std::string index_path;
    std::vector<PairRecord> corpus;
};

inline ServiceArtifacts write_service_artifacts(const std::string& name, std::size_t n = 20) {
    const auto dir = temp_dir(name);
    ServiceArtifacts a;
    a.corpus = copy_corpus(n);
    a.model_path = (dir / "model.bin").string();
    a.index_path = (dir / "index.bin").string();
    const auto model = trained_copy_model(n);
    save_checkpoint(model, a.model_path);
    IndexArtifact idx{build_index(a.corpus, model), LshConfig{}};
    save_index(idx, a.index_path);
    return a;
}

inline std::string joined(const TokenSequence& t) {
    std::string s;
    for (const auto& w : t) s += (s.empty() ? "" : " ") + w;
    return s;
}

/// {"code": code} with the same escaping the CLI uses.
inline std::string query_body(const std::string& code) {
    nlohmann::json j;
    j["code"] = code;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace qtitle::fixtures
