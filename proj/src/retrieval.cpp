#include "qtitle/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qtitle/binary_io.hpp"

namespace qtitle {

namespace {

std::atomic<std::size_t> g_index_loads{0};

bool hit_before(const Hit& a, const Hit& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.row < b.row;
}

void keep_top(std::vector<Hit>& hits, std::size_t k) {
    k = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hit_before);
    hits.resize(k);
}

}  // namespace

void LshConfig::validate() const {
    if (tables == 0) throw std::invalid_argument("lsh: tables must be positive");
    if (planes == 0 || planes > 64) throw std::invalid_argument("lsh: planes must be in [1, 64]");
}

LshIndex::LshIndex(const EmbeddingIndex& index, const LshConfig& config)
    : config_(config), dim_(index.dim()), rows_(index.rows()) {
    config_.validate();
    Rng rng(config_.seed);
    planes_.resize(config_.tables * config_.planes * dim_);
    for (auto& x : planes_) x = rng.normal();
    buckets_.resize(config_.tables);
    for (std::size_t r = 0; r < rows_; ++r) {
        const auto row = index.C.row(r);
        for (std::size_t t = 0; t < config_.tables; ++t)
            buckets_[t][signature(t, row)].push_back(static_cast<std::uint32_t>(r));
    }
}

std::uint64_t LshIndex::signature(std::size_t table, std::span<const double> v) const {
    if (v.size() != dim_) throw ShapeError(fmt::format("lsh: query dim {} != index dim {}", v.size(), dim_));
    std::uint64_t sig = 0;
    const double* plane = planes_.data() + table * config_.planes * dim_;
    for (std::size_t p = 0; p < config_.planes; ++p, plane += dim_) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += plane[i] * v[i];
        if (s >= 0.0) sig |= std::uint64_t{1} << p;
    }
    return sig;
}

std::vector<std::uint32_t> LshIndex::candidates(std::span<const double> query) const {
    std::vector<std::uint32_t> out;
    for (std::size_t t = 0; t < config_.tables; ++t) {
        auto it = buckets_[t].find(signature(t, query));
        if (it != buckets_[t].end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Vec normalized(std::span<const double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (!(n > 0.0)) throw NumericError("normalize: zero or non-finite vector");
    Vec out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return out;
}

std::vector<Hit> exact_topk(std::span<const double> query, const EmbeddingIndex& index, std::size_t k) {
    if (k < 1) throw std::invalid_argument("exact_topk: k must be >= 1");
    const auto q = normalized(query);
    std::vector<Hit> hits(index.rows());
    for (std::size_t r = 0; r < index.rows(); ++r) hits[r] = {r, dot(q, index.C.row(r))};
    keep_top(hits, k);
    return hits;
}

std::vector<Hit> lsh_topk(std::span<const double> query, const EmbeddingIndex& index, const LshIndex& lsh,
                          std::size_t k, bool* fell_back) {
    if (k < 1) throw std::invalid_argument("lsh_topk: k must be >= 1");
    if (fell_back) *fell_back = false;
    const auto q = normalized(query);
    std::vector<Hit> hits;
    if (index.rows() >= lsh.config().exact_below) {
        for (auto r : lsh.candidates(q)) hits.push_back({r, dot(q, index.C.row(r))});
        if (hits.size() >= k) {
            keep_top(hits, k);
            return hits;
        }
    }
    if (fell_back) *fell_back = true;
    return exact_topk(q, index, k);
}

Vec embed_snippet(const TokenSequence& code, const Seq2SeqModel& model) {
    if (code.empty()) throw std::invalid_argument("embed_snippet: empty code sequence");
    std::vector<TokenId> ids;
    ids.reserve(code.size());
    for (const auto& t : code) ids.push_back(model.code_vocab.id_of(t));
    const auto enc = encode(ids, Mask(ids.size(), 1), model.params, model.config);
    return normalized(enc.s);
}

EmbeddingIndex build_index(const std::vector<PairRecord>& pairs, const Seq2SeqModel& model) {
    if (pairs.empty()) throw std::invalid_argument("build_index: empty corpus");
    const auto d = model.config.annotation_dim();
    EmbeddingIndex index{Tensor({pairs.size(), d}), {}};
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto v = embed_snippet(pairs[r].code, model);
        std::copy(v.begin(), v.end(), index.C.row(r).begin());
        const auto& p = pairs[r];
        index.meta.push_back({p.post_id, join_tokens(p.title), p.url.empty() ? question_url(p.post_id) : p.url});
    }
    return index;
}

void save_index(const IndexArtifact& a, std::ostream& out) {
    const auto& idx = a.index;
    if (idx.meta.size() != idx.rows()) throw std::invalid_argument("save_index: metadata does not match rows");
    BinaryWriter w(out);
    w.bytes("Q2QI", 4);
    w.u32(kIndexVersion);
    w.u64(idx.rows());
    w.u64(idx.dim());
    for (double x : idx.C.values()) w.f64(x);
    std::string meta;
    for (const auto& m : idx.meta) {
        nlohmann::ordered_json j;
        j["post_id"] = m.post_id;
        j["title"] = m.title;
        j["url"] = m.url;
        meta += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        meta += '\n';
    }
    w.u64(meta.size());
    w.bytes(meta.data(), meta.size());
    w.u64(a.lsh.seed);
    w.u64(a.lsh.tables);
    w.u64(a.lsh.planes);
    w.u64(a.lsh.exact_below);
}

void save_index(const IndexArtifact& a, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", tmp));
        save_index(a, out);
        out.flush();
        if (!out) throw std::runtime_error(fmt::format("{}: write failed", tmp));
    }
    std::filesystem::rename(tmp, path);
}

IndexArtifact load_index(std::istream& in, const std::string& source) {
    ++g_index_loads;
    BinaryReader r(in, source);
    r.expect_magic("Q2QI");
    const auto version = r.u32();
    if (version != kIndexVersion)
        r.fail(fmt::format("index version mismatch: expected {}, found {}", kIndexVersion, version));
    const auto s = r.u64();
    const auto d = r.u64();
    if (s == 0 || d == 0 || s > (1ull << 32) || d > (1ull << 16))
        r.fail(fmt::format("implausible index shape {} x {}", s, d));
    IndexArtifact a;
    a.index.C = Tensor({static_cast<std::size_t>(s), static_cast<std::size_t>(d)});
    for (auto& x : a.index.C.values()) x = r.f64();
    const auto meta_len = r.u64();
    if (meta_len > (1ull << 34)) r.fail("implausible metadata length");
    std::string meta(meta_len, '\0');
    r.bytes(meta.data(), meta.size());
    std::istringstream lines(meta);
    std::string line;
    while (std::getline(lines, line)) {
        try {
            const auto j = nlohmann::json::parse(line);
            a.index.meta.push_back({j.at("post_id").get<std::int64_t>(), j.at("title").get<std::string>(),
                                    j.at("url").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            r.fail(fmt::format("metadata row {}: {}", a.index.meta.size(), e.what()));
        }
    }
    if (a.index.meta.size() != s) r.fail(fmt::format("{} metadata rows for {} embeddings", a.index.meta.size(), s));
    for (std::size_t i = 0; i < s; ++i) {
        double n = 0.0;
        for (double x : a.index.C.row(i)) n += x * x;
        if (!(std::abs(std::sqrt(n) - 1.0) <= 1e-6)) r.fail(fmt::format("row {} is not unit norm", i));
    }
    a.lsh.seed = r.u64();
    a.lsh.tables = r.u64();
    a.lsh.planes = r.u64();
    a.lsh.exact_below = r.u64();
    try {
        a.lsh.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return a;
}

IndexArtifact load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("{}: cannot open index", path));
    return load_index(in, path);
}

std::size_t index_load_count() { return g_index_loads.load(); }

}  // namespace qtitle
