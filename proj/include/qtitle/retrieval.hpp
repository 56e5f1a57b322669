#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "qtitle/model.hpp"

namespace qtitle {

struct RowMeta {
    std::int64_t post_id = 0;
    std::string title;
    std::string url;

    bool operator==(const RowMeta&) const = default;
};

/// s x d matrix of unit-norm snippet embeddings, one row per corpus pair.
struct EmbeddingIndex {
    Tensor C;
    std::vector<RowMeta> meta;

    std::size_t rows() const { return C.rows(); }
    std::size_t dim() const { return C.cols(); }
};

struct LshConfig {
    std::size_t tables = 8;
    std::size_t planes = 16;  // at most 64
    std::uint64_t seed = 1;
    /// Indexes with fewer rows are always scanned exactly.
    std::size_t exact_below = 50000;

    void validate() const;
};

/// Random-hyperplane signatures, one bucket map per table.
class LshIndex {
  public:
    LshIndex(const EmbeddingIndex& index, const LshConfig& config);

    const LshConfig& config() const { return config_; }
    std::uint64_t signature(std::size_t table, std::span<const double> v) const;
    /// Row ids sharing the query's bucket in any table, ascending, no duplicates.
    std::vector<std::uint32_t> candidates(std::span<const double> query) const;
    const std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>& buckets(std::size_t table) const {
        return buckets_.at(table);
    }

  private:
    LshConfig config_;
    std::size_t dim_ = 0;
    std::size_t rows_ = 0;
    Vec planes_;  // tables x planes x d
    std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> buckets_;
};

struct Hit {
    std::size_t row = 0;
    double cosine = 0.0;
};

Vec normalized(std::span<const double> v);

/// Exhaustive scan. Cosine non-increasing, ties by lower row.
std::vector<Hit> exact_topk(std::span<const double> query, const EmbeddingIndex& index, std::size_t k);

/// Bucket candidates reranked by exact cosine; falls back to exact_topk when the
/// index is below config.exact_below rows or fewer than k candidates exist.
std::vector<Hit> lsh_topk(std::span<const double> query, const EmbeddingIndex& index, const LshIndex& lsh,
                          std::size_t k, bool* fell_back = nullptr);

/// Encoder summary vector of a preprocessed snippet, L2-normalized.
Vec embed_snippet(const TokenSequence& code, const Seq2SeqModel& model);

EmbeddingIndex build_index(const std::vector<PairRecord>& pairs, const Seq2SeqModel& model);

/// Embeddings, metadata and LSH parameters; tables are rebuilt from the seed.
struct IndexArtifact {
    EmbeddingIndex index;
    LshConfig lsh;
};

// Layout: "Q2QI", u32 version, u64 s, u64 d, s*d f64, u64 byte length of the
// JSON-lines metadata, metadata, then u64 seed, u64 tables, u64 planes, u64 exact_below.
inline constexpr std::uint32_t kIndexVersion = 1;

void save_index(const IndexArtifact& artifact, std::ostream& out);
void save_index(const IndexArtifact& artifact, const std::string& path);
IndexArtifact load_index(std::istream& in, const std::string& source = "index");
IndexArtifact load_index(const std::string& path);

/// Number of load_index calls in this process.
std::size_t index_load_count();

}  // namespace qtitle
