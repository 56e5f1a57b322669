#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qtitle/text.hpp"

namespace qtitle {

using TokenId = std::int64_t;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId end = 2;
inline constexpr TokenId unk = 3;
inline constexpr TokenId number = 4;
inline constexpr TokenId string = 5;
inline constexpr std::size_t count = 6;
}  // namespace special

/// Token <-> id map. The six specials hold ids 0..5; the rest are ordered by
/// descending count, ties broken lexicographically.
class Vocabulary {
  public:
    Vocabulary();

    std::size_t size() const { return tokens_.size(); }
    std::optional<TokenId> find(std::string_view token) const;
    /// UNK for unknown tokens.
    TokenId id_of(std::string_view token) const;
    const std::string& token_of(TokenId id) const;
    std::int64_t count_of(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Appends a non-special token; throws if already present.
    void add(std::string token, std::int64_t count);

    /// `token<TAB>count` per line; line number - 1 is the id.
    void save(std::ostream& out) const;
    void save(const std::string& path) const;
    static Vocabulary load(std::istream& in, const std::string& source = "vocabulary");
    static Vocabulary load(const std::string& path);

    bool operator==(const Vocabulary& other) const {
        return tokens_ == other.tokens_ && counts_ == other.counts_;
    }

  private:
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<std::string, TokenId> ids_;
};

const std::vector<std::string>& special_tokens();

/// Builds a vocabulary from token sequences. `max_size` counts the specials.
Vocabulary build_vocab(std::span<const TokenSequence> sequences, std::size_t max_size,
                       std::int64_t min_count);

/// Per-example extension of a base vocabulary with source-only tokens, in
/// first-occurrence order, at ids base_size, base_size + 1, ...
struct ExtendedVocab {
    std::size_t base_size = 0;
    std::vector<std::string> oov_tokens;
    std::unordered_map<std::string, TokenId> oov_id_of;

    std::size_t size() const { return base_size + oov_tokens.size(); }
    std::optional<TokenId> find(std::string_view token) const;
};

struct ExtendedEncoding {
    std::vector<TokenId> base_ids;
    std::vector<TokenId> ext_ids;
    ExtendedVocab ext;
};

ExtendedEncoding encode_with_extended_vocab(const TokenSequence& seq, const Vocabulary& vocab);

/// Ids in the extended space: vocabulary id if present, else the OOV slot of a
/// source token, else UNK.
std::vector<TokenId> encode_target(const TokenSequence& seq, const Vocabulary& vocab,
                                   const ExtendedVocab& ext);

}  // namespace qtitle
