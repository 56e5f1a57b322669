#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qtitle/dump_reader.hpp"

namespace qtitle {

/// Ordered tokens; no token is empty or contains whitespace.
using TokenSequence = std::vector<std::string>;

enum class TextMode { code, title };

inline constexpr std::size_t kMinCodeTokens = 16;
inline constexpr std::size_t kMaxCodeTokens = 128;
inline constexpr std::size_t kMinTitleTokens = 4;
inline constexpr std::size_t kMaxTitleTokens = 16;
inline constexpr std::int64_t kMinScore = 1;

/// Whitespace split, then every ASCII character that is neither alphanumeric
/// nor '_' becomes its own token. Titles are lowercased; code keeps its case.
/// Bytes >= 0x80 (UTF-8 continuation/lead bytes) count as word characters.
TokenSequence tokenize(std::string_view text, TextMode mode);

/// Replaces every single- or double-quoted literal on one line (backslash
/// escapes honoured) with the word STRING. Runs on raw code text, before
/// tokenization, since literals may contain spaces.
std::string mask_string_literals(std::string_view code);

/// Numeric literals (decimal, decimal with fraction, 0x-hex) become NUMBER and
/// quoted-literal tokens become STRING. A fraction split by the tokenizer
/// (`3`, `.`, `14`) collapses into a single NUMBER.
TokenSequence normalize_code(const TokenSequence& tokens);

/// mask_string_literals -> tokenize(code) -> normalize_code.
TokenSequence preprocess_code(std::string_view code);
TokenSequence preprocess_title(std::string_view title);

struct ExtractedPair {
    std::string code;
    std::string title;
    std::int64_t score = 0;
    std::int64_t post_id = 0;
};

/// Joins the contents of all <code> elements (document order, newline
/// separated, trailing whitespace of each block trimmed, HTML entities
/// decoded). Empty `tag_filter` accepts any tags.
std::optional<ExtractedPair> extract_pair(const RawPost& post, std::string_view tag_filter);

/// {how, what, why, which, when, where, who}, whole-token, case-insensitive.
bool is_interrogative(std::string_view token);

bool filter_pair(const TokenSequence& code, const TokenSequence& title, std::int64_t score);

std::string join_tokens(const TokenSequence& tokens, std::string_view sep = " ");

}  // namespace qtitle
