#include "qtitle/text.hpp"

#include <algorithm>
#include <array>

namespace qtitle {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_word(unsigned char c) {
    return c >= 0x80 || c == '_' || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
           (c >= 'A' && c <= 'Z');
}

bool is_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_hex_literal(std::string_view s) {
    if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) return false;
    return std::all_of(s.begin() + 2, s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
    });
}

bool is_quoted(std::string_view s) {
    return s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front();
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

TokenSequence tokenize(std::string_view text, TextMode mode) {
    TokenSequence out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_word(c)) {
            word += mode == TextMode::title ? ascii_lower(ch) : ch;
        } else {
            flush();
            out.emplace_back(1, ch);
        }
    }
    flush();
    return out;
}

std::string mask_string_literals(std::string_view code) {
    std::string out;
    out.reserve(code.size());
    std::size_t i = 0;
    while (i < code.size()) {
        const char c = code[i];
        if (c != '"' && c != '\'') {
            out += c;
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        bool closed = false;
        while (j < code.size() && code[j] != '\n') {
            if (code[j] == '\\' && j + 1 < code.size()) {
                j += 2;
                continue;
            }
            if (code[j] == c) {
                closed = true;
                break;
            }
            ++j;
        }
        if (!closed) {
            out += c;
            ++i;
            continue;
        }
        out += " STRING ";
        i = j + 1;
    }
    return out;
}

TokenSequence normalize_code(const TokenSequence& tokens) {
    TokenSequence out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (is_quoted(t)) {
            out.emplace_back("STRING");
        } else if (is_hex_literal(t)) {
            out.emplace_back("NUMBER");
        } else if (is_digits(t)) {
            if (i + 2 < tokens.size() && tokens[i + 1] == "." && is_digits(tokens[i + 2])) i += 2;
            out.emplace_back("NUMBER");
        } else {
            out.push_back(t);
        }
    }
    return out;
}

TokenSequence preprocess_code(std::string_view code) {
    return normalize_code(tokenize(mask_string_literals(code), TextMode::code));
}

TokenSequence preprocess_title(std::string_view title) { return tokenize(title, TextMode::title); }

std::optional<ExtractedPair> extract_pair(const RawPost& post, std::string_view tag_filter) {
    if (post.title.empty()) return std::nullopt;
    if (!tag_filter.empty() &&
        std::find(post.tags.begin(), post.tags.end(), tag_filter) == post.tags.end())
        return std::nullopt;

    const std::string_view html = post.body_html;
    std::string joined;
    bool any = false;
    std::size_t pos = 0;
    while (true) {
        auto open = html.find("<code", pos);
        if (open == std::string_view::npos) break;
        const char after = open + 5 < html.size() ? html[open + 5] : '\0';
        if (after != '>' && after != ' ') {
            pos = open + 5;
            continue;
        }
        const auto open_end = html.find('>', open);
        if (open_end == std::string_view::npos) break;
        const auto close = html.find("</code>", open_end + 1);
        if (close == std::string_view::npos) break;
        std::string block = decode_entities(html.substr(open_end + 1, close - open_end - 1));
        while (!block.empty() && is_space(static_cast<unsigned char>(block.back()))) block.pop_back();
        if (!block.empty()) {
            if (any) joined += '\n';
            joined += block;
            any = true;
        }
        pos = close + 7;
    }
    if (!any) return std::nullopt;
    return ExtractedPair{std::move(joined), post.title, post.score, post.post_id};
}

bool is_interrogative(std::string_view token) {
    static constexpr std::array<std::string_view, 7> kWords = {"how",  "what",  "why", "which",
                                                               "when", "where", "who"};
    std::string lower(token);
    std::transform(lower.begin(), lower.end(), lower.begin(), ascii_lower);
    return std::find(kWords.begin(), kWords.end(), lower) != kWords.end();
}

bool filter_pair(const TokenSequence& code, const TokenSequence& title, std::int64_t score) {
    if (score < kMinScore) return false;
    if (code.size() < kMinCodeTokens || code.size() > kMaxCodeTokens) return false;
    if (title.size() < kMinTitleTokens || title.size() > kMaxTitleTokens) return false;
    return std::any_of(title.begin(), title.end(), [](const auto& t) { return is_interrogative(t); });
}

std::string join_tokens(const TokenSequence& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

}  // namespace qtitle
