#include "qtitle/vocab.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "qtitle/binary_io.hpp"

namespace qtitle {

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> kSpecials = {"<pad>", "<s>",    "</s>",
                                                       "<unk>", "NUMBER", "STRING"};
    return kSpecials;
}

Vocabulary::Vocabulary() {
    for (const auto& s : special_tokens()) {
        ids_.emplace(s, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(s);
        counts_.push_back(0);
    }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

TokenId Vocabulary::id_of(std::string_view token) const { return find(token).value_or(special::unk); }

const std::string& Vocabulary::token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range(fmt::format("token id {} outside vocabulary of size {}", id, tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::add(std::string token, std::int64_t count) {
    if (token.empty()) throw std::invalid_argument("vocabulary tokens must be non-empty");
    auto [it, inserted] = ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (!inserted) throw std::invalid_argument(fmt::format("duplicate vocabulary token '{}'", token));
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
}

void Vocabulary::save(std::ostream& out) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path));
    save(out);
}

Vocabulary Vocabulary::load(std::istream& in, const std::string& source) {
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    const auto& specials = special_tokens();
    while (std::getline(in, line)) {
        ++lineno;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos)
            throw FormatError(fmt::format("{}:{}: expected token<TAB>count", source, lineno));
        std::string token = line.substr(0, tab);
        std::int64_t count = 0;
        const auto* b = line.data() + tab + 1;
        const auto* e = line.data() + line.size();
        auto [p, ec] = std::from_chars(b, e, count);
        if (ec != std::errc{} || p != e)
            throw FormatError(fmt::format("{}:{}: bad count", source, lineno));
        if (lineno <= specials.size()) {
            if (token != specials[lineno - 1])
                throw FormatError(fmt::format("{}:{}: expected special '{}', found '{}'", source, lineno,
                                              specials[lineno - 1], token));
            continue;
        }
        try {
            v.add(std::move(token), count);
        } catch (const std::invalid_argument& e) {
            throw FormatError(fmt::format("{}:{}: {}", source, lineno, e.what()));
        }
    }
    if (lineno < specials.size())
        throw FormatError(fmt::format("{}: only {} lines, the six specials are required", source, lineno));
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("{}: cannot open vocabulary", path));
    return load(in, path);
}

Vocabulary build_vocab(std::span<const TokenSequence> sequences, std::size_t max_size,
                       std::int64_t min_count) {
    if (max_size <= special::count)
        throw std::invalid_argument(fmt::format("vocabulary max_size must exceed {}", special::count));
    if (min_count < 1) throw std::invalid_argument("vocabulary min_count must be >= 1");

    const Vocabulary base;
    std::map<std::string, std::int64_t> counts;
    for (const auto& seq : sequences)
        for (const auto& t : seq)
            if (!base.find(t)) ++counts[t];

    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [token, count] : ranked) {
        if (v.size() >= max_size) break;
        if (count < min_count) break;
        v.add(token, count);
    }
    return v;
}

std::optional<TokenId> ExtendedVocab::find(std::string_view token) const {
    auto it = oov_id_of.find(std::string(token));
    if (it == oov_id_of.end()) return std::nullopt;
    return it->second;
}

ExtendedEncoding encode_with_extended_vocab(const TokenSequence& seq, const Vocabulary& vocab) {
    ExtendedEncoding out;
    out.ext.base_size = vocab.size();
    out.base_ids.reserve(seq.size());
    out.ext_ids.reserve(seq.size());
    for (const auto& t : seq) {
        if (auto id = vocab.find(t)) {
            out.base_ids.push_back(*id);
            out.ext_ids.push_back(*id);
            continue;
        }
        out.base_ids.push_back(special::unk);
        auto [it, inserted] =
            out.ext.oov_id_of.emplace(t, static_cast<TokenId>(vocab.size() + out.ext.oov_tokens.size()));
        if (inserted) out.ext.oov_tokens.push_back(t);
        out.ext_ids.push_back(it->second);
    }
    return out;
}

std::vector<TokenId> encode_target(const TokenSequence& seq, const Vocabulary& vocab,
                                   const ExtendedVocab& ext) {
    std::vector<TokenId> ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) {
        if (auto id = vocab.find(t))
            ids.push_back(*id);
        else
            ids.push_back(ext.find(t).value_or(special::unk));
    }
    return ids;
}

}  // namespace qtitle
