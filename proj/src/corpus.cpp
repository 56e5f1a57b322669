#include "qtitle/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qtitle/binary_io.hpp"

namespace qtitle {

using ojson = nlohmann::ordered_json;

namespace {

std::string dump_json(const ojson& j) {
    return j.dump(-1, ' ', false, ojson::error_handler_t::replace);
}

TokenSequence token_array(const ojson& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array()) throw FormatError(fmt::format("'{}' must be an array of strings", key));
    TokenSequence out;
    out.reserve(a.size());
    for (const auto& t : a) {
        auto s = t.get<std::string>();
        if (s.empty()) throw FormatError(fmt::format("'{}' contains an empty token", key));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::string question_url(std::int64_t post_id) {
    return fmt::format("https://stackoverflow.com/questions/{}", post_id);
}

std::string to_json_line(const PairRecord& r) {
    ojson j;
    j["post_id"] = r.post_id;
    j["url"] = r.url;
    j["code"] = r.code;
    j["title"] = r.title;
    j["score"] = r.score;
    j["tag"] = r.tag;
    return dump_json(j);
}

PairRecord pair_from_json_line(const std::string& line) {
    try {
        const auto j = ojson::parse(line);
        PairRecord r;
        r.post_id = j.at("post_id").get<std::int64_t>();
        r.url = j.at("url").get<std::string>();
        r.code = token_array(j, "code");
        r.title = token_array(j, "title");
        r.score = j.at("score").get<std::int64_t>();
        r.tag = j.at("tag").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(e.what());
    }
}

std::string to_json_line(const RawPair& p) {
    ojson j;
    j["post_id"] = p.post_id;
    j["score"] = p.score;
    j["tag"] = p.tag;
    j["code"] = p.code;
    j["title"] = p.title;
    return dump_json(j);
}

RawPair raw_pair_from_json_line(const std::string& line) {
    try {
        const auto j = ojson::parse(line);
        return RawPair{j.at("post_id").get<std::int64_t>(), j.at("score").get<std::int64_t>(),
                       j.at("tag").get<std::string>(), j.at("code").get<std::string>(),
                       j.at("title").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(e.what());
    }
}

void write_pairs(std::ostream& out, const std::vector<PairRecord>& pairs) {
    for (const auto& p : pairs) out << to_json_line(p) << '\n';
}

std::vector<PairRecord> read_pairs(std::istream& in, const std::string& source) {
    std::vector<PairRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(pair_from_json_line(line));
        } catch (const FormatError& e) {
            throw FormatError(fmt::format("{}:{}: {}", source, lineno, e.what()));
        }
    }
    return out;
}

std::vector<PairRecord> read_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("{}: cannot open corpus", path));
    return read_pairs(in, path);
}

void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path));
    write_pairs(out, pairs);
}

IngestStats ingest(PostReader& reader, std::string_view tag_filter,
                   const std::function<void(const RawPair&)>& sink) {
    IngestStats stats;
    while (auto post = reader.next()) {
        ++stats.questions;
        auto pair = extract_pair(*post, tag_filter);
        if (!pair) continue;
        ++stats.extracted;
        sink(RawPair{pair->post_id, pair->score, std::string(tag_filter), std::move(pair->code),
                     std::move(pair->title)});
    }
    stats.warnings = reader.warnings();
    return stats;
}

std::optional<PairRecord> preprocess(const RawPair& raw) {
    auto code = preprocess_code(raw.code);
    auto title = preprocess_title(raw.title);
    if (!filter_pair(code, title, raw.score)) return std::nullopt;
    return PairRecord{raw.post_id, question_url(raw.post_id), std::move(code), std::move(title),
                      raw.score, raw.tag};
}

std::vector<PairRecord> deduplicate(std::vector<PairRecord> pairs) {
    std::map<std::pair<TokenSequence, TokenSequence>, std::size_t> best;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto key = std::make_pair(pairs[i].code, pairs[i].title);
        auto [it, inserted] = best.emplace(std::move(key), i);
        if (inserted) continue;
        const auto& cur = pairs[it->second];
        const auto& cand = pairs[i];
        if (cand.score > cur.score || (cand.score == cur.score && cand.post_id < cur.post_id))
            it->second = i;
    }
    std::vector<PairRecord> out;
    out.reserve(best.size());
    for (auto& [key, idx] : best) out.push_back(std::move(pairs[idx]));
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.post_id < b.post_id; });
    return out;
}

Split split_of(std::int64_t post_id) {
    const auto m = ((post_id % 100) + 100) % 100;
    if (m < 90) return Split::train;
    if (m < 95) return Split::valid;
    return Split::test;
}

std::vector<PairRecord> select_split(const std::vector<PairRecord>& pairs, Split split) {
    std::vector<PairRecord> out;
    for (const auto& p : pairs)
        if (split_of(p.post_id) == split) out.push_back(p);
    return out;
}

}  // namespace qtitle
