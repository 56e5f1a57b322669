#pragma once

// The 50-row dump fixture and its hand-labelled keep/drop table.

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtitle/corpus.hpp"
#include "qtitle/dump_reader.hpp"

namespace qtitle::fixtures {

inline std::string fixture_dump() { return std::string(QTITLE_TEST_DATA) + "/posts_50.xml"; }
inline std::string fixture_expected() { return std::string(QTITLE_TEST_DATA) + "/posts_50.expected.tsv"; }

struct ExpectedRow {
    std::int64_t post_id = 0;
    bool keep = false;
    std::string reason;
};

inline std::vector<ExpectedRow> read_expected(const std::string& path = fixture_expected()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::vector<ExpectedRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto a = line.find('\t');
        const auto b = line.find('\t', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw std::runtime_error(path + ": bad row " + line);
        const auto decision = line.substr(a + 1, b - a - 1);
        if (decision != "keep" && decision != "drop") throw std::runtime_error(path + ": bad decision " + decision);
        rows.push_back({std::stoll(line.substr(0, a)), decision == "keep", line.substr(b + 1)});
    }
    return rows;
}

/// ingest (python tag) -> preprocess -> deduplicate.
inline std::vector<PairRecord> run_pipeline(const std::string& dump = fixture_dump()) {
    auto reader = PostReader::open_file(dump);
    std::vector<PairRecord> kept;
    ingest(reader, "python", [&](const RawPair& raw) {
        if (auto p = preprocess(raw)) kept.push_back(std::move(*p));
    });
    return deduplicate(std::move(kept));
}

inline std::set<std::int64_t> ids_of(const std::vector<PairRecord>& pairs) {
    std::set<std::int64_t> out;
    for (const auto& p : pairs) out.insert(p.post_id);
    return out;
}

inline std::set<std::int64_t> expected_kept(const std::vector<ExpectedRow>& rows) {
    std::set<std::int64_t> out;
    for (const auto& r : rows)
        if (r.keep) out.insert(r.post_id);
    return out;
}

}  // namespace qtitle::fixtures
