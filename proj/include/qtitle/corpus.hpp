#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qtitle/dump_reader.hpp"
#include "qtitle/text.hpp"

namespace qtitle {

/// One mined training example.
struct PairRecord {
    std::int64_t post_id = 0;
    std::string url;
    TokenSequence code;
    TokenSequence title;
    std::int64_t score = 0;
    std::string tag;

    bool operator==(const PairRecord&) const = default;
};

std::string question_url(std::int64_t post_id);

/// Output of the ingest stage: untokenized text per extracted question.
struct RawPair {
    std::int64_t post_id = 0;
    std::int64_t score = 0;
    std::string tag;
    std::string code;
    std::string title;

    bool operator==(const RawPair&) const = default;
};

std::string to_json_line(const PairRecord& record);
PairRecord pair_from_json_line(const std::string& line);
std::string to_json_line(const RawPair& pair);
RawPair raw_pair_from_json_line(const std::string& line);

void write_pairs(std::ostream& out, const std::vector<PairRecord>& pairs);
std::vector<PairRecord> read_pairs(std::istream& in, const std::string& source = "corpus");
std::vector<PairRecord> read_pairs(const std::string& path);
void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs);

struct IngestStats {
    std::size_t questions = 0;
    std::size_t extracted = 0;
    std::size_t warnings = 0;
};

/// Streams questions from `reader` and calls `sink` for each extracted pair.
IngestStats ingest(PostReader& reader, std::string_view tag_filter,
                   const std::function<void(const RawPair&)>& sink);

/// Tokenize, normalize and filter one raw pair; std::nullopt if filtered out.
std::optional<PairRecord> preprocess(const RawPair& raw);

/// Drops duplicate (code, title) pairs keeping the highest score (lowest
/// post id on ties), then orders by post id.
std::vector<PairRecord> deduplicate(std::vector<PairRecord> pairs);

enum class Split { train, valid, test };
/// post_id mod 100: < 90 train, < 95 valid, else test.
Split split_of(std::int64_t post_id);
std::vector<PairRecord> select_split(const std::vector<PairRecord>& pairs, Split split);

}  // namespace qtitle
