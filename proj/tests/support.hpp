#pragma once

// Synthetic corpora and small models shared by the unit and acceptance tests.

#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "qtitle/corpus.hpp"
#include "qtitle/model.hpp"
#include "qtitle/rng.hpp"
#include "qtitle/training.hpp"

namespace qtitle::fixtures {

inline TokenSequence split_words(const std::string& s) {
    TokenSequence out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        auto j = i;
        while (j < s.size() && s[j] != ' ') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline PairRecord make_pair(std::int64_t id, const std::string& code, const std::string& title) {
    PairRecord p;
    p.post_id = id;
    p.url = question_url(id);
    p.code = split_words(code);
    p.title = split_words(title);
    p.score = 3;
    p.tag = "python";
    return p;
}

struct Topic {
    const char* body;   // code after the signature
    const char* title;  // {} marks the copied identifier
};

inline const std::vector<Topic>& copy_topics() {
    static const std::vector<Topic> topics{
        {"request ) : return request . META . get ( STRING )", "how to get the client ip in {} view"},
        {"path ) : with open ( path ) as f : return f . read ( )", "how to read a whole file in {}"},
        {"items ) : return sorted ( items , key = len )", "how to sort a list by length with {}"},
        {"d ) : return { v : k for k , v in d . items ( ) }", "how to invert a dictionary using {}"},
        {"s ) : return s . strip ( ) . split ( STRING )", "why does {} split the string wrong"},
    };
    return topics;
}

/// Each title copies the function name, an identifier that appears once in
/// the whole corpus and so stays out of both vocabularies (min_count 2).
inline std::vector<PairRecord> copy_corpus(std::size_t n, std::int64_t first_id = 1, const char* stem = "fn") {
    std::vector<PairRecord> out;
    const auto& topics = copy_topics();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = topics[i % topics.size()];
        const std::string ident = fmt::format("{}_{}_{}", stem, i, first_id);
        out.push_back(make_pair(first_id + static_cast<std::int64_t>(i),
                                fmt::format("def {} ( {}", ident, t.body),
                                fmt::vformat(t.title, fmt::make_format_args(ident))));
    }
    return out;
}

/// Titles list every source-only identifier of the snippet (min_k to max_k
/// of them) in order. Copied identifiers are fed back as UNK, so the decoder has
/// to remember what it already copied; re-attending one position shows up as
/// an immediate repeat.
inline std::vector<PairRecord> repetition_corpus(std::size_t n, std::uint64_t seed, std::int64_t first_id = 1,
                                                 std::size_t min_k = 2, std::size_t max_k = 5) {
    static const char* verbs[] = {"merge", "combine", "join", "zip"};
    Rng rng(seed);
    std::vector<PairRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = first_id + static_cast<std::int64_t>(i);
        const auto k = min_k + rng.below(max_k - min_k + 1);
        std::vector<std::string> names;
        for (std::size_t j = 0; j < k; ++j) names.push_back(fmt::format("v{}x{}", id, rng.below(100000)));
        const char* verb = verbs[rng.below(4)];
        std::string args, listed;
        for (std::size_t j = 0; j < k; ++j) {
            args += (j ? " , " : "") + names[j];
            listed += (j == 0 ? "" : j + 1 == k ? " and " : " ") + names[j];
        }
        out.push_back(make_pair(id, fmt::format("result = {} ( {} ) print ( result ) return result", verb, args),
                                fmt::format("how to {} {}", verb, listed)));
    }
    return out;
}

/// Small default-shaped model over `pairs`' vocabularies (min_count 2).
inline Seq2SeqModel toy_model(const std::vector<PairRecord>& pairs, ModelConfig config = {}) {
    return make_model(pairs, config, 1000, 1000, 2);
}

inline ModelConfig small_config() {
    ModelConfig c;
    c.emb_dim = 8;
    c.enc_hidden = 8;
    c.dec_hidden = 16;
    return c;
}

/// A briefly trained model over copy_corpus(n); enough to make decoding non-trivial.
inline Seq2SeqModel trained_copy_model(std::size_t n = 20, std::size_t epochs = 30, ModelConfig config = small_config()) {
    const auto pairs = copy_corpus(n);
    const auto skeleton = toy_model(pairs, config);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 4;
    tc.learning_rate = 0.01;
    tc.early_stop_patience = epochs;
    return train(pairs, pairs, skeleton, tc).best;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / fmt::format("qtitle_test_{}", name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace qtitle::fixtures
