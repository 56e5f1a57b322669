#pragma once

#include <vector>

#include "qtitle/model.hpp"

namespace qtitle {

struct BeamConfig {
    std::size_t beam = 5;
    std::size_t min_len = 4;
    std::size_t max_len = 16;
    std::size_t k = 5;  // results returned, <= beam

    void validate() const;
};

struct GeneratedTitle {
    TokenSequence title;
    std::vector<TokenId> ids;  // extended ids, BOS/END stripped
    double score = 0.0;        // log_prob / length, END counted in the length
    double log_prob = 0.0;
};

/// Ranked by normalized score, best first. PAD and BOS are never emitted and
/// END is suppressed until min_len tokens exist. Throws NumericError on NaN output.
std::vector<GeneratedTitle> beam_search(const TokenSequence& code, const Seq2SeqModel& model,
                                        const BeamConfig& config);

/// Argmax decoding under the same candidate rules as beam_search.
GeneratedTitle greedy_decode(const TokenSequence& code, const Seq2SeqModel& model, std::size_t max_len,
                             std::size_t min_len = 0);

TokenSequence detokenize(std::span<const TokenId> ids, const Vocabulary& vocab, const ExtendedVocab& ext);

/// Immediately repeated bigram positions over all adjacent token pairs: count(t_i == t_{i+1}) / (n - 1).
double repetition_rate(const std::vector<TokenSequence>& titles);

}  // namespace qtitle
