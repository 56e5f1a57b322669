#include "qtitle/inference.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace qtitle {

void BeamConfig::validate() const {
    if (beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
    if (min_len < 1 || min_len >= max_len)
        throw std::invalid_argument(fmt::format("beam_search: need 1 <= min_len < max_len, got {} and {}", min_len, max_len));
    if (k < 1 || k > beam) throw std::invalid_argument(fmt::format("beam_search: k must be in [1, beam], got {}", k));
}

namespace {

struct Hyp {
    std::vector<TokenId> ids;
    double log_prob = 0.0;
    DecoderState state;
    bool ended = false;  // emitted END
};

struct Candidate {
    double score;
    std::size_t hyp;
    TokenId token;
};

struct Prepared {
    SourceEncoding source;
    EncoderOutput enc;
};

Prepared prepare(const TokenSequence& code, const Seq2SeqModel& model) {
    if (code.empty()) throw std::invalid_argument("decode: empty code sequence");
    Prepared p{encode_source(code, model.code_vocab, model.title_vocab), {}};
    p.enc = encode(p.source.code_ids, Mask(p.source.code_ids.size(), 1), model.params, model.config);
    return p;
}

void check_dist(const Vec& dist) {
    for (double d : dist)
        if (std::isnan(d)) throw NumericError("decode: model produced NaN probabilities");
}

bool allowed(TokenId w, std::size_t generated, std::size_t min_len) {
    if (w == special::pad || w == special::bos) return false;
    if (w == special::end && generated < min_len) return false;
    return true;
}

GeneratedTitle finish(const Hyp& h, const Seq2SeqModel& model, const ExtendedVocab& ext) {
    GeneratedTitle g;
    g.ids = h.ids;
    g.log_prob = h.log_prob;
    const auto len = h.ids.size() + (h.ended ? 1 : 0);
    g.score = len == 0 ? h.log_prob : h.log_prob / static_cast<double>(len);
    g.title = detokenize(g.ids, model.title_vocab, ext);
    return g;
}

}  // namespace

std::vector<GeneratedTitle> beam_search(const TokenSequence& code, const Seq2SeqModel& model,
                                        const BeamConfig& config) {
    config.validate();
    const auto prep = prepare(code, model);
    const auto& mc = model.config;

    std::vector<Hyp> live{Hyp{{}, 0.0, init_decoder(prep.enc, model.params), false}};
    std::vector<Hyp> done;
    for (std::size_t len = 0; len < config.max_len && !live.empty() && done.size() < config.beam; ++len) {
        std::vector<StepOutput> steps;
        std::vector<Candidate> cands;
        for (std::size_t h = 0; h < live.size(); ++h) {
            const TokenId prev = live[h].ids.empty() ? special::bos : feedback_id(live[h].ids.back(), mc);
            steps.push_back(decode_step(prev, live[h].state, prep.enc, prep.source, model.params, mc));
            const auto& dist = steps.back().dist;
            check_dist(dist);
            for (std::size_t w = 0; w < dist.size(); ++w) {
                const auto id = static_cast<TokenId>(w);
                if (dist[w] > 0.0 && allowed(id, len, config.min_len))
                    cands.push_back({live[h].log_prob + std::log(dist[w]), h, id});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.hyp != b.hyp) return a.hyp < b.hyp;
            return a.token < b.token;
        });

        std::vector<Hyp> next;
        for (const auto& c : cands) {
            if (next.size() >= config.beam || done.size() >= config.beam) break;
            Hyp h{live[c.hyp].ids, c.score, steps[c.hyp].new_state, false};
            if (c.token == special::end) {
                h.ended = true;
                done.push_back(std::move(h));
                continue;
            }
            h.ids.push_back(c.token);
            if (h.ids.size() >= config.max_len)
                done.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
    }
    if (done.empty()) done = std::move(live);

    std::vector<GeneratedTitle> out;
    for (const auto& h : done) out.push_back(finish(h, model, prep.source.ext));
    std::stable_sort(out.begin(), out.end(),
                     [](const GeneratedTitle& a, const GeneratedTitle& b) { return a.score > b.score; });
    if (out.size() > config.k) out.resize(config.k);
    return out;
}

GeneratedTitle greedy_decode(const TokenSequence& code, const Seq2SeqModel& model, std::size_t max_len,
                             std::size_t min_len) {
    if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
    const auto prep = prepare(code, model);
    Hyp h{{}, 0.0, init_decoder(prep.enc, model.params), false};
    while (h.ids.size() < max_len) {
        const TokenId prev = h.ids.empty() ? special::bos : feedback_id(h.ids.back(), model.config);
        auto step = decode_step(prev, h.state, prep.enc, prep.source, model.params, model.config);
        check_dist(step.dist);
        // Scores carry the running log-prob so ties resolve exactly as in a width-1 beam.
        TokenId best = -1;
        double best_score = 0.0;
        for (std::size_t w = 0; w < step.dist.size(); ++w) {
            const auto id = static_cast<TokenId>(w);
            if (!(step.dist[w] > 0.0) || !allowed(id, h.ids.size(), min_len)) continue;
            const double s = h.log_prob + std::log(step.dist[w]);
            if (best < 0 || s > best_score) {
                best = id;
                best_score = s;
            }
        }
        if (best < 0) throw NumericError("greedy_decode: no token has positive probability");
        h.log_prob = best_score;
        h.state = std::move(step.new_state);
        if (best == special::end) {
            h.ended = true;
            break;
        }
        h.ids.push_back(best);
    }
    return finish(h, model, prep.source.ext);
}

TokenSequence detokenize(std::span<const TokenId> ids, const Vocabulary& vocab, const ExtendedVocab& ext) {
    TokenSequence out;
    const auto v = static_cast<TokenId>(vocab.size());
    for (auto id : ids) {
        if (id < 0 || id >= v + static_cast<TokenId>(ext.oov_tokens.size()))
            throw std::out_of_range(fmt::format("detokenize: id {} outside vocabulary of {} + {} OOV", id, v,
                                                ext.oov_tokens.size()));
        if (id == special::bos || id == special::end || id == special::pad) continue;
        out.push_back(id < v ? vocab.token_of(id) : ext.oov_tokens[static_cast<std::size_t>(id - v)]);
    }
    return out;
}

double repetition_rate(const std::vector<TokenSequence>& titles) {
    std::size_t pairs = 0, repeats = 0;
    for (const auto& t : titles)
        for (std::size_t i = 1; i < t.size(); ++i) {
            ++pairs;
            repeats += t[i] == t[i - 1];
        }
    return pairs == 0 ? 0.0 : static_cast<double>(repeats) / static_cast<double>(pairs);
}

}  // namespace qtitle
