#include "qtitle/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace qtitle {

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(fmt::format("model config: {} must be positive", name));
    };
    positive(emb_dim, "emb_dim");
    positive(enc_hidden, "enc_hidden");
    positive(dec_hidden, "dec_hidden");
    positive(code_vocab_size, "code_vocab_size");
    positive(title_vocab_size, "title_vocab_size");
    if (enc_layers != 2) throw std::invalid_argument("model config: enc_layers must be 2");
    if (dec_layers != 1) throw std::invalid_argument("model config: dec_layers must be 1");
    if (!(coverage_weight >= 0.0)) throw std::invalid_argument("model config: coverage_weight must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("model config: dropout_rate must be in [0, 1)");
    if (code_vocab_size <= special::count || title_vocab_size <= special::count)
        throw std::invalid_argument("model config: vocabularies must extend past the specials");
}

std::string ModelConfig::to_text() const {
    return fmt::format(
        "emb_dim={}\nenc_hidden={}\ndec_hidden={}\nenc_layers={}\ndec_layers={}\n"
        "code_vocab_size={}\ntitle_vocab_size={}\ncoverage_weight={:.17g}\ndropout_rate={:.17g}\n",
        emb_dim, enc_hidden, dec_hidden, enc_layers, dec_layers, code_vocab_size, title_vocab_size,
        coverage_weight, dropout_rate);
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(fmt::format("model config: malformed line '{}'", line));
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto take = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument(fmt::format("model config: missing key '{}'", key));
        auto v = it->second;
        kv.erase(it);
        return v;
    };
    auto size = [&](const char* key) {
        const auto v = take(key);
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(fmt::format("model config: bad value for {}", key));
        return static_cast<std::size_t>(n);
    };
    ModelConfig c;
    c.emb_dim = size("emb_dim");
    c.enc_hidden = size("enc_hidden");
    c.dec_hidden = size("dec_hidden");
    c.enc_layers = size("enc_layers");
    c.dec_layers = size("dec_layers");
    c.code_vocab_size = size("code_vocab_size");
    c.title_vocab_size = size("title_vocab_size");
    c.coverage_weight = std::stod(take("coverage_weight"));
    c.dropout_rate = std::stod(take("dropout_rate"));
    if (!kv.empty())
        throw std::invalid_argument(fmt::format("model config: unknown key '{}'", kv.begin()->first));
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams::ModelParams(const ModelConfig& c)
    : code_emb("code_emb", {c.code_vocab_size, c.emb_dim}),
      title_emb("title_emb", {c.title_vocab_size, c.emb_dim}),
      enc_fwd{LstmWeights("enc.l0.fwd", c.emb_dim, c.enc_hidden),
              LstmWeights("enc.l1.fwd", c.annotation_dim(), c.enc_hidden)},
      enc_bwd{LstmWeights("enc.l0.bwd", c.emb_dim, c.enc_hidden),
              LstmWeights("enc.l1.bwd", c.annotation_dim(), c.enc_hidden)},
      bridge_h_w("bridge.h.w", {c.dec_hidden, c.annotation_dim()}),
      bridge_h_b("bridge.h.b", {c.dec_hidden}),
      bridge_c_w("bridge.c.w", {c.dec_hidden, c.annotation_dim()}),
      bridge_c_b("bridge.c.b", {c.dec_hidden}),
      attn_keys("attn.keys", {c.attention_dim(), c.annotation_dim()}),
      attn_query("attn.query", {c.attention_dim(), c.dec_hidden}),
      attn_cov("attn.cov", {c.attention_dim()}),
      attn_bias("attn.bias", {c.attention_dim()}),
      attn_v("attn.v", {c.attention_dim()}),
      dec("dec", c.emb_dim + c.annotation_dim(), c.dec_hidden),
      out_w("out.w", {c.title_vocab_size, c.dec_hidden + c.annotation_dim()}),
      out_b("out.b", {c.title_vocab_size}),
      gate_ctx("gate.ctx", {c.annotation_dim()}),
      gate_h("gate.h", {c.dec_hidden}),
      gate_emb("gate.emb", {c.emb_dim}),
      gate_b("gate.b", {1}) {}

std::vector<Parameter*> ModelParams::all() {
    std::vector<Parameter*> out = {&code_emb, &title_emb};
    for (int layer = 0; layer < 2; ++layer)
        for (auto* w : {&enc_fwd[layer], &enc_bwd[layer]}) {
            out.push_back(&w->wx);
            out.push_back(&w->wh);
            out.push_back(&w->b);
        }
    for (auto* p : {&bridge_h_w, &bridge_h_b, &bridge_c_w, &bridge_c_b, &attn_keys, &attn_query,
                    &attn_cov, &attn_bias, &attn_v})
        out.push_back(p);
    out.push_back(&dec.wx);
    out.push_back(&dec.wh);
    out.push_back(&dec.b);
    for (auto* p : {&out_w, &out_b, &gate_ctx, &gate_h, &gate_emb, &gate_b}) out.push_back(p);
    return out;
}

std::vector<const Parameter*> ModelParams::all() const {
    auto mut = const_cast<ModelParams*>(this)->all();
    return {mut.begin(), mut.end()};
}

void ModelParams::zero_grad() {
    for (auto* p : all()) p->zero_grad();
}

void ModelParams::initialize(Rng& rng) {
    for (auto* p : all()) {
        const bool bias = p->value.rank() == 1 && p != &attn_cov && p != &attn_v && p != &gate_ctx &&
                          p != &gate_h && p != &gate_emb;
        for (auto& v : p->value.values()) v = bias ? 0.0 : rng.uniform(-0.1, 0.1);
        p->zero_grad();
    }
    for (auto* w : {&enc_fwd[0], &enc_fwd[1], &enc_bwd[0], &enc_bwd[1], &dec}) {
        const auto h = w->hidden_dim();
        for (std::size_t j = 0; j < h; ++j) w->b.value[h + j] = 1.0;
    }
}

Seq2SeqModel::Seq2SeqModel(ModelConfig c, Vocabulary code, Vocabulary title)
    : config(c), params(c), code_vocab(std::move(code)), title_vocab(std::move(title)) {
    if (config.code_vocab_size != code_vocab.size() || config.title_vocab_size != title_vocab.size())
        throw std::invalid_argument(fmt::format(
            "model config expects vocabularies of {} / {} tokens, got {} / {}", config.code_vocab_size,
            config.title_vocab_size, code_vocab.size(), title_vocab.size()));
}

// ---------------------------------------------------------------------------
// Id encoding

SourceEncoding encode_source(const TokenSequence& code, const Vocabulary& code_vocab,
                             const Vocabulary& title_vocab) {
    SourceEncoding out;
    out.code_ids.reserve(code.size());
    for (const auto& t : code) out.code_ids.push_back(code_vocab.id_of(t));
    auto ext = encode_with_extended_vocab(code, title_vocab);
    out.copy_ids = std::move(ext.ext_ids);
    out.ext = std::move(ext.ext);
    return out;
}

EncodedPair encode_pair(const PairRecord& pair, const Vocabulary& code_vocab,
                        const Vocabulary& title_vocab) {
    EncodedPair out;
    out.source = encode_source(pair.code, code_vocab, title_vocab);
    out.target = encode_target(pair.title, title_vocab, out.source.ext);
    return out;
}

// ---------------------------------------------------------------------------
// Forward passes with optional caches for the backward pass

namespace {

struct EncoderCache {
    std::vector<std::size_t> live;  // unmasked positions, ascending
    std::vector<TokenId> ids;       // per live index
    std::vector<Vec> emb_mask;      // per live index
    std::vector<Vec> mid_mask;      // dropout on layer-0 outputs, per live index
    std::vector<LstmCache> fwd[2];  // per live index
    std::vector<LstmCache> bwd[2];  // per live index
};

bool dropout_on(const Rng* rng, const ModelConfig& c) { return rng && c.dropout_rate > 0.0; }

EncoderOutput encode_impl(std::span<const TokenId> ids, const Mask& mask, const ModelParams& p,
                          const ModelConfig& c, EncoderCache* cache, Rng* rng) {
    const std::size_t T = ids.size();
    if (T == 0) throw std::invalid_argument("encode: empty source sequence");
    if (mask.size() != T)
        throw ShapeError(fmt::format("encode: {} ids but {} mask entries", T, mask.size()));
    std::vector<std::size_t> live;
    for (std::size_t t = 0; t < T; ++t)
        if (mask[t]) live.push_back(t);
    if (live.empty()) throw std::invalid_argument("encode: every source position is masked");
    for (auto t : live)
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= c.code_vocab_size)
            throw std::out_of_range(
                fmt::format("encode: code id {} outside vocabulary of size {}", ids[t], c.code_vocab_size));

    const std::size_t n = live.size(), he = c.enc_hidden;
    EncoderCache local;
    EncoderCache& k = cache ? *cache : local;
    k = EncoderCache{};
    k.live = live;
    const bool drop = dropout_on(rng, c);

    std::vector<Vec> x(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto row = embedding_lookup(p.code_emb.value, ids[live[j]]);
        x[j].assign(row.begin(), row.end());
        k.ids.push_back(ids[live[j]]);
        if (drop) {
            k.emb_mask.push_back(dropout_mask(x[j].size(), c.dropout_rate, *rng));
            apply_mask(x[j], k.emb_mask.back());
        }
    }

    std::vector<Vec> out(n);
    for (int layer = 0; layer < 2; ++layer) {
        auto& fwd = k.fwd[layer];
        auto& bwd = k.bwd[layer];
        fwd.resize(n);
        bwd.resize(n);
        Vec h(he, 0.0), cc(he, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            fwd[j] = lstm_cell(p.enc_fwd[layer], x[j], h, cc);
            h = fwd[j].h;
            cc = fwd[j].c;
        }
        h.assign(he, 0.0);
        cc.assign(he, 0.0);
        for (std::size_t j = n; j-- > 0;) {
            bwd[j] = lstm_cell(p.enc_bwd[layer], x[j], h, cc);
            h = bwd[j].h;
            cc = bwd[j].c;
        }
        for (std::size_t j = 0; j < n; ++j) out[j] = concat(fwd[j].h, bwd[j].h);
        if (layer == 0) {
            if (drop)
                for (std::size_t j = 0; j < n; ++j) {
                    k.mid_mask.push_back(dropout_mask(out[j].size(), c.dropout_rate, *rng));
                    apply_mask(out[j], k.mid_mask.back());
                }
            x = out;
        }
    }

    EncoderOutput enc;
    enc.mask = mask;
    enc.H = Tensor({T, 2 * he});
    for (std::size_t j = 0; j < n; ++j) std::copy(out[j].begin(), out[j].end(), enc.H.row(live[j]).begin());
    enc.s = concat(std::span<const double>(out[n - 1]).first(he), std::span<const double>(out[0]).subspan(he));
    enc.keys = Tensor({T, c.attention_dim()});
    for (auto t : live) {
        const auto key = matvec(p.attn_keys.value, enc.H.row(t));
        std::copy(key.begin(), key.end(), enc.keys.row(t).begin());
    }
    return enc;
}

// dH: T x 2he gradient w.r.t. the top-layer annotations (including the
// contributions through s and the attention keys).
void encode_backward(const EncoderCache& k, Tensor& dH, ModelParams& p, const ModelConfig& c) {
    const std::size_t n = k.live.size(), he = c.enc_hidden;
    std::vector<Vec> dout(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto row = dH.row(k.live[j]);
        dout[j].assign(row.begin(), row.end());
    }
    for (int layer = 1; layer >= 0; --layer) {
        const std::size_t in_dim = layer == 0 ? c.emb_dim : 2 * he;
        std::vector<Vec> dx(n, Vec(in_dim, 0.0));
        Vec dh(he, 0.0), dc(he, 0.0);
        for (std::size_t j = n; j-- > 0;) {
            Vec dh_total(dout[j].begin(), dout[j].begin() + static_cast<std::ptrdiff_t>(he));
            add_into(dh_total, dh);
            Vec dh_prev(he, 0.0), dc_prev(he, 0.0);
            lstm_cell_backward(p.enc_fwd[layer], k.fwd[layer][j], dh_total, dc, dx[j], dh_prev, dc_prev);
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
        dh.assign(he, 0.0);
        dc.assign(he, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            Vec dh_total(dout[j].begin() + static_cast<std::ptrdiff_t>(he), dout[j].end());
            add_into(dh_total, dh);
            Vec dh_prev(he, 0.0), dc_prev(he, 0.0);
            lstm_cell_backward(p.enc_bwd[layer], k.bwd[layer][j], dh_total, dc, dx[j], dh_prev, dc_prev);
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
        if (layer == 1) {
            if (!k.mid_mask.empty())
                for (std::size_t j = 0; j < n; ++j) apply_mask(dx[j], k.mid_mask[j]);
            dout = std::move(dx);
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                if (!k.emb_mask.empty()) apply_mask(dx[j], k.emb_mask[j]);
                embedding_backward(p.code_emb.grad, k.ids[j], dx[j]);
            }
        }
    }
}

struct AttentionCache {
    Vec query;  // decoder h the scores were computed from
    Vec coverage;
    std::vector<Vec> z;  // tanh activations per position (empty where masked)
    Vec attn;
    Vec context;
};

AttentionResult attention_impl(std::span<const double> query, std::span<const double> coverage,
                               const EncoderOutput& enc, const ModelParams& p, AttentionCache* cache) {
    const std::size_t T = enc.length(), a = p.attn_v.value.size();
    if (coverage.size() != T)
        throw ShapeError(fmt::format("attention: coverage of length {} for source of length {}",
                                     coverage.size(), T));
    const Vec q = matvec(p.attn_query.value, query);
    Vec scores(T, 0.0);
    std::vector<Vec> z(T);
    for (std::size_t i = 0; i < T; ++i) {
        if (!enc.mask[i]) continue;
        const auto key = enc.keys.row(i);
        z[i].resize(a);
        double e = 0.0;
        for (std::size_t r = 0; r < a; ++r) {
            const double pre = key[r] + q[r] + p.attn_cov.value[r] * coverage[i] + p.attn_bias.value[r];
            z[i][r] = std::tanh(pre);
            e += p.attn_v.value[r] * z[i][r];
        }
        scores[i] = e;
    }
    AttentionResult out;
    out.attn = softmax_masked(scores, enc.mask);
    out.context.assign(enc.H.cols(), 0.0);
    for (std::size_t i = 0; i < T; ++i)
        if (out.attn[i] != 0.0) add_into(out.context, enc.H.row(i), out.attn[i]);
    if (cache) {
        cache->query.assign(query.begin(), query.end());
        cache->coverage.assign(coverage.begin(), coverage.end());
        cache->z = std::move(z);
        cache->attn = out.attn;
        cache->context = out.context;
    }
    return out;
}

// Accumulates into dquery, dcoverage, dkeys (T x a) and dH.
void attention_backward(const AttentionCache& k, std::span<const double> dattn_in,
                        std::span<const double> dcontext, const EncoderOutput& enc, ModelParams& p,
                        std::span<double> dquery, std::span<double> dcoverage, Tensor& dkeys, Tensor& dH) {
    const std::size_t T = enc.length(), a = p.attn_v.value.size();
    Vec dattn(dattn_in.begin(), dattn_in.end());
    for (std::size_t i = 0; i < T; ++i) {
        if (!enc.mask[i]) continue;
        dattn[i] += dot(dcontext, enc.H.row(i));
        add_into(dH.row(i), dcontext, k.attn[i]);
    }
    Vec dscores(T, 0.0);
    softmax_backward(k.attn, dattn, dscores);
    Vec dq(a, 0.0);
    for (std::size_t i = 0; i < T; ++i) {
        if (!enc.mask[i] || dscores[i] == 0.0) continue;
        auto dkey = dkeys.row(i);
        double dcov = 0.0;
        for (std::size_t r = 0; r < a; ++r) {
            const double zr = k.z[i][r];
            p.attn_v.grad[r] += dscores[i] * zr;
            const double dpre = dscores[i] * p.attn_v.value[r] * (1.0 - zr * zr);
            dkey[r] += dpre;
            dq[r] += dpre;
            p.attn_cov.grad[r] += dpre * k.coverage[i];
            p.attn_bias.grad[r] += dpre;
            dcov += dpre * p.attn_cov.value[r];
        }
        dcoverage[i] += dcov;
    }
    matvec_backward(k.query, p.attn_query.value, dq, dquery, p.attn_query.grad);
}

struct StepCache {
    TokenId input = 0;
    Vec emb;  // after dropout
    Vec emb_mask;
    AttentionCache attn_in;
    LstmCache lstm;
    Vec h_mask;
    Vec h_out;  // decoder h after dropout, fed to the output layer and gate
    AttentionCache attn_out;
    Vec vocab_dist;
    double p_gen = 0.0;
    Vec dist;
};

StepOutput step_impl(TokenId prev_id, const DecoderState& state, const EncoderOutput& enc,
                     const SourceEncoding& src, const ModelParams& p, const ModelConfig& c,
                     StepCache* cache, Rng* rng) {
    if (prev_id < 0 || static_cast<std::size_t>(prev_id) >= c.title_vocab_size)
        throw std::out_of_range(fmt::format("decode_step: input id {} outside title vocabulary of size {}",
                                            prev_id, c.title_vocab_size));
    if (src.copy_ids.size() != enc.length())
        throw ShapeError(fmt::format("decode_step: {} copy ids for source of length {}",
                                     src.copy_ids.size(), enc.length()));
    const bool drop = dropout_on(rng, c);
    StepCache local;
    StepCache& k = cache ? *cache : local;
    k.input = prev_id;
    const auto emb_row = embedding_lookup(p.title_emb.value, prev_id);
    k.emb.assign(emb_row.begin(), emb_row.end());
    if (drop) {
        k.emb_mask = dropout_mask(k.emb.size(), c.dropout_rate, *rng);
        apply_mask(k.emb, k.emb_mask);
    }

    const auto feed = attention_impl(state.h, state.coverage, enc, p, &k.attn_in);
    k.lstm = lstm_cell(p.dec, concat(k.emb, feed.context), state.h, state.c);
    k.h_out = k.lstm.h;
    if (drop) {
        k.h_mask = dropout_mask(k.h_out.size(), c.dropout_rate, *rng);
        apply_mask(k.h_out, k.h_mask);
    }
    const auto att = attention_impl(k.lstm.h, state.coverage, enc, p, &k.attn_out);

    const Vec logits = affine(concat(k.h_out, att.context), p.out_w.value, p.out_b.value.span());
    k.vocab_dist = softmax(logits);
    const double gate_pre = dot(p.gate_ctx.value.span(), att.context) +
                            dot(p.gate_h.value.span(), k.h_out) + dot(p.gate_emb.value.span(), k.emb) +
                            p.gate_b.value[0];
    k.p_gen = sigmoid(gate_pre);

    StepOutput out;
    out.dist = final_distribution(k.vocab_dist, att.attn, k.p_gen, src.copy_ids, src.ext.size());
    out.attn = att.attn;
    out.p_gen = k.p_gen;
    out.new_state.h = k.lstm.h;
    out.new_state.c = k.lstm.c;
    out.new_state.coverage = state.coverage;
    add_into(out.new_state.coverage, att.attn);
    if (cache) k.dist = out.dist;
    return out;
}

struct Bridge {
    Vec h, c;
};

Bridge bridge_forward(const EncoderOutput& enc, const ModelParams& p) {
    Bridge b;
    b.h = affine(enc.s, p.bridge_h_w.value, p.bridge_h_b.value.span());
    b.c = affine(enc.s, p.bridge_c_w.value, p.bridge_c_b.value.span());
    for (auto& v : b.h) v = std::tanh(v);
    for (auto& v : b.c) v = std::tanh(v);
    return b;
}

TokenId argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<TokenId>(best);
}

}  // namespace

EncoderOutput encode(std::span<const TokenId> code_ids, const Mask& mask, const ModelParams& params,
                     const ModelConfig& config) {
    return encode_impl(code_ids, mask, params, config, nullptr, nullptr);
}

DecoderState init_decoder(const EncoderOutput& enc, const ModelParams& params) {
    auto b = bridge_forward(enc, params);
    return DecoderState{std::move(b.h), std::move(b.c), Vec(enc.length(), 0.0)};
}

AttentionResult attention(const DecoderState& state, const EncoderOutput& enc,
                          const ModelParams& params) {
    return attention_impl(state.h, state.coverage, enc, params, nullptr);
}

StepOutput decode_step(TokenId prev_id, const DecoderState& state, const EncoderOutput& enc,
                       const SourceEncoding& source, const ModelParams& params,
                       const ModelConfig& config) {
    return step_impl(prev_id, state, enc, source, params, config, nullptr, nullptr);
}

TokenId feedback_id(TokenId emitted, const ModelConfig& config) {
    return static_cast<std::size_t>(emitted) >= config.title_vocab_size ? special::unk : emitted;
}

Vec final_distribution(std::span<const double> vocab_dist, std::span<const double> attn,
                       double p_gen, std::span<const TokenId> copy_ids, std::size_t ext_size) {
    if (attn.size() != copy_ids.size())
        throw ShapeError(fmt::format("final_distribution: {} attention weights for {} source ids",
                                     attn.size(), copy_ids.size()));
    if (ext_size < vocab_dist.size())
        throw ShapeError("final_distribution: extended size smaller than the vocabulary");
    Vec out(ext_size, 0.0);
    for (std::size_t w = 0; w < vocab_dist.size(); ++w) out[w] = p_gen * vocab_dist[w];
    for (std::size_t i = 0; i < attn.size(); ++i) {
        const auto id = copy_ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= ext_size)
            throw std::out_of_range(fmt::format("final_distribution: copy id {} outside [0, {})", id, ext_size));
        out[static_cast<std::size_t>(id)] += (1.0 - p_gen) * attn[i];
    }
    return out;
}

double step_loss(const StepOutput& step, TokenId target, std::span<const double> prev_coverage,
                 double coverage_weight) {
    if (target < 0 || static_cast<std::size_t>(target) >= step.dist.size())
        throw std::out_of_range(fmt::format("step_loss: target {} outside [0, {})", target, step.dist.size()));
    double penalty = 0.0;
    for (std::size_t i = 0; i < step.attn.size(); ++i) penalty += std::min(step.attn[i], prev_coverage[i]);
    return -std::log(step.dist[static_cast<std::size_t>(target)] + kLogSmoothing) +
           coverage_weight * penalty;
}

SequenceLoss sequence_loss(const EncodedPair& pair, ModelParams& p, const ModelConfig& c,
                           const LossOptions& opt) {
    const double lambda = opt.coverage_weight < 0.0 ? c.coverage_weight : opt.coverage_weight;
    const auto& src = pair.source;
    const std::size_t T = src.code_ids.size();
    const Mask mask(T, 1);
    EncoderCache enc_cache;
    const EncoderOutput enc = encode_impl(src.code_ids, mask, p, c, opt.compute_grad ? &enc_cache : nullptr,
                                          opt.dropout);
    const Bridge bridge = bridge_forward(enc, p);

    std::vector<TokenId> targets(pair.target.begin(), pair.target.end());
    targets.push_back(special::end);
    for (auto t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= src.ext.size())
            throw std::out_of_range(fmt::format("sequence_loss: target id {} outside extended vocabulary of {}",
                                                t, src.ext.size()));

    SequenceLoss result;
    result.steps = targets.size();
    std::vector<StepCache> caches(opt.compute_grad ? targets.size() : 0);
    std::vector<Vec> prev_cov(targets.size());

    DecoderState state{bridge.h, bridge.c, Vec(T, 0.0)};
    TokenId input = special::bos;
    double total = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        prev_cov[t] = state.coverage;
        auto step = step_impl(input, state, enc, src, p, c, opt.compute_grad ? &caches[t] : nullptr,
                              opt.dropout);
        const TokenId target = targets[t];
        const double nll = -std::log(step.dist[static_cast<std::size_t>(target)] + kLogSmoothing);
        double penalty = 0.0;
        for (std::size_t i = 0; i < T; ++i) penalty += std::min(step.attn[i], prev_cov[t][i]);
        total += nll + lambda * penalty;
        result.nll_sum += nll;
        result.coverage_sum += penalty;
        result.diagnostics.push_back({input, target, nll, penalty, step.p_gen});
        input = feedback_id(opt.teacher_forcing ? target : argmax_lowest(step.dist), c);
        state = std::move(step.new_state);
    }
    result.loss = total / static_cast<double>(targets.size());
    if (!std::isfinite(result.loss)) throw NumericError("sequence_loss: loss is not finite");
    if (!opt.compute_grad) return result;

    // Backward through the decoder steps in reverse.
    const std::size_t hd = c.dec_hidden, e = c.emb_dim, ctx_dim = c.annotation_dim();
    const double scale = opt.grad_scale;
    Tensor dH({T, ctx_dim});
    Tensor dkeys({T, c.attention_dim()});
    Vec dh_next(hd, 0.0), dc_next(hd, 0.0), dcov_next(T, 0.0);
    for (std::size_t t = targets.size(); t-- > 0;) {
        const StepCache& k = caches[t];
        const auto target = static_cast<std::size_t>(targets[t]);
        const double prob = k.dist[target];
        const double dprob = -scale / (prob + kLogSmoothing);

        Vec dattn(T, 0.0), dcov(T, 0.0);
        // new coverage = coverage + attn
        add_into(dattn, dcov_next);
        add_into(dcov, dcov_next);
        for (std::size_t i = 0; i < T; ++i) {
            if (k.attn_out.attn[i] < prev_cov[t][i])
                dattn[i] += lambda * scale;
            else
                dcov[i] += lambda * scale;
        }

        // Mixture: P = p_gen * Pv[target] + (1 - p_gen) * copy mass.
        const double pv = target < k.vocab_dist.size() ? k.vocab_dist[target] : 0.0;
        double copy_mass = 0.0;
        for (std::size_t i = 0; i < T; ++i)
            if (static_cast<std::size_t>(src.copy_ids[i]) == target) {
                copy_mass += k.attn_out.attn[i];
                dattn[i] += (1.0 - k.p_gen) * dprob;
            }
        const double dp_gen = (pv - copy_mass) * dprob;

        Vec dlogits(k.vocab_dist.size(), 0.0);
        if (target < k.vocab_dist.size()) {
            Vec dvocab(k.vocab_dist.size(), 0.0);
            dvocab[target] = k.p_gen * dprob;
            softmax_backward(k.vocab_dist, dvocab, dlogits);
        }
        Vec dproj_in(hd + ctx_dim, 0.0);
        affine_backward(concat(k.h_out, k.attn_out.context), p.out_w.value, dlogits, dproj_in, p.out_w.grad,
                        p.out_b.grad.span());
        Vec dh_out(dproj_in.begin(), dproj_in.begin() + static_cast<std::ptrdiff_t>(hd));
        Vec dctx(dproj_in.begin() + static_cast<std::ptrdiff_t>(hd), dproj_in.end());

        const double dgate = dp_gen * k.p_gen * (1.0 - k.p_gen);
        Vec demb(e, 0.0);
        add_into(p.gate_ctx.grad.span(), k.attn_out.context, dgate);
        add_into(p.gate_h.grad.span(), k.h_out, dgate);
        add_into(p.gate_emb.grad.span(), k.emb, dgate);
        p.gate_b.grad[0] += dgate;
        add_into(dctx, p.gate_ctx.value.span(), dgate);
        add_into(dh_out, p.gate_h.value.span(), dgate);
        add_into(demb, p.gate_emb.value.span(), dgate);

        if (!k.h_mask.empty()) apply_mask(dh_out, k.h_mask);
        Vec dh = dh_out;
        add_into(dh, dh_next);
        attention_backward(k.attn_out, dattn, dctx, enc, p, dh, dcov, dkeys, dH);

        Vec dx(e + ctx_dim, 0.0), dh_prev(hd, 0.0), dc_prev(hd, 0.0);
        lstm_cell_backward(p.dec, k.lstm, dh, dc_next, dx, dh_prev, dc_prev);
        add_into(demb, std::span<const double>(dx).first(e));
        const Vec dctx_in(dx.begin() + static_cast<std::ptrdiff_t>(e), dx.end());
        attention_backward(k.attn_in, Vec(T, 0.0), dctx_in, enc, p, dh_prev, dcov, dkeys, dH);

        if (!k.emb_mask.empty()) apply_mask(demb, k.emb_mask);
        embedding_backward(p.title_emb.grad, k.input, demb);

        dh_next = std::move(dh_prev);
        dc_next = std::move(dc_prev);
        dcov_next = std::move(dcov);
    }

    // Bridge: h0 = tanh(Wh s + bh), c0 = tanh(Wc s + bc).
    Vec ds(ctx_dim, 0.0);
    Vec dpre_h(hd), dpre_c(hd);
    for (std::size_t j = 0; j < hd; ++j) {
        dpre_h[j] = dh_next[j] * (1.0 - bridge.h[j] * bridge.h[j]);
        dpre_c[j] = dc_next[j] * (1.0 - bridge.c[j] * bridge.c[j]);
    }
    affine_backward(enc.s, p.bridge_h_w.value, dpre_h, ds, p.bridge_h_w.grad, p.bridge_h_b.grad.span());
    affine_backward(enc.s, p.bridge_c_w.value, dpre_c, ds, p.bridge_c_w.grad, p.bridge_c_b.grad.span());
    const std::size_t he = c.enc_hidden;
    const auto first = enc_cache.live.front(), last = enc_cache.live.back();
    for (std::size_t j = 0; j < he; ++j) {
        dH(last, j) += ds[j];
        dH(first, he + j) += ds[he + j];
    }
    // Attention keys = W_keys H_i.
    for (auto i : enc_cache.live) matvec_backward(enc.H.row(i), p.attn_keys.value, dkeys.row(i), dH.row(i),
                                                  p.attn_keys.grad);
    encode_backward(enc_cache, dH, p, c);
    return result;
}

}  // namespace qtitle
