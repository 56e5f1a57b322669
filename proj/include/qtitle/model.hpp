#pragma once

// Attentional encoder-decoder with a copy gate and a coverage vector.
//
// Encoder: two stacked bidirectional LSTM layers over code-token embeddings.
// Decoder: one LSTM layer whose input is the previous title token embedding
// concatenated with an attention context. Each step mixes a vocabulary
// softmax with the attention distribution scattered onto source tokens:
//
//   P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i : src[i] = w} attn_i
//
// and accumulates attention into the coverage vector, which feeds back into
// the attention scores and into the coverage penalty sum_i min(attn_i, cov_i).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qtitle/corpus.hpp"
#include "qtitle/ops.hpp"
#include "qtitle/rng.hpp"
#include "qtitle/tensor.hpp"
#include "qtitle/vocab.hpp"

namespace qtitle {

struct ModelConfig {
    std::size_t emb_dim = 32;
    std::size_t enc_hidden = 32;
    std::size_t dec_hidden = 64;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 1;
    std::size_t code_vocab_size = 0;
    std::size_t title_vocab_size = 0;
    double coverage_weight = 1.0;
    double dropout_rate = 0.2;

    std::size_t annotation_dim() const { return 2 * enc_hidden; }
    std::size_t attention_dim() const { return dec_hidden; }

    /// Throws std::invalid_argument on any violated invariant.
    void validate() const;
    /// key=value lines, fixed key order.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);

    bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
    Parameter code_emb;   // Vc x e
    Parameter title_emb;  // Vt x e
    LstmWeights enc_fwd[2];
    LstmWeights enc_bwd[2];
    Parameter bridge_h_w, bridge_h_b;  // hd x 2he, hd
    Parameter bridge_c_w, bridge_c_b;
    Parameter attn_keys;   // a x 2he
    Parameter attn_query;  // a x hd
    Parameter attn_cov;    // a
    Parameter attn_bias;   // a
    Parameter attn_v;      // a
    LstmWeights dec;       // input e + 2he
    Parameter out_w, out_b;  // Vt x (hd + 2he), Vt
    Parameter gate_ctx, gate_h, gate_emb, gate_b;

    explicit ModelParams(const ModelConfig& config);

    /// Every parameter, in a fixed order (the checkpoint order).
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    void zero_grad();

    /// uniform(-0.1, 0.1) weights, zero biases, forget-gate biases at 1.
    void initialize(Rng& rng);
};

/// The source snippet in both id spaces: code-vocabulary ids for the encoder,
/// and extended title-vocabulary ids as copy targets.
struct SourceEncoding {
    std::vector<TokenId> code_ids;
    std::vector<TokenId> copy_ids;
    ExtendedVocab ext;
};

SourceEncoding encode_source(const TokenSequence& code, const Vocabulary& code_vocab,
                             const Vocabulary& title_vocab);

struct EncodedPair {
    SourceEncoding source;
    std::vector<TokenId> target;  // title in the extended space, no BOS/END
};

EncodedPair encode_pair(const PairRecord& pair, const Vocabulary& code_vocab,
                        const Vocabulary& title_vocab);

struct EncoderOutput {
    Tensor H;   // T x 2he, forward || backward top-layer states; zero rows where masked
    Vec s;      // forward final || backward final, top layer
    Mask mask;
    Tensor keys;  // T x a, attention key projection of H (cached for the decoder)

    std::size_t length() const { return mask.size(); }
};

struct DecoderState {
    Vec h, c;
    Vec coverage;  // running sum of past attention, one entry per source position
};

struct AttentionResult {
    Vec attn;
    Vec context;
};

struct StepOutput {
    Vec dist;  // extended vocabulary
    Vec attn;
    double p_gen = 0.0;  // probability of generating from the vocabulary
    DecoderState new_state;
};

EncoderOutput encode(std::span<const TokenId> code_ids, const Mask& mask, const ModelParams& params,
                     const ModelConfig& config);
DecoderState init_decoder(const EncoderOutput& enc, const ModelParams& params);
AttentionResult attention(const DecoderState& state, const EncoderOutput& enc,
                          const ModelParams& params);

/// One free-running or teacher-forced step. Ids >= title_vocab_size must be
/// mapped to UNK by the caller (see feedback_id).
StepOutput decode_step(TokenId prev_id, const DecoderState& state, const EncoderOutput& enc,
                       const SourceEncoding& source, const ModelParams& params,
                       const ModelConfig& config);

/// Decoder input for a previously emitted extended id: copied OOV -> UNK.
TokenId feedback_id(TokenId emitted, const ModelConfig& config);

Vec final_distribution(std::span<const double> vocab_dist, std::span<const double> attn,
                       double p_gen, std::span<const TokenId> copy_ids, std::size_t ext_size);

inline constexpr double kLogSmoothing = 1e-12;

double step_loss(const StepOutput& step, TokenId target, std::span<const double> prev_coverage,
                 double coverage_weight);

struct LossOptions {
    bool teacher_forcing = true;
    /// Accumulate d(grad_scale * sum of step losses) into the parameter grads.
    bool compute_grad = false;
    double grad_scale = 1.0;
    /// Negative means config.coverage_weight.
    double coverage_weight = -1.0;
    /// Non-null enables dropout at config.dropout_rate.
    Rng* dropout = nullptr;
};

struct StepDiagnostics {
    TokenId input = 0;
    TokenId target = 0;
    double nll = 0.0;
    double coverage_penalty = 0.0;
    double p_gen = 0.0;
};

struct SequenceLoss {
    double loss = 0.0;      // mean step loss
    double nll_sum = 0.0;   // sum of -log P(target), coverage excluded
    double coverage_sum = 0.0;
    std::size_t steps = 0;  // target tokens including END
    std::vector<StepDiagnostics> diagnostics;
};

/// Title framed as BOS ... END; in free-running mode the decoder is fed its
/// own argmax instead of the gold previous token.
SequenceLoss sequence_loss(const EncodedPair& pair, ModelParams& params, const ModelConfig& config,
                           const LossOptions& options = {});

/// Trained artifact: configuration, weights and both vocabularies.
struct Seq2SeqModel {
    ModelConfig config;
    ModelParams params;
    Vocabulary code_vocab;
    Vocabulary title_vocab;

    Seq2SeqModel(ModelConfig c, Vocabulary code, Vocabulary title);
};

}  // namespace qtitle
