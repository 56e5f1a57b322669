#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qtitle/model.hpp"

namespace qtitle {

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 5.0;
    std::uint64_t seed = 1;
    /// Fraction of epochs trained with the coverage penalty switched off.
    double warmup_fraction = 0.5;
    std::size_t early_stop_patience = 5;

    void validate() const;
};

struct Batch {
    std::vector<std::size_t> examples;            // indices into the encoded corpus
    std::vector<std::vector<TokenId>> code;       // padded with PAD
    std::vector<Mask> code_mask;
    std::vector<std::vector<TokenId>> title;      // extended ids, padded with PAD
    std::vector<Mask> title_mask;
    std::vector<ExtendedVocab> ext;
};

/// Buckets by code length / 16, shuffles inside buckets, then cuts the
/// bucket-ordered sequence into batches. Throws on an empty corpus.
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, std::size_t batch_size,
                                std::uint64_t seed);

/// Adaptive moment estimation with bias correction.
class Adam {
  public:
    Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps);
    void step(ModelParams& params);
    double learning_rate() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Vec> m_, v_;
};

double global_grad_norm(const ModelParams& params);
/// Rescales gradients so the global norm is at most max_norm; returns the norm before clipping.
double clip_gradients(ModelParams& params, double max_norm);

/// exp(mean teacher-forced NLL per target token, END included); coverage penalty excluded.
/// `batch_size` only chunks the work and never changes the value.
double validate(const std::vector<EncodedPair>& pairs, ModelParams& params, const ModelConfig& config,
                std::size_t batch_size = 32);
double validate(const std::vector<PairRecord>& pairs, Seq2SeqModel& model, std::size_t batch_size = 32);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double valid_ppl = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    double coverage_weight = 0.0;
};

std::string to_json_line(const EpochMetrics& m);

struct TrainResult {
    Seq2SeqModel best;
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
};

/// Parameters are initialized from config.seed; model's vocabularies and
/// configuration are used as given.
TrainResult train(const std::vector<PairRecord>& train_pairs, const std::vector<PairRecord>& valid_pairs,
                  const Seq2SeqModel& skeleton, const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Builds code and title vocabularies from `pairs` and a model skeleton around them.
Seq2SeqModel make_model(const std::vector<PairRecord>& pairs, ModelConfig config, std::size_t code_max_size,
                        std::size_t title_max_size, std::int64_t min_count);

}  // namespace qtitle
