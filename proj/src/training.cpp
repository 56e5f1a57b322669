#include "qtitle/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace qtitle {

void TrainConfig::validate() const {
    if (batch_size == 0 || epochs == 0 || early_stop_patience == 0)
        throw std::invalid_argument("train config: batch_size, epochs and patience must be positive");
    if (!(learning_rate > 0.0) || !(grad_clip_norm > 0.0))
        throw std::invalid_argument("train config: learning_rate and grad_clip_norm must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
        throw std::invalid_argument("train config: warmup_fraction must be in [0, 1]");
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, std::size_t batch_size,
                                std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("make_batches: empty corpus");
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be positive");
    std::map<std::size_t, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < pairs.size(); ++i) buckets[pairs[i].source.code_ids.size() / 16].push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> order;
    order.reserve(pairs.size());
    for (auto& [len, members] : buckets) {
        rng.shuffle(members);
        order.insert(order.end(), members.begin(), members.end());
    }

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        const auto stop = std::min(order.size(), start + batch_size);
        b.examples.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(stop));
        std::size_t code_len = 0, title_len = 0;
        for (auto i : b.examples) {
            code_len = std::max(code_len, pairs[i].source.code_ids.size());
            title_len = std::max(title_len, pairs[i].target.size() + 1);
        }
        for (auto i : b.examples) {
            const auto& p = pairs[i];
            auto code = p.source.code_ids;
            Mask cm(code.size(), 1);
            code.resize(code_len, special::pad);
            cm.resize(code_len, 0);
            auto title = p.target;
            title.push_back(special::end);
            Mask tm(title.size(), 1);
            title.resize(title_len, special::pad);
            tm.resize(title_len, 0);
            b.code.push_back(std::move(code));
            b.code_mask.push_back(std::move(cm));
            b.title.push_back(std::move(title));
            b.title_mask.push_back(std::move(tm));
            b.ext.push_back(p.source.ext);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

Adam::Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto* p : params.all()) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step(ModelParams& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto all = params.all();
    for (std::size_t k = 0; k < all.size(); ++k) {
        auto& value = all[k]->value.values();
        const auto& grad = all[k]->grad.values();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

double global_grad_norm(const ModelParams& params) {
    double sq = 0.0;
    for (const auto* p : params.all())
        for (double g : p->grad.values()) sq += g * g;
    return std::sqrt(sq);
}

double clip_gradients(ModelParams& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto* p : params.all())
            for (auto& g : p->grad.values()) g *= scale;
    }
    return norm;
}

double validate(const std::vector<EncodedPair>& pairs, ModelParams& params, const ModelConfig& config,
                std::size_t batch_size) {
    if (pairs.empty()) throw std::invalid_argument("validate: no pairs");
    if (batch_size == 0) batch_size = 1;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
        const auto stop = std::min(pairs.size(), start + batch_size);
        for (std::size_t i = start; i < stop; ++i) {
            LossOptions opt;
            opt.coverage_weight = 0.0;
            const auto r = sequence_loss(pairs[i], params, config, opt);
            nll += r.nll_sum;
            tokens += r.steps;
        }
    }
    return std::exp(nll / static_cast<double>(tokens));
}

double validate(const std::vector<PairRecord>& pairs, Seq2SeqModel& model, std::size_t batch_size) {
    std::vector<EncodedPair> encoded;
    encoded.reserve(pairs.size());
    for (const auto& p : pairs) encoded.push_back(encode_pair(p, model.code_vocab, model.title_vocab));
    return validate(encoded, model.params, model.config, batch_size);
}

std::string to_json_line(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["valid_ppl"] = m.valid_ppl;
    j["lr"] = m.lr;
    j["seconds"] = m.seconds;
    return j.dump();
}

TrainResult train(const std::vector<PairRecord>& train_pairs, const std::vector<PairRecord>& valid_pairs,
                  const Seq2SeqModel& skeleton, const TrainConfig& tc,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
    tc.validate();
    if (train_pairs.empty()) throw std::invalid_argument("train: empty training set");
    if (valid_pairs.empty()) throw std::invalid_argument("train: empty validation set");

    Seq2SeqModel model = skeleton;
    const ModelConfig& config = model.config;
    Rng init_rng(tc.seed);
    model.params.initialize(init_rng);
    Rng dropout_rng(tc.seed ^ 0x9E3779B97F4A7C15ull);

    std::vector<EncodedPair> train_set, valid_set;
    for (const auto& p : train_pairs) train_set.push_back(encode_pair(p, model.code_vocab, model.title_vocab));
    for (const auto& p : valid_pairs) valid_set.push_back(encode_pair(p, model.code_vocab, model.title_vocab));

    Adam adam(model.params, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps);
    const auto warmup_epochs =
        static_cast<std::size_t>(std::floor(tc.warmup_fraction * static_cast<double>(tc.epochs)));

    TrainResult result{model, {}, 0};
    double best_ppl = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lambda = epoch <= warmup_epochs ? 0.0 : config.coverage_weight;
        const auto batches = make_batches(train_set, tc.batch_size, tc.seed + epoch);
        double epoch_loss = 0.0;
        std::size_t epoch_tokens = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            std::size_t tokens = 0;
            for (auto i : batch.examples) tokens += train_set[i].target.size() + 1;
            model.params.zero_grad();
            double batch_loss = 0.0;
            for (auto i : batch.examples) {
                LossOptions opt;
                opt.compute_grad = true;
                opt.grad_scale = 1.0 / static_cast<double>(tokens);
                opt.coverage_weight = lambda;
                opt.dropout = &dropout_rng;
                const auto r = sequence_loss(train_set[i], model.params, config, opt);
                batch_loss += r.loss * static_cast<double>(r.steps);
            }
            if (!std::isfinite(batch_loss))
                throw NumericError(fmt::format("train: non-finite loss in epoch {} batch {} (examples starting at post {})",
                                               epoch, b, train_pairs[batch.examples.front()].post_id));
            clip_gradients(model.params, tc.grad_clip_norm);
            adam.step(model.params);
            epoch_loss += batch_loss;
            epoch_tokens += tokens;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
        m.valid_ppl = validate(valid_set, model.params, config);
        m.lr = adam.learning_rate();
        m.coverage_weight = lambda;
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(m);
        if (on_epoch) on_epoch(m);

        if (m.valid_ppl < best_ppl) {
            best_ppl = m.valid_ppl;
            result.best.params = model.params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.early_stop_patience) {
            break;
        }
    }
    result.best.params.zero_grad();
    return result;
}

Seq2SeqModel make_model(const std::vector<PairRecord>& pairs, ModelConfig config, std::size_t code_max_size,
                        std::size_t title_max_size, std::int64_t min_count) {
    std::vector<TokenSequence> code, title;
    for (const auto& p : pairs) {
        code.push_back(p.code);
        title.push_back(p.title);
    }
    auto code_vocab = build_vocab(code, code_max_size, min_count);
    auto title_vocab = build_vocab(title, title_max_size, min_count);
    config.code_vocab_size = code_vocab.size();
    config.title_vocab_size = title_vocab.size();
    config.validate();
    return Seq2SeqModel(config, std::move(code_vocab), std::move(title_vocab));
}

}  // namespace qtitle
