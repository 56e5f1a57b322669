// Acceptance run: one PASS/FAIL line per criterion, measurements indented below.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gradient_suite.hpp"
#include "normalization_suite.hpp"
#include "pipeline_fixture.hpp"
#include "qtitle/cli.hpp"
#include "qtitle/inference.hpp"
#include "qtitle/retrieval.hpp"
#include "qtitle/text.hpp"
#include "retrieval_bench.hpp"
#include "service_fixture.hpp"

using namespace qtitle;

namespace {

struct Outcome {
    bool pass = false;
    std::vector<std::string> info;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    Outcome o;
    double primitive_worst = 0.0, model_worst = 0.0, model_abs = 0.0;
    std::string primitive_where, model_where;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (const auto& c : fixtures::primitive_checks(seed, 1e-5))
            if (c.result.max_relative_error > primitive_worst) {
                primitive_worst = c.result.max_relative_error;
                primitive_where = fmt::format("{} seed {} at {}", c.name, seed, c.result.worst);
            }
        auto t = fixtures::toy_instance(seed);
        const auto r = fixtures::sequence_loss_check(t, 1e-5);
        model_abs = std::max(model_abs, r.max_absolute_error);
        if (r.max_relative_error > model_worst) {
            model_worst = r.max_relative_error;
            model_where = fmt::format("seed {} at {} (analytic {:.3e}, numeric {:.3e})", seed, r.worst,
                                      r.worst_analytic, r.worst_numeric);
        }
    }
    const double secs = seconds_since(t0);
    o.pass = primitive_worst < 1e-4 && model_worst < 1e-4 && secs < 60.0;
    o.info.push_back(fmt::format("primitives: max relative error {:.3e} ({})", primitive_worst, primitive_where));
    o.info.push_back(fmt::format("sequence_loss: max relative error {:.3e} ({})", model_worst, model_where));
    o.info.push_back(fmt::format("sequence_loss: max absolute error {:.3e}", model_abs));
    o.info.push_back(fmt::format("10 seeds, eps 1e-5, {:.1f} s", secs));
    return o;
}

Outcome normalization_suite() {
    Outcome o;
    const auto s = fixtures::normalization_sweep(1000, 1);
    o.pass = s.steps >= 1000 && s.max_dist_error < 1e-6 && s.max_attn_error < 1e-6 && s.masked_attention_zero &&
             s.p_gen_open_interval;
    o.info.push_back(fmt::format("{} steps: |sum P - 1| <= {:.2e}, |sum a - 1| <= {:.2e}", s.steps, s.max_dist_error,
                                 s.max_attn_error));
    o.info.push_back(fmt::format("masked attention exactly zero: {}, p_gen in ({:.4f}, {:.4f})",
                                 s.masked_attention_zero ? "yes" : "no", s.min_p_gen, s.max_p_gen));
    return o;
}

Outcome overfit() {
    const auto t0 = Clock::now();
    Outcome o;
    const auto pairs = fixtures::copy_corpus(20);
    const auto skeleton = fixtures::toy_model(pairs);
    std::size_t oov_titles = 0;
    for (const auto& p : pairs)
        for (const auto& w : p.title)
            if (!skeleton.title_vocab.find(w) && !skeleton.code_vocab.find(w)) {
                ++oov_titles;
                break;
            }
    TrainConfig tc;
    tc.epochs = 150;
    tc.batch_size = 4;
    tc.learning_rate = 0.005;
    tc.early_stop_patience = tc.epochs;
    auto model = train(pairs, pairs, skeleton, tc).best;
    const double ppl = validate(pairs, model);
    BeamConfig bc;
    bc.beam = 5;
    bc.k = 1;
    std::size_t exact = 0;
    std::string miss;
    for (const auto& p : pairs) {
        const auto best = beam_search(p.code, model, bc);
        if (!best.empty() && best.front().title == p.title) ++exact;
        else if (miss.empty() && !best.empty()) miss = fixtures::joined(best.front().title);
    }
    const double secs = seconds_since(t0);
    o.pass = ppl < 1.1 && exact >= 18 && oov_titles == pairs.size() && secs < 600.0;
    o.info.push_back(fmt::format("{} pairs, {} with a source-only identifier in the title", pairs.size(), oov_titles));
    o.info.push_back(fmt::format("{} epochs: train perplexity {:.4f}, exact beam-5 titles {}/20, {:.1f} s", tc.epochs,
                                 ppl, exact, secs));
    if (!miss.empty()) o.info.push_back(fmt::format("first miss: \"{}\"", miss));
    return o;
}

Outcome coverage_effect() {
    const auto t0 = Clock::now();
    Outcome o;
    o.pass = true;
    const auto train_pairs = fixtures::repetition_corpus(100, 7, 1, 3, 8);
    const auto held_out = fixtures::repetition_corpus(100, 99, 100000, 3, 8);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        double rate[2] = {0.0, 0.0};
        for (int arm = 0; arm < 2; ++arm) {
            ModelConfig mc;
            mc.coverage_weight = arm == 0 ? 0.0 : 1.0;
            const auto skeleton = fixtures::toy_model(train_pairs, mc);
            TrainConfig tc;
            tc.seed = seed;
            tc.epochs = 10;
            tc.batch_size = 8;
            tc.learning_rate = 0.003;
            tc.warmup_fraction = 0.5;
            tc.early_stop_patience = tc.epochs;
            const auto model = train(train_pairs, train_pairs, skeleton, tc).best;
            BeamConfig bc;
            bc.k = 1;
            std::vector<TokenSequence> titles;
            for (const auto& p : held_out) {
                const auto best = beam_search(p.code, model, bc);
                titles.push_back(best.empty() ? TokenSequence{} : best.front().title);
            }
            rate[arm] = repetition_rate(titles);
        }
        o.pass = o.pass && rate[1] <= rate[0];
        o.info.push_back(fmt::format("seed {}: repetition rate lambda=0 {:.4f}, lambda=1 {:.4f}", seed, rate[0], rate[1]));
    }
    o.info.push_back(fmt::format("100 held-out decodes per model, {:.1f} s", seconds_since(t0)));
    return o;
}

Outcome beam_greedy() {
    Outcome o;
    const auto model = fixtures::trained_copy_model();
    const auto& vocab = model.code_vocab;
    Rng rng(2024);
    std::size_t same = 0;
    const std::size_t n = 100;
    for (std::size_t i = 0; i < n; ++i) {
        TokenSequence code;
        const auto len = 1 + rng.below(40);
        for (std::size_t j = 0; j < len; ++j) {
            if (rng.uniform() < 0.2) code.push_back(fmt::format("ident{}", rng.below(50)));
            else code.push_back(vocab.token_of(static_cast<TokenId>(special::count + rng.below(vocab.size() - special::count))));
        }
        BeamConfig bc;
        bc.beam = 1;
        bc.k = 1;
        const auto beam = beam_search(code, model, bc);
        const auto greedy = greedy_decode(code, model, bc.max_len, bc.min_len);
        same += !beam.empty() && beam.front().ids == greedy.ids;
    }
    o.pass = same == n;
    o.info.push_back(fmt::format("{}/{} random inputs token-identical", same, n));
    return o;
}

Outcome retrieval_oracle() {
    Outcome o;
    const std::size_t rows = 10000, d = 64;
    const auto idx = fixtures::random_index(rows, d, 5);
    LshConfig cfg;
    cfg.tables = 8;
    cfg.planes = 16;
    cfg.exact_below = 0;
    const LshIndex lsh(idx, cfg);
    const auto b = fixtures::lsh_benchmark(idx, lsh, 1000, 5, 11);

    std::size_t self_rank1 = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = idx.C.row(r);
        const auto hits = exact_topk(row, idx, 1);
        self_rank1 += hits.size() == 1 && hits[0].row == r;
    }
    o.pass = b.recall >= 0.9 && self_rank1 == rows && b.p95_ms < 50.0;
    o.info.push_back(fmt::format("{} rows, d = {}, {} tables x {} planes, 1000 random unit queries", rows, d,
                                 cfg.tables, cfg.planes));
    o.info.push_back(fmt::format("recall@5 {:.3f}; {:.1f}% of queries fell back to the exact scan "
                                 "(too few bucket candidates); recall@5 from buckets alone {:.3f}",
                                 b.recall, 100.0 * b.fallback_rate, b.recall_without_fallback));
    o.info.push_back(fmt::format("exact self-retrieval rank-1 {}/{}", self_rank1, rows));
    o.info.push_back(fmt::format("p95 lsh_topk latency {:.3f} ms", b.p95_ms));
    return o;
}

Outcome pipeline_fidelity() {
    Outcome o;
    const auto pairs = fixtures::run_pipeline();
    const auto expected = fixtures::expected_kept(fixtures::read_expected());
    std::size_t violations = 0;
    for (const auto& p : pairs) {
        bool interrogative = false;
        for (const auto& w : p.title) interrogative = interrogative || is_interrogative(w);
        const bool ok = p.code.size() >= kMinCodeTokens && p.code.size() <= kMaxCodeTokens &&
                        p.title.size() >= kMinTitleTokens && p.title.size() <= kMaxTitleTokens &&
                        p.score >= kMinScore && interrogative;
        if (!ok) {
            ++violations;
            o.info.push_back(fmt::format("post {} violates the filter", p.post_id));
        }
    }
    o.pass = violations == 0 && fixtures::ids_of(pairs) == expected && pairs.size() == expected.size();
    o.info.push_back(fmt::format("{} pairs emitted, {} expected, ids match: {}", pairs.size(), expected.size(),
                                 fixtures::ids_of(pairs) == expected ? "yes" : "no"));
    return o;
}

std::string read_golden(const std::string& name) {
    std::ifstream in(std::string(QTITLE_GOLDEN_DIR) + "/" + name, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome service_contract() {
    Outcome o;
    const auto a = fixtures::write_service_artifacts("acceptance_service");
    const auto state = load_artifacts(a.model_path, a.index_path);
    const auto first = fixtures::joined(a.corpus.front().code);

    std::string long_code;
    for (int i = 0; i < 4097; ++i) long_code += "x ";
    const bool success = handle_query(*state, fixtures::query_body(first)).body == read_golden("query_success.json");
    const bool empty = handle_query(*state, fixtures::query_body("   ")).body == read_golden("query_empty_input.json");
    const bool too_long = handle_query(*state, fixtures::query_body(long_code)).body == read_golden("query_too_long.json");
    auto health = handle_health(*state).body;
    const auto at = health.find("\"uptime_seconds\":");
    if (at != std::string::npos) health = health.substr(0, at) + "\"uptime_seconds\":\"*\"}";
    const bool health_ok = health == read_golden("health.json");

    const auto models = checkpoint_load_count();
    const auto indexes = index_load_count();
    const auto t0 = Clock::now();
    for (int i = 0; i < 1000; ++i)
        handle_query(*state, fixtures::query_body(fixtures::joined(a.corpus[i % a.corpus.size()].code)));
    const double secs = seconds_since(t0);
    const auto reloads = (checkpoint_load_count() - models) + (index_load_count() - indexes);

    // The CLI opens its own copy of the artifacts, as a separate process would.
    std::istringstream in(first);
    std::ostringstream out, err;
    const int rc = run_cli({"query", "--model", a.model_path, "--index", a.index_path}, in, out, err);
    const bool cli_same = rc == 0 && out.str() == handle_query(*state, fixtures::query_body(first)).body;

    o.pass = success && empty && too_long && health_ok && reloads == 0 && cli_same;
    o.info.push_back(fmt::format("goldens: success {}, empty_input {}, too_long {}, health {}", success, empty,
                                 too_long, health_ok));
    o.info.push_back(fmt::format("1000 sequential queries in {:.1f} s, artifact reloads {}", secs, reloads));
    o.info.push_back(fmt::format("CLI query body identical to service body: {}", cli_same));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    // Optional argument: run only criteria whose name contains it.
    const std::string only = argc > 1 ? argv[1] : "";
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"normalization suite", normalization_suite},
        {"overfit reproduction", overfit},
        {"coverage effect", coverage_effect},
        {"beam/greedy equivalence", beam_greedy},
        {"retrieval oracle", retrieval_oracle},
        {"pipeline fidelity", pipeline_fidelity},
        {"service contract", service_contract},
    };
    int failed = 0;
    std::size_t ran = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::string(name).find(only) == std::string::npos) continue;
        ++ran;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.info.push_back(fmt::format("exception: {}", e.what()));
        }
        fmt::print("{} {} ({:.1f} s)\n", o.pass ? "PASS" : "FAIL", name, seconds_since(t0));
        for (const auto& line : o.info) fmt::print("    {}\n", line);
        std::fflush(stdout);
        failed += !o.pass;
    }
    fmt::print("{} of {} criteria passed\n", ran - failed, ran);
    return failed == 0 ? 0 : 1;
}
