#include "qtitle/cli.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "qtitle/checkpoint.hpp"
#include "qtitle/corpus.hpp"
#include "qtitle/inference.hpp"
#include "qtitle/retrieval.hpp"
#include "qtitle/service.hpp"
#include "qtitle/training.hpp"

namespace qtitle {

namespace {

constexpr std::array<std::string_view, 8> kCommands{"ingest", "preprocess", "vocab", "train",
                                                    "eval",   "index",      "serve", "query"};

/// Raised for bad flag values detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("{}: cannot open", path));
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TrainSettings {
    ModelConfig model;
    TrainConfig train;
    std::size_t code_vocab_size = 30000;
    std::size_t title_vocab_size = 30000;
    std::int64_t min_count = 2;
};

template <typename T>
void take(const nlohmann::json& section, const char* key, T& dst) {
    if (section.contains(key)) dst = section.at(key).get<T>();
}

/// {"model": {...}, "train": {...}, "vocab": {...}}; absent keys keep defaults.
TrainSettings parse_train_settings(const std::string& path) {
    TrainSettings s;
    if (path.empty()) return s;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
        const auto known = {"model", "train", "vocab"};
        for (const auto& [k, v] : j.items())
            if (std::find(known.begin(), known.end(), k) == known.end())
                throw std::runtime_error(fmt::format("unknown section '{}'", k));
        const auto m = j.value("model", nlohmann::json::object());
        take(m, "emb_dim", s.model.emb_dim);
        take(m, "enc_hidden", s.model.enc_hidden);
        take(m, "dec_hidden", s.model.dec_hidden);
        take(m, "coverage_weight", s.model.coverage_weight);
        take(m, "dropout", s.model.dropout_rate);
        const auto t = j.value("train", nlohmann::json::object());
        take(t, "batch_size", s.train.batch_size);
        take(t, "epochs", s.train.epochs);
        take(t, "learning_rate", s.train.learning_rate);
        take(t, "grad_clip_norm", s.train.grad_clip_norm);
        take(t, "warmup_fraction", s.train.warmup_fraction);
        take(t, "early_stop_patience", s.train.early_stop_patience);
        const auto v = j.value("vocab", nlohmann::json::object());
        take(v, "code_max_size", s.code_vocab_size);
        take(v, "title_max_size", s.title_vocab_size);
        take(v, "min_count", s.min_count);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
    }
    return s;
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw UsageError(fmt::format("--addr '{}' is not host:port", addr));
    try {
        const int port = std::stoi(addr.substr(colon + 1));
        if (port < 0 || port > 65535) throw std::out_of_range("port");
        return {addr.substr(0, colon), port};
    } catch (const std::logic_error&) {
        throw UsageError(fmt::format("--addr '{}' has an invalid port", addr));
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
        std::find(kCommands.begin(), kCommands.end(), args[0]) == kCommands.end()) {
        fmt::print(err, "unknown command '{}'; run with --help for the command list\n", args[0]);
        return exit_code::usage;
    }

    CLI::App app{"Generate question titles for code snippets and retrieve similar questions."};
    app.require_subcommand(1);
    std::uint64_t seed = 1;

    std::string dump, tag = "python", out_path;
    auto* ingest_cmd = app.add_subcommand("ingest", "Stream a Posts.xml dump (plain or gzip) into raw code/title pairs");
    ingest_cmd->add_option("--dump", dump, "Posts.xml or Posts.xml.gz")->required();
    ingest_cmd->add_option("--tag", tag, "Keep questions with this tag; empty keeps all")->capture_default_str();
    ingest_cmd->add_option("--out", out_path, "Raw pairs (JSON lines)")->required();

    std::string in_path;
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Tokenize, normalize, filter and deduplicate raw pairs");
    preprocess_cmd->add_option("--in", in_path, "Raw pairs from ingest")->required();
    preprocess_cmd->add_option("--out", out_path, "Corpus (JSON lines)")->required();

    std::string side;
    std::size_t max_size = 30000;
    std::int64_t min_count = 2;
    auto* vocab = app.add_subcommand("vocab", "Build a vocabulary file from a corpus");
    vocab->add_option("--in", in_path, "Corpus")->required();
    vocab->add_option("--side", side, "code or title")->required()->check(CLI::IsMember({"code", "title"}));
    vocab->add_option("--max-size", max_size, "Entries including the six specials")->capture_default_str();
    vocab->add_option("--min-count", min_count, "Minimum token frequency")->capture_default_str();
    vocab->add_option("--out", out_path, "Vocabulary file")->required();

    std::string corpus, config_path, valid_path, code_vocab_path, title_vocab_path, metrics_path;
    auto* train_cmd = app.add_subcommand("train", "Train a model; keeps the epoch with the best validation perplexity");
    train_cmd->add_option("--corpus", corpus, "Corpus; its train split is used unless --valid is given")->required();
    train_cmd->add_option("--config", config_path, "JSON with optional model/train/vocab sections");
    train_cmd->add_option("--seed", seed, "Seed for initialization, dropout and batching")->capture_default_str();
    train_cmd->add_option("--valid", valid_path, "Separate validation corpus (then all of --corpus is trained on)");
    train_cmd->add_option("--code-vocab", code_vocab_path, "Use this code vocabulary instead of building one");
    train_cmd->add_option("--title-vocab", title_vocab_path, "Use this title vocabulary instead of building one");
    train_cmd->add_option("--metrics", metrics_path, "Per-epoch metrics (JSON lines)");
    train_cmd->add_option("--out", out_path, "Checkpoint")->required();

    std::string model_path, split = "all";
    std::size_t beam = 5;
    auto* eval = app.add_subcommand("eval", "Report perplexity and beam top-1 exact match");
    eval->add_option("--model", model_path, "Checkpoint")->required();
    eval->add_option("--corpus", corpus, "Corpus")->required();
    eval->add_option("--split", split, "all, train, valid or test")
        ->check(CLI::IsMember({"all", "train", "valid", "test"}))
        ->capture_default_str();
    eval->add_option("--beam", beam, "Beam width")->capture_default_str();

    LshConfig lsh;
    auto* index_cmd = app.add_subcommand("index", "Embed a corpus and write the retrieval index");
    index_cmd->add_option("--model", model_path, "Checkpoint")->required();
    index_cmd->add_option("--corpus", corpus, "Corpus")->required();
    index_cmd->add_option("--seed", seed, "Hyperplane seed")->capture_default_str();
    index_cmd->add_option("--tables", lsh.tables, "LSH tables")->capture_default_str();
    index_cmd->add_option("--planes", lsh.planes, "Hyperplanes per table")->capture_default_str();
    index_cmd->add_option("--exact-below", lsh.exact_below, "Scan exactly below this many rows")->capture_default_str();
    index_cmd->add_option("--out", out_path, "Index file")->required();

    std::string index_path, addr = "127.0.0.1:8080", static_dir;
    ServiceOptions sopt;
    auto* serve = app.add_subcommand("serve", "Serve POST /api/query and GET /api/health");
    serve->add_option("--model", model_path, "Checkpoint")->envname("QTITLE_MODEL")->required();
    serve->add_option("--index", index_path, "Index file")->envname("QTITLE_INDEX")->required();
    serve->add_option("--addr", addr, "host:port")->envname("QTITLE_ADDR")->capture_default_str();
    serve->add_option("--static", static_dir, "Directory served under /")->envname("QTITLE_STATIC");
    serve->add_option("--beam", sopt.beam, "Beam width")->capture_default_str();
    serve->add_option("--k", sopt.generated_k, "Generated titles returned")->capture_default_str();

    std::string code_file;
    auto* query = app.add_subcommand("query", "Answer one query offline; prints the same JSON as /api/query");
    query->add_option("--model", model_path, "Checkpoint")->required();
    query->add_option("--index", index_path, "Index file")->required();
    query->add_option("--code-file", code_file, "Snippet file; standard input when absent");
    query->add_option("--beam", sopt.beam, "Beam width")->capture_default_str();
    query->add_option("--k", sopt.generated_k, "Generated titles returned")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        fmt::print(err, "{}\n", e.what());
        return exit_code::usage;
    }

    try {
        if (sopt.beam < 1 || beam < 1) throw UsageError("--beam must be >= 1");
        if (sopt.generated_k < 1 || sopt.generated_k > sopt.beam) throw UsageError("--k must be in [1, beam]");
        if (*index_cmd) {
            try {
                lsh.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }
        if (*ingest_cmd) {
            auto reader = PostReader::open_file(dump);
            std::ofstream o(out_path, std::ios::binary | std::ios::trunc);
            if (!o) throw std::runtime_error(fmt::format("{}: cannot open for writing", out_path));
            const auto stats = ingest(reader, tag, [&](const RawPair& p) { o << to_json_line(p) << '\n'; });
            o.flush();
            if (!o) throw std::runtime_error(fmt::format("{}: write failed", out_path));
            fmt::print(err, "ingest: {} questions, {} pairs, {} malformed rows skipped\n", stats.questions,
                       stats.extracted, stats.warnings);
        } else if (*preprocess_cmd) {
            std::ifstream i(in_path, std::ios::binary);
            if (!i) throw std::runtime_error(fmt::format("{}: cannot open", in_path));
            std::vector<PairRecord> kept;
            std::size_t seen = 0;
            std::string line;
            while (std::getline(i, line)) {
                if (line.empty()) continue;
                ++seen;
                try {
                    if (auto p = preprocess(raw_pair_from_json_line(line))) kept.push_back(std::move(*p));
                } catch (const std::exception& e) {
                    throw std::runtime_error(fmt::format("{}:{}: {}", in_path, seen, e.what()));
                }
            }
            const auto filtered = kept.size();
            kept = deduplicate(std::move(kept));
            write_pairs(out_path, kept);
            fmt::print(err, "preprocess: {} raw, {} passed filters, {} after dedup\n", seen, filtered, kept.size());
        } else if (*vocab) {
            const auto pairs = read_pairs(in_path);
            std::vector<TokenSequence> seqs;
            for (const auto& p : pairs) seqs.push_back(side == "code" ? p.code : p.title);
            const auto v = build_vocab(seqs, max_size, min_count);
            v.save(out_path);
            fmt::print(err, "vocab: {} entries\n", v.size());
        } else if (*train_cmd) {
            auto settings = parse_train_settings(config_path);
            settings.train.seed = seed;
            auto all = read_pairs(corpus);
            std::vector<PairRecord> train_pairs, valid_pairs;
            if (!valid_path.empty()) {
                train_pairs = std::move(all);
                valid_pairs = read_pairs(valid_path);
            } else {
                train_pairs = select_split(all, Split::train);
                valid_pairs = select_split(all, Split::valid);
            }
            if (train_pairs.empty() || valid_pairs.empty())
                throw std::runtime_error(fmt::format("train: {} training and {} validation pairs; both must be non-empty",
                                                     train_pairs.size(), valid_pairs.size()));
            auto skeleton = make_model(train_pairs, settings.model, settings.code_vocab_size,
                                       settings.title_vocab_size, settings.min_count);
            if (!code_vocab_path.empty() || !title_vocab_path.empty()) {
                auto cv = code_vocab_path.empty() ? skeleton.code_vocab : Vocabulary::load(code_vocab_path);
                auto tv = title_vocab_path.empty() ? skeleton.title_vocab : Vocabulary::load(title_vocab_path);
                settings.model.code_vocab_size = cv.size();
                settings.model.title_vocab_size = tv.size();
                settings.model.validate();
                skeleton = Seq2SeqModel(settings.model, std::move(cv), std::move(tv));
            }
            std::ofstream metrics;
            if (!metrics_path.empty()) {
                metrics.open(metrics_path, std::ios::trunc);
                if (!metrics) throw std::runtime_error(fmt::format("{}: cannot open for writing", metrics_path));
            }
            const auto result = train(train_pairs, valid_pairs, skeleton, settings.train, [&](const EpochMetrics& m) {
                const auto line = to_json_line(m);
                fmt::print(err, "{}\n", line);
                if (metrics.is_open()) metrics << line << '\n' << std::flush;
            });
            save_checkpoint(result.best, out_path);
            fmt::print(err, "train: best epoch {} of {}, saved {}\n", result.best_epoch, result.history.size(), out_path);
        } else if (*eval) {
            auto model = load_checkpoint(model_path);
            auto pairs = read_pairs(corpus);
            if (split != "all")
                pairs = select_split(pairs, split == "train" ? Split::train : split == "valid" ? Split::valid : Split::test);
            if (pairs.empty()) throw std::runtime_error("eval: no pairs in the selected split");
            const double ppl = validate(pairs, model);
            BeamConfig bc;
            bc.beam = beam;
            bc.k = 1;
            std::size_t exact = 0;
            for (const auto& p : pairs) {
                const auto best = beam_search(p.code, model, bc);
                exact += !best.empty() && best.front().title == p.title;
            }
            nlohmann::ordered_json j;
            j["pairs"] = pairs.size();
            j["perplexity"] = ppl;
            j["exact_match"] = static_cast<double>(exact) / static_cast<double>(pairs.size());
            out << j.dump() << '\n';
        } else if (*index_cmd) {
            const auto model = load_checkpoint(model_path);
            const auto pairs = read_pairs(corpus);
            lsh.seed = seed;
            IndexArtifact a{build_index(pairs, model), lsh};
            save_index(a, out_path);
            fmt::print(err, "index: {} rows x {} dims\n", a.index.rows(), a.index.dim());
        } else if (*serve) {
            const auto [host, port] = parse_addr(addr);
            const auto state = load_artifacts(model_path, index_path, sopt);
            HttpService http(*state, static_dir);
            const int bound = http.bind(host, port);
            fmt::print(err, "serving {} rows on {}:{}\n", state->index.rows(), host, bound);
            http.serve();
        } else if (*query) {
            std::string code;
            if (code_file.empty()) {
                std::ostringstream s;
                s << in.rdbuf();
                code = s.str();
            } else {
                code = read_file(code_file);
            }
            const auto state = load_artifacts(model_path, index_path, sopt);
            nlohmann::json req;
            req["code"] = code;
            const auto r = handle_query(*state, req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
            out << r.body;
            return r.status == 200 ? exit_code::ok : exit_code::data;
        }
    } catch (const UsageError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return exit_code::usage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return exit_code::data;
    }
    return exit_code::ok;
}

}  // namespace qtitle
