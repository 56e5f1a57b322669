#include "qtitle/checkpoint.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qtitle/binary_io.hpp"

namespace qtitle {

namespace {

std::atomic<std::size_t> g_loads{0};

std::string vocab_text(const Vocabulary& v) {
    std::ostringstream out;
    v.save(out);
    return out.str();
}

}  // namespace

void save_checkpoint(const Seq2SeqModel& model, std::ostream& out) {
    BinaryWriter w(out);
    w.bytes("Q2Q1", 4);
    w.u32(kCheckpointVersion);
    w.string(model.config.to_text());
    const auto params = model.params.all();
    w.u64(params.size());
    for (const auto* p : params) w.tensor(p->name, p->value);
    w.string(vocab_text(model.code_vocab));
    w.string(vocab_text(model.title_vocab));
}

void save_checkpoint(const Seq2SeqModel& model, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", tmp));
        save_checkpoint(model, out);
        out.flush();
        if (!out) throw std::runtime_error(fmt::format("{}: write failed", tmp));
    }
    std::filesystem::rename(tmp, path);
}

Seq2SeqModel load_checkpoint(std::istream& in, const std::string& source) {
    ++g_loads;
    BinaryReader r(in, source);
    r.expect_magic("Q2Q1");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        r.fail(fmt::format("checkpoint version mismatch: expected {}, found {}", kCheckpointVersion, version));
    ModelConfig config;
    try {
        config = ModelConfig::from_text(r.string());
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    ModelParams params(config);
    auto expected = params.all();
    const auto count = r.u64();
    if (count != expected.size())
        r.fail(fmt::format("expected {} tensors, found {}", expected.size(), count));
    for (auto* p : expected) {
        auto t = r.tensor();
        if (t.name != p->name) r.fail(fmt::format("expected tensor '{}', found '{}'", p->name, t.name));
        if (!t.tensor.same_shape(p->value))
            r.fail(fmt::format("tensor '{}': expected shape {}, found {}", p->name,
                               shape_string(p->value.shape()), shape_string(t.tensor.shape())));
        p->value = std::move(t.tensor);
    }
    std::istringstream code_in(r.string(1u << 30));
    Vocabulary code = Vocabulary::load(code_in, source + " (code vocabulary)");
    std::istringstream title_in(r.string(1u << 30));
    Vocabulary title = Vocabulary::load(title_in, source + " (title vocabulary)");
    if (code.size() != config.code_vocab_size || title.size() != config.title_vocab_size)
        r.fail(fmt::format("vocabulary sizes {} / {} do not match config {} / {}", code.size(), title.size(),
                           config.code_vocab_size, config.title_vocab_size));
    Seq2SeqModel model(config, std::move(code), std::move(title));
    model.params = std::move(params);
    return model;
}

Seq2SeqModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("{}: cannot open checkpoint", path));
    return load_checkpoint(in, path);
}

std::size_t checkpoint_load_count() { return g_loads.load(); }

std::string file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("{}: cannot open", path));
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return fmt::format("{:016x}", h);
}

}  // namespace qtitle
