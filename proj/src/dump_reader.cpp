#include "qtitle/dump_reader.hpp"

#include <charconv>
#include <cstring>
#include <memory>

#include <fmt/format.h>
#include <zlib.h>

namespace qtitle {

namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

struct NamedEntity {
    std::string_view name;
    std::string_view text;
};

// nbsp maps to a plain space so that it separates tokens like ordinary whitespace.
constexpr NamedEntity kNamedEntities[] = {
    {"lt", "<"},   {"gt", ">"},      {"amp", "&"},      {"quot", "\""},    {"apos", "'"},
    {"nbsp", " "}, {"copy", "\xC2\xA9"}, {"hellip", "\xE2\x80\xA6"}, {"mdash", "\xE2\x80\x94"},
    {"ndash", "\xE2\x80\x93"},
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

template <typename T>
std::optional<T> parse_int(std::string_view s) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string> parse_tags(std::string_view raw) {
    std::vector<std::string> tags;
    std::string cur;
    for (char c : raw) {
        if (c == '<' || c == '>' || c == '|') {
            if (!cur.empty()) tags.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tags.push_back(std::move(cur));
    return tags;
}

// Position of the '>' closing the tag that starts at `from`, skipping quoted values.
std::size_t find_tag_end(const std::string& buf, std::size_t from) {
    char quote = 0;
    for (std::size_t i = from; i < buf.size(); ++i) {
        const char c = buf[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i;
        }
    }
    return std::string::npos;
}

}  // namespace

std::string decode_entities(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        if (text[i] != '&') {
            out += text[i++];
            continue;
        }
        const auto semi = text.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out += text[i++];
            continue;
        }
        const auto name = text.substr(i + 1, semi - i - 1);
        bool done = false;
        if (!name.empty() && name[0] == '#') {
            std::optional<std::uint32_t> cp;
            if (name.size() > 1 && (name[1] == 'x' || name[1] == 'X')) {
                std::uint32_t v{};
                auto hex = name.substr(2);
                auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
                if (ec == std::errc{} && p == hex.data() + hex.size() && !hex.empty()) cp = v;
            } else {
                cp = parse_int<std::uint32_t>(name.substr(1));
            }
            if (cp && *cp <= 0x10FFFF) {
                append_utf8(out, *cp);
                done = true;
            }
        } else {
            for (const auto& e : kNamedEntities)
                if (e.name == name) {
                    out += e.text;
                    done = true;
                    break;
                }
        }
        if (done) {
            i = semi + 1;
        } else {
            out += text[i++];
        }
    }
    return out;
}

PostReader::PostReader(Source source, std::size_t chunk_size)
    : source_(std::move(source)), chunk_size_(chunk_size) {}

PostReader PostReader::open_file(const std::string& path) {
    // gzread passes uncompressed input through unchanged, so the magic-byte
    // sniffing is zlib's.
    gzFile raw = gzopen(path.c_str(), "rb");
    if (!raw) throw std::runtime_error(fmt::format("{}: cannot open dump: {}", path, std::strerror(errno)));
    std::shared_ptr<gzFile_s> file(raw, [](gzFile f) { gzclose(f); });
    return PostReader([file, path](char* buf, std::size_t n) -> std::size_t {
        const int got = gzread(file.get(), buf, static_cast<unsigned>(n));
        if (got < 0) {
            int code = 0;
            const char* msg = gzerror(file.get(), &code);
            throw TruncatedInput(fmt::format("{}: {}", path, msg ? msg : "read error"));
        }
        return static_cast<std::size_t>(got);
    });
}

PostReader PostReader::from_stream(std::istream& in, std::size_t chunk_size) {
    return PostReader(
        [&in](char* buf, std::size_t n) -> std::size_t {
            in.read(buf, static_cast<std::streamsize>(n));
            return static_cast<std::size_t>(in.gcount());
        },
        chunk_size);
}

bool PostReader::fill() {
    if (eof_) return false;
    if (pos_ > 0) {
        buffer_.erase(0, pos_);
        pos_ = 0;
    }
    const auto old = buffer_.size();
    buffer_.resize(old + chunk_size_);
    const auto got = source_(buffer_.data() + old, chunk_size_);
    buffer_.resize(old + got);
    max_buffer_ = std::max(max_buffer_, buffer_.capacity());
    if (got == 0) eof_ = true;
    return got > 0;
}

std::optional<RawPost> PostReader::next() {
    while (true) {
        const auto lt = buffer_.find('<', pos_);
        if (lt == std::string::npos) {
            // Character data between elements carries nothing in this schema.
            pos_ = buffer_.size();
            if (!fill()) {
                if (root_open_ && !root_closed_)
                    throw TruncatedInput("dump ended before the root element was closed");
                return std::nullopt;
            }
            continue;
        }
        pos_ = lt;
        std::size_t end;
        const bool comment = buffer_.compare(lt, 4, "<!--") == 0;
        if (comment) {
            end = buffer_.find("-->", lt + 4);
            if (end != std::string::npos) end += 2;
        } else {
            end = find_tag_end(buffer_, lt + 1);
        }
        if (end == std::string::npos) {
            if (!fill()) {
                throw TruncatedInput(fmt::format("dump ended inside an element after {} rows", rows_seen_));
            }
            continue;
        }
        const std::string_view element(buffer_.data() + lt, end - lt + 1);
        pos_ = end + 1;
        if (comment || element.starts_with("<?") || element.starts_with("<!")) continue;
        if (element.starts_with("</")) {
            root_closed_ = true;
            continue;
        }
        if (element.starts_with("<row") && element.size() > 4 &&
            (is_space(element[4]) || element[4] == '/')) {
            ++rows_seen_;
            if (auto post = parse_row(element)) return post;
            continue;
        }
        if (!root_open_) {
            root_open_ = true;
            if (element.ends_with("/>")) root_closed_ = true;
        }
    }
}

std::optional<RawPost> PostReader::parse_row(std::string_view element) {
    if (!element.ends_with("/>")) {
        ++warnings_;
        return std::nullopt;
    }
    std::string_view body = element.substr(4, element.size() - 6);
    std::optional<std::string_view> id, type, score, title, html, tags;
    std::size_t i = 0;
    auto fail = [this] {
        ++warnings_;
        return std::nullopt;
    };
    while (true) {
        while (i < body.size() && is_space(body[i])) ++i;
        if (i >= body.size()) break;
        const auto name_start = i;
        while (i < body.size() && body[i] != '=' && !is_space(body[i])) ++i;
        const auto name = body.substr(name_start, i - name_start);
        while (i < body.size() && is_space(body[i])) ++i;
        if (name.empty() || i >= body.size() || body[i] != '=') return fail();
        ++i;
        while (i < body.size() && is_space(body[i])) ++i;
        if (i >= body.size() || (body[i] != '"' && body[i] != '\'')) return fail();
        const char q = body[i++];
        const auto close = body.find(q, i);
        if (close == std::string_view::npos) return fail();
        const auto value = body.substr(i, close - i);
        i = close + 1;
        if (name == "Id") id = value;
        else if (name == "PostTypeId") type = value;
        else if (name == "Score") score = value;
        else if (name == "Title") title = value;
        else if (name == "Body") html = value;
        else if (name == "Tags") tags = value;
    }
    if (!id || !type) return fail();
    const auto post_id = parse_int<std::int64_t>(*id);
    const auto post_type = parse_int<int>(*type);
    if (!post_id || !post_type) return fail();
    if (*post_type != 1) return std::nullopt;
    if (!score || !title || !html) return fail();
    const auto score_value = parse_int<std::int64_t>(*score);
    if (!score_value) return fail();

    RawPost post;
    post.post_id = *post_id;
    post.post_type = PostType::question;
    post.score = *score_value;
    post.title = decode_entities(*title);
    post.body_html = decode_entities(*html);
    if (tags) post.tags = parse_tags(decode_entities(*tags));
    return post;
}

}  // namespace qtitle
