#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtitle {

enum class PostType { question, other };

struct RawPost {
    std::int64_t post_id = 0;
    PostType post_type = PostType::question;
    std::int64_t score = 0;
    std::string title;
    std::string body_html;  // XML-unescaped, i.e. the post's HTML
    std::vector<std::string> tags;
};

/// The input ended inside an element or before the root element was closed.
class TruncatedInput : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Pull parser over a Posts.xml style dump (`<posts><row .../>...</posts>`).
///
/// Reads the input in fixed-size chunks and keeps at most one partially
/// received element buffered, so memory does not grow with the number of
/// rows. Only question rows (PostTypeId=1) are yielded; malformed rows are
/// skipped and counted in warnings().
class PostReader {
  public:
    /// Returns the number of bytes written into the buffer, 0 at end of input.
    using Source = std::function<std::size_t(char*, std::size_t)>;

    explicit PostReader(Source source, std::size_t chunk_size = 1 << 16);
    /// Plain or gzip-compressed file; compression is detected from the magic bytes.
    static PostReader open_file(const std::string& path);
    static PostReader from_stream(std::istream& in, std::size_t chunk_size = 1 << 16);

    /// Next question row; std::nullopt at a clean end of input.
    /// Throws TruncatedInput once all complete rows have been yielded.
    std::optional<RawPost> next();

    std::size_t warnings() const { return warnings_; }
    std::size_t rows_seen() const { return rows_seen_; }
    /// High-water mark of the internal buffer, in bytes.
    std::size_t max_buffer_bytes() const { return max_buffer_; }

  private:
    bool fill();
    std::optional<RawPost> parse_row(std::string_view element);

    Source source_;
    std::size_t chunk_size_;
    std::string buffer_;
    std::size_t pos_ = 0;
    bool eof_ = false;
    bool root_open_ = false;
    bool root_closed_ = false;
    std::size_t warnings_ = 0;
    std::size_t rows_seen_ = 0;
    std::size_t max_buffer_ = 0;
};

/// Decodes the five predefined XML entities and numeric character references.
/// HTML named entities are decoded too (nbsp, copy, ...), which covers post bodies.
std::string decode_entities(std::string_view text);

}  // namespace qtitle
