#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "pipeline_fixture.hpp"
#include "qtitle/dump_reader.hpp"
#include "support.hpp"

using namespace qtitle;

namespace {

std::vector<RawPost> read_all(const std::string& xml, std::size_t chunk = 7, std::size_t* warnings = nullptr) {
    std::istringstream in(xml);
    auto reader = PostReader::from_stream(in, chunk);
    std::vector<RawPost> out;
    while (auto p = reader.next()) out.push_back(std::move(*p));
    if (warnings) *warnings = reader.warnings();
    return out;
}

std::string row(int id, int type = 1, const std::string& extra = "") {
    return "<row Id=\"" + std::to_string(id) + "\" PostTypeId=\"" + std::to_string(type) +
           "\" Score=\"2\" Title=\"How t" + std::to_string(id) + "\" Body=\"&lt;code&gt;x&lt;/code&gt;\" Tags=\"&lt;python&gt;\"" +
           extra + " />\n";
}

}  // namespace

TEST(Entities, XmlAndHtmlAndNumeric) {
    EXPECT_EQ(decode_entities("&lt;a&gt; &amp; &quot;q&quot; &apos;"), "<a> & \"q\" '");
    EXPECT_EQ(decode_entities("&#65;&#x42;&#xa;"), "AB\n");
    EXPECT_EQ(decode_entities("&#x20AC;"), "\xE2\x82\xAC");
    EXPECT_EQ(decode_entities("a&nbsp;b"), "a b");
    EXPECT_EQ(decode_entities("&bogus; & &#xZZ; &"), "&bogus; & &#xZZ; &");
    // Double-encoded body text decodes one level per pass.
    EXPECT_EQ(decode_entities(decode_entities("&amp;lt;")), "<");
}

TEST(PostReader, YieldsQuestionsOnlyAcrossChunkBoundaries) {
    const std::string xml = "<?xml version=\"1.0\"?>\n<posts>\n" + row(1) + row(2, 2) + row(3) + "</posts>\n";
    for (std::size_t chunk : {1u, 3u, 64u, 65536u}) {
        const auto posts = read_all(xml, chunk);
        ASSERT_EQ(posts.size(), 2u) << chunk;
        EXPECT_EQ(posts[0].post_id, 1);
        EXPECT_EQ(posts[1].post_id, 3);
        EXPECT_EQ(posts[0].body_html, "<code>x</code>");
        EXPECT_EQ(posts[0].tags, std::vector<std::string>{"python"});
    }
}

TEST(PostReader, TagFormats) {
    auto angle = read_all("<posts><row Id=\"1\" PostTypeId=\"1\" Score=\"1\" Title=\"t\" Body=\"b\" Tags=\"&lt;a&gt;&lt;b-c&gt;\" /></posts>");
    ASSERT_EQ(angle.size(), 1u);
    EXPECT_EQ(angle[0].tags, (std::vector<std::string>{"a", "b-c"}));
    auto pipe = read_all("<posts><row Id=\"1\" PostTypeId=\"1\" Score=\"1\" Title=\"t\" Body=\"b\" Tags=\"|a|b|\" /></posts>");
    ASSERT_EQ(pipe.size(), 1u);
    EXPECT_EQ(pipe[0].tags, (std::vector<std::string>{"a", "b"}));
    auto none = read_all("<posts><row Id=\"1\" PostTypeId=\"1\" Score=\"1\" Title=\"t\" Body=\"b\" /></posts>");
    ASSERT_EQ(none.size(), 1u);
    EXPECT_TRUE(none[0].tags.empty());
}

TEST(PostReader, AttributeValuesMayContainAngleBrackets) {
    auto posts = read_all("<posts><row Id=\"1\" PostTypeId=\"1\" Score=\"1\" Title=\"a > b?\" Body=\"x\" /></posts>");
    ASSERT_EQ(posts.size(), 1u);
    EXPECT_EQ(posts[0].title, "a > b?");
}

TEST(PostReader, MalformedRowsAreSkippedWithWarnings) {
    const std::string xml = "<posts>\n" + row(1) +
                            "<row Id=\"x\" PostTypeId=\"1\" Score=\"1\" Title=\"t\" Body=\"b\" />\n"
                            "<row Id=\"5\" PostTypeId=\"1\" Score=\"1\" Body=\"b\" />\n"
                            "<row Id=\"6\" PostTypeId=\"1\" Score=\"1\" Title=\"t\" Body=\"b\" Odd />\n" +
                            row(9) + "</posts>";
    std::size_t warnings = 0;
    const auto posts = read_all(xml, 5, &warnings);
    ASSERT_EQ(posts.size(), 2u);
    EXPECT_EQ(posts[1].post_id, 9);
    EXPECT_EQ(warnings, 3u);
}

TEST(PostReader, TruncatedInputThrowsAfterCompleteRows) {
    const std::string xml = "<posts>\n" + row(1) + row(2) + "<row Id=\"3\" PostTy";
    std::istringstream in(xml);
    auto reader = PostReader::from_stream(in, 4);
    EXPECT_TRUE(reader.next());
    EXPECT_TRUE(reader.next());
    EXPECT_THROW(reader.next(), TruncatedInput);

    std::istringstream unclosed("<posts>\n" + row(1));
    auto r2 = PostReader::from_stream(unclosed);
    EXPECT_TRUE(r2.next());
    EXPECT_THROW(r2.next(), TruncatedInput);
}

TEST(PostReader, EmptyInputIsCleanEnd) {
    std::istringstream in("");
    auto reader = PostReader::from_stream(in);
    EXPECT_FALSE(reader.next());
}

TEST(PostReader, ReadsGzipTransparently) {
    const auto dir = fixtures::temp_dir("gzip");
    const auto path = (dir / "posts.xml.gz").string();
    const std::string xml = "<posts>\n" + row(1) + row(4) + "</posts>\n";
    gzFile gz = gzopen(path.c_str(), "wb");
    ASSERT_NE(gz, nullptr);
    gzwrite(gz, xml.data(), static_cast<unsigned>(xml.size()));
    gzclose(gz);
    auto reader = PostReader::open_file(path);
    std::vector<std::int64_t> ids;
    while (auto p = reader.next()) ids.push_back(p->post_id);
    EXPECT_EQ(ids, (std::vector<std::int64_t>{1, 4}));
    EXPECT_THROW(PostReader::open_file((dir / "missing.xml").string()), std::runtime_error);
}

TEST(PostReader, StreamingMemoryStaysBounded) {
    // 100k rows generated on the fly; the reader never sees the whole dump.
    const std::size_t total = 100000;
    std::size_t next_row = 0;
    std::string pending = "<posts>\n";
    bool closed = false;
    PostReader reader(
        [&](char* buf, std::size_t n) -> std::size_t {
            while (pending.size() < n && !closed) {
                if (next_row < total) {
                    ++next_row;
                    pending += row(static_cast<int>(next_row), next_row % 3 == 0 ? 2 : 1);
                } else {
                    pending += "</posts>\n";
                    closed = true;
                }
            }
            const auto k = std::min(n, pending.size());
            std::memcpy(buf, pending.data(), k);
            pending.erase(0, k);
            return k;
        },
        4096);
    std::size_t questions = 0;
    while (reader.next()) ++questions;
    EXPECT_EQ(reader.rows_seen(), total);
    EXPECT_EQ(questions, total - total / 3);
    EXPECT_LT(reader.max_buffer_bytes(), 64u * 1024u);
}

TEST(Fixture, FiftyRowDumpMatchesLabels) {
    const auto rows = fixtures::read_expected();
    ASSERT_EQ(rows.size(), 50u);
    const auto kept = fixtures::run_pipeline();
    EXPECT_EQ(fixtures::ids_of(kept), fixtures::expected_kept(rows));
}
