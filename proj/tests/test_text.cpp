#include <gtest/gtest.h>

#include "qtitle/text.hpp"

using namespace qtitle;

namespace {

TokenSequence T(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST(Tokenize, SplitsPunctuationIntoSingleTokens) {
    EXPECT_EQ(tokenize("x=foo(a,b)", TextMode::code), T({"x", "=", "foo", "(", "a", ",", "b", ")"}));
    EXPECT_EQ(tokenize("  a\t\nb  ", TextMode::code), T({"a", "b"}));
    EXPECT_EQ(tokenize("a->b", TextMode::code), T({"a", "-", ">", "b"}));
    EXPECT_TRUE(tokenize("   ", TextMode::code).empty());
}

TEST(Tokenize, TitlesAreLowercasedCodeIsNot) {
    EXPECT_EQ(tokenize("How To Use MyClass?", TextMode::title), T({"how", "to", "use", "myclass", "?"}));
    EXPECT_EQ(tokenize("MyClass", TextMode::code), T({"MyClass"}));
}

TEST(Tokenize, NonAsciiBytesStayInsideWords) {
    const auto t = tokenize("caf\xC3\xA9 ok", TextMode::title);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], "caf\xC3\xA9");
}

TEST(Tokenize, NoTokenIsEmptyOrContainsWhitespace) {
    for (const auto& tok : tokenize("a  b\t(c)\r\n d . e", TextMode::code)) {
        EXPECT_FALSE(tok.empty());
        EXPECT_EQ(tok.find_first_of(" \t\r\n"), std::string::npos);
    }
}

TEST(Normalize, StringLiteralsBecomeOneToken) {
    EXPECT_EQ(preprocess_code("print(\"hello world\")"), T({"print", "(", "STRING", ")"}));
    EXPECT_EQ(preprocess_code("x = 'it\\'s'"), T({"x", "=", "STRING"}));
    // An unterminated quote on its line is left alone.
    EXPECT_EQ(preprocess_code("x = 'a\ny'"), T({"x", "=", "'", "a", "y", "'"}));
}

TEST(Normalize, NumbersCollapse) {
    EXPECT_EQ(preprocess_code("x = 3.14 + 0xFF - 7"), T({"x", "=", "NUMBER", "+", "NUMBER", "-", "NUMBER"}));
    // Identifiers containing digits are untouched.
    EXPECT_EQ(preprocess_code("v2 = a1"), T({"v2", "=", "a1"}));
    EXPECT_EQ(preprocess_code("a.b"), T({"a", ".", "b"}));
}

TEST(Interrogative, WholeTokenCaseInsensitive) {
    for (const char* w : {"how", "What", "WHY", "which", "when", "where", "who"}) EXPECT_TRUE(is_interrogative(w));
    EXPECT_FALSE(is_interrogative("however"));
    EXPECT_FALSE(is_interrogative("whom"));
}

TEST(Filter, BoundsAreInclusive) {
    const TokenSequence code16(16, "x"), code15(15, "x"), code128(128, "x"), code129(129, "x");
    const auto title = T({"how", "to", "do", "it"});
    EXPECT_TRUE(filter_pair(code16, title, 1));
    EXPECT_TRUE(filter_pair(code128, title, 1));
    EXPECT_FALSE(filter_pair(code15, title, 1));
    EXPECT_FALSE(filter_pair(code129, title, 1));
    EXPECT_FALSE(filter_pair(code16, title, 0));
    EXPECT_FALSE(filter_pair(code16, T({"how", "to", "do"}), 1));
    TokenSequence long_title(16, "w");
    long_title[0] = "why";
    EXPECT_TRUE(filter_pair(code16, long_title, 1));
    long_title.push_back("x");
    EXPECT_FALSE(filter_pair(code16, long_title, 1));
    EXPECT_FALSE(filter_pair(code16, T({"sort", "a", "list", "fast"}), 5));
}

TEST(Extract, JoinsCodeBlocksAndDecodesEntities) {
    RawPost p;
    p.post_id = 7;
    p.title = "How?";
    p.tags = {"python", "list"};
    p.body_html = "<p>text</p><pre><code>a &lt; b  \n</code></pre><p>and</p><code class=\"x\">c&amp;d</code><coder>no</coder>";
    const auto e = extract_pair(p, "python");
    ASSERT_TRUE(e);
    EXPECT_EQ(e->code, "a < b\nc&d");
    EXPECT_EQ(e->post_id, 7);
    EXPECT_FALSE(extract_pair(p, "java"));
    EXPECT_TRUE(extract_pair(p, ""));
}

TEST(Extract, RequiresTitleAndCode) {
    RawPost p;
    p.title = "How?";
    p.body_html = "<p>only prose</p>";
    EXPECT_FALSE(extract_pair(p, ""));
    p.body_html = "<code>   </code>";
    EXPECT_FALSE(extract_pair(p, ""));
    p.body_html = "<code>x</code>";
    p.title.clear();
    EXPECT_FALSE(extract_pair(p, ""));
}

TEST(Join, RoundTripsWithSplit) {
    EXPECT_EQ(join_tokens(T({"a", "b", "c"})), "a b c");
    EXPECT_EQ(join_tokens({}), "");
    EXPECT_EQ(join_tokens(T({"a", "b"}), "|"), "a|b");
}
