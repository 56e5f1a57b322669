#include <sstream>

#include <gtest/gtest.h>

#include "qtitle/binary_io.hpp"
#include "qtitle/corpus.hpp"
#include "support.hpp"

using namespace qtitle;

TEST(Corpus, JsonLineRoundTrip) {
    auto p = fixtures::make_pair(42, "def f ( x ) : return x", "how to return \"x\" caf\xC3\xA9");
    std::stringstream ss;
    write_pairs(ss, {p, p});
    const auto back = read_pairs(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], p);
    EXPECT_EQ(back[0].url, "https://stackoverflow.com/questions/42");
}

TEST(Corpus, FieldOrderIsFixed) {
    const auto line = to_json_line(fixtures::make_pair(1, "a", "b"));
    EXPECT_EQ(line, R"({"post_id":1,"url":"https://stackoverflow.com/questions/1","code":["a"],"title":["b"],"score":3,"tag":"python"})");
}

TEST(Corpus, BadLinesNameTheLine) {
    std::istringstream in(to_json_line(fixtures::make_pair(1, "a", "b")) + "\n{\"post_id\":2}\n");
    try {
        read_pairs(in, "c.jsonl");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("c.jsonl:2"), std::string::npos) << e.what();
    }
    std::istringstream empty_tok(R"({"post_id":1,"url":"u","code":[""],"title":["b"],"score":3,"tag":"t"})");
    EXPECT_THROW(read_pairs(empty_tok), FormatError);
}

TEST(Corpus, RawPairRoundTrip) {
    const RawPair r{9, -1, "python", "x = 1\ny", "Why?"};
    EXPECT_EQ(raw_pair_from_json_line(to_json_line(r)), r);
}

TEST(Corpus, PreprocessAppliesFilters) {
    RawPair r{5, 2, "python", "a1 = b1 + c1\na2 = b2 + c2\na3 = b3 + c3\na4 = b4 + c4", "How do I add numbers"};
    const auto p = preprocess(r);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->code.size(), 20u);
    EXPECT_EQ(p->title.front(), "how");
    r.score = 0;
    EXPECT_FALSE(preprocess(r));
    r.score = 2;
    r.title = "Adding numbers in a loop";
    EXPECT_FALSE(preprocess(r));
}

TEST(Corpus, DeduplicateKeepsBestScoreThenLowestId) {
    auto a = fixtures::make_pair(10, "x y", "how z");
    auto b = a;
    b.post_id = 4;
    auto c = a;
    c.post_id = 20;
    c.score = 9;
    auto d = fixtures::make_pair(2, "other", "how z");
    auto out = deduplicate({a, b, d});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].post_id, 2);
    EXPECT_EQ(out[1].post_id, 4);
    out = deduplicate({a, b, c, d});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].post_id, 20);
}

TEST(Corpus, SplitsByPostIdModulo) {
    EXPECT_EQ(split_of(189), Split::train);
    EXPECT_EQ(split_of(190), Split::valid);
    EXPECT_EQ(split_of(194), Split::valid);
    EXPECT_EQ(split_of(195), Split::test);
    EXPECT_EQ(split_of(199), Split::test);
    std::vector<PairRecord> all;
    for (int i = 0; i < 1000; ++i) all.push_back(fixtures::make_pair(i, "a", "b"));
    EXPECT_EQ(select_split(all, Split::train).size(), 900u);
    EXPECT_EQ(select_split(all, Split::valid).size(), 50u);
    EXPECT_EQ(select_split(all, Split::test).size(), 50u);
}
