#include <sstream>

#include <gtest/gtest.h>

#include "qtitle/binary_io.hpp"
#include "qtitle/vocab.hpp"

using namespace qtitle;

TEST(Vocab, SpecialsHoldFixedIds) {
    const Vocabulary v;
    ASSERT_EQ(v.size(), special::count);
    EXPECT_EQ(v.token_of(special::pad), "<pad>");
    EXPECT_EQ(v.token_of(special::bos), "<s>");
    EXPECT_EQ(v.token_of(special::end), "</s>");
    EXPECT_EQ(v.token_of(special::unk), "<unk>");
    EXPECT_EQ(v.id_of("NUMBER"), special::number);
    EXPECT_EQ(v.id_of("STRING"), special::string);
    EXPECT_EQ(v.id_of("nope"), special::unk);
    EXPECT_THROW(v.token_of(6), std::out_of_range);
}

TEST(Vocab, OrderedByCountThenLexicographically) {
    const std::vector<TokenSequence> seqs{{"b", "a", "c", "c"}, {"a", "b", "d", "NUMBER", "c"}};
    const auto v = build_vocab(seqs, 100, 1);
    ASSERT_EQ(v.size(), 10u);
    EXPECT_EQ(v.token_of(6), "c");
    EXPECT_EQ(v.token_of(7), "a");
    EXPECT_EQ(v.token_of(8), "b");
    EXPECT_EQ(v.token_of(9), "d");
    EXPECT_EQ(v.count_of(6), 3);
}

TEST(Vocab, MaxSizeAndMinCount) {
    const std::vector<TokenSequence> seqs{{"a", "a", "a", "b", "b", "c"}};
    EXPECT_EQ(build_vocab(seqs, 7, 1).size(), 7u);
    EXPECT_EQ(build_vocab(seqs, 100, 2).size(), 8u);
    EXPECT_THROW(build_vocab(seqs, 6, 1), std::invalid_argument);
    EXPECT_THROW(build_vocab(seqs, 10, 0), std::invalid_argument);
}

TEST(Vocab, SaveLoadRoundTrip) {
    const std::vector<TokenSequence> seqs{{"x", "y", "y", "caf\xC3\xA9"}};
    const auto v = build_vocab(seqs, 100, 1);
    std::stringstream ss;
    v.save(ss);
    EXPECT_EQ(Vocabulary::load(ss), v);
}

TEST(Vocab, LoadRejectsBadFiles) {
    std::istringstream missing("<pad>\t0\n<s>\t0\n");
    EXPECT_THROW(Vocabulary::load(missing), FormatError);
    std::istringstream wrong("<pad>\t0\n<s>\t0\n</s>\t0\n<unk>\t0\nSTRING\t0\nNUMBER\t0\n");
    EXPECT_THROW(Vocabulary::load(wrong), FormatError);
    std::istringstream dup("<pad>\t0\n<s>\t0\n</s>\t0\n<unk>\t0\nNUMBER\t0\nSTRING\t0\nx\t1\nx\t1\n");
    EXPECT_THROW(Vocabulary::load(dup), FormatError);
    std::istringstream count("<pad>\t0\n<s>\t0\n</s>\t0\n<unk>\t0\nNUMBER\t0\nSTRING\t0\nx\tone\n");
    EXPECT_THROW(Vocabulary::load(count), FormatError);
}

TEST(ExtendedVocab, OovIdsFollowFirstOccurrence) {
    const std::vector<TokenSequence> seqs{{"a", "b"}};
    const auto v = build_vocab(seqs, 100, 1);
    const auto enc = encode_with_extended_vocab({"z", "a", "y", "z"}, v);
    EXPECT_EQ(enc.base_ids, (std::vector<TokenId>{special::unk, 6, special::unk, special::unk}));
    EXPECT_EQ(enc.ext_ids, (std::vector<TokenId>{8, 6, 9, 8}));
    EXPECT_EQ(enc.ext.size(), 10u);
    EXPECT_EQ(enc.ext.oov_tokens, (TokenSequence{"z", "y"}));
    EXPECT_EQ(encode_target({"y", "b", "q"}, v, enc.ext), (std::vector<TokenId>{9, 7, special::unk}));
}
