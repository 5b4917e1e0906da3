/*
 * Copyright 2026 The vocadistill Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "support.hpp"
#include "vocadistill/tokenizer.hpp"

namespace vd = vocadistill;
using vd::testing::make_vocab;

namespace {

std::vector<std::string> token_strings(const vd::Vocabulary& v, const vd::TokenizedSequence& s) {
  std::vector<std::string> out;
  for (auto id : s.ids) out.emplace_back(v.token(id));
  return out;
}

}  // namespace

TEST(Utf8, RoundTripsMultibyteText) {
  const std::string text = "naïve Привет 日本 \xF0\x9F\x98\x80";
  const auto cps = vd::utf8::decode(text);
  EXPECT_EQ(cps.size(), 17u);
  EXPECT_EQ(vd::utf8::encode(cps), text);
}

TEST(Utf8, RejectsMalformedInput) {
  EXPECT_THROW(vd::utf8::decode("ab\xC3"), std::invalid_argument);
  EXPECT_THROW(vd::utf8::decode("\xC0\x80"), std::invalid_argument);     // overlong
  EXPECT_THROW(vd::utf8::decode("\xED\xA0\x80"), std::invalid_argument);  // surrogate
}

TEST(PreTokenize, PunctuationIsItsOwnWord) {
  const auto split = vd::split_words("Hi, there!", vd::Normalization::none);
  ASSERT_EQ(split.words.size(), 4u);
  EXPECT_EQ(split.words[1].begin, 2u);
  EXPECT_EQ(split.words[1].end, 3u);
}

TEST(PreTokenize, LowercaseNormalization) {
  const auto split = vd::split_words("ABC Дом", vd::Normalization::lowercase);
  EXPECT_EQ(vd::utf8::encode(split.chars), "abc дом");
}

TEST(Vocabulary, SpecialsOccupyFirstIds) {
  const auto v = make_vocab({"a", "##b"});
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(1), "[UNK]");
  EXPECT_EQ(v.token(4), "[MASK]");
  EXPECT_TRUE(v.is_special(3));
  EXPECT_FALSE(v.is_special(5));
  EXPECT_TRUE(v.is_continuation("##b"));
  EXPECT_FALSE(v.is_continuation("##"));
}

TEST(Vocabulary, RejectsDuplicatesAndBareMarkers) {
  EXPECT_THROW(make_vocab({"a", "a"}), std::invalid_argument);
  EXPECT_THROW(make_vocab({"a", "##"}), std::invalid_argument);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  auto tokens = std::vector<std::string>(vd::kSpecialTokens.begin(), vd::kSpecialTokens.end());
  tokens.insert(tokens.end(), {"дом", "##а", "x"});
  const vd::Vocabulary v(tokens, vd::SpecialIds{}, "##", vd::Normalization::lowercase);
  const auto text = v.serialize();
  const auto back = vd::Vocabulary::parse(text);
  EXPECT_EQ(back.tokens(), v.tokens());
  EXPECT_EQ(back.normalization(), vd::Normalization::lowercase);
  EXPECT_EQ(back.serialize(), text);
}

TEST(Vocabulary, RejectsUnknownHeader) {
  EXPECT_THROW(vd::Vocabulary::parse("#!colour=blue\n[PAD]\n"), std::invalid_argument);
}

TEST(Tokenize, GreedyLongestPrefix) {
  const auto v = make_vocab({"un", "u", "##aff", "##a", "##able", "##ff", "##f", "##ab", "##le"});
  const auto seq = vd::tokenize(v, "unaffable");
  EXPECT_EQ(token_strings(v, seq), (std::vector<std::string>{"un", "##aff", "##able"}));
  EXPECT_EQ(seq.spans[1].begin, 2u);
  EXPECT_EQ(seq.spans[1].end, 5u);
}

TEST(Tokenize, UnsegmentableWordBecomesOneUnk) {
  const auto v = make_vocab({"a", "##b"});
  const auto seq = vd::tokenize(v, "ab abc a");
  ASSERT_EQ(seq.size(), 4u);
  EXPECT_EQ(seq.ids[1], *v.find("##b"));
  EXPECT_EQ(seq.ids[2], v.specials().unk);
  EXPECT_EQ(seq.spans[2].begin, 3u);
  EXPECT_EQ(seq.spans[2].end, 6u);
  EXPECT_EQ(seq.ids[3], *v.find("a"));
}

TEST(Tokenize, SpecialTokenStringsAreNotMatched) {
  const auto v = make_vocab({"[", "##U", "##N", "##K", "##]"});
  const auto seq = vd::tokenize(v, "[UNK]");
  // Punctuation splits the brackets apart; "UNK" has no word-initial piece.
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq.ids[0], *v.find("["));
  EXPECT_EQ(seq.ids[1], v.specials().unk);
}

TEST(BuildVocab, HandWorkedMerges) {
  // Pairs: (a,##b) x3, (##b,##c) x2, (x,##y) x1.
  const auto v = vd::build_vocab(std::string_view("abc abc ab xy"), 11);
  const std::vector<std::string> expect{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
                                        "##b",   "##c",   "##y",   "a",     "x",   "ab"};
  EXPECT_EQ(v.tokens(), expect);
  const auto v2 = vd::build_vocab(std::string_view("abc abc ab xy"), 12);
  EXPECT_EQ(v2.tokens().back(), "abc");
}

TEST(BuildVocab, MatchesReferenceImplementation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> len(1, 6), letter(0, 3), nwords(5, 60);
    std::vector<std::string> words;
    std::string corpus;
    const int n = nwords(rng);
    for (int i = 0; i < n; ++i) {
      std::string w;
      const int l = len(rng);
      for (int k = 0; k < l; ++k) w += static_cast<char>('a' + letter(rng));
      words.push_back(w);
      corpus += w + (i % 7 == 6 ? "\n" : " ");
    }
    const std::size_t target = 30 + static_cast<std::size_t>(trial);
    const auto got = vd::build_vocab(std::string_view(corpus), target);
    EXPECT_EQ(got.tokens(), vd::testing::reference_bpe_tokens(words, target)) << "trial " << trial;
  }
}

TEST(BuildVocab, RejectsTooSmallTargetWithMinimum) {
  try {
    (void)vd::build_vocab(std::string_view("abc abc"), 6);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("minimum feasible size 8"), std::string::npos) << e.what();
  }
}

TEST(BuildVocab, RejectsEmptyCorpus) {
  EXPECT_THROW((void)vd::build_vocab(std::string_view("  \n "), 10), std::invalid_argument);
}

TEST(BuildVocab, StopsWhenMergesRunOut) {
  const auto v = vd::build_vocab(std::string_view("ab"), 100);
  EXPECT_EQ(v.tokens().back(), "ab");
  EXPECT_EQ(v.size(), 8u);
}

TEST(BuildVocab, DeterministicAndCoversCorpus) {
  const std::string corpus = "the quick brown fox jumps over the lazy dog\nthe dog sleeps";
  const auto a = vd::build_vocab(std::string_view(corpus), 40);
  const auto b = vd::build_vocab(std::string_view(corpus), 40);
  EXPECT_EQ(a.serialize(), b.serialize());
  const auto seq = vd::tokenize(a, corpus);
  for (auto id : seq.ids) EXPECT_NE(id, a.specials().unk);
}

TEST(VocabIntersection, CoverageCountsSharedRegularTokens) {
  const auto teacher = make_vocab({"a", "b", "##c", "abc"});
  const auto student = make_vocab({"a", "##c", "zz"});
  const auto m = vd::vocab_intersection(teacher, student);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(m.coverage, 2.0 / 3.0);
  EXPECT_EQ(m.student_columns().size(), 7u);
  EXPECT_EQ(m.teacher_columns()[5], static_cast<std::size_t>(*teacher.find("a")));
}

TEST(VocabIntersection, IdenticalVocabulariesCoverEverything) {
  const auto v = make_vocab({"a", "##b"});
  EXPECT_DOUBLE_EQ(vd::vocab_intersection(v, v).coverage, 1.0);
}

TEST(VocabIntersection, RejectsDisjointOrMismatchedPrefix) {
  EXPECT_THROW(vd::vocab_intersection(make_vocab({"a"}), make_vocab({"b"})), std::invalid_argument);
  EXPECT_THROW(vd::vocab_intersection(make_vocab({"a"}), make_vocab({"a"}, "@@")), std::invalid_argument);
}
