#include <set>

#include <gtest/gtest.h>

#include "ldshift/words.hpp"
#include "oracles.hpp"

using namespace ldshift;

namespace {

const Alphabet ab = Alphabet::letters(2);
Word w(const std::string& s) { return parse_word(ab, s); }

}  // namespace

TEST(Words, ConcatExamples) {
  EXPECT_EQ(concat(Word::empty(2), w("ab")), w("ab"));
  EXPECT_EQ(concat(w("a"), w("bb")), w("abb"));
  const Word uv = concat(w("ab"), w("ba"));
  EXPECT_EQ(uv, w("abba"));
  EXPECT_EQ(uv.size(), 4u);
  EXPECT_EQ(concat(w("ab"), Word::empty(2)), w("ab"));
}

TEST(Words, ConcatAlphabetMismatch) {
  EXPECT_THROW(concat(w("a"), Word(3, {2})), AlphabetMismatch);
}

TEST(Words, EnumerateExamples) {
  const auto e0 = enumerate_words(ab, 0);
  ASSERT_EQ(e0.size(), 1u);
  EXPECT_TRUE(e0[0].empty());

  const auto e2 = enumerate_words(ab, 2);
  ASSERT_EQ(e2.size(), 4u);
  EXPECT_EQ(to_string(ab, e2[0]), "aa");
  EXPECT_EQ(to_string(ab, e2[1]), "ab");
  EXPECT_EQ(to_string(ab, e2[2]), "ba");
  EXPECT_EQ(to_string(ab, e2[3]), "bb");

  const Alphabet abc = Alphabet::letters(3);
  const auto e3 = enumerate_words(abc, 3);
  ASSERT_EQ(e3.size(), 27u);
  EXPECT_EQ(to_string(abc, e3.front()), "aaa");
  EXPECT_EQ(to_string(abc, e3.back()), "ccc");
}

TEST(Words, EnumerateMatchesOdometerOracle) {
  for (std::size_t A = 2; A <= 3; ++A)
    for (std::size_t t = 0; t <= 6; ++t) {
      const auto words = enumerate_words(Alphabet::letters(A), t);
      const auto ref = oracle::all_words(A, t);
      ASSERT_EQ(words.size(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_TRUE(std::equal(ref[i].begin(), ref[i].end(), words[i].symbols().begin(), words[i].symbols().end()));
    }
}

TEST(Words, EnumerateBudget) {
  EXPECT_THROW(enumerate_words(ab, 10, 1000), BudgetExceeded);
  EXPECT_NO_THROW(enumerate_words(ab, 10, 1024));
}

TEST(Words, ThetaExamples) {
  EXPECT_EQ(theta_apply(Involution::reversal(2), w("abb")), w("bba"));
  EXPECT_EQ(theta_apply(Involution::letterwise({1, 0}), w("ab")), w("ba"));
  EXPECT_EQ(theta_apply(Involution::reversal(std::vector<Symbol>{1, 0}), w("aab")), w("abb"));
}

TEST(Words, InvolutionRejectsNonInvolution) {
  EXPECT_THROW(Involution::letterwise({1, 2, 0}), InvalidArgument);
  EXPECT_THROW(Involution::letterwise({0, 5}), InvalidArgument);
}

TEST(Words, AlphabetInvariants) {
  EXPECT_THROW(Alphabet({"a"}), InvalidArgument);
  EXPECT_THROW(Alphabet({"a", "a"}), InvalidArgument);
  EXPECT_EQ(Alphabet::product(ab).label(1), "ab");
}

TEST(Words, SerializationRoundTrip) {
  const Alphabet multi({"up", "down", "left"});
  const Word x = parse_word(multi, "up,left,down");
  EXPECT_EQ(to_string(multi, x), "up,left,down");
  EXPECT_EQ(x.size(), 3u);
  EXPECT_EQ(to_string(ab, w("abba")), "abba");
  EXPECT_THROW(parse_word(ab, "abc"), InvalidArgument);
}

TEST(Words, LexIndexOrder) {
  const auto words = enumerate_words(Alphabet::letters(3), 4);
  for (std::size_t i = 0; i < words.size(); ++i) EXPECT_EQ(lex_index(words[i], 3), i);
}

TEST(Words, PrefixOrdersFirst) {
  EXPECT_TRUE(w("a") < w("aa"));
  EXPECT_TRUE(Word::empty(2) < w("a"));
  EXPECT_FALSE(w("b") < w("ab"));
}

TEST(WordsProperty, ConcatAssociativeAndThetaInvolutive) {
  const Alphabet abc = Alphabet::letters(3);
  const auto short_words = [&] {
    std::vector<Word> v;
    for (std::size_t t = 0; t <= 2; ++t)
      for (auto& x : enumerate_words(abc, t)) v.push_back(x);
    return v;
  }();
  for (const auto& u : short_words)
    for (const auto& v : short_words)
      for (const auto& x : short_words) {
        ASSERT_EQ(concat(concat(u, v), x), concat(u, concat(v, x)));
      }

  const std::vector<Involution> thetas = {Involution::reversal(3), Involution::letterwise({2, 1, 0}),
                                          Involution::reversal(std::vector<Symbol>{1, 0, 2})};
  for (std::size_t t = 0; t <= 8; ++t) {
    const auto words = enumerate_words(abc, t);
    std::set<std::vector<Symbol>> seen;
    for (const auto& x : words) seen.insert(std::vector<Symbol>(x.symbols().begin(), x.symbols().end()));
    ASSERT_EQ(seen.size(), words.size());
    for (const auto& th : thetas)
      for (const auto& x : words) ASSERT_EQ(theta_apply(th, theta_apply(th, x)), x);
  }
}
