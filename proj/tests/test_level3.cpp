#include <cmath>

#include <gtest/gtest.h>

#include "ldshift/level3.hpp"
#include "oracles.hpp"

using namespace ldshift;

namespace {

const Alphabet ab = Alphabet::letters(2);

Measure golden_mean() {
  Eigen::MatrixXd P(2, 2);
  P << 0.6, 0.4, 1.0, 0.0;
  return make_markov(P);
}

Measure three_state() {
  Eigen::MatrixXd P(3, 3);
  P << 0.2, 0.7, 0.1, 0.05, 0.3, 0.65, 0.6, 0.1, 0.3;
  return make_markov(P);
}

Measure other_three_state() {
  Eigen::MatrixXd P(3, 3);
  P << 0.5, 0.25, 0.25, 0.1, 0.1, 0.8, 0.3, 0.4, 0.3;
  return make_markov(P);
}

}  // namespace

TEST(Level3, UniformSelf) {
  const Measure u = make_uniform(2);
  const EntropyReport r = entropy_rates(u, u, 8);
  EXPECT_NEAR(r.h_rate, std::log(2.0), 1e-14);
  EXPECT_NEAR(r.varsigma_rate, std::log(2.0), 1e-14);
  EXPECT_NEAR(r.ent_rate, 0.0, 1e-14);
  EXPECT_FALSE(r.witness);
}

TEST(Level3, BernoulliRelativeEntropy) {
  const Measure q = make_bernoulli({0.5, 0.5}), p = make_bernoulli({0.75, 0.25});
  const double kl = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  EXPECT_NEAR(kl, 0.143841, 1e-6);
  for (std::size_t t = 1; t <= 8; ++t) {
    // direct sum over words
    double ent = 0.0;
    for (const auto& x : oracle::all_words(2, t)) {
      const double a = oracle::iid_prob({0.5, 0.5}, x), b = oracle::iid_prob({0.75, 0.25}, x);
      ent += a * std::log(a / b);
    }
    const EntropyReport r = entropy_rates(q, p, t);
    EXPECT_NEAR(r.ent_rate, ent / t, 1e-13);
    EXPECT_NEAR(r.ent_rate, kl, 1e-13);
    EXPECT_NEAR(r.ent_rate, r.varsigma_rate - r.h_rate, 1e-13);
  }
}

TEST(Level3, ForbiddenWordGivesInfiniteRate) {
  const EntropyReport r = entropy_rates(make_uniform(2), golden_mean(), 2);
  EXPECT_EQ(r.ent_rate, kInf);
  EXPECT_EQ(r.varsigma_rate, kInf);
  ASSERT_TRUE(r.witness);
  EXPECT_EQ(to_string(ab, *r.witness), "bb");
  EXPECT_NEAR(r.h_rate, std::log(2.0), 1e-14);
}

TEST(Level3Property, RatesWithinBounds) {
  const std::vector<Measure> qs = {make_uniform(2), make_bernoulli({0.3, 0.7}), golden_mean(),
                                   make_hidden_renewal(GammaSpec::linear(1.0))};
  const Measure p = make_hidden_renewal(GammaSpec::quadratic(1.0));
  for (const auto& q : qs)
    for (std::size_t t = 1; t <= 8; ++t) {
      const EntropyReport r = entropy_rates(q, p, t);
      EXPECT_GE(r.h_rate, -1e-15);
      EXPECT_LE(r.h_rate, std::log(2.0) + 1e-14);
      EXPECT_GE(r.ent_rate, -1e-15);
      EXPECT_NEAR(r.ent_rate, r.varsigma_rate - r.h_rate, 1e-12);
    }
  EXPECT_THROW(entropy_rates(make_uniform(2), make_uniform(3), 2), AlphabetMismatch);
  EXPECT_THROW(entropy_rates(make_uniform(2), make_uniform(2), 30), BudgetExceeded);
}

TEST(Level3, MeanEntropyProduction) {
  const Measure p = make_bernoulli({0.3, 0.7}), ph = make_bernoulli({0.6, 0.4});
  const double kl = 0.3 * std::log(0.3 / 0.6) + 0.7 * std::log(0.7 / 0.4);
  for (std::size_t t = 1; t <= 8; ++t) {
    EXPECT_NEAR(mean_entropy_production(p, p, ph, t), kl, 1e-13);
    EXPECT_NEAR(mean_entropy_production(three_state(), three_state(), three_state(), t), 0.0, 0.0);
  }
}

TEST(Level3, MeanEntropyProductionPeriodicOrbit) {
  // Q alternates deterministically: at t = 4 only "abab" and "baba", each with mass 1/2.
  Eigen::MatrixXd flip(2, 2);
  flip << 0, 1, 1, 0;
  const Measure q = make_markov(flip);
  const Measure p = make_bernoulli({0.3, 0.7}), ph = make_uniform(2);
  const double hand = 0.25 * (0.5 * (2 * std::log(0.3) + 2 * std::log(0.7) - 4 * std::log(0.5)) +
                              0.5 * (2 * std::log(0.7) + 2 * std::log(0.3) - 4 * std::log(0.5)));
  EXPECT_NEAR(mean_entropy_production(q, p, ph, 4), hand, 1e-14);
}

TEST(Level3, MeanEntropyProductionNeedsSupport) {
  EXPECT_THROW(mean_entropy_production(make_uniform(2), make_uniform(2), golden_mean(), 3), AbsoluteContinuityError);
  EXPECT_THROW(mean_entropy_production(make_uniform(2), golden_mean(), make_uniform(2), 3), AbsoluteContinuityError);
  EXPECT_NO_THROW(mean_entropy_production(golden_mean(), make_uniform(2), make_uniform(2), 3));
}

TEST(Level3, FluctuationRelationHoldsExactly) {
  const Measure p = three_state();
  const std::vector<Measure> qs = {p, other_three_state(), make_uniform(3), make_bernoulli({0.1, 0.3, 0.6})};
  for (const auto& theta : {Involution::reversal(3), Involution::reversal(std::vector<Symbol>{1, 0, 2})})
    for (const auto& q : qs)
      for (std::size_t t = 1; t <= 8; ++t) {
        const Level3Check c = level3_fr_check(q, p, theta, t);
        ASSERT_FALSE(c.infinite);
        EXPECT_LE(c.fr_defect, 1e-12) << q.kind() << " t=" << t;
        EXPECT_LE(c.h_defect, 1e-12);
      }
}

TEST(Level3, FluctuationRelationSelfPair) {
  const Measure p = three_state();
  const Involution th = Involution::reversal(3);
  const Measure tp = theta_lift(p, th);
  for (std::size_t t = 2; t <= 6; ++t) {
    const Level3Check c = level3_fr_check(p, p, th, t);
    const double ep = entropy_rates(tp, p, t).varsigma_rate - entropy_rates(p, p, t).varsigma_rate;
    EXPECT_NEAR(c.lhs, ep, 1e-12);
    EXPECT_NEAR(c.rhs, ep, 1e-12);
    EXPECT_GT(ep, 0.0);
  }
}

TEST(Level3, FluctuationRelationReportsInfiniteSide) {
  // Theta swaps letters: Theta Q charges "bb", which the golden-mean P forbids.
  const Level3Check c = level3_fr_check(golden_mean(), golden_mean(), Involution::letterwise({1, 0}), 3);
  ASSERT_TRUE(c.infinite);
  EXPECT_NE(c.infinite->find("Theta Q"), std::string::npos);
  EXPECT_TRUE(std::isnan(c.fr_defect));
}

TEST(Level3Property, EntropyInvariantUnderInvolutions) {
  const std::vector<Measure> qs = {three_state(), other_three_state()};
  for (const auto& q : qs)
    for (const auto& th : {Involution::reversal(3), Involution::letterwise({2, 1, 0}),
                           Involution::reversal(std::vector<Symbol>{0, 2, 1})})
      for (std::size_t t = 1; t <= 6; ++t)
        EXPECT_NEAR(block_entropy(q, t), block_entropy(theta_lift(q, th), t), 1e-12);
}

TEST(Level3, SubadditivityUniform) {
  const SubadditivityReport r = ks_subadditivity_check(make_uniform(2), 8);
  EXPECT_LE(r.max_excess, 1e-12);
  EXPECT_NEAR(r.raw_max, 0.0, 1e-12);
  for (std::size_t k = 0; k <= 8; ++k) EXPECT_NEAR(r.h[k], k * std::log(2.0), 1e-12);
}

TEST(Level3, SubadditivityMarkov) {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.5, 0.5;
  const SubadditivityReport r = ks_subadditivity_check(make_markov(P), 8);
  EXPECT_LE(r.max_excess, 1e-12);
  EXPECT_LT(r.raw_max, 0.0);
  const SubadditivityReport h = ks_subadditivity_check(make_hidden_renewal(GammaSpec::lin_log(2.0, -2.0, 2.0)), 10);
  EXPECT_LE(h.max_excess, 1e-9);
  EXPECT_THROW(ks_subadditivity_check(make_uniform(2), 1), InvalidArgument);
}

TEST(Level3, EntropyOfMixtureIsNearlyAffine) {
  const Measure q1 = make_bernoulli({0.2, 0.8});
  const Measure q2 = make_hidden_renewal(GammaSpec::linear(1.0));
  for (std::size_t t = 1; t <= 8; ++t) {
    const double h1 = block_entropy(q1, t), h2 = block_entropy(q2, t);
    const double hm = block_entropy(
        [&](SymbolSpan w) { return std::log(0.5 * q1.probability(w) + 0.5 * q2.probability(w)); }, 2, t);
    EXPECT_GE(hm, 0.5 * (h1 + h2) - 1e-12);
    EXPECT_LE(hm, 0.5 * (h1 + h2) + std::log(2.0) + 1e-12);
  }
}
