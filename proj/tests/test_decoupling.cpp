#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "ldshift/decoupling.hpp"
#include "ldshift/renewal.hpp"
#include "oracles.hpp"

using namespace ldshift;

namespace {

using Prob = std::function<double(const oracle::Seq&)>;

const Alphabet ab = Alphabet::letters(2);
Word w(const std::string& s) { return parse_word(ab, s); }

oracle::Seq cat(const oracle::Seq& a, const oracle::Seq& b, const oracle::Seq& c = {}) {
  oracle::Seq s(a);
  s.insert(s.end(), b.begin(), b.end());
  s.insert(s.end(), c.begin(), c.end());
  return s;
}

std::vector<oracle::Seq> words_upto(std::size_t A, std::size_t lo, std::size_t hi) {
  std::vector<oracle::Seq> out;
  for (std::size_t k = lo; k <= hi; ++k)
    for (auto& x : oracle::all_words(A, k)) out.push_back(x);
  return out;
}

// Brute-force SLD constant straight from the definition, in linear space.
double sld_oracle(const Prob& P, std::size_t A, std::size_t t, std::size_t tau, std::size_t v_max) {
  double c = -INFINITY;
  for (const auto& u : oracle::all_words(A, t))
    for (const auto& v : words_upto(A, 1, v_max)) {
      const double base = P(u) * P(v);
      if (base == 0.0) continue;
      double best = 0.0;
      for (const auto& xi : words_upto(A, 0, tau)) best = std::max(best, P(cat(u, xi, v)));
      c = std::max(c, best == 0.0 ? INFINITY : std::log(base / best));
    }
  return c;
}

double sld_window_oracle(const Prob& P, std::size_t A, std::size_t t, std::size_t tau, std::size_t k,
                         std::size_t v_max) {
  double c = -INFINITY;
  for (const auto& u : oracle::all_words(A, t))
    for (const auto& v : words_upto(A, 1, v_max)) {
      const double base = P(u) * P(v);
      if (base == 0.0) continue;
      double sum = 0.0;
      for (const auto& xi : words_upto(A, tau - k, tau)) sum += P(cat(u, xi, v));
      c = std::max(c, sum == 0.0 ? INFINITY : std::log(base / sum));
    }
  return c;
}

double ud_oracle(const Prob& P, std::size_t A, std::size_t t, std::size_t tau, std::size_t v_max) {
  double c = -INFINITY;
  for (const auto& u : oracle::all_words(A, t))
    for (const auto& v : words_upto(A, 1, v_max))
      for (const auto& xi : oracle::all_words(A, tau)) {
        const double p = P(cat(u, xi, v));
        if (p == 0.0) continue;
        const double base = P(u) * P(v);
        c = std::max(c, base == 0.0 ? INFINITY : std::log(p / base));
      }
  return c;
}

const std::vector<std::vector<double>> kCycle = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
const std::vector<std::vector<double>> kThree = {{0.2, 0.7, 0.1}, {0.05, 0.3, 0.65}, {0.6, 0.1, 0.3}};

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& P) {
  Eigen::MatrixXd M(P.size(), P.size());
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < P.size(); ++j) M(i, j) = P[i][j];
  return M;
}

Prob markov_oracle(const std::vector<std::vector<double>>& P) {
  const auto pi = oracle::stationary(P);
  return [P, pi](const oracle::Seq& x) { return oracle::markov_prob(P, pi, x); };
}

Prob renewal_oracle(const GammaSpec& g) {
  return [g](const oracle::Seq& x) { return oracle::hidden_renewal_prob([&](std::size_t n) { return g(n); }, x); };
}

DecouplingSpec spec_of(std::size_t tau, std::size_t v_max) {
  DecouplingSpec s;
  s.tau = tau;
  s.v_max = v_max;
  return s;
}

void expect_witnesses_replay(const Measure& m, const DecouplingReport& r) {
  double mx = kNegInf;
  std::vector<Symbol> buf;
  for (const auto& e : r.witnesses) {
    mx = std::max(mx, e.value);
    if (!e.xi) {  // no insert with positive mass
      EXPECT_EQ(e.value, kInf);
      continue;
    }
    detail::join(buf, e.u, *e.xi, e.v);
    const double val = m.log_marginal(e.u) + m.log_marginal(e.v) - m.log_marginal(SymbolSpan(buf));
    if (e.value == kInf) {
      EXPECT_EQ(val, kInf);
    } else {
      EXPECT_NEAR(val, e.value, 1e-12);
    }
  }
  EXPECT_EQ(mx, r.c_star);
}

}  // namespace

TEST(Decoupling, BernoulliSldIsZero) {
  const Measure m = make_bernoulli({0.3, 0.7});
  for (std::size_t t = 1; t <= 4; ++t) {
    const auto r = verify_sld(m, t, spec_of(0, 3));
    EXPECT_NEAR(r.c_star, 0.0, 1e-12) << "t=" << t;
    EXPECT_TRUE(r.violations.empty());
  }
}

TEST(Decoupling, CycleWithSelfLoopsNeedsOneInsert) {
  const Measure m = make_markov(to_eigen(kCycle));
  const auto r0 = verify_sld(m, 3, spec_of(0, 3));
  EXPECT_EQ(r0.c_star, kInf);
  EXPECT_FALSE(r0.violations.empty());
  // u ends in 'a', v starts with 'c': the forbidden step a -> c.
  for (const auto& [u, v] : r0.violations) {
    const Symbol last = u[u.size() - 1];
    EXPECT_EQ(v[0], (last + 2) % 3);
  }
  const auto r1 = verify_sld(m, 3, spec_of(1, 3));
  EXPECT_LT(r1.c_star, kInf);
  EXPECT_TRUE(r1.violations.empty());
  EXPECT_NEAR(r1.c_star, sld_oracle(markov_oracle(kCycle), 3, 3, 1, 3), 1e-12);
}

TEST(Decoupling, SldMatchesBruteForce) {
  const Measure mk = make_markov(to_eigen(kThree));
  for (std::size_t t = 1; t <= 3; ++t)
    for (std::size_t tau = 0; tau <= 2; ++tau)
      EXPECT_NEAR(verify_sld(mk, t, spec_of(tau, 2)).c_star, sld_oracle(markov_oracle(kThree), 3, t, tau, 2), 1e-12);

  const GammaSpec g = GammaSpec::linear(1.0);
  const Measure hr = make_hidden_renewal(g);
  for (std::size_t t = 1; t <= 5; ++t)
    EXPECT_NEAR(verify_sld(hr, t, spec_of(1, 3)).c_star, sld_oracle(renewal_oracle(g), 2, t, 1, 3), 1e-11);
}

TEST(Decoupling, HiddenRenewalWitnessA) {
  const Measure hr = make_hidden_renewal(GammaSpec::linear(1.0));
  DecouplingSpec s = spec_of(1, 4);
  s.fixed_witness = w("a");
  for (std::size_t t = 1; t <= 5; ++t) {
    const auto fixed = verify_sld(hr, t, s);
    EXPECT_TRUE(fixed.finite());
    for (const auto& e : fixed.witnesses) EXPECT_EQ(*e.xi, w("a"));
    const auto free = verify_sld(hr, t, spec_of(1, 4));
    EXPECT_LE(free.c_star, fixed.c_star + 1e-12);
    expect_witnesses_replay(hr, free);
  }
}

TEST(Decoupling, WindowedSumMatchesOracle) {
  const Measure m = make_markov(to_eigen(kCycle));
  DecouplingSpec s = spec_of(2, 2);
  s.window = 1;
  EXPECT_NEAR(verify_sld(m, 2, s).c_star, sld_window_oracle(markov_oracle(kCycle), 3, 2, 2, 1, 2), 1e-12);
  s.window = 3;
  EXPECT_THROW(verify_sld(m, 2, s), InvalidArgument);
}

TEST(Decoupling, WitnessesReplay) {
  const Measure mk = make_markov(to_eigen(kThree));
  for (std::size_t tau = 0; tau <= 2; ++tau) expect_witnesses_replay(mk, verify_sld(mk, 3, spec_of(tau, 2)));
  expect_witnesses_replay(make_markov(to_eigen(kCycle)), verify_sld(make_markov(to_eigen(kCycle)), 3, spec_of(0, 2)));
}

TEST(Decoupling, UniformUdIsZero) {
  for (std::size_t t = 1; t <= 5; ++t) EXPECT_NEAR(verify_ud(make_uniform(2), t, spec_of(0, 3)).c_star, 0.0, 1e-12);
}

TEST(Decoupling, MarkovUdFormula) {
  const auto pi = oracle::stationary(kThree);
  double expect = kNegInf;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (kThree[a][b] > 0) expect = std::max(expect, std::log(kThree[a][b] / pi[b]));
  const Measure mk = make_markov(to_eigen(kThree));
  for (std::size_t t = 1; t <= 4; ++t) EXPECT_NEAR(verify_ud(mk, t, spec_of(0, 2)).c_star, expect, 1e-12);
}

TEST(Decoupling, UdMatchesBruteForce) {
  Eigen::MatrixXd Ma(2, 2), Mb(2, 2);
  Ma << 0.5, 0.2, 0.1, 0.3;
  Mb << 0.2, 0.4, 0.3, 0.6;
  const Measure mp = make_matrix_product(ab, {Ma, Mb});
  const Prob P = [&](const oracle::Seq& x) { return mp.probability(SymbolSpan(x)); };
  for (std::size_t t = 1; t <= 4; ++t) {
    const auto r = verify_ud(mp, t, spec_of(0, 3));
    EXPECT_TRUE(r.finite());
    EXPECT_NEAR(r.c_star, ud_oracle(P, 2, t, 0, 3), 1e-12);
  }
  const Measure cyc = make_markov(to_eigen(kCycle));
  EXPECT_NEAR(verify_ud(cyc, 2, spec_of(1, 2)).c_star, ud_oracle(markov_oracle(kCycle), 3, 2, 1, 2), 1e-12);
}

TEST(Decoupling, UdLargerInsertKeepsBound) {
  const Measure mk = make_markov(to_eigen(kThree));
  const Measure hr = make_hidden_renewal(GammaSpec::linear(1.0));
  for (const Measure* m : {&mk, &hr}) {
    const double c0 = verify_ud(*m, 3, spec_of(0, 2)).c_star;
    for (std::size_t tau = 1; tau <= 2; ++tau) EXPECT_LE(verify_ud(*m, 3, spec_of(tau, 2)).c_star, c0 + 1e-12);
  }
}

TEST(Decoupling, UdNonInvariantTableIsInfinite) {
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  Eigen::VectorXd pi(2);
  pi << 1.0, 0.0;
  const auto r = verify_ud(make_markov_unchecked(ab, P, pi), 1, spec_of(0, 1));
  EXPECT_EQ(r.c_star, kInf);
  ASSERT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations.front().second, w("b"));
}

TEST(DecouplingProperty, MonotoneInTau) {
  const Measure mk = make_markov(to_eigen(kThree));
  const Measure hr = make_hidden_renewal(GammaSpec::quadratic(1.0));
  const Measure hr_hat = make_hidden_renewal(GammaSpec::linear(1.0));
  for (std::size_t t = 1; t <= 3; ++t) {
    double prev_sld = kInf, prev_ssd = kInf;
    for (std::size_t tau = 0; tau <= 2; ++tau) {
      const double c = verify_sld(mk, t, spec_of(tau, 2)).c_star;
      EXPECT_LE(c, prev_sld);
      prev_sld = c;
      const double d = verify_ssd(hr, hr_hat, t, spec_of(tau, 2)).c_star;
      EXPECT_LE(d, prev_ssd);
      prev_ssd = d;
    }
  }
}

TEST(Decoupling, ThreadCountDoesNotChangeReport) {
  const Measure hr = make_hidden_renewal(GammaSpec::linear(1.0));
  DecouplingSpec s1 = spec_of(2, 3), s4 = spec_of(2, 3);
  s4.threads = 4;
  const auto a = verify_sld(hr, 6, s1), b = verify_sld(hr, 6, s4);
  EXPECT_EQ(a.c_star, b.c_star);
  ASSERT_EQ(a.witnesses.size(), b.witnesses.size());
  for (std::size_t i = 0; i < a.witnesses.size(); ++i) {
    EXPECT_EQ(a.witnesses[i].u, b.witnesses[i].u);
    EXPECT_EQ(a.witnesses[i].v, b.witnesses[i].v);
    EXPECT_EQ(*a.witnesses[i].xi, *b.witnesses[i].xi);
  }
}

TEST(Decoupling, BudgetIsEnforced) {
  DecouplingSpec s = spec_of(2, 2);
  s.budget = 100;
  EXPECT_THROW(verify_sld(make_uniform(2), 6, s), BudgetExceeded);
  EXPECT_THROW(spec_of(0, 0).validate(), InvalidArgument);
}

TEST(Decoupling, SsdBernoulliSelfPairIsZero) {
  const Measure b = make_bernoulli({0.3, 0.7});
  for (std::size_t t = 1; t <= 5; ++t) {
    const auto r = verify_ssd(b, b, t, spec_of(0, 2));
    EXPECT_NEAR(r.c_star, 0.0, 1e-12);
    for (const auto& e : r.witnesses) EXPECT_TRUE(e.xi->empty());
  }
}

TEST(Decoupling, SsdRenewalExampleOne) {
  const renewal::RenewalPair p = renewal::preset(1);
  const Measure m = make_hidden_renewal(p.gamma), mh = make_hidden_renewal(p.gamma_hat);
  DecouplingSpec fixed = spec_of(1, 3);
  fixed.fixed_witness = w("a");
  for (std::size_t t = 1; t <= 4; ++t) {
    const auto rf = verify_ssd(m, mh, t, fixed);
    EXPECT_TRUE(rf.finite());
    for (const auto& e : rf.witnesses) EXPECT_EQ(*e.xi, w("a"));
    const auto r = verify_ssd(m, mh, t, spec_of(1, 3));
    EXPECT_TRUE(r.finite());
    EXPECT_LE(r.c_star, rf.c_star + 1e-12);
    // Replay of the shared witness against both measures.
    std::vector<Symbol> buf;
    for (const auto& e : r.witnesses) {
      double worst = 0.0;
      detail::join(buf, e.u, *e.xi, e.v);
      for (const Measure* x : {&m, &mh})
        worst = std::max(worst, std::abs(x->log_marginal(SymbolSpan(buf)) - x->log_marginal(e.u) - x->log_marginal(e.v)));
      EXPECT_NEAR(worst, e.value, 1e-12);
    }
  }
}

TEST(Decoupling, SsdMismatchedSupportsThrow) {
  Eigen::MatrixXd P(2, 2), Q(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  Q << 1.0, 0.0, 1.0, 0.0;
  Eigen::VectorXd pi(2);
  pi << 1.0, 0.0;
  const Measure a = make_markov(P), b = make_markov_unchecked(ab, Q, pi);
  EXPECT_THROW(verify_ssd(a, b, 2, spec_of(0, 2)), AbsoluteContinuityError);
  EXPECT_THROW(verify_ssd(a, make_uniform(3), 2, spec_of(0, 2)), AlphabetMismatch);
}

TEST(Decoupling, ExtendWordExamples) {
  const Measure u = make_uniform(2);
  for (const char* v : {"a", "b", "abba"}) {
    const Extension e = extend_word({&u}, w(v), 1);
    EXPECT_DOUBLE_EQ(e.ratio, -std::log(2.0));
    EXPECT_EQ(e.b, w("a"));
  }
  const Extension e0 = extend_word({&u}, w("ab"), 0);
  EXPECT_TRUE(e0.b.empty());
  EXPECT_EQ(e0.ratio, 0.0);

  const Measure b = make_bernoulli({0.9, 0.1});
  const Extension e1 = extend_word({&b}, w("a"), 1);
  EXPECT_EQ(e1.b, w("a"));
  EXPECT_NEAR(e1.ratio, std::log(0.9), 1e-15);
}

TEST(Decoupling, ExtendWordLowerBound) {
  const Measure mk = make_markov(to_eigen(kThree));
  const Alphabet abc = Alphabet::letters(3);
  for (std::size_t k = 0; k <= 4; ++k)
    for (const auto& v : enumerate_words(abc, 2)) {
      const Extension e = extend_word({&mk}, v, k);
      EXPECT_EQ(e.b.size(), k);
      EXPECT_GE(e.ratio, -static_cast<double>(k) * std::log(3.0) - 1e-12);
      EXPECT_NEAR(e.ratio, mk.log_marginal(concat(e.b, v)) - mk.log_marginal(v), 1e-12);
    }
  // 2^17 candidates: letter-by-letter construction.
  const Measure hr = make_hidden_renewal(GammaSpec::linear(1.0));
  const Extension big = extend_word({&hr}, w("ab"), 17);
  EXPECT_EQ(big.b.size(), 17u);
  EXPECT_GE(big.ratio, -17.0 * std::log(2.0));
}

TEST(Decoupling, ExtendWordErrors) {
  Eigen::MatrixXd fwd(3, 3), bwd(3, 3);
  fwd << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  bwd << 0, 0, 1, 1, 0, 0, 0, 1, 0;
  const Measure f = make_markov(fwd), r = make_markov(bwd);
  const Word c = parse_word(Alphabet::letters(3), "c");
  EXPECT_NO_THROW(extend_word({&f}, c, 1));
  EXPECT_THROW(extend_word({&f, &r}, c, 1), CheckFailure);
  const Word bb = parse_word(Alphabet::letters(3), "bb");
  EXPECT_THROW(extend_word({&f}, bb, 1), InvalidArgument);
}

TEST(Decoupling, SsdFromSldUdBernoulli) {
  const Measure b = make_bernoulli({0.3, 0.7});
  const SsdConstruction s = ssd_from_sld_ud(b, b, 3, spec_of(0, 2));
  EXPECT_NEAR(s.report.c_star, 0.0, 1e-12);
  EXPECT_EQ(s.tau_prime, 0u);
  EXPECT_NEAR(s.lower_bound, 0.0, 1e-12);
  EXPECT_NEAR(s.upper_bound, 0.0, 1e-12);
  for (const auto& e : s.report.witnesses) EXPECT_TRUE(e.xi->empty());
}

TEST(Decoupling, SsdFromSldUdRenewal) {
  const renewal::RenewalPair p = renewal::preset(1);
  const Measure m = make_hidden_renewal(p.gamma), mh = make_hidden_renewal(p.gamma_hat);
  const SsdConstruction s = ssd_from_sld_ud(m, mh, 3, spec_of(1, 2));
  EXPECT_TRUE(s.report.finite());
  EXPECT_EQ(s.tau_prime, 2u);
  std::vector<Symbol> buf;
  for (const auto& e : s.report.witnesses) {
    EXPECT_LE(e.xi->size(), 2u);
    detail::join(buf, e.u, *e.xi, e.v);
    for (const Measure* x : {&m, &mh}) {
      const double d = x->log_marginal(SymbolSpan(buf)) - x->log_marginal(e.u) - x->log_marginal(e.v);
      EXPECT_GE(d, -s.lower_bound - 1e-12);
      EXPECT_LE(d, s.upper_bound + 1e-12);
    }
  }
}

TEST(Decoupling, SsdFromSldUdRequiresUd) {
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  Eigen::VectorXd pi(2);
  pi << 1.0, 0.0;
  const Measure bad = make_markov_unchecked(ab, P, pi);
  EXPECT_THROW(ssd_from_sld_ud(bad, bad, 1, spec_of(0, 1)), CheckFailure);
}
