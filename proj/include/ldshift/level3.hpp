#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

struct EntropyReport {
  std::size_t t = 0;
  double h_rate = 0.0;         // h_t(Q) / t
  double varsigma_rate = 0.0;  // -(1/t) sum Q log P
  double ent_rate = 0.0;       // Ent(Q_t | P_t) / t
  std::optional<Word> witness;  // Q(w) > 0 = P(w) when ent_rate = +inf
};

/// Shannon block entropy -sum_w Q(w) log Q(w) for any log-marginal callable.
template <class LogMarginal>
double block_entropy(LogMarginal&& log_q, std::size_t A, std::size_t t,
                     std::uint64_t budget = kDefaultEnumerationBudget) {
  word_count(A, t, budget);
  double h = 0.0;
  for_each_word(A, t, [&](SymbolSpan w) {
    const double lq = log_q(w);
    if (lq == kNegInf) return;
    h -= std::exp(lq) * lq;
  });
  return h;
}

inline double block_entropy(const Measure& Q, std::size_t t, std::uint64_t budget = kDefaultEnumerationBudget) {
  return block_entropy([&Q](SymbolSpan w) { return Q.log_marginal(w); }, Q.alphabet_size(), t, budget);
}

inline EntropyReport entropy_rates(const Measure& Q, const Measure& P, std::size_t t,
                                   std::uint64_t budget = kDefaultEnumerationBudget) {
  if (Q.alphabet_size() != P.alphabet_size()) throw AlphabetMismatch("entropy_rates: alphabets differ");
  if (t == 0) throw InvalidArgument("entropy_rates: t must be >= 1");
  word_count(Q.alphabet_size(), t, budget);
  EntropyReport r;
  r.t = t;
  double h = 0.0, vs = 0.0, ent = 0.0;
  for_each_word(Q.alphabet_size(), t, [&](SymbolSpan w) {
    const double lq = Q.log_marginal(w);
    if (lq == kNegInf) return;
    const double q = std::exp(lq);
    const double lp = P.log_marginal(w);
    h -= q * lq;
    if (lp == kNegInf) {
      if (!r.witness) r.witness = Word(Q.alphabet_size(), std::vector<Symbol>(w.begin(), w.end()));
      return;
    }
    vs -= q * lp;
    ent += q * (lq - lp);
  });
  const double tt = static_cast<double>(t);
  r.h_rate = h / tt;
  if (r.witness) {
    r.varsigma_rate = kInf;
    r.ent_rate = kInf;
  } else {
    r.varsigma_rate = vs / tt;
    r.ent_rate = ent / tt;
  }
  return r;
}

/// (1/t) sum_w Q(w) (log P(w) - log Phat(w)).
inline double mean_entropy_production(const Measure& Q, const Measure& P, const Measure& Phat, std::size_t t,
                                      std::uint64_t budget = kDefaultEnumerationBudget) {
  if (Q.alphabet_size() != P.alphabet_size() || P.alphabet_size() != Phat.alphabet_size())
    throw AlphabetMismatch("mean_entropy_production: alphabets differ");
  if (t == 0) throw InvalidArgument("mean_entropy_production: t must be >= 1");
  word_count(Q.alphabet_size(), t, budget);
  double s = 0.0;
  for_each_word(Q.alphabet_size(), t, [&](SymbolSpan w) {
    const double lq = Q.log_marginal(w);
    if (lq == kNegInf) return;
    const double lp = P.log_marginal(w);
    const double lh = Phat.log_marginal(w);
    if (lp == kNegInf || lh == kNegInf) {
      const std::string str = to_string(Q.alphabet(), w);
      throw AbsoluteContinuityError(std::string("mean_entropy_production: ") + (lp == kNegInf ? "P" : "Phat") +
                                        "(w) = 0 on the support of Q at '" + str + "'",
                                    str);
    }
    s += std::exp(lq) * (lp - lh);
  });
  return s / static_cast<double>(t);
}

struct Level3Check {
  std::size_t t = 0;
  double lhs = 0.0;  // (1/t) <sigma_t, Q>
  double rhs = 0.0;  // (1/t) (Ent((Theta Q)_t | P_t) - Ent(Q_t | P_t))
  double fr_defect = 0.0;
  double h_defect = 0.0;               // |h_t(Q) - h_t(Theta Q)| / t
  std::optional<std::string> infinite;  // which entropy is infinite, if any
};

/// Finite-t Level-3 fluctuation relation with Phat = Theta P: the two sides
/// agree exactly by the change of variables w -> theta_t(w).
inline Level3Check level3_fr_check(const Measure& Q, const Measure& P, const Involution& theta, std::size_t t,
                                   std::uint64_t budget = kDefaultEnumerationBudget) {
  const Measure Phat = theta_lift(P, theta);
  const Measure TQ = theta_lift(Q, theta);
  Level3Check c;
  c.t = t;
  const EntropyReport eq = entropy_rates(Q, P, t, budget);
  const EntropyReport etq = entropy_rates(TQ, P, t, budget);
  c.h_defect = std::abs(eq.h_rate - etq.h_rate);
  if (!std::isfinite(eq.ent_rate) || !std::isfinite(etq.ent_rate)) {
    c.infinite = !std::isfinite(eq.ent_rate) ? "Ent(Q_t|P_t) = +inf at '" + to_string(P.alphabet(), *eq.witness) + "'"
                                              : "Ent((Theta Q)_t|P_t) = +inf at '" +
                                                    to_string(P.alphabet(), *etq.witness) + "'";
    c.lhs = c.rhs = c.fr_defect = std::numeric_limits<double>::quiet_NaN();
    return c;
  }
  c.lhs = mean_entropy_production(Q, P, Phat, t, budget);
  c.rhs = etq.ent_rate - eq.ent_rate;
  c.fr_defect = std::abs(c.lhs - c.rhs);
  return c;
}

struct SubadditivityReport {
  double max_excess = 0.0;  // max(0, h_{t+t'} - h_t - h_{t'})
  double raw_max = kNegInf;
  std::size_t t = 0;
  std::size_t t_prime = 0;
  std::vector<double> h;  // h[k] = h_k(Q), h[0] = 0
};

inline SubadditivityReport ks_subadditivity_check(const Measure& Q, std::size_t t_max,
                                                  std::uint64_t budget = kDefaultEnumerationBudget) {
  if (t_max < 2) throw InvalidArgument("ks_subadditivity_check: t_max must be >= 2");
  SubadditivityReport r;
  r.h.assign(t_max + 1, 0.0);
  for (std::size_t k = 1; k <= t_max; ++k) r.h[k] = block_entropy(Q, k, budget);
  for (std::size_t a = 1; a < t_max; ++a)
    for (std::size_t b = a; a + b <= t_max; ++b) {
      const double ex = r.h[a + b] - r.h[a] - r.h[b];
      if (ex > r.raw_max) {
        r.raw_max = ex;
        r.t = a;
        r.t_prime = b;
      }
    }
  r.max_excess = std::max(0.0, r.raw_max);
  return r;
}

}  // namespace ldshift
