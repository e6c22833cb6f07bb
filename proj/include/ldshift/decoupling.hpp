#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

enum class DecouplingKind { SLD, UD, SSD };

inline const char* to_string(DecouplingKind k) {
  switch (k) {
    case DecouplingKind::SLD: return "sld";
    case DecouplingKind::UD: return "ud";
    case DecouplingKind::SSD: return "ssd";
  }
  return "?";
}

inline DecouplingKind parse_decoupling_kind(const std::string& s) {
  if (s == "sld") return DecouplingKind::SLD;
  if (s == "ud") return DecouplingKind::UD;
  if (s == "ssd") return DecouplingKind::SSD;
  throw InvalidArgument("unknown decoupling kind '" + s + "' (expected sld, ud or ssd)");
}

struct DecouplingSpec {
  DecouplingKind kind = DecouplingKind::SLD;
  std::size_t tau = 0;                   // tau_t for lengths not in tau_table
  std::vector<std::size_t> tau_table;    // tau_t indexed by t, optional
  std::size_t v_max = 1;
  std::optional<std::size_t> window;     // summed SLD over tau-k <= |xi| <= tau
  std::optional<Word> fixed_witness;     // restrict the insert to one word
  std::uint64_t budget = kDefaultEnumerationBudget;
  unsigned threads = 1;

  std::size_t tau_at(std::size_t t) const { return t < tau_table.size() ? tau_table[t] : tau; }

  void validate() const {
    if (v_max < 1) throw InvalidArgument("decoupling: v_max must be >= 1");
  }
};

struct WitnessEntry {
  Word u;
  Word v;
  std::optional<Word> xi;  // absent for the windowed variant
  double value = 0.0;      // per-pair optimum
};

struct DecouplingReport {
  DecouplingKind kind = DecouplingKind::SLD;
  std::size_t t = 0;
  std::size_t tau = 0;
  std::size_t v_max = 0;
  double c_star = kNegInf;
  std::vector<WitnessEntry> witnesses;
  std::vector<std::pair<Word, Word>> violations;
  double elapsed_ms = 0.0;

  bool finite() const { return c_star < kInf; }
};

namespace detail {

// All words of length 0..tau in canonical order (lexicographic, prefix first).
inline std::vector<Word> inserts_upto(std::size_t A, std::size_t tau, std::size_t min_len, std::uint64_t budget) {
  std::vector<Word> out;
  for (std::size_t k = min_len; k <= tau; ++k)
    for_each_word(A, k, [&](SymbolSpan w) { out.emplace_back(A, w); }, budget);
  std::sort(out.begin(), out.end());
  return out;
}

inline void join(std::vector<Symbol>& buf, SymbolSpan a, SymbolSpan b, SymbolSpan c = {}) {
  buf.clear();
  buf.insert(buf.end(), a.begin(), a.end());
  buf.insert(buf.end(), b.begin(), b.end());
  buf.insert(buf.end(), c.begin(), c.end());
}

inline std::vector<Word> all_v(std::size_t A, std::size_t v_max, std::uint64_t budget) {
  std::vector<Word> out;
  for (std::size_t k = 1; k <= v_max; ++k)
    for_each_word(A, k, [&](SymbolSpan w) { out.emplace_back(A, w); }, budget);
  return out;
}

// Runs pair_fn(u, v) -> optional<WitnessEntry> for all u in Omega_t and the
// v list, in parallel over u, and folds the entries in enumeration order.
template <class PairFn>
DecouplingReport sweep_pairs(std::size_t A, std::size_t t, const DecouplingSpec& spec, PairFn&& pair_fn) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t tau = spec.tau_at(t);
  word_count(A, t + tau + spec.v_max, spec.budget);
  const std::vector<Word> us = enumerate_words(Alphabet::letters(A), t, spec.budget);
  const std::vector<Word> vs = all_v(A, spec.v_max, spec.budget);

  std::vector<std::vector<WitnessEntry>> per_u(us.size());
  std::vector<std::exception_ptr> errors(us.size());
  parallel_chunks(us.size(), spec.threads, [&](std::size_t i) {
    try {
      for (const Word& v : vs)
        if (auto e = pair_fn(us[i], v)) per_u[i].push_back(std::move(*e));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  DecouplingReport rep;
  rep.kind = spec.kind;
  rep.t = t;
  rep.tau = tau;
  rep.v_max = spec.v_max;
  for (auto& entries : per_u)
    for (auto& e : entries) {
      rep.c_star = std::max(rep.c_star, e.value);
      if (e.value == kInf) rep.violations.emplace_back(e.u, e.v);
      rep.witnesses.push_back(std::move(e));
    }
  rep.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline std::vector<Word> candidate_inserts(std::size_t A, std::size_t tau, const DecouplingSpec& spec) {
  if (spec.fixed_witness) {
    if (spec.fixed_witness->alphabet_size() != A) throw AlphabetMismatch("fixed witness alphabet mismatch");
    if (spec.fixed_witness->size() > tau) throw InvalidArgument("fixed witness longer than tau");
    return {*spec.fixed_witness};
  }
  return inserts_upto(A, tau, 0, spec.budget);
}

}  // namespace detail

/// Best constant c with P(u xi v) >= e^{-c} P(u) P(v) for some |xi| <= tau,
/// over u in Omega_t and 1 <= |v| <= v_max. With `window` set the summed
/// condition over tau-k <= |xi| <= tau is tested instead.
inline DecouplingReport verify_sld(const Measure& m, std::size_t t, const DecouplingSpec& spec) {
  spec.validate();
  const std::size_t A = m.alphabet_size();
  const std::size_t tau = spec.tau_at(t);
  std::vector<Word> inserts;
  if (spec.window) {
    if (*spec.window > tau) throw InvalidArgument("decoupling: window larger than tau");
    inserts = detail::inserts_upto(A, tau, tau - *spec.window, spec.budget);
  } else {
    inserts = detail::candidate_inserts(A, tau, spec);
  }
  DecouplingSpec s = spec;
  s.kind = DecouplingKind::SLD;
  return detail::sweep_pairs(A, t, s, [&](const Word& u, const Word& v) -> std::optional<WitnessEntry> {
    const double base = m.log_marginal(u.symbols()) + m.log_marginal(v.symbols());
    if (base == kNegInf) return std::nullopt;  // vacuous pair
    std::vector<Symbol> buf;
    WitnessEntry e{u, v, std::nullopt, kInf};
    if (spec.window) {
      LogSumExp acc;
      for (const Word& xi : inserts) {
        detail::join(buf, u, xi, v);
        acc.add(m.log_marginal(SymbolSpan(buf)));
      }
      e.value = base - acc.value();
      return e;
    }
    for (const Word& xi : inserts) {
      detail::join(buf, u, xi, v);
      const double val = base - m.log_marginal(SymbolSpan(buf));
      if (val < e.value) {
        e.value = val;
        e.xi = xi;
      }
    }
    return e;
  });
}

/// Smallest c with P(u xi v) <= e^{c} P(u) P(v) for every xi of length exactly tau.
inline DecouplingReport verify_ud(const Measure& m, std::size_t t, const DecouplingSpec& spec) {
  spec.validate();
  const std::size_t A = m.alphabet_size();
  const std::size_t tau = spec.tau_at(t);
  const std::vector<Word> inserts = detail::inserts_upto(A, tau, tau, spec.budget);
  DecouplingSpec s = spec;
  s.kind = DecouplingKind::UD;
  return detail::sweep_pairs(A, t, s, [&](const Word& u, const Word& v) -> std::optional<WitnessEntry> {
    const double base = m.log_marginal(u.symbols()) + m.log_marginal(v.symbols());
    std::vector<Symbol> buf;
    WitnessEntry e{u, v, std::nullopt, kNegInf};
    for (const Word& xi : inserts) {
      detail::join(buf, u, xi, v);
      const double lp = m.log_marginal(SymbolSpan(buf));
      if (lp == kNegInf) continue;  // log 0 = -inf: vacuous
      const double val = base == kNegInf ? kInf : lp - base;
      if (val > e.value) {
        e.value = val;
        e.xi = xi;
      }
    }
    if (e.value == kNegInf) return std::nullopt;
    return e;
  });
}

namespace detail {

// Two-sided deviation max_sharp |log P#(u xi v) - log P#(u) - log P#(v)|.
inline double ssd_value(const Measure& m, const Measure& mh, SymbolSpan u, SymbolSpan xi, SymbolSpan v,
                        std::vector<Symbol>& buf) {
  join(buf, u, xi, v);
  double worst = 0.0;
  for (const Measure* x : {&m, &mh}) {
    const double lp = x->log_marginal(SymbolSpan(buf));
    if (lp == kNegInf) return kInf;
    worst = std::max(worst, std::abs(lp - x->log_marginal(u) - x->log_marginal(v)));
  }
  return worst;
}

inline void require_ac(const Measure& m, const Measure& mh, SymbolSpan w) {
  if (m.log_marginal(w) > kNegInf && mh.log_marginal(w) == kNegInf) {
    const std::string s = to_string(m.alphabet(), w);
    throw AbsoluteContinuityError("P(w) > 0 = P_hat(w) at w = '" + s + "'", s);
  }
}

}  // namespace detail

/// Shared-insert two-sided decoupling for the pair (m, mh).
inline DecouplingReport verify_ssd(const Measure& m, const Measure& mh, std::size_t t, const DecouplingSpec& spec) {
  spec.validate();
  if (m.alphabet_size() != mh.alphabet_size()) throw AlphabetMismatch("verify_ssd: alphabets differ");
  const std::size_t A = m.alphabet_size();
  const std::vector<Word> inserts = detail::candidate_inserts(A, spec.tau_at(t), spec);
  DecouplingSpec s = spec;
  s.kind = DecouplingKind::SSD;
  return detail::sweep_pairs(A, t, s, [&](const Word& u, const Word& v) -> std::optional<WitnessEntry> {
    detail::require_ac(m, mh, u);
    detail::require_ac(m, mh, v);
    if (m.log_marginal(u.symbols()) + m.log_marginal(v.symbols()) == kNegInf) return std::nullopt;
    std::vector<Symbol> buf;
    WitnessEntry e{u, v, std::nullopt, kInf};
    for (const Word& xi : inserts) {
      detail::join(buf, u, xi, v);
      detail::require_ac(m, mh, SymbolSpan(buf));
      const double val = detail::ssd_value(m, mh, u, xi, v, buf);
      if (val < e.value) {
        e.value = val;
        e.xi = xi;
      }
    }
    return e;
  });
}

// ---------------------------------------------------------------------------

struct Extension {
  Word b;
  double ratio = 0.0;  // min over measures of log P#(bv) - log P#(v)
};

/// Prefix b of length k maximizing the worst log-ratio log P#(bv) - log P#(v)
/// over the supplied measures (ties: lexicographically smallest b). Exhaustive
/// over Omega_k when A^k <= 2^16, otherwise built one letter at a time.
inline Extension extend_word(const std::vector<const Measure*>& measures, const Word& v, std::size_t k) {
  if (measures.empty()) throw InvalidArgument("extend_word: no measures");
  const std::size_t A = measures.front()->alphabet_size();
  std::vector<double> base;
  for (std::size_t i = 0; i < measures.size(); ++i) {
    const double lv = measures[i]->log_marginal(v);
    if (lv == kNegInf) throw InvalidArgument("extend_word: v has zero mass under measure " + std::to_string(i));
    base.push_back(lv);
  }
  std::vector<Symbol> buf;
  auto worst = [&](SymbolSpan b, SymbolSpan suffix, const std::vector<double>& ref) {
    detail::join(buf, b, suffix);
    double w = kInf;
    for (std::size_t i = 0; i < measures.size(); ++i)
      w = std::min(w, measures[i]->log_marginal(SymbolSpan(buf)) - ref[i]);
    return w;
  };
  auto fail = [&](const Word& suffix) {
    for (std::size_t i = 0; i < measures.size(); ++i) {
      bool any = false;
      for (std::size_t a = 0; a < A && !any; ++a) {
        const Symbol s = static_cast<Symbol>(a);
        detail::join(buf, SymbolSpan(&s, 1), suffix);
        any = measures[i]->log_marginal(SymbolSpan(buf)) > kNegInf;
      }
      if (!any)
        throw CheckFailure("extend_word: every extension has zero mass under measure " + std::to_string(i));
    }
    throw CheckFailure("extend_word: no extension with positive mass under all measures simultaneously");
  };

  Extension best{Word(A), kNegInf};
  bool exhaustive = true;
  try {
    word_count(A, k, std::uint64_t{1} << 16);
  } catch (const BudgetExceeded&) {
    exhaustive = false;
  }
  if (exhaustive) {
    for_each_word(A, k, [&](SymbolSpan b) {
      const double r = worst(b, v, base);
      if (r > best.ratio) best = {Word(A, b), r};
    });
    if (best.ratio == kNegInf) fail(v);
    return best;
  }
  // Letter-by-letter: prepend the letter with the best worst-case ratio.
  std::vector<Symbol> suffix(v.symbols().begin(), v.symbols().end());
  std::vector<double> ref = base;
  double total = 0.0;
  for (std::size_t step = 0; step < k; ++step) {
    double best_r = kNegInf;
    Symbol best_a = 0;
    for (std::size_t a = 0; a < A; ++a) {
      const Symbol s = static_cast<Symbol>(a);
      const double r = worst(SymbolSpan(&s, 1), suffix, ref);
      if (r > best_r) {
        best_r = r;
        best_a = s;
      }
    }
    if (best_r == kNegInf) fail(Word(A, suffix));
    suffix.insert(suffix.begin(), best_a);
    for (std::size_t i = 0; i < measures.size(); ++i) ref[i] = measures[i]->log_marginal(SymbolSpan(suffix));
    total += best_r;
  }
  std::vector<Symbol> b(suffix.begin(), suffix.begin() + static_cast<std::ptrdiff_t>(k));
  return {Word(A, std::move(b)), worst(SymbolSpan(suffix).subspan(0, k), v, base)};
}

// ---------------------------------------------------------------------------

struct SsdConstruction {
  DecouplingReport report;   // witnesses hold xi' = xi b, c_star the achieved two-sided constant
  std::size_t tau_prime = 0;  // 2 tau
  double c_sld = 0.0;         // shared-insert SLD constant on the visited pairs (u, bv)
  double c_ud = 0.0;          // UD constant (max over both measures)
  double c_extend = 0.0;      // C: max over used b of -ratio / tau
  double lower_bound = 0.0;   // max(c_sld, c_ud) + C tau, the construction's lower constant
  double upper_bound = 0.0;   // max(c_sld, c_ud)
};

/// SSD assembled from shared-insert SLD and UD: for each (u, v) take b of
/// length tau extending v for both measures, the shared SLD insert xi for
/// (u, bv), and xi' = xi b. Checks the resulting two-sided bounds.
inline SsdConstruction ssd_from_sld_ud(const Measure& m, const Measure& mh, std::size_t t, const DecouplingSpec& spec) {
  spec.validate();
  if (m.alphabet_size() != mh.alphabet_size()) throw AlphabetMismatch("ssd_from_sld_ud: alphabets differ");
  const std::size_t A = m.alphabet_size();
  const std::size_t tau = spec.tau_at(t);

  // UD must hold for both measures at insert length tau, for right words up
  // to the longest xi'-tail plus v.
  DecouplingSpec ud = spec;
  ud.kind = DecouplingKind::UD;
  ud.v_max = spec.v_max + tau;
  ud.fixed_witness.reset();
  SsdConstruction out;
  out.c_ud = kNegInf;
  for (const Measure* x : {&m, &mh}) {
    const DecouplingReport r = verify_ud(*x, t, ud);
    if (!r.finite())
      throw CheckFailure("ssd_from_sld_ud: upper decoupling fails (c = +inf) at pair '" +
                         to_string(x->alphabet(), r.violations.front().first) + "', '" +
                         to_string(x->alphabet(), r.violations.front().second) + "'");
    out.c_ud = std::max(out.c_ud, r.c_star);
  }
  out.c_ud = std::max(out.c_ud, 0.0);

  const std::vector<Word> inserts = detail::inserts_upto(A, tau, 0, spec.budget);
  double c_sld = 0.0, c_ext = 0.0;
  DecouplingSpec s = spec;
  s.kind = DecouplingKind::SSD;
  s.threads = 1;  // the sweep below mutates c_sld / c_ext
  out.report = detail::sweep_pairs(A, t, s, [&](const Word& u, const Word& v) -> std::optional<WitnessEntry> {
    if (m.log_marginal(u) + m.log_marginal(v) == kNegInf) return std::nullopt;
    detail::require_ac(m, mh, u);
    detail::require_ac(m, mh, v);
    const Extension ext = extend_word({&m, &mh}, v, tau);
    if (tau > 0) c_ext = std::max(c_ext, -ext.ratio / static_cast<double>(tau));
    const Word bv = concat(ext.b, v);
    std::vector<Symbol> buf;
    double best = kNegInf;
    Word best_xi(A);
    for (const Word& xi : inserts) {
      detail::join(buf, u, xi, bv);
      double slack = kInf;  // min over measures of log P#(u xi bv) - log P#(u) P#(bv)
      for (const Measure* x : {&m, &mh})
        slack = std::min(slack, x->log_marginal(SymbolSpan(buf)) - x->log_marginal(u) - x->log_marginal(bv));
      if (slack > best) {
        best = slack;
        best_xi = xi;
      }
    }
    if (best == kNegInf) return WitnessEntry{u, v, std::nullopt, kInf};
    c_sld = std::max(c_sld, -best);
    const Word xi_prime = concat(best_xi, ext.b);
    return WitnessEntry{u, v, xi_prime, detail::ssd_value(m, mh, u, xi_prime, v, buf)};
  });
  out.tau_prime = 2 * tau;
  out.c_sld = c_sld;
  out.c_extend = c_ext;
  const double c = std::max(c_sld, out.c_ud);
  out.upper_bound = c;
  out.lower_bound = c + c_ext * static_cast<double>(tau);
  if (!out.report.finite())
    throw CheckFailure("ssd_from_sld_ud: no shared insert with positive mass for some pair");

  // Two-sided check of the constructed inserts against the construction's constants.
  std::vector<Symbol> buf;
  for (const WitnessEntry& e : out.report.witnesses) {
    detail::join(buf, e.u, *e.xi, e.v);
    for (const Measure* x : {&m, &mh}) {
      const double d = x->log_marginal(SymbolSpan(buf)) - x->log_marginal(e.u) - x->log_marginal(e.v);
      if (d < -out.lower_bound - 1e-12 || d > out.upper_bound + 1e-12)
        throw CheckFailure("ssd_from_sld_ud: constructed insert violates the two-sided bound at u='" +
                           to_string(m.alphabet(), e.u) + "', v='" + to_string(m.alphabet(), e.v) + "'");
    }
  }
  out.report.tau = out.tau_prime;
  return out;
}

}  // namespace ldshift
