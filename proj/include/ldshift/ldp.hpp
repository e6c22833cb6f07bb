#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/observable.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void check_observable(const Measure& m, const Observable& f, const std::vector<double>& alpha) {
  if (f.alphabet_size() != m.alphabet_size()) throw AlphabetMismatch("observable and measure alphabets differ");
  if (alpha.size() != f.d()) throw InvalidArgument("alpha has dimension " + std::to_string(alpha.size()) +
                                                   ", observable has " + std::to_string(f.d()));
}

// log P(s | previous symbol) for the measures with a one-step transfer matrix.
inline std::optional<std::function<double(Symbol, Symbol)>> one_step_kernel(const Measure& m) {
  if (const auto* u = m.get_if<UniformMeasure>()) {
    const double l = -std::log(static_cast<double>(u->size));
    return [l](Symbol, Symbol) { return l; };
  }
  if (const auto* b = m.get_if<BernoulliMeasure>())
    return [b](Symbol, Symbol s) { return std::log(b->p[s]); };
  if (const auto* mk = m.get_if<MarkovMeasure>()) return [mk](Symbol a, Symbol s) { return mk->log_P(a, s); };
  return std::nullopt;
}

}  // namespace detail

/// (1/t) log sum_{w in Omega_t} exp(<alpha, S_{t-r+1} f(w)>) P_t(w) by enumeration.
inline double finite_pressure_enumerated(const Measure& m, const Observable& f, const std::vector<double>& alpha,
                                         std::size_t t, std::uint64_t budget = kDefaultEnumerationBudget) {
  detail::check_observable(m, f, alpha);
  if (t == 0) throw InvalidArgument("finite_pressure: t must be >= 1");
  word_count(m.alphabet_size(), t, budget);
  LogSumExp acc;
  for_each_word(m.alphabet_size(), t, [&](SymbolSpan w) {
    const double lp = m.log_marginal(w);
    if (lp == kNegInf) return;
    acc.add(lp + detail::dot(alpha, f.birkhoff(w)));
  });
  return acc.value() / static_cast<double>(t);
}

/// Tilted transfer over Omega_r blocks for Uniform, Bernoulli and Markov
/// measures: the state is the current r-block, each step appends one symbol.
inline double finite_pressure_transfer(const Measure& m, const Observable& f, const std::vector<double>& alpha,
                                       std::size_t t) {
  detail::check_observable(m, f, alpha);
  if (t == 0) throw InvalidArgument("finite_pressure: t must be >= 1");
  const auto kernel = detail::one_step_kernel(m);
  if (!kernel) throw InvalidArgument("finite_pressure: no transfer fast path for this measure");
  const std::size_t A = m.alphabet_size();
  const std::size_t r = f.r();
  if (t < r) return 0.0;  // S_{t-r+1} f is an empty sum
  const std::uint64_t S = word_count(A, r);
  std::vector<double> tilt(S);
  for (std::uint64_t i = 0; i < S; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < f.d(); ++j) s += alpha[j] * f.at(i, j);
    tilt[i] = s;
  }
  std::vector<double> cur(S, kNegInf), next(S);
  for_each_word(A, r, [&](SymbolSpan b) {
    const std::uint64_t i = lex_index(b, A);
    const double lp = m.log_marginal(b);
    cur[i] = lp == kNegInf ? kNegInf : lp + tilt[i];
  });
  const std::uint64_t shift = S / A;  // A^{r-1}
  std::vector<LogSumExp> acc(S);
  for (std::size_t step = r; step < t; ++step) {
    for (auto& a : acc) a = LogSumExp();
    for (std::uint64_t i = 0; i < S; ++i) {
      if (cur[i] == kNegInf) continue;
      const auto last = static_cast<Symbol>(i % A);
      for (std::size_t s = 0; s < A; ++s) {
        const double k = (*kernel)(last, static_cast<Symbol>(s));
        if (k == kNegInf) continue;
        const std::uint64_t j = (i % shift) * A + s;
        acc[j].add(cur[i] + k + tilt[j]);
      }
    }
    for (std::uint64_t j = 0; j < S; ++j) next[j] = acc[j].value();
    cur.swap(next);
  }
  LogSumExp total;
  for (double x : cur) total.add(x);
  return total.value() / static_cast<double>(t);
}

inline bool has_transfer_fast_path(const Measure& m) { return detail::one_step_kernel(m).has_value(); }

/// Exact finite-t pressure; the transfer path is used when available and
/// allowed, enumeration otherwise.
inline double finite_pressure(const Measure& m, const Observable& f, const std::vector<double>& alpha, std::size_t t,
                              bool fast_path = true, std::uint64_t budget = kDefaultEnumerationBudget) {
  if (fast_path && has_transfer_fast_path(m)) return finite_pressure_transfer(m, f, alpha, t);
  return finite_pressure_enumerated(m, f, alpha, t, budget);
}

/// (1/t) log sum_w P(w)^{1+alpha} Phat(w)^{-alpha} over the support of P_t.
inline double entropy_pressure(const Measure& P, const Measure& Phat, double alpha, std::size_t t,
                               std::uint64_t budget = kDefaultEnumerationBudget) {
  if (P.alphabet_size() != Phat.alphabet_size()) throw AlphabetMismatch("entropy_pressure: alphabets differ");
  if (t == 0) throw InvalidArgument("entropy_pressure: t must be >= 1");
  word_count(P.alphabet_size(), t, budget);
  LogSumExp acc;
  for_each_word(P.alphabet_size(), t, [&](SymbolSpan w) {
    const double lp = P.log_marginal(w);
    if (lp == kNegInf) return;
    const double lh = Phat.log_marginal(w);
    if (lh == kNegInf) {
      const std::string s = to_string(P.alphabet(), w);
      throw AbsoluteContinuityError("entropy_pressure: P(w) > 0 = Phat(w) at '" + s + "'", s);
    }
    acc.add(alpha == 0.0 ? lp : (1.0 + alpha) * lp - alpha * lh);
  });
  if (alpha == 0.0) return 0.0;  // normalization of P_t
  return acc.value() / static_cast<double>(t);
}

/// Sampled scalar pressure curve. `eval`, when set, evaluates the same
/// function off-grid and enables golden-section refinement.
struct PressureCurve {
  std::vector<double> alphas;
  std::vector<double> values;
  std::optional<std::size_t> t;  // empty: exact asymptotic curve
  std::function<double(double)> eval;

  std::size_t finite_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return std::isfinite(v); }));
  }
};

/// Evaluates fn on the grid, one task per point.
inline PressureCurve sample_curve(const std::function<double(double)>& fn, const std::vector<double>& alphas,
                                  std::optional<std::size_t> t, unsigned threads = 1) {
  PressureCurve c;
  c.alphas = alphas;
  c.values.assign(alphas.size(), 0.0);
  c.t = t;
  c.eval = fn;
  std::vector<std::exception_ptr> errors(alphas.size());
  parallel_chunks(alphas.size(), threads, [&](std::size_t i) {
    try {
      c.values[i] = fn(alphas[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return c;
}

namespace detail {

// Golden-section maximization of a unimodal g on [lo, hi].
inline std::pair<double, double> golden_max(const std::function<double(double)>& g, double lo, double hi,
                                            double tol = 1e-10) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double gc = g(c), gd = g(d);
  for (int it = 0; it < 200 && (b - a) > tol; ++it) {
    if (gc >= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = g(d);
    }
  }
  return gc >= gd ? std::pair{c, gc} : std::pair{d, gd};
}

}  // namespace detail

struct RateFunction {
  std::vector<double> s;
  std::vector<double> I;
  std::vector<double> argmax;  // maximizing alpha, NaN where I = +inf
};

/// I(s) = sup_alpha (alpha s - q(alpha)) over the finite part of the curve.
///
/// Interior grid maximizers are refined by golden section when the curve can
/// be evaluated off-grid. A maximizer at the end of the grid means the sup is
/// not attained inside the sampled window: if the neighbour beyond is an
/// explicit +inf point the domain really ends there and the value stands,
/// otherwise (s beyond the end slope) I(s) is reported as +inf.
inline RateFunction legendre_transform(const PressureCurve& curve, const std::vector<double>& s_grid) {
  if (curve.alphas.size() != curve.values.size()) throw InvalidArgument("legendre_transform: ragged curve");
  if (curve.finite_count() < 3) throw InvalidArgument("legendre_transform: need at least 3 finite points");
  for (std::size_t i = 1; i < curve.alphas.size(); ++i)
    if (!(curve.alphas[i] > curve.alphas[i - 1])) throw InvalidArgument("legendre_transform: alphas must increase");
  for (double v : curve.values)
    if (std::isnan(v) || v == kNegInf) throw InvalidArgument("legendre_transform: q must be > -inf");

  std::vector<std::size_t> fin;
  for (std::size_t i = 0; i < curve.values.size(); ++i)
    if (std::isfinite(curve.values[i])) fin.push_back(i);
  const std::size_t first = fin.front(), last = fin.back();
  for (std::size_t i = first; i <= last; ++i)
    if (!std::isfinite(curve.values[i])) throw InvalidArgument("legendre_transform: +inf inside the finite domain");
  const bool closed_left = first > 0;                         // +inf just left of the domain
  const bool closed_right = last + 1 < curve.values.size();   // +inf just right of it
  const auto& a = curve.alphas;
  const auto& q = curve.values;
  const double slope_left = (q[first + 1] - q[first]) / (a[first + 1] - a[first]);
  const double slope_right = (q[last] - q[last - 1]) / (a[last] - a[last - 1]);

  RateFunction out;
  out.s = s_grid;
  out.I.reserve(s_grid.size());
  out.argmax.reserve(s_grid.size());
  for (double s : s_grid) {
    std::size_t best = first;
    double val = kNegInf;
    for (std::size_t i = first; i <= last; ++i) {
      const double v = a[i] * s - q[i];
      if (v > val) {
        val = v;
        best = i;
      }
    }
    double arg = a[best];
    // Secant slopes carry rounding; s on the slope itself is a tie, not an escape.
    const double eps_l = 1e-12 * (1.0 + std::abs(slope_left)), eps_r = 1e-12 * (1.0 + std::abs(slope_right));
    if ((best == first && !closed_left && s < slope_left - eps_l) ||
        (best == last && !closed_right && s > slope_right + eps_r)) {
      out.I.push_back(kInf);
      out.argmax.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (curve.eval && best > first && best < last) {
      const auto g = [&](double x) { return x * s - curve.eval(x); };
      const auto [x, gx] = detail::golden_max(g, a[best - 1], a[best + 1]);
      if (std::isfinite(gx) && gx > val) {
        val = gx;
        arg = x;
      }
    }
    out.I.push_back(val);
    out.argmax.push_back(arg);
  }
  return out;
}

/// inf of I over [lo, hi], using grid points inside the interval and the
/// rate at the grid points bracketing each end.
inline double rate_inf_on(const RateFunction& rate, double lo, double hi) {
  double best = kInf;
  for (std::size_t i = 0; i < rate.s.size(); ++i)
    if (rate.s[i] >= lo - 1e-12 && rate.s[i] <= hi + 1e-12) best = std::min(best, rate.I[i]);
  return best;
}

struct FluctuationAtom {
  double s;         // sigma_t / t
  double log_prob;  // log P(sigma_t / t = s)
};

struct FluctuationReport {
  std::size_t t = 0;
  double gc_defect = 0.0;
  double transient_defect = 0.0;
  std::vector<double> gc_per_alpha;
  std::vector<FluctuationAtom> atoms;
};

/// Finite-t Gallavotti-Cohen and transient fluctuation identities for the
/// pair (P, Theta P). Both hold exactly at every t through the bijection
/// theta_t; the defects measure floating-point error only.
inline FluctuationReport fluctuation_identities(const Measure& P, const Involution& theta,
                                                const std::vector<double>& alphas, std::size_t t,
                                                std::uint64_t budget = kDefaultEnumerationBudget) {
  const Measure Phat = theta_lift(P, theta);
  word_count(P.alphabet_size(), t, budget);
  std::vector<std::pair<double, double>> sig;  // (sigma, log P)
  for_each_word(P.alphabet_size(), t, [&](SymbolSpan w) {
    const double lp = P.log_marginal(w);
    if (lp == kNegInf) return;
    const double lh = Phat.log_marginal(w);
    if (lh == kNegInf) {
      const std::string s = to_string(P.alphabet(), w);
      throw AbsoluteContinuityError("fluctuation_identities: P(w) > 0 = (Theta P)(w) at '" + s + "'", s);
    }
    sig.emplace_back(lp - lh, lp);
  });

  FluctuationReport rep;
  rep.t = t;
  for (double al : alphas) {
    LogSumExp lhs, rhs;
    for (const auto& [s, lp] : sig) {
      lhs.add(lp - al * s);
      rhs.add(lp + (al - 1.0) * s);
    }
    const double d = std::abs(std::expm1(rhs.value() - lhs.value()));
    rep.gc_per_alpha.push_back(d);
    rep.gc_defect = std::max(rep.gc_defect, d);
  }

  // Atoms of the law of sigma_t: values within 1e-9 (relative) are one atom.
  std::sort(sig.begin(), sig.end());
  std::vector<std::pair<double, LogSumExp>> atoms;
  for (const auto& [s, lp] : sig) {
    if (atoms.empty() || std::abs(s - atoms.back().first) > 1e-9 * (1.0 + std::abs(s)))
      atoms.emplace_back(s, LogSumExp());
    atoms.back().second.add(lp);
  }
  const double tt = static_cast<double>(t);
  for (const auto& [s, acc] : atoms) rep.atoms.push_back({s / tt, acc.value()});
  for (const auto& [s, acc] : atoms) {
    const auto it = std::lower_bound(atoms.begin(), atoms.end(), -s - 1e-9 * (1.0 + std::abs(s)),
                                     [](const auto& x, double v) { return x.first < v; });
    if (it == atoms.end() || std::abs(it->first + s) > 1e-9 * (1.0 + std::abs(s))) {
      rep.transient_defect = kInf;
      continue;
    }
    rep.transient_defect = std::max(rep.transient_defect, std::abs(acc.value() - s - it->second.value()));
  }
  return rep;
}

struct ChernoffResult {
  double alpha = 0.0;
  double exponent = 0.0;  // min over [0,1] of e(alpha)
  bool symmetric = false;
};

/// min over [0,1] of e(alpha) = q(-alpha). A curve with e(alpha) = e(1-alpha)
/// (to 1e-9) reports its minimizer at 1/2.
inline ChernoffResult chernoff_exponent(const PressureCurve& e_curve) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < e_curve.alphas.size(); ++i) {
    const double al = e_curve.alphas[i];
    if (al < -1e-12 || al > 1.0 + 1e-12) continue;
    if (!std::isfinite(e_curve.values[i]))
      throw InvalidArgument("chernoff_exponent: e(" + format_double(al) + ") is not finite");
    idx.push_back(i);
  }
  if (idx.size() < 2) throw InvalidArgument("chernoff_exponent: need grid points in [0,1]");

  ChernoffResult r;
  r.symmetric = true;
  if (e_curve.eval) {
    for (std::size_t i : idx) {
      const double al = e_curve.alphas[i];
      if (std::abs(e_curve.values[i] - e_curve.eval(1.0 - al)) > 1e-9) r.symmetric = false;
    }
  } else {
    for (std::size_t i : idx)
      for (std::size_t j : idx)
        if (std::abs(e_curve.alphas[i] + e_curve.alphas[j] - 1.0) < 1e-9 &&
            std::abs(e_curve.values[i] - e_curve.values[j]) > 1e-9)
          r.symmetric = false;
  }

  std::size_t best = idx.front();
  for (std::size_t i : idx)
    if (e_curve.values[i] < e_curve.values[best]) best = i;
  r.alpha = e_curve.alphas[best];
  r.exponent = e_curve.values[best];
  if (r.symmetric) {
    r.alpha = 0.5;
    if (e_curve.eval) r.exponent = e_curve.eval(0.5);
    return r;
  }
  if (e_curve.eval) {
    const std::size_t k = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), best) - idx.begin());
    const double lo = e_curve.alphas[idx[k == 0 ? 0 : k - 1]];
    const double hi = e_curve.alphas[idx[std::min(k + 1, idx.size() - 1)]];
    const auto [x, gx] = detail::golden_max([&](double al) { return -e_curve.eval(al); }, lo, hi);
    if (-gx < r.exponent) {
      r.alpha = x;
      r.exponent = -gx;
    }
  }
  return r;
}

/// e(alpha) = q(-alpha) of the pair at finite t, as a curve on the grid.
inline PressureCurve chernoff_curve(const Measure& P, const Measure& Phat, std::size_t t,
                                    const std::vector<double>& alphas, unsigned threads = 1) {
  return sample_curve([&P, &Phat, t](double al) { return entropy_pressure(P, Phat, -al, t); }, alphas, t, threads);
}

struct ProbeRow {
  std::size_t t = 0;
  std::uint64_t hits = 0;
  std::uint64_t samples = 0;
  double emp_rate = kNegInf;  // (1/t) log(hits / samples)
  double ref_rate = kNegInf;  // -inf_{[a,b]} I
  double ci_low = kNegInf;    // Wilson 95% interval, mapped through (1/t) log
  double ci_high = kNegInf;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
  bool all_zero = true;
};

namespace detail {

inline std::pair<double, double> wilson_interval(std::uint64_t k, std::uint64_t n, double z = 1.959963984540054) {
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

}  // namespace detail

/// Monte Carlo estimate of (1/t) log P(S_{t-r+1} f / t in [a, b]) for scalar f.
/// Samples are split into a fixed number of chunks seeded by
/// derive_seed(seed ^ t, chunk), so results do not depend on the thread count.
inline ProbeReport empirical_ldp_probe(const Measure& m, const Observable& f, double a, double b,
                                       const std::vector<std::size_t>& t_list, std::uint64_t n_samples,
                                       std::uint64_t seed, double ref_rate, unsigned threads = 1) {
  if (f.d() != 1) throw InvalidArgument("probe: observable must be scalar");
  if (f.alphabet_size() != m.alphabet_size()) throw AlphabetMismatch("probe: observable and measure alphabets differ");
  if (!m.samplable()) throw InvalidArgument("probe: measure is not samplable");
  if (!(a <= b)) throw InvalidArgument("probe: need a <= b");
  if (n_samples == 0) throw InvalidArgument("probe: need at least one sample");
  constexpr std::size_t kChunks = 256;
  ProbeReport rep;
  for (std::size_t t : t_list) {
    if (t == 0) throw InvalidArgument("probe: t must be >= 1");
    const double tt = static_cast<double>(t);
    const double lo = a * tt - 1e-9, hi = b * tt + 1e-9;
    std::vector<std::uint64_t> hits(kChunks, 0);
    std::vector<std::exception_ptr> errors(kChunks);
    parallel_chunks(kChunks, threads, [&](std::size_t c) {
      try {
        const std::uint64_t from = n_samples * c / kChunks, to = n_samples * (c + 1) / kChunks;
        Sampler s(derive_seed(seed ^ (static_cast<std::uint64_t>(t) << 32), c));
        for (std::uint64_t i = from; i < to; ++i) {
          const Word w = sample_path(m, t, s);
          const double z = f.birkhoff(w)[0];
          if (z >= lo && z <= hi) ++hits[c];
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    ProbeRow row;
    row.t = t;
    row.samples = n_samples;
    for (auto h : hits) row.hits += h;
    row.ref_rate = ref_rate;
    const auto [pl, ph] = detail::wilson_interval(row.hits, n_samples);
    row.ci_low = std::log(pl) / tt;
    row.ci_high = std::log(ph) / tt;
    if (row.hits > 0) {
      rep.all_zero = false;
      row.emp_rate = std::log(static_cast<double>(row.hits) / static_cast<double>(n_samples)) / tt;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace ldshift
