#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/gamma.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/words.hpp"

namespace ldshift::renewal {

/// Two hidden renewal chains sharing the observation map; the first drives P,
/// the second P_hat.
struct RenewalPair {
  GammaSpec gamma;
  GammaSpec gamma_hat;
  double rel_tol = 1e-14;
  std::size_t max_terms = 1000000;
  std::string name;

  void validate() const {
    if (!(rel_tol > 0.0) || max_terms == 0) throw InvalidArgument("renewal pair: tolerances must be positive");
    gamma.validate();
    gamma_hat.validate();
  }
};

/// The six worked examples (c = 1/2 where the example has a free constant).
inline RenewalPair preset(int k) {
  using K = GrowthTerm::Kind;
  RenewalPair p;
  switch (k) {
    case 1:
      p.gamma = GammaSpec::linear(1.0);
      p.gamma_hat = GammaSpec::quadratic(1.0);
      break;
    case 2:
      p.gamma = GammaSpec::linear(1.0);
      p.gamma_hat = GammaSpec::exponential(2.0);
      break;
    case 3:
      p.gamma = GammaSpec::from_terms({{K::Power, 1.0, 1.0}, {K::Power, 0.5, 2.0}}, {}, "n+n^2/2");
      p.gamma_hat = GammaSpec::quadratic(1.0);
      break;
    case 4:
      p.gamma = GammaSpec::quadratic(0.5);
      p.gamma_hat = GammaSpec::from_terms({{K::Power, 1.0, 2.0}, {K::Power, 1.0, 1.5}}, {}, "n^2+n^1.5");
      break;
    case 5:
      p.gamma = GammaSpec::linear(1.0);
      p.gamma_hat = GammaSpec::lin_log(2.0, -2.0, 2.0);
      break;
    case 6:
      // gamma_hat(0) stays 0; the +10 offset applies from n = 1 on.
      p.gamma = GammaSpec::from_terms({{K::Power, 1.0, 1.0}, {K::Log1p, 5.0, 5.0}}, {0.0, 0.01},
                                      "0,0.01,n+5log(1+n/5)");
      p.gamma_hat = GammaSpec::from_terms({{K::Power, 10.0, 0.0}, {K::Power, 2.0, 1.0}, {K::Log1p, 5.0, 5.0}},
                                          {0.0}, "0,10+2n+5log(1+n/5)");
      break;
    default:
      throw InvalidArgument("unknown renewal preset " + std::to_string(k) + " (expected 1..6)");
  }
  p.name = "example" + std::to_string(k);
  return p;
}

/// log u_n(alpha), with gamma and gamma_hat measured from their value at 0.
inline double log_u(const RenewalPair& p, std::size_t n, double alpha) {
  const double g = p.gamma(n) - p.gamma(0);
  const double gh = p.gamma_hat(n) - p.gamma_hat(0);
  double s = mul_ext(alpha + 1.0, p.gamma.log_reset(n)) - mul_ext(alpha, p.gamma_hat.log_reset(n));
  s += -mul_ext(alpha + 1.0, g) + mul_ext(alpha, gh);
  return std::isnan(s) ? kNegInf : s;
}

inline double u_coefficient(const RenewalPair& p, std::size_t n, double alpha) {
  return std::exp(log_u(p, n, alpha));
}

/// d/dalpha log u_n(alpha).
inline double dlog_u(const RenewalPair& p, std::size_t n) {
  const double g = p.gamma(n) - p.gamma(0);
  const double gh = p.gamma_hat(n) - p.gamma_hat(0);
  return p.gamma.log_reset(n) - p.gamma_hat.log_reset(n) - g + gh;
}

/// Radius of convergence of U_alpha: exp of lim ((alpha+1) gamma(t) - alpha gamma_hat(t)) / t.
inline double kappa(const RenewalPair& p, double alpha) {
  const double lim = GammaSpec::linear_limit({{alpha + 1.0, &p.gamma}, {-alpha, &p.gamma_hat}});
  return std::exp(lim);
}

// ---------------------------------------------------------------------------
// Series F(x) = x U_alpha(x) = sum_n u_n x^{n+1}

namespace detail {

// Tail estimate sum_{j > n} term_j from the log terms lt[0..k] (term n and the
// k following). With non-increasing log-ratios (log-concave terms) the worst
// ratio in the window bounds the tail geometrically. With increasing ratios
// the log-ratio is modelled as -p/m - c (power law times geometric) and the
// smaller of the two resulting bounds is used, but only once m is in the
// asymptotic range. +inf when nothing decays.
inline double tail_estimate(double m, const double* lt, std::size_t k) {
  if (lt[1] == kNegInf && lt[k] == kNegInf) return 0.0;
  if (lt[0] == kNegInf || lt[1] == kNegInf) return kInf;  // gap in the support, keep summing
  double rmax = kNegInf;
  for (std::size_t j = 0; j < k; ++j) {
    const double r = lt[j + 1] - lt[j];
    if (std::isnan(r)) return kInf;
    rmax = std::max(rmax, r);
  }
  const double next = std::exp(lt[1]);
  const double r_first = lt[1] - lt[0];
  const double r_last = lt[k] - lt[k - 1];
  if (r_last <= r_first) return rmax < 0.0 ? next / -std::expm1(rmax) : kInf;
  if (m < 32.0) return kInf;  // the asymptotic model is unreliable this early
  const double m0 = m + 0.5, m1 = m + static_cast<double>(k) - 0.5;
  const double p = (r_last - r_first) / (1.0 / m0 - 1.0 / m1);
  const double c = -r_last - p / m1;
  double best = kInf;
  if (c > 0.0) best = std::min(best, next / -std::expm1(-c));
  if (p > 1.0 && c >= -1e-15) best = std::min(best, next * m1 / (p - 1.0));
  return best;
}

}  // namespace detail

struct SeriesValue {
  double partial = 0.0;
  double tail = kInf;       // estimated remainder
  bool exceeded = false;    // partial sum crossed the threshold
  bool converged = false;   // tail <= rel_tol * partial
  std::size_t terms = 0;
  double value() const { return partial + (std::isfinite(tail) ? tail : 0.0); }
};

/// Sums sum_n exp(log_term(n)). Stops when the partial sum exceeds
/// `threshold`, when the tail estimate is below rel_tol times the partial
/// sum, or, if `decide` is set, as soon as partial + 2 tail < threshold.
template <class LogTerm>
SeriesValue sum_series(LogTerm&& log_term, double rel_tol, std::size_t max_terms,
                       double threshold = kInf, bool decide = false) {
  constexpr std::size_t kLook = 8;
  SeriesValue out;
  std::vector<double> window;  // log terms n .. n + kLook
  window.reserve(kLook + 1);
  for (std::size_t j = 0; j <= kLook; ++j) window.push_back(log_term(j));
  std::size_t head = 0;  // index into window of term n (ring buffer)
  std::array<double, kLook + 1> ordered{};
  std::size_t hold = 0;  // no tail certificate before this index
  for (std::size_t n = 0; n < max_terms; ++n) {
    const double lt = window[head];
    const double term = std::exp(lt);
    out.partial += term;
    out.terms = n + 1;
    if (!(out.partial <= threshold)) {
      out.exceeded = true;
      return out;
    }
    for (std::size_t j = 0; j <= kLook; ++j) ordered[j] = window[(head + j) % (kLook + 1)];
    out.tail = n + 1 < hold ? kInf : detail::tail_estimate(static_cast<double>(n + 1), ordered.data(), kLook);
    const bool accept = out.tail <= rel_tol * out.partial ||
                        (decide && std::isfinite(out.tail) && out.partial + 2.0 * out.tail < threshold);
    if (accept) {
      // The window only sees local behaviour; terms far out can turn around
      // (log-ratios rising like n^{-1/2} then falling). Probe geometrically.
      bool refuted = false;
      for (std::size_t k = n + kLook + 1;;) {
        k = std::min(max_terms - 1, k + std::max<std::size_t>(1, k / 4));
        const double far = log_term(k);
        if (!(out.partial + std::exp(far) <= threshold)) {
          out.exceeded = true;
          out.tail = kInf;
          return out;
        }
        if (std::exp(far) > out.tail) {
          refuted = true;
          hold = k;
          break;
        }
        if (k == max_terms - 1) break;
      }
      if (!refuted) {
        out.converged = out.tail <= rel_tol * out.partial;
        return out;
      }
      out.tail = kInf;
    }
    window[head] = log_term(n + kLook + 1);
    head = (head + 1) % (kLook + 1);
  }
  return out;
}

inline SeriesValue series_F(const RenewalPair& p, double alpha, double log_x, double threshold = kInf,
                            bool decide = false) {
  return sum_series(
      [&](std::size_t n) { return log_u(p, n, alpha) + static_cast<double>(n + 1) * log_x; },
      p.rel_tol, p.max_terms, threshold, decide);
}

// ---------------------------------------------------------------------------

enum class RhoCase { RootOfXU, RadiusBound, Degenerate };

inline const char* to_string(RhoCase c) {
  switch (c) {
    case RhoCase::RootOfXU: return "root";
    case RhoCase::RadiusBound: return "radius";
    case RhoCase::Degenerate: return "degenerate";
  }
  return "?";
}

struct RhoResult {
  double alpha = 0.0;
  double rho = 0.0;
  RhoCase rho_case = RhoCase::Degenerate;
  double kappa = 0.0;
  double q = kInf;
  int iterations = 0;
  double residual = 0.0;  // |F(rho) - 1| in case RootOfXU
};

namespace detail {

// true  => F(x) > 1, false => F(x) <= 1.
inline bool exceeds_one(const RenewalPair& p, double alpha, double log_x) {
  const SeriesValue s = series_F(p, alpha, log_x, 1.0, true);
  if (s.exceeded) return true;
  if (s.converged) return s.partial + s.tail > 1.0;
  if (std::isfinite(s.tail) && s.partial + 2.0 * s.tail < 1.0) return false;
  if (std::isfinite(s.tail) && s.tail <= 1e-15 * s.partial) return s.partial + s.tail > 1.0;
  throw ConvergenceError("series x U(x) could not be certified against 1 at alpha=" + format_double(alpha) +
                             ", x=" + format_double(std::exp(log_x)) + " within " +
                             std::to_string(p.max_terms) + " terms",
                         std::isfinite(s.tail) ? std::abs(s.partial + s.tail - 1.0) : kInf);
}

}  // namespace detail

/// rho(alpha) = sup{x >= 0 : x U_alpha(x) <= 1} by bisection in log x.
inline RhoResult rho_solve(const RenewalPair& p, double alpha) {
  RhoResult r;
  r.alpha = alpha;
  r.kappa = kappa(p, alpha);
  if (r.kappa == 0.0) {
    r.rho_case = RhoCase::Degenerate;
    r.rho = 0.0;
    r.q = kInf;
    return r;
  }
  double lo = 0.0, hi = 0.0;  // log x with F(e^lo) <= 1 < F(e^hi)
  if (std::isfinite(r.kappa)) {
    const double lk = std::log(r.kappa);
    if (!detail::exceeds_one(p, alpha, lk)) {
      r.rho_case = RhoCase::RadiusBound;
      r.rho = r.kappa;
      r.q = -lk;
      return r;
    }
    hi = lk;
    lo = lk - 1.0;
    while (detail::exceeds_one(p, alpha, lo)) {
      hi = lo;
      lo -= 2.0 * (hi - lo + 1.0);
      if (lo < -700.0) throw ConvergenceError("rho bracket underflow at alpha=" + format_double(alpha));
    }
  } else {
    lo = 0.0;
    if (detail::exceeds_one(p, alpha, lo)) {
      hi = lo;
      do {
        hi = lo;
        lo -= 1.0;
        if (lo < -700.0) throw ConvergenceError("rho bracket underflow at alpha=" + format_double(alpha));
      } while (detail::exceeds_one(p, alpha, lo));
    } else {
      hi = 1.0;
      while (!detail::exceeds_one(p, alpha, hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 700.0) throw ConvergenceError("rho bracket overflow at alpha=" + format_double(alpha));
      }
    }
  }
  int it = 0;
  while (hi - lo > 1e-13 && it < 200) {
    const double mid = 0.5 * (lo + hi);
    if (detail::exceeds_one(p, alpha, mid))
      hi = mid;
    else
      lo = mid;
    ++it;
  }
  r.rho_case = RhoCase::RootOfXU;
  r.iterations = it;
  r.rho = std::exp(lo);
  r.q = -lo;
  const SeriesValue f = series_F(p, alpha, lo);
  r.residual = std::abs(f.value() - 1.0);
  return r;
}

inline double q_value(const RenewalPair& p, double alpha) { return rho_solve(p, alpha).q; }

// ---------------------------------------------------------------------------
// Derivatives

namespace detail {

// q'(alpha) from the implicit equation F(rho) = 1 at the given rho.
inline double implicit_q_derivative(const RenewalPair& p, double alpha, double rho) {
  const double lr = std::log(rho);
  // numerator sum_n u_n dlog u_n rho^{n+1} split by sign so log-sum-exp applies
  const SeriesValue pos = sum_series(
      [&](std::size_t n) {
        const double d = dlog_u(p, n);
        return d > 0 ? log_u(p, n, alpha) + std::log(d) + (n + 1) * lr : kNegInf;
      },
      p.rel_tol, p.max_terms);
  const SeriesValue neg = sum_series(
      [&](std::size_t n) {
        const double d = dlog_u(p, n);
        return d < 0 ? log_u(p, n, alpha) + std::log(-d) + (n + 1) * lr : kNegInf;
      },
      p.rel_tol, p.max_terms);
  const SeriesValue den = sum_series(
      [&](std::size_t n) { return log_u(p, n, alpha) + std::log(static_cast<double>(n + 1)) + n * lr; },
      p.rel_tol, p.max_terms);
  const double rho_prime = -(pos.value() - neg.value()) / den.value();
  return -rho_prime / rho;
}

inline double radius_q_derivative(const RenewalPair& p) {
  // q = -((alpha+1) a - alpha a_hat) on the radius branch, a, a_hat the slopes.
  const double a = p.gamma.slope_limit();
  const double ah = p.gamma_hat.slope_limit();
  if (!std::isfinite(a) || !std::isfinite(ah)) return std::numeric_limits<double>::quiet_NaN();
  return ah - a;
}

}  // namespace detail

/// q'(alpha) for the branch active at alpha; NaN in the degenerate case.
inline double q_derivative(const RenewalPair& p, const RhoResult& r) {
  switch (r.rho_case) {
    case RhoCase::RootOfXU: return detail::implicit_q_derivative(p, r.alpha, r.rho);
    case RhoCase::RadiusBound: return detail::radius_q_derivative(p);
    case RhoCase::Degenerate: return std::numeric_limits<double>::quiet_NaN();
  }
  return 0.0;
}

struct OneSided {
  double left = 0.0;
  double right = 0.0;
  RhoCase left_case = RhoCase::RootOfXU;
  RhoCase right_case = RhoCase::RootOfXU;
};

/// One-sided derivatives around a point: q' of the branch active at alpha - h
/// and at alpha + h. At a radius/root transition F(kappa) = 1 exactly and the
/// point itself is not certifiable, so the two sides are sampled just off it.
inline OneSided q_one_sided(const RenewalPair& p, double alpha, double h = 1e-4) {
  OneSided o;
  const RhoResult l = rho_solve(p, alpha - h);
  const RhoResult r = rho_solve(p, alpha + h);
  o.left_case = l.rho_case;
  o.right_case = r.rho_case;
  o.left = l.rho_case == RhoCase::Degenerate ? kInf : q_derivative(p, l);
  o.right = r.rho_case == RhoCase::Degenerate ? kInf : q_derivative(p, r);
  return o;
}

// ---------------------------------------------------------------------------

struct QPoint {
  RhoResult r;
  double dq = std::numeric_limits<double>::quiet_NaN();
};

struct Transition {
  double alpha = 0.0;
  RhoCase left = RhoCase::RootOfXU;
  RhoCase right = RhoCase::RootOfXU;
};

struct QCurve {
  std::vector<QPoint> points;
  std::vector<Transition> transitions;
};

/// Bisects on the case tag between a and b. Right at a radius/root
/// transition F(kappa) = 1 and the series test cannot separate the cases; the
/// bisection stops there, which already pins the point to within the
/// certification gap.
inline Transition locate_transition(const RenewalPair& p, double a, double b, double tol = 1e-7) {
  const RhoCase ta = rho_solve(p, a).rho_case;
  const RhoCase tb = rho_solve(p, b).rho_case;
  if (ta == tb) throw InvalidArgument("locate_transition: no case change in the bracket");
  while (b - a > tol) {
    const double m = 0.5 * (a + b);
    RhoCase tm;
    try {
      tm = rho_solve(p, m).rho_case;
    } catch (const ConvergenceError&) {
      return {m, ta, tb};
    }
    if (tm == ta)
      a = m;
    else
      b = m;
  }
  return {0.5 * (a + b), ta, tb};
}

inline QCurve q_curve(const RenewalPair& p, const std::vector<double>& alphas, bool derivatives = true,
                      bool transitions = true, unsigned threads = 1) {
  if (!std::is_sorted(alphas.begin(), alphas.end())) throw InvalidArgument("q_curve: alpha grid must be sorted");
  QCurve c;
  c.points.resize(alphas.size());
  std::vector<std::exception_ptr> errors(alphas.size());
  parallel_chunks(alphas.size(), threads, [&](std::size_t i) {
    try {
      QPoint& pt = c.points[i];
      pt.r = rho_solve(p, alphas[i]);
      if (derivatives) pt.dq = q_derivative(p, pt.r);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (transitions) {
    for (std::size_t i = 1; i < alphas.size(); ++i)
      if (c.points[i].r.rho_case != c.points[i - 1].r.rho_case)
        c.transitions.push_back(locate_transition(p, alphas[i - 1], alphas[i]));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Cross-validation of the renewal recursion against the hidden renewal measures.

struct RenewalValidation {
  double max_recursion_defect = 0.0;       // relative, brute force vs recursion
  double max_multiplicativity_defect = 0.0;  // relative, zeta(u a v) vs zeta(u) zeta(v)
  std::vector<double> r_brute;
  std::vector<double> r_recursion;
};

inline RenewalValidation validate_renewal(const RenewalPair& p, std::size_t t_max, double alpha,
                                          std::uint64_t budget = kDefaultEnumerationBudget) {
  word_count(2, t_max, budget);
  const Measure P = make_hidden_renewal(p.gamma);
  const Measure Ph = make_hidden_renewal(p.gamma_hat);
  const double la = P.log_marginal(SymbolSpan(std::vector<Symbol>{0}));
  const double lah = Ph.log_marginal(SymbolSpan(std::vector<Symbol>{0}));

  // log zeta_{t,alpha}(w) with p_t(w) = P(a w a) / P(a)
  std::vector<Symbol> buf;
  auto log_zeta = [&](SymbolSpan w) {
    buf.assign(w.size() + 2, 0);
    std::copy(w.begin(), w.end(), buf.begin() + 1);
    const double lp = P.log_marginal(SymbolSpan(buf)) - la;
    const double lph = Ph.log_marginal(SymbolSpan(buf)) - lah;
    return mul_ext(alpha + 1.0, lp) - mul_ext(alpha, lph);
  };
  auto rel = [](double a, double b) {
    if (a == b) return 0.0;
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
  };

  RenewalValidation v;
  std::vector<double> u(t_max + 1);
  for (std::size_t n = 0; n <= t_max; ++n) u[n] = u_coefficient(p, n, alpha);
  for (std::size_t t = 0; t <= t_max; ++t) {
    double rec = u[t];
    for (std::size_t k = 0; k < t; ++k) rec += u[k] * v.r_recursion[t - 1 - k];
    v.r_recursion.push_back(rec);

    LogSumExp acc;
    for_each_word(
        2, t,
        [&](SymbolSpan w) {
          const double lz = log_zeta(w);
          acc.add(lz);
          for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] != 0) continue;
            const double split = log_zeta(w.subspan(0, i)) + log_zeta(w.subspan(i + 1));
            const double d = (lz == kNegInf && split == kNegInf) ? 0.0 : rel(std::exp(lz), std::exp(split));
            v.max_multiplicativity_defect = std::max(v.max_multiplicativity_defect, d);
          }
        },
        budget);
    v.r_brute.push_back(std::exp(acc.value()));
    v.max_recursion_defect = std::max(v.max_recursion_defect, rel(v.r_brute.back(), rec));
  }
  return v;
}

}  // namespace ldshift::renewal
