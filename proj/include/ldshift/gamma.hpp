#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/numeric.hpp"

namespace ldshift {

/// One additive piece of a growth sequence gamma(n).
struct GrowthTerm {
  enum class Kind {
    Power,  // coeff * n^param (param = 0 is a constant)
    Log1p,  // coeff * log(1 + n / param)
    Exp,    // coeff * exp(param * n)
  };

  Kind kind = Kind::Power;
  double coeff = 0.0;
  double param = 0.0;

  double eval(double n) const {
    switch (kind) {
      case Kind::Power:
        return param == 0.0 ? coeff : coeff * std::pow(n, param);
      case Kind::Log1p:
        return coeff * std::log1p(n / param);
      case Kind::Exp:
        return coeff * std::exp(param * n);
    }
    return 0.0;
  }

  // Asymptotic order of the term as n -> inf, totally ordered:
  // constants < log n < n^p (p > 0, by p) < exp(r n) (r > 0, by r).
  std::pair<int, double> order() const {
    switch (kind) {
      case Kind::Power:
        return param > 0.0 ? std::pair{2, param} : std::pair{0, 0.0};
      case Kind::Log1p:
        return {1, 0.0};
      case Kind::Exp:
        return param > 0.0 ? std::pair{3, param} : std::pair{0, 0.0};
    }
    return {0, 0.0};
  }
};

/// Non-decreasing sequence gamma(n), n >= 0, driving the hidden renewal chain.
///
/// A sequence is either a finite sum of growth terms (optionally with the
/// first few values overridden by a table), or an opaque callable with a
/// declared slope lim gamma(n)/n. Term sums carry their own asymptotics, so
/// limits of linear combinations such as (alpha+1) gamma - alpha gamma_hat are
/// resolved exactly even when both slopes are infinite.
class GammaSpec {
 public:
  static GammaSpec from_terms(std::vector<GrowthTerm> terms, std::vector<double> head = {},
                              std::string name = {}) {
    GammaSpec g;
    g.terms_ = std::move(terms);
    g.head_ = std::move(head);
    g.name_ = std::move(name);
    g.epsilon_ = g.scan_min_increment(kCheckHorizon);
    return g;
  }

  static GammaSpec linear(double a) {
    return from_terms({{GrowthTerm::Kind::Power, a, 1.0}}, {}, "linear(" + fmt(a) + ")");
  }
  static GammaSpec quadratic(double c) {
    return from_terms({{GrowthTerm::Kind::Power, c, 2.0}}, {}, "quadratic(" + fmt(c) + ")");
  }
  /// a n + b log(1 + n/scale)
  static GammaSpec lin_log(double a, double b, double scale) {
    return from_terms({{GrowthTerm::Kind::Power, a, 1.0}, {GrowthTerm::Kind::Log1p, b, scale}}, {},
                      "linlog(" + fmt(a) + "," + fmt(b) + "," + fmt(scale) + ")");
  }
  static GammaSpec exponential(double rate) {
    return from_terms({{GrowthTerm::Kind::Exp, 1.0, rate}}, {}, "exp(" + fmt(rate) + ")");
  }
  /// Explicit values for n < head.size(), `tail` beyond.
  static GammaSpec tabular(std::vector<double> head, const GammaSpec& tail) {
    if (!tail.has_terms()) throw InvalidArgument("tabular gamma needs a term-based tail");
    return from_terms(tail.terms_, std::move(head), "tabular+" + tail.name_);
  }

  static GammaSpec custom(std::function<double(std::size_t)> fn, std::optional<double> slope,
                          std::string name = "custom") {
    GammaSpec g;
    g.fn_ = std::move(fn);
    g.declared_slope_ = slope;
    g.name_ = std::move(name);
    g.epsilon_ = g.scan_min_increment(kCheckHorizon);
    return g;
  }

  double operator()(std::size_t n) const {
    if (fn_) return fn_(n);
    if (n < head_.size()) return head_[n];
    double s = 0.0;
    const auto x = static_cast<double>(n);
    for (const auto& term : terms_) s += term.eval(x);
    return s;
  }

  /// gamma(n+1) - gamma(n); +inf once the sequence itself overflows.
  double increment(std::size_t n) const {
    const double a = (*this)(n);
    const double b = (*this)(n + 1);
    if (b == kInf) return kInf;
    return b - a;
  }

  /// log g(n+1) = gamma(n) - gamma(n+1).
  double log_climb(std::size_t n) const { return -increment(n); }
  /// log(1 - g(n+1)).
  double log_reset(std::size_t n) const {
    const double inc = increment(n);
    if (inc == kInf) return 0.0;
    return std::log1p(-std::exp(-inc));
  }

  /// Smallest increment over n <= 10^4 (the certified epsilon).
  double epsilon() const noexcept { return epsilon_; }
  GammaSpec with_epsilon(double eps) const {
    GammaSpec g = *this;
    g.epsilon_ = eps;
    return g;
  }

  bool has_terms() const noexcept { return !fn_; }
  const std::vector<GrowthTerm>& terms() const noexcept { return terms_; }
  const std::vector<double>& head() const noexcept { return head_; }
  const std::optional<double>& declared_slope() const noexcept { return declared_slope_; }
  const std::string& name() const noexcept { return name_; }

  double slope_limit() const { return linear_limit({{1.0, this}}); }

  /// Checks gamma(n+1) >= gamma(n) + epsilon for n <= horizon, epsilon > 0,
  /// and that the slope agrees with gamma(t)/t at t = 1000 within 10%.
  void validate(std::size_t horizon = kCheckHorizon) const {
    if (!(epsilon_ > 0.0)) throw InvalidArgument("gamma '" + name_ + "': epsilon must be > 0");
    for (std::size_t n = 0; n < horizon; ++n) {
      const double inc = increment(n);
      if (!(inc >= epsilon_ * (1.0 - 1e-12)))
        throw InvalidArgument("gamma '" + name_ + "': increment at n=" + std::to_string(n) +
                              " is below epsilon");
    }
    const double slope = slope_limit();
    const double r1 = (*this)(1000) / 1000.0;
    if (std::isfinite(slope)) {
      if (std::abs(r1 - slope) > 0.1 * std::max(std::abs(slope), 1e-3))
        throw InvalidArgument("gamma '" + name_ + "': declared slope inconsistent with gamma(1000)/1000");
    } else {
      const double r2 = (*this)(2000) / 2000.0;
      if (!(r2 > r1 || r1 == kInf)) throw InvalidArgument("gamma '" + name_ + "': infinite slope but gamma(t)/t not increasing");
    }
  }

  /// lim_{t->inf} (1/t) sum_i c_i gamma_i(t), in [-inf, inf].
  ///
  /// With term sums the dominant non-cancelling term decides; callables fall
  /// back to their declared slopes, with 0 * inf = 0 and inf - inf rejected.
  static double linear_limit(const std::vector<std::pair<double, const GammaSpec*>>& combo) {
    const bool all_terms = std::all_of(combo.begin(), combo.end(),
                                       [](const auto& c) { return c.second->has_terms(); });
    if (all_terms) {
      std::map<std::pair<int, double>, std::pair<double, double>> by_order;  // coeff, magnitude
      for (const auto& [c, g] : combo) {
        if (c == 0.0) continue;
        for (const auto& term : g->terms_) {
          auto& slot = by_order[term.order()];
          slot.first += c * term.coeff;
          slot.second += std::abs(c * term.coeff);
        }
      }
      for (auto it = by_order.rbegin(); it != by_order.rend(); ++it) {
        const auto [order, acc] = *it;
        const auto [coeff, magnitude] = acc;
        if (std::abs(coeff) <= 1e-12 * magnitude || coeff == 0.0) continue;
        const bool superlinear = order.first == 3 || (order.first == 2 && order.second > 1.0);
        if (superlinear) return coeff > 0 ? kInf : kNegInf;
        if (order.first == 2 && order.second == 1.0) return coeff;
        return 0.0;
      }
      return 0.0;
    }
    double total = 0.0;
    for (const auto& [c, g] : combo) {
      double slope = 0.0;
      if (g->has_terms()) {
        slope = linear_limit({{1.0, g}});
      } else if (g->declared_slope_) {
        slope = *g->declared_slope_;
      } else {
        throw InvalidArgument("gamma '" + g->name_ + "' has no declared slope");
      }
      const double part = mul_ext(c, slope);
      if (std::isinf(total) && std::isinf(part) && (total > 0) != (part > 0))
        throw InvalidArgument("slope combination is inf - inf; declare term-based gammas");
      total += part;
    }
    return total;
  }

  std::string describe() const {
    std::ostringstream os;
    os << name_;
    return os.str();
  }

  static constexpr std::size_t kCheckHorizon = 10000;

 private:
  static std::string fmt(double x) { return format_double(x); }

  double scan_min_increment(std::size_t horizon) const {
    double eps = kInf;
    for (std::size_t n = 0; n < horizon; ++n) {
      const double inc = increment(n);
      if (std::isnan(inc)) continue;
      eps = std::min(eps, inc);
    }
    return eps;
  }

  std::vector<GrowthTerm> terms_;
  std::vector<double> head_;
  std::function<double(std::size_t)> fn_;
  std::optional<double> declared_slope_;
  std::string name_;
  double epsilon_ = 0.0;
};

}  // namespace ldshift
