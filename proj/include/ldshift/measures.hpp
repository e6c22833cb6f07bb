#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ldshift/errors.hpp"
#include "ldshift/gamma.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

class Measure;

// ---------------------------------------------------------------------------
// Variant payloads. Each one knows how to evaluate its own log-marginal; the
// type-erased Measure below dispatches to them.

struct UniformMeasure {
  std::size_t size = 2;

  double log_marginal(SymbolSpan w) const {
    return -static_cast<double>(w.size()) * std::log(static_cast<double>(size));
  }
};

struct BernoulliMeasure {
  std::vector<double> p;
  std::vector<double> log_p;

  explicit BernoulliMeasure(std::vector<double> probs) : p(std::move(probs)) {
    double s = 0.0;
    for (double x : p) {
      if (!(x >= 0.0)) throw InvalidArgument("bernoulli: probabilities must be >= 0");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12) throw InvalidArgument("bernoulli: probabilities must sum to 1");
    for (double x : p) log_p.push_back(x > 0.0 ? std::log(x) : kNegInf);
  }

  double log_marginal(SymbolSpan w) const {
    double s = 0.0;
    for (Symbol a : w) s += log_p[a];
    return s;
  }
};

struct MarkovMeasure {
  Eigen::MatrixXd P;
  Eigen::VectorXd pi;
  Eigen::MatrixXd log_P;
  Eigen::VectorXd log_pi;

  MarkovMeasure(Eigen::MatrixXd transition, Eigen::VectorXd stationary)
      : P(std::move(transition)), pi(std::move(stationary)) {
    log_P = P.unaryExpr([](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
    log_pi = pi.unaryExpr([](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
  }

  double log_marginal(SymbolSpan w) const {
    if (w.empty()) return 0.0;
    double s = log_pi[w[0]];
    for (std::size_t i = 1; i < w.size() && s != kNegInf; ++i) s += log_P(w[i - 1], w[i]);
    return s;
  }
};

// P(w) = lambda^{-t} <w_vec, M(w_1) ... M(w_t) v>, normalized so <w_vec, v> = 1.
struct MatrixProductMeasure {
  std::vector<Eigen::MatrixXd> M;
  Eigen::VectorXd v;
  Eigen::VectorXd w;
  double lambda = 1.0;
  double log_lambda = 0.0;

  double log_marginal(SymbolSpan word) const {
    Eigen::VectorXd x = v;
    double log_scale = 0.0;
    for (std::size_t i = word.size(); i-- > 0;) {
      x = M[word[i]] * x;
      const double m = x.cwiseAbs().maxCoeff();
      if (m == 0.0) return kNegInf;
      x /= m;
      log_scale += std::log(m);
    }
    const double inner = w.dot(x);
    if (!(inner > 0.0)) return kNegInf;
    return log_scale + std::log(inner) - static_cast<double>(word.size()) * log_lambda;
  }
};

// Hidden chain on {0, 1, 2, ...}: from n jump to n+1 with probability
// g(n+1) = exp(gamma(n) - gamma(n+1)), else back to 0. Start law
// Q_1(n) = exp(-gamma(n)) / Z. Observed letter is a (symbol 0) in state 0 and
// b (symbol 1) elsewhere.
struct HiddenRenewalMeasure {
  GammaSpec gamma;
  double rel_tol = 1e-14;
  std::size_t state_cap = 1000000;
  double gamma0 = 0.0;
  double log_z = 0.0;

  HiddenRenewalMeasure(GammaSpec g, double tol, std::size_t cap)
      : gamma(std::move(g)), rel_tol(tol), state_cap(cap) {
    if (!(rel_tol > 0.0)) throw InvalidArgument("hidden renewal: truncation tolerance must be > 0");
    if (!(gamma.epsilon() > 0.0)) throw InvalidArgument("hidden renewal: gamma needs epsilon > 0");
    gamma0 = gamma(0);
    log_z = std::log(shifted_tail_sum(0));
  }

  // sum_{m >= from} exp(-(gamma(m) - gamma(from))), truncated once the
  // geometric tail bound drops below rel_tol times the partial sum.
  double shifted_tail_sum(std::size_t from) const {
    const double base = gamma(from);
    const double tail_factor = 1.0 / (1.0 - std::exp(-gamma.epsilon()));
    double sum = 0.0;
    for (std::size_t m = from; m - from <= state_cap; ++m) {
      sum += std::exp(-(gamma(m) - base));
      const double next = gamma(m + 1);
      const double bound = next == kInf ? 0.0 : std::exp(-(next - base)) * tail_factor;
      if (bound <= rel_tol * sum) return sum;
    }
    throw ConvergenceError("hidden renewal: tail sum did not converge within the state cap",
                           std::exp(-(gamma(from + state_cap) - base)) * tail_factor);
  }

  double log_marginal(SymbolSpan w) const {
    const std::size_t t = w.size();
    if (t == 0) return 0.0;
    std::size_t lead = 0;
    while (lead < t && w[lead] == 1) ++lead;
    if (lead == t) {
      // Pure b-run: start states n >= 1, path n..n+t-1 never resets;
      // mass Z^{-1} sum_{m >= t} e^{-gamma(m)}.
      return -(gamma(t) - gamma0) + std::log(shifted_tail_sum(t)) - log_z;
    }
    // b^lead a ...: the start-state sum telescopes to e^{-gamma(lead)}.
    double s = -(gamma(lead) - gamma0) - log_z;
    std::size_t state = 0;
    for (std::size_t i = lead + 1; i < t; ++i) {
      if (w[i] == 1) {
        s += gamma.log_climb(state);
        ++state;
      } else {
        s += gamma.log_reset(state);
        state = 0;
      }
      if (s == kNegInf) return s;
    }
    return s;
  }
};

struct ThetaLiftMeasure {
  std::shared_ptr<const Measure> base;
  Involution theta;

  double log_marginal(SymbolSpan w) const;
};

// Pair measure on the product alphabet: symbol x*A + y carries (u_i, v_i) and
// P(u, v) = P(u) * P_hat(v).
struct ProductPairMeasure {
  std::shared_ptr<const Measure> first;
  std::shared_ptr<const Measure> second;
  std::size_t base_size = 2;

  double log_marginal(SymbolSpan w) const;
};

// ---------------------------------------------------------------------------

class Measure {
 public:
  using Variant = std::variant<UniformMeasure, BernoulliMeasure, MarkovMeasure, MatrixProductMeasure,
                               HiddenRenewalMeasure, ThetaLiftMeasure, ProductPairMeasure>;

  Measure(Alphabet alphabet, Variant v, std::string kind)
      : node_(std::make_shared<const Node>(Node{std::move(alphabet), std::move(v), std::move(kind)})) {}

  const Alphabet& alphabet() const noexcept { return node_->alphabet; }
  std::size_t alphabet_size() const noexcept { return node_->alphabet.size(); }
  const std::string& kind() const noexcept { return node_->kind; }
  const Variant& variant() const noexcept { return node_->v; }

  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&node_->v);
  }

  /// log P_{|w|}(w); the caller guarantees the symbols are in range.
  double log_marginal(SymbolSpan w) const {
    return std::visit([&](const auto& m) { return m.log_marginal(w); }, node_->v);
  }

  double log_marginal(const Word& w) const {
    if (w.alphabet_size() != alphabet_size())
      throw AlphabetMismatch("word alphabet size " + std::to_string(w.alphabet_size()) +
                             " does not match measure alphabet size " +
                             std::to_string(alphabet_size()));
    return log_marginal(w.symbols());
  }

  double probability(SymbolSpan w) const { return std::exp(log_marginal(w)); }

  bool samplable() const noexcept {
    return std::holds_alternative<UniformMeasure>(node_->v) ||
           std::holds_alternative<BernoulliMeasure>(node_->v) ||
           std::holds_alternative<MarkovMeasure>(node_->v) ||
           std::holds_alternative<HiddenRenewalMeasure>(node_->v);
  }

 private:
  struct Node {
    Alphabet alphabet;
    Variant v;
    std::string kind;
  };
  std::shared_ptr<const Node> node_;
};

inline double ThetaLiftMeasure::log_marginal(SymbolSpan w) const {
  std::vector<Symbol> buf(w.size());
  theta.apply(w, buf);
  return base->log_marginal(SymbolSpan(buf));
}

inline double ProductPairMeasure::log_marginal(SymbolSpan w) const {
  std::vector<Symbol> u(w.size()), v(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    u[i] = static_cast<Symbol>(w[i] / base_size);
    v[i] = static_cast<Symbol>(w[i] % base_size);
  }
  const double a = first->log_marginal(SymbolSpan(u));
  if (a == kNegInf) return a;
  return a + second->log_marginal(SymbolSpan(v));
}

// ---------------------------------------------------------------------------
// Factories

inline Measure make_uniform(const Alphabet& alphabet) {
  return Measure(alphabet, UniformMeasure{alphabet.size()}, "uniform");
}
inline Measure make_uniform(std::size_t size) { return make_uniform(Alphabet::letters(size)); }

inline Measure make_bernoulli(const Alphabet& alphabet, std::vector<double> p) {
  if (p.size() != alphabet.size()) throw AlphabetMismatch("bernoulli: p has wrong length");
  return Measure(alphabet, BernoulliMeasure(std::move(p)), "bernoulli");
}
inline Measure make_bernoulli(std::vector<double> p) {
  const auto n = p.size();
  return make_bernoulli(Alphabet::letters(n), std::move(p));
}

/// Stationary vector of a row-stochastic matrix; throws when it is not unique.
inline Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& P) {
  const auto n = P.rows();
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < n)
    throw InvalidArgument("markov: stationary vector is not unique; supply pi explicitly");
  Eigen::VectorXd pi = lu.solve(b);
  for (Eigen::Index i = 0; i < n; ++i)
    if (pi(i) < 0.0 && pi(i) > -1e-15) pi(i) = 0.0;
  return pi;
}

inline void check_stochastic(const Eigen::MatrixXd& P) {
  if (P.rows() != P.cols() || P.rows() < 2) throw InvalidArgument("markov: P must be square, size >= 2");
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    if ((P.row(i).array() < 0.0).any()) throw InvalidArgument("markov: negative transition probability");
    if (std::abs(P.row(i).sum() - 1.0) > 1e-12)
      throw InvalidArgument("markov: row " + std::to_string(i) + " does not sum to 1");
  }
}

inline Measure make_markov(const Alphabet& alphabet, Eigen::MatrixXd P,
                           std::optional<Eigen::VectorXd> pi = std::nullopt) {
  check_stochastic(P);
  if (static_cast<std::size_t>(P.rows()) != alphabet.size())
    throw AlphabetMismatch("markov: P size does not match the alphabet");
  Eigen::VectorXd stat = pi ? *pi : stationary_vector(P);
  if (stat.size() != P.rows()) throw InvalidArgument("markov: pi has wrong length");
  if ((stat.array() < 0.0).any() || std::abs(stat.sum() - 1.0) > 1e-12)
    throw InvalidArgument("markov: pi must be a probability vector");
  const double defect = (stat.transpose() * P - stat.transpose()).cwiseAbs().maxCoeff();
  if (defect > 1e-12) throw InvalidArgument("markov: pi is not stationary (defect " + format_double(defect) + ")");
  return Measure(alphabet, MarkovMeasure(std::move(P), std::move(stat)), "markov");
}
inline Measure make_markov(Eigen::MatrixXd P, std::optional<Eigen::VectorXd> pi = std::nullopt) {
  const auto n = static_cast<std::size_t>(P.rows());
  return make_markov(Alphabet::letters(n), std::move(P), std::move(pi));
}

/// Skips the stationarity check; used to build deliberately inconsistent
/// chains for testing the consistency diagnostics.
inline Measure make_markov_unchecked(const Alphabet& alphabet, Eigen::MatrixXd P, Eigen::VectorXd pi) {
  return Measure(alphabet, MarkovMeasure(std::move(P), std::move(pi)), "markov");
}

namespace detail {

// Dominant eigenpair of a nonnegative matrix by power iteration.
inline std::pair<double, Eigen::VectorXd> perron_vector(const Eigen::MatrixXd& S) {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(S.rows()) / static_cast<double>(S.rows());
  double lambda = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd y = S * x;
    const double next = y.sum();
    if (!(next > 0.0)) throw InvalidArgument("matrix product: S is nilpotent on the start vector");
    y /= next;
    const double change = (y - x).cwiseAbs().maxCoeff();
    x = std::move(y);
    const bool done = change <= 1e-12 && std::abs(next - lambda) <= 1e-12 * next;
    lambda = next;
    if (done) return {lambda, x};
  }
  throw ConvergenceError("matrix product: power iteration did not converge in 1e5 steps");
}

}  // namespace detail

inline Measure make_matrix_product(const Alphabet& alphabet, std::vector<Eigen::MatrixXd> M,
                                   std::optional<Eigen::VectorXd> v = std::nullopt,
                                   std::optional<Eigen::VectorXd> w = std::nullopt,
                                   std::optional<double> lambda = std::nullopt) {
  if (M.size() != alphabet.size()) throw AlphabetMismatch("matrix product: one matrix per symbol required");
  const auto n = M.front().rows();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (const auto& m : M) {
    if (m.rows() != n || m.cols() != n) throw InvalidArgument("matrix product: matrices must be N x N");
    if ((m.array() < 0.0).any()) throw InvalidArgument("matrix product: entries must be >= 0");
    S += m;
  }
  MatrixProductMeasure mp;
  mp.M = std::move(M);
  if (v) {
    mp.v = *v;
  } else {
    auto [l, vec] = detail::perron_vector(S);
    mp.v = vec;
    if (!lambda) lambda = l;
  }
  if (w) {
    mp.w = *w;
  } else {
    auto [l, vec] = detail::perron_vector(S.transpose());
    mp.w = vec;
    if (!lambda) lambda = l;
  }
  if (!lambda) lambda = (S * mp.v).sum() / mp.v.sum();
  mp.lambda = *lambda;
  if (!(mp.lambda > 0.0)) throw InvalidArgument("matrix product: lambda must be > 0");
  if ((mp.v.array() <= 0.0).any() || (mp.w.array() <= 0.0).any())
    throw InvalidArgument("matrix product: v and w must be strictly positive");
  mp.v /= mp.v.sum();
  mp.w /= mp.w.dot(mp.v);
  const double rv = (S * mp.v - mp.lambda * mp.v).cwiseAbs().maxCoeff();
  const double rw = (S.transpose() * mp.w - mp.lambda * mp.w).cwiseAbs().maxCoeff();
  if (rv > 1e-9 || rw > 1e-9)
    throw InvalidArgument("matrix product: v, w are not eigenvectors of S for lambda (residuals " +
                          format_double(rv) + ", " + format_double(rw) + ")");
  mp.log_lambda = std::log(mp.lambda);
  return Measure(alphabet, std::move(mp), "matrix_product");
}

inline Measure make_hidden_renewal(GammaSpec gamma, double rel_tol = 1e-14,
                                   std::size_t state_cap = 1000000) {
  return Measure(Alphabet({"a", "b"}), HiddenRenewalMeasure(std::move(gamma), rel_tol, state_cap),
                 "hidden_renewal");
}

inline Measure theta_lift(const Measure& m, const Involution& theta) {
  if (theta.alphabet_size() != m.alphabet_size())
    throw AlphabetMismatch("theta_lift: involution alphabet does not match the measure");
  return Measure(m.alphabet(), ThetaLiftMeasure{std::make_shared<const Measure>(m), theta},
                 "theta_lift");
}

/// First word (shortest, then lexicographic) of length <= depth with
/// P(w) > 0 and P_hat(w) = 0.
inline std::optional<Word> absolute_continuity_scan(const Measure& P, const Measure& P_hat,
                                                    std::size_t depth,
                                                    std::uint64_t budget = kDefaultEnumerationBudget) {
  if (P.alphabet_size() != P_hat.alphabet_size())
    throw AlphabetMismatch("absolute continuity: measures over different alphabets");
  for (std::size_t t = 1; t <= depth; ++t) {
    std::optional<Word> hit;
    for_each_word(
        P.alphabet_size(), t,
        [&](SymbolSpan w) {
          if (hit) return;
          if (P.log_marginal(w) > kNegInf && P_hat.log_marginal(w) == kNegInf)
            hit = Word(P.alphabet_size(), w);
        },
        budget);
    if (hit) return hit;
  }
  return std::nullopt;
}

struct ProductPair {
  Measure pair;      // P(u) P_hat(v)
  Measure pair_hat;  // Theta-lift under (u, v) -> (v, u)
};

/// Builds the pair measure and its swap-lift. Absolute continuity P << P_hat
/// (both directions, since the swap exchanges the roles) is scanned up to
/// `scan_depth`.
inline ProductPair build_product_pair(const Measure& P, const Measure& P_hat, std::size_t scan_depth = 6) {
  if (!(P.alphabet() == P_hat.alphabet()))
    throw AlphabetMismatch("product pair: measures over different alphabets");
  for (const auto& [a, b] : {std::pair{&P, &P_hat}, std::pair{&P_hat, &P}}) {
    if (auto bad = absolute_continuity_scan(*a, *b, scan_depth))
      throw AbsoluteContinuityError("product pair: absolute continuity fails at word '" +
                                        to_string(P.alphabet(), *bad) + "'",
                                    to_string(P.alphabet(), *bad));
  }
  const std::size_t A = P.alphabet_size();
  Alphabet prod = Alphabet::product(P.alphabet());
  Measure pair(prod,
               ProductPairMeasure{std::make_shared<const Measure>(P), std::make_shared<const Measure>(P_hat), A},
               "product_pair");
  std::vector<Symbol> swap(A * A);
  for (std::size_t x = 0; x < A; ++x)
    for (std::size_t y = 0; y < A; ++y) swap[x * A + y] = static_cast<Symbol>(y * A + x);
  Measure pair_hat = theta_lift(pair, Involution::letterwise(std::move(swap)));
  return {std::move(pair), std::move(pair_hat)};
}

// ---------------------------------------------------------------------------

struct StationarityReport {
  double max_defect = 0.0;          // max |sum_a P(wa) - P(w)|, |sum_a P(aw) - P(w)|
  double normalization_defect = 0.0;  // max_t |sum_w P_t(w) - 1|
  std::size_t worst_length = 0;
};

inline StationarityReport stationarity_check(const Measure& m, std::size_t t_max,
                                             std::uint64_t budget = kDefaultEnumerationBudget) {
  const std::size_t A = m.alphabet_size();
  word_count(A, t_max + 1, budget);
  StationarityReport rep;
  std::vector<Symbol> buf;
  for (std::size_t t = 0; t <= t_max; ++t) {
    double total = 0.0;
    buf.assign(t + 1, 0);
    for_each_word(
        A, t,
        [&](SymbolSpan w) {
          const double p = m.probability(w);
          total += p;
          double right = 0.0, left = 0.0;
          for (std::size_t a = 0; a < A; ++a) {
            std::copy(w.begin(), w.end(), buf.begin());
            buf[t] = static_cast<Symbol>(a);
            right += m.probability(SymbolSpan(buf));
            buf[0] = static_cast<Symbol>(a);
            std::copy(w.begin(), w.end(), buf.begin() + 1);
            left += m.probability(SymbolSpan(buf));
          }
          const double d = std::max(std::abs(right - p), std::abs(left - p));
          if (d > rep.max_defect) {
            rep.max_defect = d;
            rep.worst_length = t;
          }
        },
        budget);
    rep.normalization_defect = std::max(rep.normalization_defect, std::abs(total - 1.0));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sampling

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::mt19937_64& engine() noexcept { return engine_; }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

namespace detail {

template <class Probs>
Symbol draw_index(const Probs& p, std::size_t n, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return static_cast<Symbol>(i);
  }
  // u landed in the rounding slack; return the last symbol with mass.
  for (std::size_t i = n; i-- > 0;)
    if (p[i] > 0.0) return static_cast<Symbol>(i);
  return 0;
}

}  // namespace detail

inline Word sample_path(const Measure& m, std::size_t t, Sampler& s) {
  const std::size_t A = m.alphabet_size();
  std::vector<Symbol> out;
  out.reserve(t);
  if (const auto* u = m.get_if<UniformMeasure>()) {
    std::uniform_int_distribution<std::size_t> d(0, u->size - 1);
    for (std::size_t i = 0; i < t; ++i) out.push_back(static_cast<Symbol>(d(s.engine())));
  } else if (const auto* b = m.get_if<BernoulliMeasure>()) {
    for (std::size_t i = 0; i < t; ++i) out.push_back(detail::draw_index(b->p, A, s.uniform()));
  } else if (const auto* mk = m.get_if<MarkovMeasure>()) {
    if (t > 0) out.push_back(detail::draw_index(mk->pi, A, s.uniform()));
    for (std::size_t i = 1; i < t; ++i) {
      Eigen::VectorXd row = mk->P.row(out.back()).transpose();
      out.push_back(detail::draw_index(row, A, s.uniform()));
    }
  } else if (const auto* hr = m.get_if<HiddenRenewalMeasure>()) {
    if (t == 0) return Word(A);
    // Inverse CDF for the start law Q_1(n) = e^{-(gamma(n)-gamma(0))} / Z.
    const double target = s.uniform() * std::exp(hr->log_z);
    double acc = 0.0;
    std::size_t state = 0;
    for (;; ++state) {
      acc += std::exp(-(hr->gamma(state) - hr->gamma0));
      if (target < acc || state >= hr->state_cap) break;
    }
    out.push_back(state == 0 ? 0 : 1);
    for (std::size_t i = 1; i < t; ++i) {
      const double climb = std::exp(hr->gamma.log_climb(state));
      state = s.uniform() < climb ? state + 1 : 0;
      out.push_back(state == 0 ? 0 : 1);
    }
  } else {
    throw InvalidArgument("sample_path: measure kind '" + m.kind() + "' is not samplable");
  }
  return Word(A, std::move(out));
}

}  // namespace ldshift
