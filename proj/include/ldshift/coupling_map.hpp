#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ldshift/decoupling.hpp"
#include "ldshift/errors.hpp"
#include "ldshift/measures.hpp"
#include "ldshift/numeric.hpp"
#include "ldshift/observable.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

/// N blocks of length n glued with inserts of length <= tau into a word of
/// length t; N = 2 floor(t / (2(n + tau))), t' = N n.
struct BlockLayout {
  std::size_t n = 0;
  std::size_t t = 0;
  std::size_t tau = 0;
  std::size_t N = 0;
  std::size_t t_prime = 0;
  std::size_t delta_min = 0;  // t - N(n + tau)
  std::size_t delta_max = 0;  // t - t'

  bool degenerate() const noexcept { return N == 0; }
};

inline BlockLayout block_counts(std::size_t n, std::size_t t, std::size_t tau) {
  if (n < 1) throw InvalidArgument("block_counts: n must be >= 1");
  if (t < n) throw InvalidArgument("block_counts: t must be >= n");
  BlockLayout l;
  l.n = n;
  l.t = t;
  l.tau = tau;
  l.N = 2 * (t / (2 * (n + tau)));
  l.t_prime = l.N * n;
  l.delta_min = t - l.N * (n + tau);
  l.delta_max = t - l.t_prime;
  return l;
}

struct PsiImage {
  Word word;
  std::size_t delta = 0;
  double c_visited = kNegInf;  // max over gluing steps of log P(w^i) P(s) - log P(w^i xi s), first measure
};

namespace detail {

inline void require_layout(const BlockLayout& l) {
  if (l.degenerate()) throw InvalidArgument("psi: degenerate layout (N = 0)");
}

}  // namespace detail

/// psi_{n,t}(w) = b w^1 xi^1 w^2 ... xi^{N-1} w^N. Inserts are chosen right to
/// left: with one measure the argmax of log P(w^i xi s), with two the argmax of
/// min over both measures of -|log P#(w^i xi s) - log P#(w^i) - log P#(s)|.
/// The prefix b (length delta = t - t' - sum |xi|) comes from extend_word.
inline PsiImage build_psi(const std::vector<const Measure*>& measures, const BlockLayout& layout, const Word& w) {
  detail::require_layout(layout);
  if (measures.empty() || measures.size() > 2) throw InvalidArgument("build_psi: one or two measures");
  const std::size_t A = measures.front()->alphabet_size();
  if (w.size() != layout.t_prime) throw InvalidArgument("build_psi: word length must be t'");
  const std::size_t n = layout.n;
  auto block = [&](std::size_t k) { return w.symbols().subspan(k * n, n); };
  for (std::size_t k = 0; k < layout.N; ++k)
    for (std::size_t i = 0; i < measures.size(); ++i)
      if (measures[i]->log_marginal(block(k)) == kNegInf) {
        const std::string s = to_string(measures[i]->alphabet(), block(k));
        if (i == 0) throw InvalidArgument("build_psi: block '" + s + "' has zero mass (w outside the support)");
        throw AbsoluteContinuityError("build_psi: block '" + s + "' has zero mass under the second measure", s);
      }

  const std::vector<Word> inserts = detail::inserts_upto(A, layout.tau, 0, kDefaultEnumerationBudget);
  const bool two = measures.size() == 2;
  PsiImage out;
  std::vector<Symbol> s(block(layout.N - 1).begin(), block(layout.N - 1).end());
  std::vector<Symbol> buf;
  std::size_t inserted = 0;
  for (std::size_t k = layout.N - 1; k-- > 0;) {
    const SymbolSpan u = block(k);
    double best = kNegInf;
    const Word* best_xi = nullptr;
    for (const Word& xi : inserts) {
      detail::join(buf, u, xi, s);
      double score;
      if (two) {
        score = kInf;
        for (const Measure* m : measures) {
          const double lp = m->log_marginal(SymbolSpan(buf));
          score = std::min(score, lp == kNegInf ? kNegInf
                                                : -std::abs(lp - m->log_marginal(u) - m->log_marginal(SymbolSpan(s))));
        }
      } else {
        score = measures[0]->log_marginal(SymbolSpan(buf));
      }
      if (score > best) {
        best = score;
        best_xi = &xi;
      }
    }
    if (!best_xi)
      throw CheckFailure("build_psi: no insert gives positive mass for block '" + to_string(measures[0]->alphabet(), u) +
                         "' before '" + to_string(measures[0]->alphabet(), s) + "'");
    const Measure& P = *measures[0];
    detail::join(buf, u, *best_xi, s);
    out.c_visited = std::max(out.c_visited, P.log_marginal(u) + P.log_marginal(SymbolSpan(s)) -
                                                P.log_marginal(SymbolSpan(buf)));
    inserted += best_xi->size();
    s = buf;
  }
  out.delta = layout.t - layout.t_prime - inserted;
  const Extension ext = extend_word(measures, Word(A, s), out.delta);
  std::vector<Symbol> full(ext.b.symbols().begin(), ext.b.symbols().end());
  full.insert(full.end(), s.begin(), s.end());
  out.word = Word(A, std::move(full));
  return out;
}

struct PsiDiagnostics {
  BlockLayout layout;
  double g_min = kNegInf;
  double g_analytic = kNaN;
  std::size_t multiplicity = 0;
  double multiplicity_bound = 0.0;  // (tau + 1)^{N-1}
  double c_star = kNegInf;          // SLD constant over the visited gluing pairs
  std::size_t preimages = 0;        // |Lambda_{t'}|
  std::size_t images = 0;
  double sigma_defect = kNaN;
  double birkhoff_defect = kNaN;

  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Applies fn(w) to every w in Lambda_{t'} (blocks supported by the first
// measure), split into fixed chunks so results merge deterministically.
template <class Fn>
void for_each_lambda(const std::vector<const Measure*>& measures, const BlockLayout& l, std::uint64_t budget,
                     unsigned threads, Fn&& fn) {
  const std::size_t A = measures.front()->alphabet_size();
  const std::uint64_t count = word_count(A, l.t_prime, budget);
  word_count(A, l.t, budget);
  // supported n-blocks
  std::vector<bool> supported(word_count(A, l.n, budget));
  for_each_word(A, l.n, [&](SymbolSpan b) {
    supported[lex_index(b, A)] = measures[0]->log_marginal(b) > kNegInf;
  });
  const std::size_t n_chunks = static_cast<std::size_t>(std::min<std::uint64_t>(64, count));
  std::vector<std::exception_ptr> errors(n_chunks);
  parallel_chunks(n_chunks, threads, [&](std::size_t c) {
    try {
      const std::uint64_t lo = count * c / n_chunks, hi = count * (c + 1) / n_chunks;
      std::vector<Symbol> w(l.t_prime);
      for (std::uint64_t idx = lo; idx < hi; ++idx) {
        std::uint64_t x = idx;
        for (std::size_t i = l.t_prime; i-- > 0;) {
          w[i] = static_cast<Symbol>(x % A);
          x /= A;
        }
        bool ok = true;
        for (std::size_t k = 0; k < l.N && ok; ++k) ok = supported[lex_index(SymbolSpan(w).subspan(k * l.n, l.n), A)];
        if (ok) fn(c, Word(A, w));
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t lambda_chunks(std::size_t A, const BlockLayout& l, std::uint64_t budget) {
  return static_cast<std::size_t>(std::min<std::uint64_t>(64, word_count(A, l.t_prime, budget)));
}

}  // namespace detail

/// Enumerates Lambda_{t'}, pushes the block-product measure P^(n) forward
/// through psi and returns the smallest g with P^(n) o psi^{-1} <= e^g P_t.
inline PsiDiagnostics psi_certificate(const std::vector<const Measure*>& measures, const BlockLayout& layout,
                                      std::uint64_t budget = kDefaultEnumerationBudget, unsigned threads = 1) {
  PsiDiagnostics d;
  d.layout = layout;
  if (layout.degenerate()) return d;
  const Measure& P = *measures.front();
  const std::size_t A = P.alphabet_size();
  const std::size_t n_chunks = detail::lambda_chunks(A, layout, budget);

  struct Hit {
    std::uint64_t key;
    double log_mass;
    double c;
    Word image;
  };
  std::vector<std::vector<Hit>> hits(n_chunks);
  detail::for_each_lambda(measures, layout, budget, threads, [&](std::size_t c, const Word& w) {
    double lm = 0.0;
    for (std::size_t k = 0; k < layout.N; ++k) lm += P.log_marginal(w.symbols().subspan(k * layout.n, layout.n));
    PsiImage img = build_psi(measures, layout, w);
    hits[c].push_back({lex_index(img.word, A), lm, img.c_visited, std::move(img.word)});
  });

  struct Acc {
    LogSumExp mass;
    std::size_t count = 0;
    const Word* image = nullptr;
  };
  std::unordered_map<std::uint64_t, Acc> by_image;
  for (const auto& chunk : hits)
    for (const Hit& h : chunk) {
      Acc& a = by_image[h.key];
      a.mass.add(h.log_mass);
      ++a.count;
      a.image = &h.image;
      d.c_star = std::max(d.c_star, h.c);
      ++d.preimages;
    }
  d.images = by_image.size();
  // Iterate images in key order so the max is reproducible.
  std::vector<std::uint64_t> keys;
  keys.reserve(by_image.size());
  for (const auto& [k, a] : by_image) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (std::uint64_t k : keys) {
    const Acc& a = by_image[k];
    d.multiplicity = std::max(d.multiplicity, a.count);
    const double lp = P.log_marginal(a.image->symbols());
    d.g_min = std::max(d.g_min, a.mass.value() - lp);
  }
  const double N1 = static_cast<double>(layout.N - 1);
  d.multiplicity_bound = std::pow(static_cast<double>(layout.tau + 1), N1);
  d.g_analytic = N1 * d.c_star + static_cast<double>(layout.delta_max) * std::log(static_cast<double>(A)) +
                 N1 * std::log(static_cast<double>(layout.tau + 1));
  if (static_cast<double>(d.multiplicity) > d.multiplicity_bound)
    throw CheckFailure("psi_certificate: preimage multiplicity " + std::to_string(d.multiplicity) +
                       " exceeds (tau+1)^(N-1)");
  return d;
}

enum class DefectMode { Sigma, Birkhoff };

struct CompatDefect {
  double defect = 0.0;                                      // sup |z_t(psi w) - sum_k z_n(w^k)| / t
  double bound = std::numeric_limits<double>::quiet_NaN();  // birkhoff: ||f|| (1 - t'/t + r/n)
};

/// Sigma mode needs (P, P_hat) and uses sigma_t = log P_t - log P_hat_t; the
/// Birkhoff mode uses z_t = S_{t-r+1} f with psi built from the given measures.
inline CompatDefect compat_defect(const std::vector<const Measure*>& measures, const BlockLayout& layout,
                                  DefectMode mode, const Observable* f = nullptr,
                                  std::uint64_t budget = kDefaultEnumerationBudget, unsigned threads = 1) {
  detail::require_layout(layout);
  if (mode == DefectMode::Sigma && measures.size() != 2)
    throw InvalidArgument("compat_defect: sigma mode needs two measures");
  if (mode == DefectMode::Birkhoff && !f) throw InvalidArgument("compat_defect: birkhoff mode needs an observable");
  const std::size_t A = measures.front()->alphabet_size();
  const std::size_t n_chunks = detail::lambda_chunks(A, layout, budget);
  std::vector<double> worst(n_chunks, 0.0);

  auto sigma = [&](SymbolSpan w) {
    const double lp = measures[0]->log_marginal(w);
    const double lh = measures[1]->log_marginal(w);
    if (lp > kNegInf && lh == kNegInf) {
      const std::string s = to_string(measures[0]->alphabet(), w);
      throw AbsoluteContinuityError("compat_defect: P(w) > 0 = P_hat(w) at '" + s + "'", s);
    }
    return lp - lh;
  };
  detail::for_each_lambda(measures, layout, budget, threads, [&](std::size_t c, const Word& w) {
    const PsiImage img = build_psi(measures, layout, w);
    double gap = 0.0;
    if (mode == DefectMode::Sigma) {
      double sum = 0.0;
      for (std::size_t k = 0; k < layout.N; ++k) sum += sigma(w.symbols().subspan(k * layout.n, layout.n));
      gap = std::abs(sigma(img.word) - sum);
    } else {
      const std::vector<double> zt = f->birkhoff(img.word);
      std::vector<double> sum(f->d(), 0.0);
      for (std::size_t k = 0; k < layout.N; ++k) {
        const std::vector<double> zn = f->birkhoff(w.symbols().subspan(k * layout.n, layout.n));
        for (std::size_t j = 0; j < f->d(); ++j) sum[j] += zn[j];
      }
      for (std::size_t j = 0; j < f->d(); ++j) gap = std::max(gap, std::abs(zt[j] - sum[j]));
    }
    worst[c] = std::max(worst[c], gap);
  });
  CompatDefect out;
  for (double x : worst) out.defect = std::max(out.defect, x);
  out.defect /= static_cast<double>(layout.t);
  if (mode == DefectMode::Birkhoff) {
    const double t = static_cast<double>(layout.t);
    out.bound = f->sup_norm() * (1.0 - static_cast<double>(layout.t_prime) / t +
                                 static_cast<double>(f->r()) / static_cast<double>(layout.n));
    if (out.defect > out.bound + 1e-12)
      throw CheckFailure("compat_defect: Birkhoff defect " + format_double(out.defect) + " exceeds the bound " +
                         format_double(out.bound));
  }
  return out;
}

}  // namespace ldshift
