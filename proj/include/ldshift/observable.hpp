#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ldshift/errors.hpp"
#include "ldshift/words.hpp"

namespace ldshift {

/// Finitely dependent observable f: Omega_r -> R^d, stored as a table indexed
/// by the lexicographic position of the r-block.
class Observable {
 public:
  Observable(std::size_t alphabet_size, std::size_t r, std::size_t d, std::vector<double> table)
      : A_(alphabet_size), r_(r), d_(d), table_(std::move(table)) {
    if (r_ < 1 || d_ < 1) throw InvalidArgument("observable: r and d must be >= 1");
    const std::uint64_t blocks = word_count(A_, r_);
    if (table_.size() != blocks * d_)
      throw InvalidArgument("observable: table needs A^r * d = " + std::to_string(blocks * d_) + " entries");
    for (double x : table_)
      if (!std::isfinite(x)) throw InvalidArgument("observable: table entries must be finite");
  }

  static Observable from_function(std::size_t alphabet_size, std::size_t r, std::size_t d,
                                  const std::function<std::vector<double>(SymbolSpan)>& fn) {
    std::vector<double> table;
    for_each_word(alphabet_size, r, [&](SymbolSpan b) {
      const std::vector<double> v = fn(b);
      if (v.size() != d) throw InvalidArgument("observable: function returned the wrong dimension");
      table.insert(table.end(), v.begin(), v.end());
    });
    return Observable(alphabet_size, r, d, std::move(table));
  }

  static Observable indicator(std::size_t alphabet_size, Symbol s) {
    std::vector<double> table(alphabet_size, 0.0);
    table.at(s) = 1.0;
    return Observable(alphabet_size, 1, 1, std::move(table));
  }

  static Observable constant(std::size_t alphabet_size, double c) {
    return Observable(alphabet_size, 1, 1, std::vector<double>(alphabet_size, c));
  }

  std::size_t alphabet_size() const noexcept { return A_; }
  std::size_t r() const noexcept { return r_; }
  std::size_t d() const noexcept { return d_; }
  const std::vector<double>& table() const noexcept { return table_; }

  double at(std::uint64_t block_index, std::size_t j) const { return table_[block_index * d_ + j]; }
  double at(SymbolSpan block, std::size_t j = 0) const { return at(lex_index(block, A_), j); }

  /// S_{t-r+1} f(w): sum of f over the t-r+1 windows of w (zero if |w| < r).
  std::vector<double> birkhoff(SymbolSpan w) const {
    std::vector<double> s(d_, 0.0);
    if (w.size() < r_) return s;
    for (std::size_t i = 0; i + r_ <= w.size(); ++i) {
      const std::uint64_t idx = lex_index(w.subspan(i, r_), A_);
      for (std::size_t j = 0; j < d_; ++j) s[j] += table_[idx * d_ + j];
    }
    return s;
  }

  /// sup over blocks and components of |f|.
  double sup_norm() const {
    double m = 0.0;
    for (double x : table_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t A_;
  std::size_t r_;
  std::size_t d_;
  std::vector<double> table_;
};

}  // namespace ldshift
