#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ldshift/errors.hpp"

namespace ldshift {

using Symbol = std::uint16_t;
using SymbolSpan = std::span<const Symbol>;

inline constexpr std::uint64_t kDefaultEnumerationBudget = std::uint64_t{1} << 24;

/// Finite alphabet with presentation labels. Symbols are the dense indices
/// 0..size()-1; labels only matter for parsing and printing words.
class Alphabet {
 public:
  explicit Alphabet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw InvalidArgument("alphabet needs at least two symbols");
    if (labels_.size() > std::numeric_limits<Symbol>::max())
      throw InvalidArgument("alphabet too large");
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.empty()) throw InvalidArgument("alphabet labels must be non-empty");
      if (!seen.insert(l).second) throw InvalidArgument("duplicate alphabet label '" + l + "'");
    }
  }

  /// "a", "b", "c", ... for size <= 26, otherwise "s0", "s1", ...
  static Alphabet letters(std::size_t size) {
    std::vector<std::string> labels;
    labels.reserve(size);
    for (std::size_t i = 0; i < size; ++i)
      labels.push_back(size <= 26 ? std::string(1, static_cast<char>('a' + i))
                                  : "s" + std::to_string(i));
    return Alphabet(std::move(labels));
  }

  /// Alphabet of pairs (x, y), symbol index x * A + y, labels concatenated.
  static Alphabet product(const Alphabet& a) {
    std::vector<std::string> labels;
    labels.reserve(a.size() * a.size());
    for (std::size_t x = 0; x < a.size(); ++x)
      for (std::size_t y = 0; y < a.size(); ++y) labels.push_back(a.label(x) + a.label(y));
    return Alphabet(std::move(labels));
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<Symbol> index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return static_cast<Symbol>(i);
    return std::nullopt;
  }

  bool single_char_labels() const {
    return std::all_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.size() == 1; });
  }

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::vector<std::string> labels_;
};

/// Finite word over an alphabet of a given size. The empty word is a regular
/// value.
class Word {
 public:
  Word() = default;
  explicit Word(std::size_t alphabet_size, std::vector<Symbol> symbols = {})
      : alphabet_size_(alphabet_size), symbols_(std::move(symbols)) {
    for (Symbol s : symbols_)
      if (s >= alphabet_size_) throw InvalidArgument("symbol index out of range");
  }
  Word(std::size_t alphabet_size, SymbolSpan symbols)
      : Word(alphabet_size, std::vector<Symbol>(symbols.begin(), symbols.end())) {}

  static Word empty(std::size_t alphabet_size) { return Word(alphabet_size); }

  std::size_t alphabet_size() const noexcept { return alphabet_size_; }
  std::size_t size() const noexcept { return symbols_.size(); }
  bool empty() const noexcept { return symbols_.empty(); }
  Symbol operator[](std::size_t i) const { return symbols_[i]; }
  SymbolSpan symbols() const noexcept { return symbols_; }
  operator SymbolSpan() const noexcept { return symbols_; }

  friend bool operator==(const Word& a, const Word& b) {
    return a.alphabet_size_ == b.alphabet_size_ && a.symbols_ == b.symbols_;
  }
  // Canonical order: lexicographic on index sequences, a proper prefix first.
  friend bool operator<(const Word& a, const Word& b) {
    return std::lexicographical_compare(a.symbols_.begin(), a.symbols_.end(), b.symbols_.begin(),
                                        b.symbols_.end());
  }

 private:
  std::size_t alphabet_size_ = 0;
  std::vector<Symbol> symbols_;
};

inline Word concat(const Word& u, const Word& v) {
  if (u.alphabet_size() != v.alphabet_size())
    throw AlphabetMismatch("concat: words over alphabets of different sizes");
  std::vector<Symbol> out;
  out.reserve(u.size() + v.size());
  out.insert(out.end(), u.symbols().begin(), u.symbols().end());
  out.insert(out.end(), v.symbols().begin(), v.symbols().end());
  return Word(u.alphabet_size(), std::move(out));
}

inline Word concat(const Word& u, const Word& v, const Word& w) { return concat(concat(u, v), w); }

/// A^t, throwing BudgetExceeded when it exceeds `budget` (or overflows).
inline std::uint64_t word_count(std::size_t alphabet_size, std::size_t t,
                                std::uint64_t budget = kDefaultEnumerationBudget) {
  std::uint64_t n = 1;
  for (std::size_t i = 0; i < t; ++i) {
    if (n > budget / alphabet_size)
      throw BudgetExceeded("enumeration of " + std::to_string(alphabet_size) + "^" +
                           std::to_string(t) + " words exceeds the budget of " +
                           std::to_string(budget));
    n *= alphabet_size;
  }
  if (n > budget) throw BudgetExceeded("enumeration exceeds the budget");
  return n;
}

/// Calls fn(SymbolSpan) for every word of length t in lexicographic order.
/// The span is only valid for the duration of the call.
template <class Fn>
void for_each_word(std::size_t alphabet_size, std::size_t t, Fn&& fn,
                   std::uint64_t budget = kDefaultEnumerationBudget) {
  const std::uint64_t count = word_count(alphabet_size, t, budget);
  std::vector<Symbol> w(t, 0);
  for (std::uint64_t k = 0; k < count; ++k) {
    fn(SymbolSpan(w));
    for (std::size_t i = t; i-- > 0;) {
      if (++w[i] < alphabet_size) break;
      w[i] = 0;
    }
  }
}

inline std::vector<Word> enumerate_words(const Alphabet& alphabet, std::size_t t,
                                         std::uint64_t budget = kDefaultEnumerationBudget) {
  std::vector<Word> out;
  out.reserve(static_cast<std::size_t>(word_count(alphabet.size(), t, budget)));
  for_each_word(
      alphabet.size(), t, [&](SymbolSpan w) { out.emplace_back(alphabet.size(), w); }, budget);
  return out;
}

/// Position of a word in the lexicographic enumeration of its length class.
inline std::uint64_t lex_index(SymbolSpan w, std::size_t alphabet_size) {
  std::uint64_t idx = 0;
  for (Symbol s : w) idx = idx * alphabet_size + s;
  return idx;
}

/// The involutions theta_t lifted from a letter involution: letterwise maps
/// every position, reversal additionally reverses the word.
struct Involution {
  enum class Kind { Letterwise, Reversal };

  Kind kind = Kind::Reversal;
  std::vector<Symbol> letter_map;

  Involution(Kind k, std::vector<Symbol> map) : kind(k), letter_map(std::move(map)) {
    const std::size_t a = letter_map.size();
    for (std::size_t i = 0; i < a; ++i) {
      if (letter_map[i] >= a) throw InvalidArgument("involution letter map out of range");
      if (letter_map[letter_map[i]] != i)
        throw InvalidArgument("letter map is not an involution");
    }
  }

  static Involution reversal(std::size_t alphabet_size) {
    return Involution(Kind::Reversal, identity_map(alphabet_size));
  }
  static Involution letterwise(std::vector<Symbol> map) {
    return Involution(Kind::Letterwise, std::move(map));
  }
  static Involution reversal(std::vector<Symbol> map) {
    return Involution(Kind::Reversal, std::move(map));
  }
  static std::vector<Symbol> identity_map(std::size_t alphabet_size) {
    std::vector<Symbol> m(alphabet_size);
    for (std::size_t i = 0; i < alphabet_size; ++i) m[i] = static_cast<Symbol>(i);
    return m;
  }

  std::size_t alphabet_size() const noexcept { return letter_map.size(); }

  void apply(SymbolSpan in, std::span<Symbol> out) const {
    const std::size_t t = in.size();
    if (kind == Kind::Letterwise) {
      for (std::size_t i = 0; i < t; ++i) out[i] = letter_map[in[i]];
    } else {
      for (std::size_t i = 0; i < t; ++i) out[i] = letter_map[in[t - 1 - i]];
    }
  }
};

inline Word theta_apply(const Involution& theta, const Word& w) {
  if (theta.alphabet_size() != w.alphabet_size())
    throw AlphabetMismatch("involution and word use different alphabets");
  std::vector<Symbol> out(w.size());
  theta.apply(w.symbols(), out);
  return Word(w.alphabet_size(), std::move(out));
}

// Words print without separators when every label is one character,
// comma-separated otherwise.
inline std::string to_string(const Alphabet& alphabet, SymbolSpan w) {
  const bool compact = alphabet.single_char_labels();
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!compact && i > 0) out += ',';
    out += alphabet.label(w[i]);
  }
  return out;
}

inline Word parse_word(const Alphabet& alphabet, std::string_view text) {
  std::vector<Symbol> out;
  auto lookup = [&](std::string_view label) {
    auto idx = alphabet.index_of(label);
    if (!idx) throw InvalidArgument("unknown symbol '" + std::string(label) + "'");
    out.push_back(*idx);
  };
  if (alphabet.single_char_labels()) {
    for (char c : text) lookup(std::string_view(&c, 1));
  } else if (!text.empty()) {
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = text.find(',', start);
      lookup(text.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return Word(alphabet.size(), std::move(out));
}

}  // namespace ldshift
