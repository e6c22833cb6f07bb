#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace ldshift {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streaming log-sum-exp. Accepts -inf terms (zero mass) and keeps a running
// maximum so that sums of probabilities of long words never underflow.
class LogSumExp {
 public:
  void add(double log_term) {
    if (log_term == kNegInf) return;
    if (std::isnan(log_term)) {
      nan_ = true;
      return;
    }
    if (log_term == kInf) {
      max_ = kInf;
      return;
    }
    if (max_ == kInf) return;
    if (log_term <= max_) {
      sum_ += std::exp(log_term - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    }
  }

  void merge(const LogSumExp& other) {
    if (other.nan_) nan_ = true;
    if (other.max_ == kNegInf) return;
    if (other.max_ == kInf || max_ == kInf) {
      max_ = kInf;
      return;
    }
    if (max_ == kNegInf) {
      max_ = other.max_;
      sum_ = other.sum_;
      return;
    }
    if (other.max_ <= max_) {
      sum_ += other.sum_ * std::exp(other.max_ - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - other.max_) + other.sum_;
      max_ = other.max_;
    }
  }

  double value() const {
    if (nan_) return std::numeric_limits<double>::quiet_NaN();
    if (max_ == kNegInf || max_ == kInf) return max_;
    return max_ + std::log(sum_);
  }

  bool empty() const { return max_ == kNegInf; }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
  bool nan_ = false;
};

inline double log_sum_exp(const std::vector<double>& terms) {
  LogSumExp acc;
  for (double x : terms) acc.add(x);
  return acc.value();
}

// x * log(y) with the convention 0 * log 0 = 0 (and 0 * anything = 0).
inline double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

// a * b with 0 * (+-inf) = 0, the measure-theoretic convention.
inline double mul_ext(double a, double b) {
  if (a == 0.0 || b == 0.0) return 0.0;
  return a * b;
}

// Fixed-width float rendering used by every CSV/JSON writer: 15 significant
// digits, "inf"/"-inf"/"nan" for non-finite values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (x == kInf) return "inf";
  if (x == kNegInf) return "-inf";
  if (x == 0.0) x = 0.0;  // no "-0" in output
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

// Uniform grid lo, lo+step, ..., hi (inclusive up to rounding). Points are
// computed as lo + i*step so long grids do not accumulate drift.
inline std::vector<double> make_grid(double lo, double hi, double step) {
  std::vector<double> grid;
  if (!(step > 0.0) || hi < lo) return grid;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

// Runs fn(chunk) for chunk in [0, n_chunks) on up to `threads` workers.
// Chunk boundaries never depend on the thread count, so callers that store
// per-chunk results and merge them in chunk order get bit-identical output
// for any thread count.
inline void parallel_chunks(std::size_t n_chunks, unsigned threads,
                            const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n_chunks));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < n_chunks; c += workers) fn(c);
    });
  }
  for (auto& th : pool) th.join();
}

inline unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// SplitMix64 finalizer; derives independent per-chunk seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ldshift
