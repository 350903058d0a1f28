#ifndef BETHE_UTIL_HPP
#define BETHE_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bethe {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid inputs: bad tables, malformed descriptions, wrong graph class.
struct ValidationError : Error {
  using Error::Error;
};

// A desk-scale enumeration bound was exceeded.
struct BoundError : Error {
  using Error::Error;
};

// Numerical degeneracy: zero normalizers, singular variances, divergent zeta.
struct NumericError : Error {
  using Error::Error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable stream seed for worker k of a seeded computation.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

// Deterministic RNG wrapper; avoids std::uniform_*_distribution so that
// sequences do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

// Streaming log(sum(exp(t))) with a running max shift.
class LogSumExp {
 public:
  void add(double log_term) {
    if (log_term == kNegInf) return;
    if (log_term > max_) {
      sum_ *= std::exp(max_ - log_term);
      max_ = log_term;
    }
    sum_ += std::exp(log_term - max_);
    ++count_;
  }

  double value() const { return sum_ > 0.0 ? max_ + std::log(sum_) : kNegInf; }
  int64_t count() const { return count_; }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
  int64_t count_ = 0;
};

// x*log(x) with the 0*log(0) = 0 convention; entries clamped before log.
inline double xlogx(double x) {
  if (x <= 0.0) return 0.0;
  return x * std::log(x < 1e-300 ? 1e-300 : x);
}

inline double clamped_log(double x) { return std::log(x < 1e-300 ? 1e-300 : x); }

// Mixed-radix assignment counter: x has `digits` entries in [0, base).
// Last digit varies fastest. Returns false after the last assignment.
inline bool next_assignment(std::vector<int>& x, int base) {
  for (int k = static_cast<int>(x.size()) - 1; k >= 0; --k) {
    if (++x[k] < base) return true;
    x[k] = 0;
  }
  return false;
}

inline int64_t ipow(int64_t base, int exp) {
  int64_t r = 1;
  for (int k = 0; k < exp; ++k) r *= base;
  return r;
}

// CSV float field: 17 significant digits, locale independent.
inline std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// FNV-1a, used to stamp output rows with their configuration.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bethe

#endif  // BETHE_UTIL_HPP
