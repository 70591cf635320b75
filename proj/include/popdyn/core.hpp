#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace popdyn {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rate or switch expression evaluated to a negative value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// A point left the (inflated) simplex.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Iterative numerical routine failed (eigenvalue non-convergence, singular solve).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Operation applied to a protocol of the wrong kind.
class KindError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Simplex tolerances
// ---------------------------------------------------------------------------

inline constexpr double kSimplexTol = 1e-9;

inline double sum(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Clamps tiny negatives to zero and rescales onto the simplex.
///
/// Entries must be > -1e-9 and the sum within 1e-6 of one; anything else is
/// treated as the trajectory escaping the simplex and raises DomainError.
inline Vector renormalize(std::span<const double> raw) {
  if (raw.empty()) throw DomainError("renormalize: empty vector");
  double s = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i] > -kSimplexTol))
      throw DomainError("renormalize: component " + std::to_string(i + 1) + " = " +
                        std::to_string(raw[i]) + " below -1e-9");
    s += std::max(raw[i], 0.0);
  }
  if (!(std::abs(sum(raw) - 1.0) <= 1e-6))
    throw DomainError("renormalize: sum " + std::to_string(sum(raw)) + " not within 1e-6 of 1");
  Vector out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = std::max(raw[i], 0.0) / s;
  return out;
}

/// A validated point of the probability simplex.
class DensityVector {
 public:
  DensityVector() = default;

  /// Validates without rescaling: x_i >= 0 and sum within 1e-9 of one.
  explicit DensityVector(Vector x) : x_(std::move(x)) {
    if (x_.empty()) throw DomainError("density vector must be nonempty");
    for (std::size_t i = 0; i < x_.size(); ++i)
      if (!(x_[i] >= 0.0))
        throw DomainError("density component " + std::to_string(i + 1) + " is negative");
    if (!(std::abs(sum(x_) - 1.0) <= kSimplexTol))
      throw DomainError("density vector does not sum to 1");
  }

  static DensityVector normalized(std::span<const double> raw) {
    return DensityVector(renormalize(raw));
  }

  static DensityVector uniform(std::size_t k) { return DensityVector(Vector(k, 1.0 / k)); }

  static DensityVector vertex(std::size_t k, std::size_t i) {
    Vector v(k, 0.0);
    v.at(i) = 1.0;
    return DensityVector(std::move(v));
  }

  std::size_t size() const { return x_.size(); }
  double operator[](std::size_t i) const { return x_[i]; }
  const Vector& values() const { return x_; }
  operator std::span<const double>() const { return x_; }
  auto begin() const { return x_.begin(); }
  auto end() const { return x_.end(); }

  friend bool operator==(const DensityVector&, const DensityVector&) = default;

 private:
  Vector x_;
};

// ---------------------------------------------------------------------------
// Deterministic random numbers
// ---------------------------------------------------------------------------

/// SplitMix64-seeded xoshiro256** generator. The standard <random>
/// distributions are implementation-defined, so sampling helpers are spelled
/// out here to keep seeded runs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& s : s_) s = splitmix(z);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double uniform_open0() { return 1.0 - uniform(); }

  // Uniform integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = next();
    while (r >= limit);
    return r % bound;
  }

  double exponential(double rate) { return -std::log(uniform_open0()) / rate; }

  // Box-Muller, one value per call.
  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform point on the simplex (flat Dirichlet).
  Vector simplex_point(std::size_t k) {
    Vector v(k);
    double s = 0.0;
    for (auto& e : v) s += (e = -std::log(uniform_open0()));
    for (auto& e : v) e /= s;
    return v;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix(std::uint64_t& z) {
    std::uint64_t r = (z += 0x9e3779b97f4a7c15ULL);
    r = (r ^ (r >> 30)) * 0xbf58476d1ce4e5b9ULL;
    r = (r ^ (r >> 27)) * 0x94d049bb133111ebULL;
    return r ^ (r >> 31);
  }
  std::uint64_t s_[4];
};

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string format_csv(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_number(v[i]);
  }
  return out;
}

inline bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace popdyn
