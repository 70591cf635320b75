#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "popdyn/ode.hpp"
#include "popdyn/protocol.hpp"

namespace popdyn {

// Linear viral protocols: every reviewing agent copies the state of a random
// partner, and reviews at rate gamma - delta * t_i(x), where t_i is the
// immunity of state i against the current population.

using ImmunityMatrix = std::vector<std::vector<long>>;

/// t_i(x) = sum_j a_ij x_j
inline double state_immunity(const ImmunityMatrix& a, std::span<const double> x, std::size_t i) {
  double t = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) t += static_cast<double>(a[i][j]) * x[j];
  return t;
}

/// t(x) = sum_i x_i t_i(x) = x^T A x
inline double mean_immunity(const ImmunityMatrix& a, std::span<const double> x) {
  double t = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) t += x[i] * state_immunity(a, x, i);
  return t;
}

/// Replicator form dx_i/dt = delta (t_i(x) - t(x)) x_i. gamma cancels.
inline Vector lvp_rhs(const ProtocolSpec& spec, std::span<const double> x) {
  const auto& lvp = spec.as<LvpKind>();
  const double tbar = mean_immunity(lvp.immunity, x);
  Vector v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    v[i] = lvp.delta * (state_immunity(lvp.immunity, x, i) - tbar) * x[i];
  return v;
}

// ---------------------------------------------------------------------------
// Lotka-Volterra correspondence
// ---------------------------------------------------------------------------

/// dy_i/dtau = y_i (r_i + sum_j B_ij y_j), i = 1..dim
struct LotkaVolterraSystem {
  std::size_t dim = 0;
  Vector r;
  Matrix b;
  std::size_t pivot = 0;               // state eliminated by the projective map
  std::vector<std::size_t> state_of;   // LV coordinate -> protocol state

  Vector rhs(std::span<const double> y) const {
    Vector v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      double s = r[i];
      for (std::size_t j = 0; j < dim; ++j) s += b(i, j) * y[j];
      v[i] = y[i] * s;
    }
    return v;
  }

  /// y_i = x_i / x_pivot for every non-pivot state.
  Vector coordinates_of(std::span<const double> x) const {
    Vector y(dim);
    for (std::size_t i = 0; i < dim; ++i) y[i] = x[state_of[i]] / x[pivot];
    return y;
  }
};

/// Maps the replicator dynamics onto a Lotka-Volterra system in the ratios
/// y_i = x_i / x_pivot, valid under the time change dtau = x_pivot dt:
///   r_i = delta (a_{i,pivot} - a_{pivot,pivot}),  B_ij = delta (a_ij - a_{pivot,j}).
inline LotkaVolterraSystem to_lotka_volterra(const ProtocolSpec& spec, std::size_t pivot) {
  const auto& lvp = spec.as<LvpKind>();
  const std::size_t k = spec.k();
  if (pivot >= k) throw std::invalid_argument("to_lotka_volterra: pivot out of range");
  const auto& a = lvp.immunity;
  LotkaVolterraSystem lv;
  lv.dim = k - 1;
  lv.pivot = pivot;
  for (std::size_t i = 0; i < k; ++i)
    if (i != pivot) lv.state_of.push_back(i);
  lv.r.resize(lv.dim);
  lv.b = Matrix(lv.dim, lv.dim);
  for (std::size_t ii = 0; ii < lv.dim; ++ii) {
    const std::size_t i = lv.state_of[ii];
    lv.r[ii] = lvp.delta * static_cast<double>(a[i][pivot] - a[pivot][pivot]);
    for (std::size_t jj = 0; jj < lv.dim; ++jj) {
      const std::size_t j = lv.state_of[jj];
      lv.b(ii, jj) = lvp.delta * static_cast<double>(a[i][j] - a[pivot][j]);
    }
  }
  return lv;
}

inline LotkaVolterraSystem to_lotka_volterra(const ProtocolSpec& spec) {
  return to_lotka_volterra(spec, spec.k() - 1);
}

// ---------------------------------------------------------------------------
// Relative entropy and sampled Lyapunov certificates
// ---------------------------------------------------------------------------

/// E(x) = -sum_i x*_i ln(x_i / x*_i). +inf when x misses part of the support of x*.
inline double relative_entropy(std::span<const double> star, std::span<const double> x) {
  double e = 0.0;
  for (std::size_t i = 0; i < star.size(); ++i) {
    if (star[i] <= 0.0) continue;
    if (x[i] <= 0.0) return std::numeric_limits<double>::infinity();
    e -= star[i] * std::log(x[i] / star[i]);
  }
  return e;
}

/// sum_i x*_i t_i(x) - t(x); positive near x* means E decreases there.
inline double lyapunov_margin(const ImmunityMatrix& a, std::span<const double> star,
                              std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < star.size(); ++i) s += star[i] * state_immunity(a, x, i);
  return s - mean_immunity(a, x);
}

struct Certified {
  double radius = 0.0;
  std::size_t samples = 0;
};
struct Refuted {
  Vector witness;
};
struct Inconclusive {};

struct LyapunovVerdict {
  std::variant<Certified, Refuted, Inconclusive> outcome;
  double margin = 0.0;  // min over samples
  double radius = 0.0;
  std::size_t samples = 0;

  bool certified() const { return std::holds_alternative<Certified>(outcome); }
  bool refuted() const { return std::holds_alternative<Refuted>(outcome); }
  bool inconclusive() const { return std::holds_alternative<Inconclusive>(outcome); }

  std::string_view name() const {
    return certified() ? "certified" : refuted() ? "refuted" : "inconclusive";
  }

  std::string report() const {
    std::ostringstream os;
    os << "verdict: " << name() << '\n';
    os << "radius: " << format_number(radius) << '\n';
    os << "samples: " << samples << '\n';
    os << "margin: " << format_number(margin) << '\n';
    if (const auto* r = std::get_if<Refuted>(&outcome)) os << "witness: " << format_csv(r->witness) << '\n';
    os << "note: sampled evidence, not a proof\n";
    return os.str();
  }
};

inline constexpr double kMarginSlack = 1e-12;

/// Orthonormal basis of the tangent space {v : sum v = 0} (Gram-Schmidt on
/// e_i - e_k).
inline std::vector<Vector> simplex_tangent_basis(std::size_t k) {
  std::vector<Vector> basis;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    Vector v(k, 0.0);
    v[i] = 1.0;
    v[k - 1] = -1.0;
    for (const auto& b : basis) {
      double d = 0.0;
      for (std::size_t j = 0; j < k; ++j) d += v[j] * b[j];
      for (std::size_t j = 0; j < k; ++j) v[j] -= d * b[j];
    }
    double nrm = 0.0;
    for (double e : v) nrm += e * e;
    nrm = std::sqrt(nrm);
    for (double& e : v) e /= nrm;
    basis.push_back(std::move(v));
  }
  return basis;
}

/// Samples `samples` points uniformly from the simplex intersected with the
/// Euclidean ball of `radius` around x*, and checks the strict descent
/// condition sum_i x*_i t_i(x) > t(x) at each one.
///
/// A margin below -1e-12 refutes (first such sample is the witness), a
/// minimum margin within 1e-12 of zero is inconclusive, and otherwise the
/// point is certified for that radius. Sampling is evidence, not proof.
inline LyapunovVerdict lyapunov_certificate(const ProtocolSpec& spec, std::span<const double> star,
                                            double radius = 0.05, std::size_t samples = 2000,
                                            std::uint64_t seed = 1) {
  const auto& lvp = spec.as<LvpKind>();
  const std::size_t k = spec.k();
  if (star.size() != k) throw std::invalid_argument("lyapunov_certificate: dimension mismatch");
  if (!(radius > 0.0) || samples == 0)
    throw std::invalid_argument("lyapunov_certificate: radius and samples must be positive");

  {
    const double tbar = mean_immunity(lvp.immunity, star);
    for (std::size_t i = 0; i < k; ++i)
      if (star[i] > 0.0 && std::abs(state_immunity(lvp.immunity, star, i) - tbar) > 1e-9)
        throw std::invalid_argument("lyapunov_certificate: x* is not a fixed point");
  }

  LyapunovVerdict verdict;
  verdict.radius = radius;
  verdict.samples = samples;
  verdict.margin = std::numeric_limits<double>::infinity();
  if (k == 1) {
    verdict.margin = 0.0;
    verdict.outcome = Inconclusive{};
    return verdict;
  }

  const auto basis = simplex_tangent_basis(k);
  const std::size_t dim = k - 1;
  Rng rng(seed);
  std::optional<Vector> witness;
  std::size_t accepted = 0;
  const std::size_t max_draws = 10000 * samples;
  Vector x(k), dir(dim);
  for (std::size_t draw = 0; accepted < samples; ++draw) {
    if (draw >= max_draws)
      throw NumericalError("lyapunov_certificate: ball barely meets the simplex; rejection failed");
    double nrm = 0.0;
    for (auto& d : dir) {
      d = rng.normal();
      nrm += d * d;
    }
    nrm = std::sqrt(nrm);
    const double rho = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    for (std::size_t j = 0; j < k; ++j) {
      x[j] = star[j];
      for (std::size_t b = 0; b < dim; ++b) x[j] += rho * dir[b] / nrm * basis[b][j];
    }
    if (*std::min_element(x.begin(), x.end()) < 0.0) continue;
    ++accepted;
    const double m = lyapunov_margin(lvp.immunity, star, x);
    verdict.margin = std::min(verdict.margin, m);
    if (m < -kMarginSlack && !witness) witness = x;
  }
  if (witness) verdict.outcome = Refuted{*witness};
  else if (verdict.margin <= kMarginSlack) verdict.outcome = Inconclusive{};
  else verdict.outcome = Certified{radius, samples};
  return verdict;
}

}  // namespace popdyn
