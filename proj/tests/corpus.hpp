#pragma once

// Shared protocol fixtures and random generators for the test suites.

#include <string>
#include <vector>

#include "popdyn/popdyn.hpp"

namespace popdyn::testing {

inline ProtocolSpec worked_example() {
  PppKind ppp;
  ppp.rules = {{{0, 1}, {2, 1}}, {{2, 0}, {0, 1}}, {{1, 2}, {1, 0}}};
  return {StateSet::numbered(3), ppp};
}

// Hand-expanded right-hand sides of the worked example.
inline Vector worked_example_expanded_rhs(std::span<const double> x) {
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  return {x1 * x3 + x2 * x3 - x1 * (x2 + x3),
          x1 * x3 + x1 * x2 + x2 * x3 - x2 * (x1 + x3),
          x1 * x2 - x3 * (x1 + x2)};
}

inline ProtocolSpec mpp(Vector rates, Matrix p) {
  const std::size_t k = rates.size();
  return {StateSet::numbered(k), MppKind{std::move(rates), std::move(p)}};
}

inline ProtocolSpec swap_chain(double l1 = 1.0, double l2 = 1.0) {
  return mpp({l1, l2}, Matrix{{0, 1}, {1, 0}});
}

inline ProtocolSpec lvp(std::vector<std::vector<long>> a, double gamma, double delta) {
  const std::size_t k = a.size();
  return {StateSet::numbered(k), LvpKind{std::move(a), gamma, delta}};
}

inline std::vector<std::vector<long>> scaled_identity(std::size_t k, long s) {
  std::vector<std::vector<long>> a(k, std::vector<long>(k, 0));
  for (std::size_t i = 0; i < k; ++i) a[i][i] = s;
  return a;
}

inline std::vector<std::vector<long>> all_ones(std::size_t k) {
  return std::vector<std::vector<long>>(k, std::vector<long>(k, 1));
}

/// Valid random pairwise protocol: distinct left/right states, unique left pairs.
inline ProtocolSpec random_ppp(Rng& rng, std::size_t k, std::size_t max_rules) {
  std::vector<std::pair<std::size_t, std::size_t>> lefts;
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t m = 0; m < k; ++m)
      if (r != m) lefts.emplace_back(r, m);
  for (std::size_t i = lefts.size(); i > 1; --i) std::swap(lefts[i - 1], lefts[rng.below(i)]);
  const std::size_t count = std::min<std::size_t>(lefts.size(), 1 + rng.below(max_rules));
  PppKind ppp;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = rng.below(k);
    std::size_t b = rng.below(k - 1);
    if (b >= a) ++b;
    ppp.rules.push_back({lefts[i], {a, b}});
  }
  return {StateSet::numbered(k), ppp};
}

/// Random irreducible chain: a random cycle through all states plus extra
/// random edges, rates in [0.5, 2].
inline ProtocolSpec random_irreducible_mpp(Rng& rng, std::size_t k) {
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  for (std::size_t i = k; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  Matrix w(k, k);
  for (std::size_t i = 0; i < k; ++i) w(order[i], order[(i + 1) % k]) = 0.2 + rng.uniform();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (rng.uniform() < 0.4) w(i, j) += rng.uniform();
  Vector rates(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += w(i, j);
    for (std::size_t j = 0; j < k; ++j) w(i, j) /= s;
    rates[i] = 0.5 + 1.5 * rng.uniform();
  }
  // Make rows sum to one to the last bit.
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) s += w(i, j);
    w(i, k - 1) = std::max(0.0, 1.0 - s);
  }
  return mpp(std::move(rates), std::move(w));
}

/// Random symmetric immunity matrix with entries in [-3, 3].
inline ProtocolSpec random_lvp(Rng& rng, std::size_t k) {
  std::vector<std::vector<long>> a(k, std::vector<long>(k, 0));
  long mx = -3;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      a[i][j] = a[j][i] = static_cast<long>(rng.below(7)) - 3;
      mx = std::max(mx, a[i][j]);
    }
  const double delta = 0.5 + rng.uniform();
  return lvp(std::move(a), delta * static_cast<double>(mx) + rng.uniform(), delta);
}

/// A hand-built general SPP with affine rates and pairing/constant switches.
inline ProtocolSpec mixed_spp() {
  SppKind spp;
  spp.rates = {AffineRate{{0.5, {0.0, 1.0, 2.0}}}, ConstantRate{1.0},
               AffineRate{{1.0, {-0.5, 0.0, 0.0}}}};
  spp.p = {{PairingSwitch{}, PairingSwitch{}, PairingSwitch{}},
           {ConstantSwitch{0.25}, ConstantSwitch{0.25}, ConstantSwitch{0.5}},
           {ConstantSwitch{0.0}, ConstantSwitch{1.0}, ConstantSwitch{0.0}}};
  return {StateSet::numbered(3), spp};
}

struct NamedSpec {
  std::string name;
  ProtocolSpec spec;
};

/// Conservation-respecting specs used by the cross-cutting property tests.
inline std::vector<NamedSpec> corpus() {
  Rng rng(20240611);
  std::vector<NamedSpec> c;
  c.push_back({"worked", worked_example()});
  c.push_back({"worked-reduced", ppp_to_spp(worked_example())});
  c.push_back({"swap", swap_chain()});
  c.push_back({"swap12", swap_chain(1.0, 2.0)});
  c.push_back({"lvp-identity", lvp(scaled_identity(3, 1), 1.0, 1.0)});
  c.push_back({"lvp-minus-identity", lvp(scaled_identity(3, -1), 0.0, 1.0)});
  c.push_back({"lvp-ones", lvp(all_ones(3), 2.0, 0.5)});
  c.push_back({"mixed-spp", mixed_spp()});
  for (int i = 0; i < 3; ++i) {
    auto p = random_ppp(rng, 3 + i, 8);
    c.push_back({"random-ppp-" + std::to_string(i), p});
    c.push_back({"random-ppp-reduced-" + std::to_string(i), ppp_to_spp(p)});
  }
  for (int i = 0; i < 3; ++i)
    c.push_back({"random-mpp-" + std::to_string(i), random_irreducible_mpp(rng, 3 + i)});
  for (int i = 0; i < 3; ++i) c.push_back({"random-lvp-" + std::to_string(i), random_lvp(rng, 3 + i)});
  return c;
}

}  // namespace popdyn::testing
