#pragma once

#include <vector>

#include "popdyn/protocol.hpp"

namespace popdyn {

/// Per-state inflow pairs and outflow partners of a pairwise rule set.
///
/// inflow_pairs[i] holds the left pairs (r, m) of rules whose right side
/// contains state i; outflow_partners[i] holds, for every rule with i in a
/// left slot, the partner state in the other slot.
struct RuleIncidence {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> inflow_pairs;
  std::vector<std::vector<std::size_t>> outflow_partners;

  static RuleIncidence of(std::size_t k, const PppKind& ppp) {
    RuleIncidence inc;
    inc.inflow_pairs.resize(k);
    inc.outflow_partners.resize(k);
    for (const auto& rule : ppp.rules) {
      const auto [r, m] = rule.left;
      const auto [r2, m2] = rule.right;
      inc.inflow_pairs[r2].push_back(rule.left);
      if (m2 != r2) inc.inflow_pairs[m2].push_back(rule.left);
      inc.outflow_partners[r].push_back(m);
      inc.outflow_partners[m].push_back(r);
    }
    return inc;
  }

  friend bool operator==(const RuleIncidence&, const RuleIncidence&) = default;
};

/// Mean-field velocity of a pairwise-encounter protocol:
///   dx_i/dt = sum_{(r,m) in A_i} x_r x_m - x_i sum_{m in B_i} x_m
inline Vector ppp_rhs(const ProtocolSpec& spec, std::span<const double> x) {
  const auto inc = RuleIncidence::of(spec.k(), spec.as<PppKind>());
  Vector v(spec.k(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double in = 0.0, out = 0.0;
    for (const auto& [r, m] : inc.inflow_pairs[i]) in += x[r] * x[m];
    for (std::size_t m : inc.outflow_partners[i]) out += x[m];
    v[i] = in - x[i] * out;
  }
  return v;
}

/// Rewrites a pairwise protocol as a switching protocol with the same
/// mean-field dynamics.
///
/// lambda_i is the summed density of partners over rules that have i in a
/// left slot. Each rule (r, m) -> (r', m') adds x_m to the r -> r' channel
/// and x_r to the m -> m' channel, so p_ij = N_ij / lambda_i and every switch
/// row sums to one wherever lambda_i > 0.
inline ProtocolSpec ppp_to_spp(const ProtocolSpec& spec) {
  const auto& ppp = spec.as<PppKind>();
  const std::size_t k = spec.k();
  std::vector<Affine> lambda(k, Affine{0.0, Vector(k, 0.0)});
  std::vector<std::vector<Affine>> numer(k, std::vector<Affine>(k, Affine{0.0, Vector(k, 0.0)}));
  for (const auto& rule : ppp.rules) {
    const auto [r, m] = rule.left;
    const auto [r2, m2] = rule.right;
    lambda[r].coeffs[m] += 1.0;
    lambda[m].coeffs[r] += 1.0;
    numer[r][r2].coeffs[m] += 1.0;
    numer[m][m2].coeffs[r] += 1.0;
  }
  SppKind out;
  for (std::size_t i = 0; i < k; ++i) {
    out.rates.push_back(AffineRate{lambda[i]});
    std::vector<SwitchExpr> row;
    for (std::size_t j = 0; j < k; ++j) {
      const bool empty = std::all_of(numer[i][j].coeffs.begin(), numer[i][j].coeffs.end(),
                                     [](double c) { return c == 0.0; });
      if (empty) row.push_back(ConstantSwitch{0.0});
      else row.push_back(RatioSwitch{numer[i][j], lambda[i]});
    }
    out.p.push_back(std::move(row));
  }
  return ProtocolSpec{spec.states, std::move(out)};
}

}  // namespace popdyn
