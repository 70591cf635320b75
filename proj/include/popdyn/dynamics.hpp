#pragma once

#include <ostream>
#include <span>
#include <string>

#include "popdyn/ode.hpp"
#include "popdyn/protocol.hpp"
#include "popdyn/reduction.hpp"
#include "popdyn/viral.hpp"

namespace popdyn {

/// Generic mean-field velocity of a switching protocol:
///   dx_i/dt = sum_j x_j p_ji(x) lambda_j(x) - lambda_i(x) x_i
/// Accepts points slightly off the simplex (finite differences, RK stages).
inline Vector eq1_rhs(const SppKind& spp, std::span<const double> x) {
  const std::size_t k = x.size();
  Vector lambda(k);
  for (std::size_t j = 0; j < k; ++j) lambda[j] = rate_value(spp.rates[j], x);
  Vector v(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double out = x[j] * lambda[j];
    if (out == 0.0) continue;
    for (std::size_t i = 0; i < k; ++i) v[i] += out * switch_value(spp.p[j][i], i, x);
    v[j] -= out;
  }
  return v;
}

inline Vector eq1_rhs(const ProtocolSpec& spec, std::span<const double> x) {
  return eq1_rhs(as_spp(spec), x);
}

/// Markov forward equation with constant rates.
inline Vector mpp_rhs(const ProtocolSpec& spec, std::span<const double> x) {
  const auto& mpp = spec.as<MppKind>();
  const std::size_t k = spec.k();
  Vector v(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    double in = 0.0;
    for (std::size_t j = 0; j < k; ++j) in += x[j] * mpp.rates[j] * mpp.p(j, i);
    v[i] = in - mpp.rates[i] * x[i];
  }
  return v;
}

/// Mean-field velocity of any switching-kind spec (SPP, MPP, LVP). MPP and
/// LVP use their closed forms.
inline Vector spp_rhs(const ProtocolSpec& spec, std::span<const double> x) {
  switch (spec.kind()) {
    case Kind::Mpp: return mpp_rhs(spec, x);
    case Kind::Lvp: return lvp_rhs(spec, x);
    case Kind::Spp: return eq1_rhs(spec.as<SppKind>(), x);
    case Kind::Ppp: break;
  }
  throw KindError("spp_rhs: PPP specs need ppp_rhs or ppp_to_spp");
}

/// Mean-field velocity of any spec.
inline Vector rhs(const ProtocolSpec& spec, std::span<const double> x) {
  if (spec.kind() == Kind::Ppp) return ppp_rhs(spec, x);
  return spp_rhs(spec, x);
}

inline RhsFn rhs_fn(const ProtocolSpec& spec) {
  return [spec](std::span<const double> x) { return rhs(spec, x); };
}

/// Integrates the mean-field ODE from x0 with adaptive Dormand-Prince.
inline Trajectory integrate(const ProtocolSpec& spec, const DensityVector& x0,
                            const IntegrateOptions& opts) {
  if (x0.size() != spec.k()) throw std::invalid_argument("integrate: dimension mismatch");
  return integrate_ode(rhs_fn(spec), x0.values(), opts);
}

inline Trajectory integrate_rk4(const ProtocolSpec& spec, const DensityVector& x0, double t_end,
                                double dt) {
  return integrate_rk4(rhs_fn(spec), x0.values(), t_end, dt, true);
}

/// CSV with header `t,<state names>`.
inline void write_trajectory_csv(std::ostream& os, const StateSet& states,
                                 const Trajectory& traj) {
  os << 't';
  for (const auto& n : states.names()) os << ',' << n;
  os << '\n';
  for (std::size_t s = 0; s < traj.times.size(); ++s)
    os << format_number(traj.times[s]) << ',' << format_csv(traj.points[s]) << '\n';
}

}  // namespace popdyn
