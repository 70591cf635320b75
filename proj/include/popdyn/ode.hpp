#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popdyn/core.hpp"

namespace popdyn {

/// Time-stamped states of an integration.
struct Trajectory {
  Vector times;
  std::vector<Vector> points;
  // Scaled local-error estimate of the last accepted step (<= 1 when accepted).
  double final_error_estimate = 0.0;
  // Smallest component seen before renormalization, and largest |sum - 1|.
  double min_raw_component = 0.0;
  double max_raw_sum_drift = 0.0;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;

  const Vector& final_point() const { return points.back(); }
  double final_time() const { return times.back(); }
};

struct IntegrateOptions {
  double t_end = 1.0;
  double dt_init = 1e-2;
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  bool renormalize_each_step = true;
  // When positive, points are emitted exactly on the grid 0, dt, 2dt, ...
  // (steps are clipped to land on it). Otherwise every accepted step is emitted.
  double sample_dt = 0.0;
};

/// Integration gave up because the step size collapsed.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, Trajectory partial)
      : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

using RhsFn = std::function<Vector(std::span<const double>)>;

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DoPri {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) from t = 0 to
/// opts.t_end. When opts.renormalize_each_step is set the state is treated as
/// a density vector and projected back onto the simplex after every step.
inline Trajectory integrate_ode(const RhsFn& f, Vector y0, const IntegrateOptions& opts) {
  using T = detail::DoPri;
  if (!(opts.t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
  if (!(opts.rel_tol > 0.0 && opts.abs_tol > 0.0))
    throw std::invalid_argument("integrate: tolerances must be positive");
  if (!(opts.dt_init > 0.0 && opts.dt_init <= opts.t_end))
    throw std::invalid_argument("integrate: dt_init must lie in (0, t_end]");

  const std::size_t n = y0.size();
  Trajectory traj;
  Vector y = opts.renormalize_each_step ? renormalize(y0) : std::move(y0);
  traj.times.push_back(0.0);
  traj.points.push_back(y);
  traj.min_raw_component = *std::min_element(y.begin(), y.end());

  const double dt_min = 1e-14 * opts.t_end;
  double t = 0.0;
  double h = opts.dt_init;
  std::size_t next_sample = 1;
  auto sample_time = [&](std::size_t i) {
    const double ti = static_cast<double>(i) * opts.sample_dt;
    return opts.t_end - ti <= 1e-9 * opts.sample_dt ? opts.t_end : ti;
  };

  Vector k1 = f(y), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
  while (t < opts.t_end) {
    double target = opts.t_end;
    if (opts.sample_dt > 0.0) target = sample_time(next_sample);
    bool clipped = false;
    const double h_proposed = h;
    if (t + h >= target) {
      h = target - t;
      clipped = true;
    }
    if (h < dt_min && !clipped) {
      throw StiffnessError("integrate: step size underflow at t = " + format_number(t),
                           std::move(traj));
    }

    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * T::a21 * k1[i];
    k2 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
    k3 = f(tmp);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
    k4 = f(tmp);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
    k5 = f(tmp);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] +
                           T::a65 * k5[i]);
    k6 = f(tmp);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + h * (T::b1 * k1[i] + T::b3 * k3[i] + T::b4 * k4[i] + T::b5 * k5[i] +
                            T::b6 * k6[i]);
    k7 = f(ynew);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] +
                            T::e6 * k6[i] + T::e7 * k7[i]);
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      t = clipped ? target : t + h;
      ++traj.accepted_steps;
      traj.final_error_estimate = err;
      if (opts.renormalize_each_step) {
        traj.min_raw_component =
            std::min(traj.min_raw_component, *std::min_element(ynew.begin(), ynew.end()));
        traj.max_raw_sum_drift = std::max(traj.max_raw_sum_drift, std::abs(sum(ynew) - 1.0));
        y = renormalize(ynew);
        k1 = f(y);
      } else {
        y = ynew;
        k1 = k7;
      }
      const bool on_grid = opts.sample_dt <= 0.0 || clipped;
      if (on_grid) {
        traj.times.push_back(t);
        traj.points.push_back(y);
        if (opts.sample_dt > 0.0) ++next_sample;
      }
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      // A clipped step says nothing about the natural step size.
      if (!clipped) h *= fac;
      else h = std::max(h * fac, h_proposed);
    } else {
      ++traj.rejected_steps;
      h *= std::max(0.9 * std::pow(err, -0.2), 0.1);
    }
  }
  return traj;
}

/// Classical fixed-step RK4, used to cross-check the adaptive integrator.
inline Trajectory integrate_rk4(const RhsFn& f, Vector y0, double t_end, double dt,
                                bool renormalize_each_step = true) {
  if (!(dt > 0.0 && t_end > 0.0)) throw std::invalid_argument("integrate_rk4: bad step");
  const std::size_t n = y0.size();
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  const double h = t_end / static_cast<double>(steps);
  Trajectory traj;
  Vector y = renormalize_each_step ? renormalize(y0) : std::move(y0);
  traj.times.push_back(0.0);
  traj.points.push_back(y);
  Vector tmp(n);
  for (std::size_t s = 1; s <= steps; ++s) {
    const Vector k1 = f(y);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    const Vector k2 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    const Vector k3 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    const Vector k4 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    if (renormalize_each_step) y = renormalize(y);
    traj.times.push_back(static_cast<double>(s) * h);
    traj.points.push_back(y);
    ++traj.accepted_steps;
  }
  return traj;
}

}  // namespace popdyn
