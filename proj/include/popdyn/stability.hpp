#pragma once

#include <algorithm>
#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "popdyn/dynamics.hpp"
#include "popdyn/linalg.hpp"

namespace popdyn {

// Stability is decided on the system restricted to the simplex: x_k is
// eliminated as 1 - sum_{i<k} x_i, which removes the structural zero
// eigenvalue that conservation forces on the ambient Jacobian.

struct FixedPoint {
  DensityVector x;
  double residual = 0.0;  // sup norm of the RHS at x
  bool boundary = false;  // some x_i < 1e-9
};

struct FixedPointSearch {
  std::vector<FixedPoint> points;
  std::size_t seeds = 0;
  bool continuum = false;  // more than 3k distinct points survived deduplication
};

inline constexpr double kFixedPointResidual = 1e-10;
inline constexpr double kDedupRadius = 1e-7;
inline constexpr double kJacobianStep = 1e-6;
inline constexpr double kHyperbolicTol = 1e-7;

namespace detail {

inline Vector lift(std::span<const double> y) {
  Vector x(y.begin(), y.end());
  x.push_back(1.0 - sum(y));
  return x;
}

inline Vector reduced_rhs(const RhsFn& f, std::span<const double> y) {
  Vector v = f(lift(y));
  v.pop_back();
  return v;
}

// All compositions of `total` into k nonnegative parts.
inline void grid_points(std::size_t k, std::size_t total, std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> cur(k, 0);
  auto rec = [&](auto&& self, std::size_t idx, std::size_t left) -> void {
    if (idx + 1 == k) {
      cur[idx] = left;
      out.push_back(cur);
      return;
    }
    for (std::size_t v = 0; v <= left; ++v) {
      cur[idx] = v;
      self(self, idx + 1, left - v);
    }
  };
  rec(rec, 0, total);
}

inline Matrix fd_reduced_jacobian(const RhsFn& f, std::span<const double> x, double h,
                                  double inflation) {
  const std::size_t n = x.size() - 1;
  Matrix jac(n, n);
  Vector y(x.begin(), x.end() - 1);
  for (std::size_t j = 0; j < n; ++j) {
    Vector yp = y, ym = y;
    yp[j] += h;
    ym[j] -= h;
    const Vector xp = lift(yp), xm = lift(ym);
    for (const auto* pt : {&xp, &xm})
      if (*std::min_element(pt->begin(), pt->end()) < -inflation)
        throw DomainError("reduced_jacobian: evaluation point leaves the inflated simplex");
    const Vector fp = f(xp), fm = f(xm);
    for (std::size_t i = 0; i < n; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

}  // namespace detail

/// Central-difference Jacobian (step 1e-6) of the simplex-reduced system
/// f~(x_1..x_{k-1}) = f(x_1, ..., x_{k-1}, 1 - sum). Throws DomainError if a
/// stencil point falls more than 1e-3 outside the simplex.
inline Matrix reduced_jacobian(const ProtocolSpec& spec, std::span<const double> x) {
  if (x.size() != spec.k()) throw std::invalid_argument("reduced_jacobian: dimension mismatch");
  return detail::fd_reduced_jacobian(rhs_fn(spec), x, kJacobianStep, 1e-3);
}

/// Exact ambient k x k Jacobian for the polynomial kinds (PPP, MPP, LVP);
/// nullopt for general SPP specs.
inline std::optional<Matrix> analytic_jacobian(const ProtocolSpec& spec, std::span<const double> x) {
  const std::size_t k = spec.k();
  Matrix jac(k, k);
  switch (spec.kind()) {
    case Kind::Ppp:
      for (const auto& rule : spec.as<PppKind>().rules) {
        const auto [r, m] = rule.left;
        // d(x_r x_m)/dx_l
        auto add = [&](std::size_t i, double sign) {
          jac(i, r) += sign * x[m];
          jac(i, m) += sign * x[r];
        };
        add(rule.right.first, 1.0);
        add(rule.right.second, 1.0);
        add(r, -1.0);
        add(m, -1.0);
      }
      return jac;
    case Kind::Mpp: {
      const auto& mpp = spec.as<MppKind>();
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t l = 0; l < k; ++l) jac(i, l) = mpp.rates[l] * mpp.p(l, i);
        jac(i, i) -= mpp.rates[i];
      }
      return jac;
    }
    case Kind::Lvp: {
      const auto& lvp = spec.as<LvpKind>();
      const double tbar = mean_immunity(lvp.immunity, x);
      Vector t(k);
      for (std::size_t i = 0; i < k; ++i) t[i] = state_immunity(lvp.immunity, x, i);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t l = 0; l < k; ++l)
          jac(i, l) = lvp.delta * (static_cast<double>(lvp.immunity[i][l]) - 2.0 * t[l]) * x[i];
        jac(i, i) += lvp.delta * (t[i] - tbar);
      }
      return jac;
    }
    case Kind::Spp: break;
  }
  return std::nullopt;
}

/// Restriction of an ambient Jacobian to the simplex coordinates x_1..x_{k-1}.
inline Matrix reduce_jacobian(const Matrix& ambient) {
  const std::size_t n = ambient.rows() - 1;
  Matrix red(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) red(i, j) = ambient(i, j) - ambient(i, n);
  return red;
}

inline std::optional<Matrix> analytic_reduced_jacobian(const ProtocolSpec& spec,
                                                       std::span<const double> x) {
  auto amb = analytic_jacobian(spec, x);
  if (!amb) return std::nullopt;
  return reduce_jacobian(*amb);
}

// ---------------------------------------------------------------------------
// Fixed points
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<Vector> newton_from(const RhsFn& f, Vector y) {
  constexpr int kMaxIter = 60;
  constexpr double kInflate = 1e-6;
  const std::size_t n = y.size();
  auto residual = [&](std::span<const double> yy) { return sup_norm(f(lift(yy))); };
  // Iterate past the acceptance residual to polish the root; stop once a
  // step no longer helps.
  constexpr double kPolished = 1e-15;
  double res = residual(y);
  auto finish = [&]() -> std::optional<Vector> {
    if (res <= kFixedPointResidual) return lift(y);
    return std::nullopt;
  };
  for (int it = 0; it < kMaxIter; ++it) {
    if (res <= kPolished) break;
    const Matrix jac = fd_reduced_jacobian(f, lift(y), kJacobianStep, 1.0);
    const LuDecomposition lu(jac);
    if (lu.singular()) break;
    Vector rhs = reduced_rhs(f, y);
    for (double& v : rhs) v = -v;
    const Vector step = lu.solve(rhs);

    // Largest alpha <= 1 keeping y_i >= -eps and sum(y) <= 1 + eps.
    double alpha = 1.0;
    double ssum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (step[i] < 0.0) alpha = std::min(alpha, (y[i] + kInflate) / -step[i]);
      ssum += step[i];
      ysum += y[i];
    }
    if (ssum > 0.0) alpha = std::min(alpha, (1.0 + kInflate - ysum) / ssum);
    alpha = std::max(alpha, 0.0);

    bool improved = false;
    for (int halvings = 0; halvings < 40 && alpha > 0.0; ++halvings, alpha *= 0.5) {
      Vector trial = y;
      for (std::size_t i = 0; i < n; ++i) trial[i] += alpha * step[i];
      const double r = residual(trial);
      if (r < res) {
        y = std::move(trial);
        res = r;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return finish();
}

inline bool lex_less(const FixedPoint& a, const FixedPoint& b) {
  return std::lexicographical_compare(a.x.begin(), a.x.end(), b.x.begin(), b.x.end());
}

}  // namespace detail

/// Multistart damped Newton over a simplex grid.
///
/// Seeds are every grid point with denominator seeds_per_face - 1 (this
/// includes the vertices) plus the barycenter. Converged points with
/// residual <= 1e-10 are sorted lexicographically and merged within radius
/// 1e-7. Finds fixed points; does not promise to find all of them.
inline FixedPointSearch find_fixed_points(const ProtocolSpec& spec, std::size_t seeds_per_face = 13) {
  const std::size_t k = spec.k();
  const RhsFn f = rhs_fn(spec);
  FixedPointSearch out;
  if (k == 1) {
    const Vector x{1.0};
    const double r = sup_norm(f(x));
    out.seeds = 1;
    if (r <= kFixedPointResidual) out.points.push_back({DensityVector(x), r, false});
    return out;
  }
  if (seeds_per_face < 2) seeds_per_face = 2;
  const std::size_t total = seeds_per_face - 1;
  std::vector<std::vector<std::size_t>> grid;
  detail::grid_points(k, total, grid);

  std::vector<Vector> seeds;
  seeds.reserve(grid.size() + 1);
  for (const auto& g : grid) {
    Vector s(k);
    for (std::size_t i = 0; i < k; ++i) s[i] = static_cast<double>(g[i]) / static_cast<double>(total);
    seeds.push_back(std::move(s));
  }
  seeds.push_back(Vector(k, 1.0 / static_cast<double>(k)));
  out.seeds = seeds.size();

  std::vector<FixedPoint> found;
  for (const auto& seed : seeds) {
    auto sol = detail::newton_from(f, Vector(seed.begin(), seed.end() - 1));
    if (!sol) continue;
    Vector x = *sol;
    double s = 0.0;
    for (double& v : x) s += (v = std::max(v, 0.0));
    for (double& v : x) v /= s;
    double r = sup_norm(f(x));
    if (!(r <= kFixedPointResidual)) continue;
    // Snap roundoff-level components onto the face they belong to.
    Vector snapped = x;
    s = 0.0;
    for (double& v : snapped) s += (v = v < 1e-13 ? 0.0 : v);
    for (double& v : snapped) v /= s;
    if (const double rs = sup_norm(f(snapped)); rs <= kFixedPointResidual) {
      x = std::move(snapped);
      r = rs;
    }
    const bool boundary = *std::min_element(x.begin(), x.end()) < kSimplexTol;
    found.push_back({DensityVector(std::move(x)), r, boundary});
  }

  std::stable_sort(found.begin(), found.end(), detail::lex_less);
  for (auto& fp : found) {
    const bool dup = std::any_of(out.points.begin(), out.points.end(), [&](const FixedPoint& q) {
      return sup_distance(q.x, fp.x) <= kDedupRadius;
    });
    if (!dup) out.points.push_back(std::move(fp));
  }
  out.continuum = out.points.size() > 3 * k;
  return out;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct AsymptoticallyStable {};
struct Unstable {
  // Ambient tangent direction (components sum to zero) of the eigenvector
  // for the eigenvalue with the largest real part; real part if complex.
  Vector direction;
};
struct NonHyperbolicUndecided {};

struct StabilityVerdict {
  std::variant<AsymptoticallyStable, Unstable, NonHyperbolicUndecided> outcome;
  std::vector<std::complex<double>> eigenvalues;

  bool stable() const { return std::holds_alternative<AsymptoticallyStable>(outcome); }
  bool unstable() const { return std::holds_alternative<Unstable>(outcome); }
  bool undecided() const { return std::holds_alternative<NonHyperbolicUndecided>(outcome); }

  std::string_view name() const {
    return stable() ? "stable" : unstable() ? "unstable" : "undecided";
  }
};

/// Hyperbolicity test with margin eps: every Re < -eps is stable, any
/// Re > eps is unstable, anything else is left undecided.
inline StabilityVerdict classify(std::span<const std::complex<double>> eigs,
                                 double eps = kHyperbolicTol) {
  StabilityVerdict v;
  v.eigenvalues.assign(eigs.begin(), eigs.end());
  const bool any_positive =
      std::any_of(eigs.begin(), eigs.end(), [&](auto e) { return e.real() > eps; });
  const bool all_negative =
      std::all_of(eigs.begin(), eigs.end(), [&](auto e) { return e.real() < -eps; });
  if (any_positive) v.outcome = Unstable{};
  else if (all_negative) v.outcome = AsymptoticallyStable{};
  else v.outcome = NonHyperbolicUndecided{};
  return v;
}

namespace detail {

using Cplx = std::complex<double>;

// Inverse iteration for an eigenvector of m near eigenvalue phi.
inline std::vector<Cplx> eigenvector(const Matrix& m, Cplx phi) {
  const std::size_t n = m.rows();
  const double scale = std::max(m.max_abs(), 1.0);
  const Cplx shift = phi + Cplx(1e-10 * scale, 1e-10 * scale);
  std::vector<std::vector<Cplx>> a(n, std::vector<Cplx>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = m(i, j) - (i == j ? shift : Cplx(0.0));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    std::swap(perm[p], perm[c]);
    if (std::abs(a[c][c]) == 0.0) a[c][c] = 1e-300;
    for (std::size_t r = c + 1; r < n; ++r) {
      const Cplx f = a[r][c] / a[c][c];
      a[r][c] = f;
      for (std::size_t j = c + 1; j < n; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<Cplx> v(n, Cplx(1.0));
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::vector<Cplx> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = v[perm[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) b[i] -= a[i][j] * b[j];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) b[i] -= a[i][j] * b[j];
      b[i] /= a[i][i];
    }
    double nrm = 0.0;
    for (auto e : b) nrm += std::norm(e);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) v[i] = b[i] / nrm;
  }
  return v;
}

}  // namespace detail

/// Verdict for a reduced Jacobian; fills the unstable direction.
inline StabilityVerdict classify_jacobian(const Matrix& reduced, double eps = kHyperbolicTol) {
  if (reduced.rows() == 0) return classify({}, eps);
  const auto eigs = eigenvalues(reduced);
  StabilityVerdict v = classify(eigs, eps);
  if (v.unstable()) {
    const auto lead = *std::max_element(eigs.begin(), eigs.end(),
                                        [](auto a, auto b) { return a.real() < b.real(); });
    const auto vec = detail::eigenvector(reduced, lead);
    // Rotate so the largest component is real, then take real parts.
    std::size_t big = 0;
    for (std::size_t i = 1; i < vec.size(); ++i)
      if (std::abs(vec[i]) > std::abs(vec[big])) big = i;
    const auto phase = std::conj(vec[big]) / std::abs(vec[big]);
    Vector dir;
    double s = 0.0;
    for (auto c : vec) {
      dir.push_back((c * phase).real());
      s += dir.back();
    }
    dir.push_back(-s);
    std::get<Unstable>(v.outcome).direction = std::move(dir);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct StabilityEntry {
  FixedPoint point;
  StabilityVerdict verdict;
};

struct StabilityReport {
  std::vector<StabilityEntry> entries;
  bool continuum = false;
};

inline StabilityReport analyze_stability(const ProtocolSpec& spec, std::size_t seeds_per_face = 13) {
  const auto search = find_fixed_points(spec, seeds_per_face);
  StabilityReport rep;
  rep.continuum = search.continuum;
  for (const auto& fp : search.points) {
    auto jac = analytic_reduced_jacobian(spec, fp.x);
    if (!jac) jac = reduced_jacobian(spec, fp.x);
    rep.entries.push_back({fp, classify_jacobian(*jac)});
  }
  return rep;
}

/// CSV rows `<state densities>,residual,verdict,re_1,im_1,...`.
inline void write_stability_csv(std::ostream& os, const StateSet& states,
                                const StabilityReport& rep) {
  for (const auto& n : states.names()) os << n << ',';
  os << "residual,verdict";
  for (std::size_t i = 1; i < states.size(); ++i) os << ",re_" << i << ",im_" << i;
  os << '\n';
  if (rep.continuum) os << "# continuum of fixed points: only a sample is listed\n";
  for (const auto& e : rep.entries) {
    os << format_csv(e.point.x) << ',' << format_number(e.point.residual) << ','
       << e.verdict.name();
    for (auto ev : e.verdict.eigenvalues)
      os << ',' << format_number(ev.real()) << ',' << format_number(ev.imag());
    os << '\n';
  }
}

}  // namespace popdyn
