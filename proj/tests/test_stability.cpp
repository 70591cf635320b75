#include <gtest/gtest.h>

#include <algorithm>
#include <complex>
#include <sstream>

#include "corpus.hpp"

using namespace popdyn;
using namespace popdyn::testing;
using Cplx = std::complex<double>;

namespace {

bool contains_point(const FixedPointSearch& s, const Vector& x, double tol) {
  return std::any_of(s.points.begin(), s.points.end(),
                     [&](const FixedPoint& p) { return sup_distance(p.x, x) <= tol; });
}

// Point within sup distance r of x on the simplex.
Vector nearby(Rng& rng, std::span<const double> x, double r) {
  Vector y(x.begin(), x.end());
  for (auto& v : y) v = std::max(0.0, v + r * (2.0 * rng.uniform() - 1.0) / 2.0);
  const double s = sum(y);
  for (auto& v : y) v /= s;
  return y;
}

}  // namespace

TEST(FixedPoints, SwapChainHasBalancedPoint) {
  const auto s = find_fixed_points(swap_chain());
  ASSERT_EQ(s.points.size(), 1u);
  EXPECT_NEAR(s.points[0].x[0], 0.5, 1e-12);
  EXPECT_FALSE(s.points[0].boundary);
  EXPECT_FALSE(s.continuum);
  const Matrix fd = reduced_jacobian(swap_chain(), s.points[0].x);
  EXPECT_NEAR(fd(0, 0), -2.0, 1e-6);
  EXPECT_EQ(*analytic_reduced_jacobian(swap_chain(), s.points[0].x), (Matrix{{-2.0}}));
}

TEST(FixedPoints, UnequalRatesShiftTheBalance) {
  const auto spec = swap_chain(1.0, 2.0);
  const auto s = find_fixed_points(spec);
  ASSERT_EQ(s.points.size(), 1u);
  EXPECT_NEAR(s.points[0].x[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(reduced_jacobian(spec, s.points[0].x)(0, 0), -3.0, 1e-6);
}

TEST(FixedPoints, WorkedExampleContainsVertices) {
  const auto s = find_fixed_points(worked_example());
  for (std::size_t v = 0; v < 3; ++v) {
    const auto vertex = DensityVector::vertex(3, v);
    EXPECT_TRUE(contains_point(s, Vector(vertex.begin(), vertex.end()), 1e-9)) << v;
  }
  for (const auto& p : s.points) EXPECT_LE(p.residual, kFixedPointResidual);
}

TEST(FixedPoints, UniformImmunityIsAContinuum) {
  EXPECT_TRUE(find_fixed_points(lvp(all_ones(3), 1.0, 1.0)).continuum);
}

TEST(FixedPoints, ResultsAreSortedDistinctAndResidualBounded) {
  for (const auto& [name, spec] : corpus()) {
    const auto s = find_fixed_points(spec);
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      EXPECT_LE(s.points[i].residual, kFixedPointResidual) << name;
      EXPECT_LE(sup_norm(rhs(spec, s.points[i].x)), kFixedPointResidual) << name;
      for (std::size_t j = 0; j < i; ++j)
        EXPECT_GT(sup_distance(s.points[i].x, s.points[j].x), kDedupRadius) << name;
      if (i > 0) {
        const auto& a = s.points[i - 1].x;
        const auto& b = s.points[i].x;
        EXPECT_TRUE(std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end())) << name;
      }
    }
  }
}

TEST(FixedPoints, MoreSeedsNeverLosePoints) {
  for (const auto& [name, spec] : corpus()) {
    const auto coarse = find_fixed_points(spec, 5);
    const auto fine = find_fixed_points(spec, 13);
    if (coarse.continuum || fine.continuum) continue;
    EXPECT_GT(fine.seeds, coarse.seeds);
    for (const auto& p : coarse.points)
      EXPECT_TRUE(contains_point(fine, Vector(p.x.begin(), p.x.end()), 1e-6)) << name;
  }
}

TEST(Jacobian, ZeroVelocityGivesZeroMatrix) {
  const auto spec = lvp(all_ones(4), 1.0, 1.0);
  Rng rng(41);
  const Matrix j = reduced_jacobian(spec, rng.simplex_point(4));
  EXPECT_LE(j.max_abs(), 1e-12);
}

TEST(Jacobian, AnalyticMatchesFiniteDifferences) {
  Rng rng(42);
  for (const auto& [name, spec] : corpus()) {
    for (int s = 0; s < 10; ++s) {
      const Vector x = rng.simplex_point(spec.k());
      const auto exact = analytic_reduced_jacobian(spec, x);
      if (!exact) continue;
      const Matrix fd = reduced_jacobian(spec, x);
      for (std::size_t i = 0; i < fd.rows(); ++i)
        for (std::size_t j = 0; j < fd.cols(); ++j)
          EXPECT_NEAR((*exact)(i, j), fd(i, j), 1e-6) << name;
    }
  }
}

TEST(Jacobian, AmbientSpectrumIsReducedSpectrumPlusZero) {
  // Holds when the velocity field sums to zero on all of R^k, as it does for
  // pairwise protocols and Markov chains.
  Rng rng(43);
  for (const auto& [name, spec] : corpus()) {
    if (spec.kind() != Kind::Ppp && spec.kind() != Kind::Mpp) continue;
    const Vector x = rng.simplex_point(spec.k());
    auto ambient = eigenvalues(*analytic_jacobian(spec, x));
    const auto reduced = eigenvalues(*analytic_reduced_jacobian(spec, x));
    for (const auto& r : reduced) {
      auto it = std::min_element(ambient.begin(), ambient.end(),
                                 [&](Cplx a, Cplx b) { return std::abs(a - r) < std::abs(b - r); });
      EXPECT_LE(std::abs(*it - r), 1e-6) << name;
      ambient.erase(it);
    }
    ASSERT_EQ(ambient.size(), 1u);
    EXPECT_LE(std::abs(ambient[0]), 1e-6) << name;
  }
}

TEST(Classify, Examples) {
  const std::vector<Cplx> stable{{-1, 0}, {-2, 0}};
  const std::vector<Cplx> unstable{{-1, 0}, {0.5, 0}};
  const std::vector<Cplx> centre{{0, 1}, {0, -1}};
  const std::vector<Cplx> marginal{{-1e-8, 0}, {-1, 0}};
  EXPECT_EQ(classify(stable).name(), "stable");
  EXPECT_EQ(classify(unstable).name(), "unstable");
  EXPECT_EQ(classify(centre).name(), "undecided");
  EXPECT_EQ(classify(marginal).name(), "undecided");
  EXPECT_EQ(classify(std::vector<Cplx>{{-0.5, 3}, {-0.5, -3}}).name(), "stable");
}

TEST(Classify, InvariantUnderPermutationAndConjugation) {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Cplx> e;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      const double re = rng.below(4) == 0 ? 0.0 : 2.0 * rng.uniform() - 1.6;
      e.emplace_back(re, rng.uniform());
    }
    const auto base = classify(e).name();
    auto shuffled = e;
    for (std::size_t i = n; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    EXPECT_EQ(classify(shuffled).name(), base);
    for (auto& v : shuffled) v = std::conj(v);
    EXPECT_EQ(classify(shuffled).name(), base);
  }
}

TEST(Classify, UnstableDirectionIsTangent) {
  const auto v = classify_jacobian(Matrix{{1.0, 0.0}, {0.0, -1.0}});
  ASSERT_TRUE(v.unstable());
  const auto& dir = std::get<Unstable>(v.outcome).direction;
  ASSERT_EQ(dir.size(), 3u);
  EXPECT_NEAR(sum(dir), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(dir[0]), 1.0, 1e-8);
  EXPECT_NEAR(dir[1], 0.0, 1e-8);
}

TEST(Stability, StablePointsAttractNearbyStarts) {
  Rng rng(45);
  IntegrateOptions opts;
  opts.t_end = 200.0;
  for (const auto& [name, spec] : corpus()) {
    const auto rep = analyze_stability(spec);
    if (rep.continuum) continue;
    for (const auto& e : rep.entries) {
      if (!e.verdict.stable()) continue;
      for (int s = 0; s < 20; ++s) {
        const DensityVector x0(nearby(rng, e.point.x, 1e-2));
        const auto end = integrate(spec, x0, opts).final_point();
        EXPECT_LE(sup_distance(end, e.point.x), 1e-4) << name;
      }
    }
  }
}

TEST(Stability, ViralExamples) {
  const auto attract = analyze_stability(lvp(scaled_identity(3, -1), 0.0, 1.0));
  const auto repel = analyze_stability(lvp(scaled_identity(3, 1), 1.0, 1.0));
  const Vector centre(3, 1.0 / 3.0);
  auto verdict_at = [&](const StabilityReport& r) -> std::string {
    for (const auto& e : r.entries)
      if (sup_distance(e.point.x, centre) < 1e-9) return std::string(e.verdict.name());
    return "missing";
  };
  EXPECT_EQ(verdict_at(attract), "stable");
  EXPECT_EQ(verdict_at(repel), "unstable");
}

TEST(StabilityCsv, HeaderAndRows) {
  std::ostringstream os;
  write_stability_csv(os, StateSet::numbered(2), analyze_stability(swap_chain()));
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "q1,q2,residual,verdict,re_1,im_1");
  EXPECT_EQ(row.substr(0, 8), "0.5,0.5,");
  EXPECT_NE(row.find(",stable,-2"), std::string::npos);
}
