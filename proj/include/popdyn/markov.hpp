#pragma once

#include <cmath>

#include "popdyn/linalg.hpp"
#include "popdyn/protocol.hpp"

namespace popdyn {

/// Rates of a continuous-time Markov chain; rows sum to zero.
struct GeneratorMatrix {
  Matrix q;

  std::size_t size() const { return q.rows(); }
};

/// Chain with no unique stationary distribution.
class ReducibleChainError : public Error {
 public:
  using Error::Error;
};

/// q_ij = lambda_i p_ij (i != j), q_ii = lambda_i (p_ii - 1).
inline GeneratorMatrix build_generator(const ProtocolSpec& spec) {
  const auto& mpp = spec.as<MppKind>();
  const std::size_t k = spec.k();
  GeneratorMatrix g{Matrix(k, k)};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      g.q(i, j) = i == j ? mpp.rates[i] * (mpp.p(i, i) - 1.0) : mpp.rates[i] * mpp.p(i, j);
  return g;
}

/// Strong connectivity of the graph with an edge i -> j wherever q_ij > 0.
inline bool check_irreducible(const GeneratorMatrix& g) {
  return detail::strongly_connected(g.q);
}

/// Unique x with x^T Q = 0 and sum x = 1, by dense LU of Q^T with the last
/// balance equation replaced by the normalization row.
inline DensityVector stationary_distribution(const GeneratorMatrix& g) {
  const std::size_t k = g.size();
  if (!check_irreducible(g))
    throw ReducibleChainError("stationary_distribution: chain is reducible");
  if (k == 1) return DensityVector(Vector{1.0});
  Matrix a = g.q.transposed();
  for (std::size_t j = 0; j < k; ++j) a(k - 1, j) = 1.0;
  Vector b(k, 0.0);
  b[k - 1] = 1.0;
  const LuDecomposition lu(std::move(a));
  if (lu.singular()) throw NumericalError("stationary_distribution: singular balance system");
  Vector x = lu.solve(b);
  for (double& v : x) {
    if (v < 0.0) {
      if (v < -1e-12) throw NumericalError("stationary_distribution: negative component");
      v = 0.0;
    }
  }
  const double s = sum(x);
  for (double& v : x) v /= s;
  return DensityVector(std::move(x));
}

/// ||x^T Q||_inf
inline double stationary_residual(const GeneratorMatrix& g, std::span<const double> x) {
  return sup_norm(g.q.transposed() * x);
}

}  // namespace popdyn
