#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "popdyn/core.hpp"
#include "popdyn/protocol.hpp"

namespace popdyn {

// Finite-population simulation of both protocol semantics.
//
// Pairwise protocols: encounters arrive as a Poisson stream of aggregate
// rate n, so each agent takes part in about two encounters per unit time and
// the density process converges to the mean-field ODE without rescaling
// time. Each encounter is a uniformly random ordered pair of distinct agents.
//
// Switching protocols: exact Gillespie simulation of the per-agent review
// clocks, with rates recomputed from the empirical densities at every event.

class PopulationError : public Error {
 public:
  using Error::Error;
};

// Switch row that is not a probability distribution at a reviewing state.
class SemanticsError : public Error {
 public:
  using Error::Error;
};

struct PopulationCounts {
  std::vector<std::uint64_t> counts;

  std::uint64_t n() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  Vector densities() const {
    const double total = static_cast<double>(n());
    Vector x(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) x[i] = static_cast<double>(counts[i]) / total;
    return x;
  }

  /// Largest-remainder rounding of n * x.
  static PopulationCounts from_densities(std::span<const double> x, std::uint64_t n) {
    PopulationCounts pc;
    pc.counts.resize(x.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double target = std::max(x[i], 0.0) * static_cast<double>(n);
      pc.counts[i] = static_cast<std::uint64_t>(std::floor(target));
      assigned += pc.counts[i];
      rem.emplace_back(target - std::floor(target), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n && r < rem.size(); ++r, ++assigned) ++pc.counts[rem[r].second];
    return pc;
  }
};

struct EmpiricalTrajectory {
  Vector times;
  std::vector<Vector> densities;
  std::uint64_t seed = 0;
  std::uint64_t n = 0;
  std::uint64_t events = 0;
  std::uint64_t noop_events = 0;  // encounters with no matching rule / self-switches
};

namespace detail {

// Sample times 0, dt, 2dt, ..., t_end; same grid as the sampled ODE integrator.
class SampleGrid {
 public:
  SampleGrid(double t_end, double dt) : t_end_(t_end), dt_(dt) {
    if (!(dt > 0.0 && t_end > 0.0)) throw std::invalid_argument("simulate: bad time grid");
  }

  bool done() const { return done_; }
  double next() const {
    const double ti = static_cast<double>(i_) * dt_;
    return t_end_ - ti <= 1e-9 * dt_ ? t_end_ : ti;
  }

  template <typename F>
  void record_before(double until, F&& emit) {
    while (!done_ && next() < until) {
      const double t = next();
      emit(t);
      if (t >= t_end_) done_ = true;
      ++i_;
    }
  }

 private:
  double t_end_, dt_;
  std::size_t i_ = 0;
  bool done_ = false;
};

inline std::size_t pick_state(const std::vector<std::uint64_t>& counts, std::uint64_t u) {
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (u < counts[i]) return i;
    u -= counts[i];
  }
  return counts.size() - 1;
}

inline void check_counts(const ProtocolSpec& spec, const PopulationCounts& c0) {
  if (c0.counts.size() != spec.k())
    throw std::invalid_argument("simulate: counts do not match the state count");
  if (c0.n() < 2) throw PopulationError("simulate: population needs at least 2 agents");
}

}  // namespace detail

/// Random ordered-pair encounters. Deterministic in (seed, inputs).
inline EmpiricalTrajectory simulate_ppp(const ProtocolSpec& spec, const PopulationCounts& counts0,
                                        double t_end, double sample_dt, std::uint64_t seed) {
  const auto& ppp = spec.as<PppKind>();
  detail::check_counts(spec, counts0);
  const std::size_t k = spec.k();
  std::vector<std::optional<PppRule>> table(k * k);
  for (const auto& r : ppp.rules) table[r.left.first * k + r.left.second] = r;

  EmpiricalTrajectory out;
  out.seed = seed;
  out.n = counts0.n();
  auto counts = counts0.counts;
  const std::uint64_t n = out.n;
  const double rate = static_cast<double>(n);
  auto emit = [&](double t) {
    out.times.push_back(t);
    Vector x(k);
    for (std::size_t i = 0; i < k; ++i) x[i] = static_cast<double>(counts[i]) / rate;
    out.densities.push_back(std::move(x));
  };

  Rng rng(seed);
  detail::SampleGrid grid(t_end, sample_dt);
  double t = 0.0;
  while (!grid.done()) {
    const double t_next = t + rng.exponential(rate);
    grid.record_before(t_next, emit);
    if (grid.done()) break;
    t = t_next;
    const std::size_t a = detail::pick_state(counts, rng.below(n));
    --counts[a];
    const std::size_t b = detail::pick_state(counts, rng.below(n - 1));
    ++counts[a];
    ++out.events;
    const auto& rule = table[a * k + b];
    if (!rule) {
      ++out.noop_events;
      continue;
    }
    --counts[a];
    --counts[b];
    ++counts[rule->right.first];
    ++counts[rule->right.second];
  }
  return out;
}

/// Gillespie simulation of review events. Deterministic in (seed, inputs).
inline EmpiricalTrajectory simulate_spp(const ProtocolSpec& spec, const PopulationCounts& counts0,
                                        double t_end, double sample_dt, std::uint64_t seed) {
  if (spec.kind() == Kind::Ppp) throw KindError("simulate_spp: use simulate_ppp for PPP specs");
  detail::check_counts(spec, counts0);
  const SppKind spp = as_spp(spec);
  const std::size_t k = spec.k();

  EmpiricalTrajectory out;
  out.seed = seed;
  out.n = counts0.n();
  auto counts = counts0.counts;
  const double total_agents = static_cast<double>(out.n);
  Vector x(k), lambda(k), weight(k), row(k);
  auto refresh = [&] {
    for (std::size_t i = 0; i < k; ++i) x[i] = static_cast<double>(counts[i]) / total_agents;
  };
  auto emit = [&](double t) {
    out.times.push_back(t);
    out.densities.push_back(x);
  };

  Rng rng(seed);
  detail::SampleGrid grid(t_end, sample_dt);
  double t = 0.0;
  refresh();
  while (!grid.done()) {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      lambda[i] = rate_value(spp.rates[i], x);
      if (lambda[i] < -1e-12)
        throw EvaluationError("simulate_spp: negative rate for state " + spec.states.name(i));
      lambda[i] = std::max(lambda[i], 0.0);
      weight[i] = static_cast<double>(counts[i]) * lambda[i];
      total += weight[i];
    }
    if (total <= 0.0) {
      grid.record_before(std::numeric_limits<double>::infinity(), emit);
      break;
    }
    const double t_next = t + rng.exponential(total);
    grid.record_before(t_next, emit);
    if (grid.done()) break;
    t = t_next;

    double u = rng.uniform() * total;
    std::size_t i = 0;
    for (; i + 1 < k; ++i) {
      if (u < weight[i]) break;
      u -= weight[i];
    }
    while (weight[i] == 0.0 && i > 0) --i;  // guard against roundoff past the last weight

    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::max(switch_value(spp.p[i][j], j, x), 0.0);
      s += row[j];
    }
    if (!(std::abs(s - 1.0) <= 1e-9))
      throw SemanticsError("simulate_spp: switch row of state " + spec.states.name(i) +
                           " sums to " + format_number(s) + " at x = (" + format_csv(x) + ")");
    double v = rng.uniform() * s;
    std::size_t j = 0;
    for (; j + 1 < k; ++j) {
      if (v < row[j]) break;
      v -= row[j];
    }
    while (row[j] == 0.0 && j > 0) --j;

    ++out.events;
    if (j == i) {
      ++out.noop_events;
      continue;
    }
    --counts[i];
    ++counts[j];
    refresh();
  }
  return out;
}

inline EmpiricalTrajectory simulate(const ProtocolSpec& spec, const PopulationCounts& counts0,
                                    double t_end, double sample_dt, std::uint64_t seed) {
  return spec.kind() == Kind::Ppp ? simulate_ppp(spec, counts0, t_end, sample_dt, seed)
                                  : simulate_spp(spec, counts0, t_end, sample_dt, seed);
}

/// Trajectory CSV preceded by a `# n=...,seed=...` metadata line.
inline void write_empirical_csv(std::ostream& os, const StateSet& states,
                                const EmpiricalTrajectory& traj) {
  os << "# n=" << traj.n << ",seed=" << traj.seed << '\n';
  os << 't';
  for (const auto& name : states.names()) os << ',' << name;
  os << '\n';
  for (std::size_t s = 0; s < traj.times.size(); ++s)
    os << format_number(traj.times[s]) << ',' << format_csv(traj.densities[s]) << '\n';
}

}  // namespace popdyn
