#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "popdyn/dynamics.hpp"
#include "popdyn/io.hpp"
#include "popdyn/markov.hpp"
#include "popdyn/stability.hpp"
#include "popdyn/stochastic.hpp"
#include "popdyn/viral.hpp"

namespace popdyn::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kNumerical = 2;

namespace detail {

// Bad user input; maps to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Vector parse_csv_vector(const std::string& text, const std::string& what) {
  Vector v;
  std::size_t pos = 0;
  while (true) {
    const auto comma = text.find(',', pos);
    std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    double d;
    if (!parse_number(tok, d)) throw UsageError(what + ": '" + tok + "' is not a number");
    v.push_back(d);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return v;
}

inline DensityVector parse_density(const std::string& text, std::size_t k, const std::string& what) {
  Vector v = parse_csv_vector(text, what);
  if (v.size() != k)
    throw UsageError(what + ": expected " + std::to_string(k) + " components, got " +
                     std::to_string(v.size()));
  try {
    return DensityVector(std::move(v));
  } catch (const DomainError& e) {
    throw UsageError(what + ": " + e.what());
  }
}

inline void require_kind(const ProtocolSpec& spec, std::initializer_list<Kind> kinds,
                         std::string_view command, std::string_view hint) {
  for (Kind k : kinds)
    if (spec.kind() == k) return;
  std::string msg = std::string(command) + ": not applicable to " +
                    std::string(kind_name(spec.kind())) + " protocols";
  if (!hint.empty()) msg += " (" + std::string(hint) + ")";
  throw UsageError(msg);
}

}  // namespace detail

/// Runs one CLI invocation. Results go to `out` unless --out names a file;
/// diagnostics go to `err`. Returns 0 on success, 1 on invalid input or
/// validation failure, 2 on numerical failure.
inline int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field analysis of population protocols", "popdyn"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_path;
  app.add_option("--out", out_path, "Write results to this file instead of standard output");

  std::string file;
  std::string at, x0_text, star_text, pivot_name;
  double t_end = 1.0, sample_dt = 0.0, radius = 0.05, rel_tol = 1e-8;
  std::uint64_t n_agents = 1000, seed = 1;
  std::size_t samples = 2000, seeds_per_face = 13;

  auto with_file = [&](CLI::App* sub) {
    sub->add_option("file", file, "Protocol file")->required();
    return sub;
  };

  auto* validate_cmd = with_file(app.add_subcommand("validate", "Check a protocol file"));
  auto* reduce_cmd = with_file(app.add_subcommand("reduce", "Rewrite a ppp protocol as an spp protocol"));
  auto* rhs_cmd = with_file(app.add_subcommand("rhs", "Mean-field velocity at a point"));
  rhs_cmd->add_option("--at", at, "Density vector (comma separated)")->required();
  auto* integrate_cmd = with_file(app.add_subcommand("integrate", "Integrate the mean-field ODE"));
  integrate_cmd->add_option("--x0", x0_text, "Initial densities")->required();
  integrate_cmd->add_option("--t", t_end, "End time")->required();
  integrate_cmd->add_option("--dt", sample_dt, "Output grid spacing (default: every step)");
  integrate_cmd->add_option("--rtol", rel_tol, "Relative tolerance");
  auto* simulate_cmd = with_file(app.add_subcommand("simulate", "Finite-population simulation"));
  simulate_cmd->add_option("--n", n_agents, "Number of agents")->required();
  simulate_cmd->add_option("--t", t_end, "End time")->required();
  simulate_cmd->add_option("--seed", seed, "Random seed")->required();
  simulate_cmd->add_option("--dt", sample_dt, "Sampling interval (default t/100)");
  simulate_cmd->add_option("--x0", x0_text, "Initial densities (default uniform)");
  auto* fixed_cmd = with_file(app.add_subcommand("fixed-points", "Search for fixed points"));
  fixed_cmd->add_option("--seeds-per-face", seeds_per_face, "Grid resolution");
  auto* stability_cmd = with_file(app.add_subcommand("stability", "Fixed points with stability verdicts"));
  stability_cmd->add_option("--seeds-per-face", seeds_per_face, "Grid resolution");
  auto* stationary_cmd = with_file(app.add_subcommand("stationary", "Stationary distribution of an mpp protocol"));
  auto* entropy_cmd = app.add_subcommand("entropy", "Relative entropy E(x) with respect to x*");
  entropy_cmd->add_option("file", file, "Protocol file (optional)");
  entropy_cmd->add_option("--star", star_text, "Reference point x*")->required();
  entropy_cmd->add_option("--at", at, "Point x")->required();
  auto* lyapunov_cmd = with_file(app.add_subcommand("lyapunov", "Sampled entropy-descent certificate (lvp)"));
  lyapunov_cmd->add_option("--star", star_text, "Fixed point x*")->required();
  lyapunov_cmd->add_option("--radius", radius, "Ball radius");
  lyapunov_cmd->add_option("--samples", samples, "Number of samples");
  lyapunov_cmd->add_option("--seed", seed, "Random seed");
  auto* lvmap_cmd = with_file(app.add_subcommand("lv-map", "Lotka-Volterra form of an lvp protocol"));
  lvmap_cmd->add_option("--pivot", pivot_name, "State used as denominator (default: last)");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }

  std::ostringstream buf;
  try {
    auto load = [&] { return parse_protocol_file(detail::read_file(file)); };

    if (*validate_cmd) {
      const ProtocolSpec spec = parse_protocol_unchecked(detail::read_file(file));
      const auto rep = validate(spec);
      if (!rep.valid()) {
        err << rep.summary();
        return kInvalid;
      }
      buf << "valid: " << kind_name(spec.kind()) << ", " << spec.k() << " states";
      if (spec.is<PppKind>()) buf << ", " << spec.as<PppKind>().rules.size() << " rules";
      buf << '\n';
      for (const auto& w : rep.warnings) buf << "warning: " << w << '\n';
    } else if (*reduce_cmd) {
      const auto spec = load();
      detail::require_kind(spec, {Kind::Ppp}, "reduce", "only ppp protocols are reduced");
      buf << serialize_protocol(ppp_to_spp(spec));
    } else if (*rhs_cmd) {
      const auto spec = load();
      const auto x = detail::parse_density(at, spec.k(), "--at");
      buf << format_csv(rhs(spec, x)) << '\n';
    } else if (*integrate_cmd) {
      const auto spec = load();
      const auto x0 = detail::parse_density(x0_text, spec.k(), "--x0");
      if (!(t_end > 0.0)) throw detail::UsageError("--t must be positive");
      IntegrateOptions opts;
      opts.t_end = t_end;
      opts.dt_init = std::min(opts.dt_init, t_end);
      opts.rel_tol = rel_tol;
      opts.sample_dt = sample_dt;
      write_trajectory_csv(buf, spec.states, integrate(spec, x0, opts));
    } else if (*simulate_cmd) {
      const auto spec = load();
      const auto x0 = x0_text.empty() ? DensityVector::uniform(spec.k())
                                      : detail::parse_density(x0_text, spec.k(), "--x0");
      if (!(t_end > 0.0)) throw detail::UsageError("--t must be positive");
      const double dt = sample_dt > 0.0 ? sample_dt : t_end / 100.0;
      const auto counts = PopulationCounts::from_densities(x0, n_agents);
      write_empirical_csv(buf, spec.states, simulate(spec, counts, t_end, dt, seed));
    } else if (*fixed_cmd) {
      const auto spec = load();
      const auto search = find_fixed_points(spec, seeds_per_face);
      for (const auto& n : spec.states.names()) buf << n << ',';
      buf << "residual,boundary\n";
      if (search.continuum) buf << "# continuum of fixed points: only a sample is listed\n";
      for (const auto& fp : search.points)
        buf << format_csv(fp.x) << ',' << format_number(fp.residual) << ','
            << (fp.boundary ? 1 : 0) << '\n';
    } else if (*stability_cmd) {
      const auto spec = load();
      write_stability_csv(buf, spec.states, analyze_stability(spec, seeds_per_face));
    } else if (*stationary_cmd) {
      const auto spec = load();
      detail::require_kind(spec, {Kind::Mpp}, "stationary",
                           "stationary distributions are defined for mpp protocols only; "
                           "use `reduce` and `fixed-points` for other kinds");
      const auto g = build_generator(spec);
      if (!check_irreducible(g))
        throw detail::UsageError("stationary: chain is reducible; no unique stationary distribution");
      buf << format_csv(stationary_distribution(g)) << '\n';
    } else if (*entropy_cmd) {
      const std::size_t k = file.empty() ? detail::parse_csv_vector(star_text, "--star").size()
                                         : load().k();
      const auto s = detail::parse_density(star_text, k, "--star");
      const auto x = detail::parse_density(at, k, "--at");
      buf << format_number(relative_entropy(s, x)) << '\n';
    } else if (*lyapunov_cmd) {
      const auto spec = load();
      detail::require_kind(spec, {Kind::Lvp}, "lyapunov", "certificates apply to lvp protocols");
      const auto s = detail::parse_density(star_text, spec.k(), "--star");
      if (sup_norm(rhs(spec, s)) > 1e-9)
        throw detail::UsageError("lyapunov: --star is not a fixed point");
      buf << lyapunov_certificate(spec, s, radius, samples, seed).report();
    } else if (*lvmap_cmd) {
      const auto spec = load();
      detail::require_kind(spec, {Kind::Lvp}, "lv-map", "the Lotka-Volterra map applies to lvp protocols");
      std::size_t pivot = spec.k() - 1;
      if (!pivot_name.empty()) {
        auto idx = spec.states.index_of(pivot_name);
        if (!idx) throw detail::UsageError("lv-map: unknown state '" + pivot_name + "'");
        pivot = *idx;
      }
      const auto lv = to_lotka_volterra(spec, pivot);
      buf << "# y_i = x_i / x_" << spec.states.name(pivot) << ", dtau = x_"
          << spec.states.name(pivot) << " dt\n";
      buf << "state,r";
      for (auto s : lv.state_of) buf << ",B_" << spec.states.name(s);
      buf << '\n';
      for (std::size_t i = 0; i < lv.dim; ++i) {
        buf << spec.states.name(lv.state_of[i]) << ',' << format_number(lv.r[i]);
        for (std::size_t j = 0; j < lv.dim; ++j) buf << ',' << format_number(lv.b(i, j));
        buf << '\n';
      }
    }
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kInvalid;
  } catch (const detail::UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const KindError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const PopulationError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }

  if (out_path.empty()) {
    out << buf.str();
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) {
      err << "error: cannot write '" << out_path << "'\n";
      return kInvalid;
    }
    f << buf.str();
  }
  return kOk;
}

inline int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace popdyn::cli
