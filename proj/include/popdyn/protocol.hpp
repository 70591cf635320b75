#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "popdyn/core.hpp"
#include "popdyn/linalg.hpp"

namespace popdyn {

/// Ordered, distinct state names. Index i is the handle for state q_{i+1}.
class StateSet {
 public:
  StateSet() = default;
  explicit StateSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw std::invalid_argument("state set must be nonempty");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
      if (!seen.insert(n).second) throw std::invalid_argument("duplicate state name '" + n + "'");
  }

  /// States named q1..qk.
  static StateSet numbered(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= k; ++i) names.push_back("q" + std::to_string(i));
    return StateSet(std::move(names));
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  friend bool operator==(const StateSet&, const StateSet&) = default;

 private:
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Rate and switch expressions
// ---------------------------------------------------------------------------

/// c0 + sum_j coeffs[j] * x_j
struct Affine {
  double c0 = 0.0;
  Vector coeffs;

  double operator()(std::span<const double> x) const {
    double v = c0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) v += coeffs[j] * x[j];
    return v;
  }

  double min_on_simplex() const {
    return c0 + *std::min_element(coeffs.begin(), coeffs.end());
  }

  friend bool operator==(const Affine&, const Affine&) = default;
};

struct ConstantRate {
  double c = 0.0;
  friend bool operator==(const ConstantRate&, const ConstantRate&) = default;
};

struct AffineRate {
  Affine form;
  friend bool operator==(const AffineRate&, const AffineRate&) = default;
};

/// gamma - delta * sum_j row[j] * x_j
struct LinearImmunityRate {
  double gamma = 0.0;
  double delta = 1.0;
  std::vector<long> row;
  friend bool operator==(const LinearImmunityRate&, const LinearImmunityRate&) = default;
};

using RateExpr = std::variant<ConstantRate, AffineRate, LinearImmunityRate>;

struct ConstantSwitch {
  double p = 0.0;
  friend bool operator==(const ConstantSwitch&, const ConstantSwitch&) = default;
};

/// Adopt the state of a uniformly sampled agent: p_ij(x) = x_j.
struct PairingSwitch {
  friend bool operator==(const PairingSwitch&, const PairingSwitch&) = default;
};

/// numer(x) / denom(x), with 0/0 (any zero denominator) evaluating to 0.
struct RatioSwitch {
  Affine numer;
  Affine denom;
  friend bool operator==(const RatioSwitch&, const RatioSwitch&) = default;
};

using SwitchExpr = std::variant<ConstantSwitch, PairingSwitch, RatioSwitch>;

inline double rate_value(const RateExpr& e, std::span<const double> x) {
  return std::visit(
      [&](const auto& r) -> double {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ConstantRate>) {
          return r.c;
        } else if constexpr (std::is_same_v<T, AffineRate>) {
          return r.form(x);
        } else {
          double t = 0.0;
          for (std::size_t j = 0; j < r.row.size(); ++j) t += static_cast<double>(r.row[j]) * x[j];
          return r.gamma - r.delta * t;
        }
      },
      e);
}

inline double switch_value(const SwitchExpr& e, std::size_t target, std::span<const double> x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantSwitch>) {
          return s.p;
        } else if constexpr (std::is_same_v<T, PairingSwitch>) {
          return x[target];
        } else {
          const double d = s.denom(x);
          return d == 0.0 ? 0.0 : s.numer(x) / d;
        }
      },
      e);
}

// ---------------------------------------------------------------------------
// Protocol kinds
// ---------------------------------------------------------------------------

/// (q_left[0], q_left[1]) -> (q_right[0], q_right[1]) by state index.
struct PppRule {
  std::pair<std::size_t, std::size_t> left;
  std::pair<std::size_t, std::size_t> right;
  friend bool operator==(const PppRule&, const PppRule&) = default;
};

struct PppKind {
  std::vector<PppRule> rules;
  friend bool operator==(const PppKind&, const PppKind&) = default;
};

struct SppKind {
  std::vector<RateExpr> rates;             // k
  std::vector<std::vector<SwitchExpr>> p;  // k x k
  friend bool operator==(const SppKind&, const SppKind&) = default;
};

struct MppKind {
  Vector rates;  // k, positive
  Matrix p;      // k x k row-stochastic
  friend bool operator==(const MppKind&, const MppKind&) = default;
};

struct LvpKind {
  std::vector<std::vector<long>> immunity;  // symmetric k x k
  double gamma = 0.0;
  double delta = 1.0;
  friend bool operator==(const LvpKind&, const LvpKind&) = default;
};

enum class Kind { Ppp, Spp, Mpp, Lvp };

inline std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::Ppp: return "ppp";
    case Kind::Spp: return "spp";
    case Kind::Mpp: return "mpp";
    case Kind::Lvp: return "lvp";
  }
  return "?";
}

struct ProtocolSpec {
  StateSet states;
  std::variant<PppKind, SppKind, MppKind, LvpKind> body;

  std::size_t k() const { return states.size(); }
  Kind kind() const { return static_cast<Kind>(body.index()); }

  template <typename T>
  bool is() const { return std::holds_alternative<T>(body); }

  template <typename T>
  const T& as() const {
    if (const T* p = std::get_if<T>(&body)) return *p;
    throw KindError("protocol is of kind '" + std::string(kind_name(kind())) +
                    "', operation needs a different kind");
  }

  friend bool operator==(const ProtocolSpec&, const ProtocolSpec&) = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool valid() const { return violations.empty(); }

  void add(std::string msg) { violations.push_back({std::move(msg)}); }
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& v : violations) os << "violation: " << v.message << '\n';
    for (const auto& w : warnings) os << "warning: " << w << '\n';
    return os.str();
  }
};

inline constexpr double kRowSumTol = 1e-12;

namespace detail {

inline std::string state_label(const ProtocolSpec& spec, std::size_t i) {
  return "state " + std::to_string(i + 1) + " (" + spec.states.name(i) + ")";
}

inline void validate_ppp(const ProtocolSpec& spec, const PppKind& ppp, ValidationReport& rep) {
  const std::size_t k = spec.k();
  std::set<std::pair<std::size_t, std::size_t>> lefts;
  for (std::size_t r = 0; r < ppp.rules.size(); ++r) {
    const auto& rule = ppp.rules[r];
    const std::string tag = "rule " + std::to_string(r + 1);
    if (rule.left.first >= k || rule.left.second >= k || rule.right.first >= k ||
        rule.right.second >= k) {
      rep.add(tag + ": state index out of range");
      continue;
    }
    if (rule.left.first == rule.left.second) rep.add(tag + ": left states must differ");
    if (rule.right.first == rule.right.second) rep.add(tag + ": right states must differ");
    if (!lefts.insert(rule.left).second) rep.add(tag + ": duplicate left pair");
  }
}

inline void check_affine_nonneg(const Affine& a, std::size_t k, const std::string& what,
                                ValidationReport& rep) {
  if (a.coeffs.size() != k) {
    rep.add(what + ": expected " + std::to_string(k) + " coefficients");
    return;
  }
  if (a.min_on_simplex() < 0.0) rep.add(what + ": negative somewhere on the simplex");
}

inline void validate_spp(const ProtocolSpec& spec, const SppKind& spp, ValidationReport& rep) {
  const std::size_t k = spec.k();
  if (spp.rates.size() != k) {
    rep.add("expected " + std::to_string(k) + " rate expressions");
    return;
  }
  if (spp.p.size() != k) {
    rep.add("switch table must have " + std::to_string(k) + " rows");
    return;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const std::string label = "rate of " + state_label(spec, i);
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, ConstantRate>) {
            if (!(r.c >= 0.0)) rep.add(label + ": negative constant");
          } else if constexpr (std::is_same_v<T, AffineRate>) {
            check_affine_nonneg(r.form, k, label, rep);
          } else {
            if (r.row.size() != k) {
              rep.add(label + ": immunity row has wrong length");
              return;
            }
            if (!(r.delta > 0.0)) rep.add(label + ": delta must be positive");
            const long mx = *std::max_element(r.row.begin(), r.row.end());
            if (r.gamma - r.delta * static_cast<double>(mx) < 0.0)
              rep.add(label + ": negative at a simplex vertex");
          }
        },
        spp.rates[i]);
    if (spp.p[i].size() != k) {
      rep.add("switch row of " + state_label(spec, i) + " must have " + std::to_string(k) +
              " entries");
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const std::string sl =
          "switch " + spec.states.name(i) + "->" + spec.states.name(j);
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantSwitch>) {
              if (!(s.p >= 0.0)) rep.add(sl + ": negative probability");
            } else if constexpr (std::is_same_v<T, RatioSwitch>) {
              check_affine_nonneg(s.numer, k, sl + " numerator", rep);
              check_affine_nonneg(s.denom, k, sl + " denominator", rep);
            }
          },
          spp.p[i][j]);
    }
  }
}

inline bool strongly_connected(const Matrix& adj);

inline void validate_mpp(const ProtocolSpec& spec, const MppKind& mpp, ValidationReport& rep) {
  const std::size_t k = spec.k();
  if (mpp.rates.size() != k || mpp.p.rows() != k || mpp.p.cols() != k) {
    rep.add("rate vector and switch matrix must match the state count");
    return;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!(mpp.rates[i] > 0.0)) rep.add("rate of " + state_label(spec, i) + " must be positive");
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(mpp.p(i, j) >= 0.0))
        rep.add("switch " + spec.states.name(i) + "->" + spec.states.name(j) +
                ": negative probability");
      s += mpp.p(i, j);
    }
    if (!(std::abs(s - 1.0) <= kRowSumTol))
      rep.add("switch row of " + state_label(spec, i) + " sums to " + format_number(s) +
              ", not 1");
  }
  if (!rep.valid()) return;
  bool all_positive = true;
  Matrix adj(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      adj(i, j) = mpp.rates[i] * mpp.p(i, j);
      if (!(adj(i, j) > 0.0)) all_positive = false;
    }
  if (!all_positive) {
    if (strongly_connected(adj))
      rep.warn("some off-diagonal rates are zero; chain is still irreducible");
    else
      rep.warn("chain is reducible; stationary distribution is not unique");
  }
}

inline void validate_lvp(const ProtocolSpec& spec, const LvpKind& lvp, ValidationReport& rep) {
  const std::size_t k = spec.k();
  if (lvp.immunity.size() != k) {
    rep.add("immunity matrix must be " + std::to_string(k) + "x" + std::to_string(k));
    return;
  }
  for (const auto& row : lvp.immunity)
    if (row.size() != k) {
      rep.add("immunity matrix must be " + std::to_string(k) + "x" + std::to_string(k));
      return;
    }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (lvp.immunity[i][j] != lvp.immunity[j][i])
        rep.add("asymmetric immunity between " + state_label(spec, i) + " and " +
                state_label(spec, j));
  if (!(lvp.delta > 0.0)) {
    rep.add("delta must be positive");
    return;
  }
  long mx = lvp.immunity[0][0];
  for (const auto& row : lvp.immunity) mx = std::max(mx, *std::max_element(row.begin(), row.end()));
  if (lvp.gamma / lvp.delta < static_cast<double>(mx))
    rep.add("gamma/delta = " + format_number(lvp.gamma / lvp.delta) +
            " is below the largest immunity entry " + std::to_string(mx) +
            "; review rates would go negative");
}

// Two reachability sweeps from state 0, forward and backward.
inline bool strongly_connected(const Matrix& adj) {
  const std::size_t n = adj.rows();
  if (n == 0) return false;
  auto sweep = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> queue{0};
    seen[0] = true;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const std::size_t u = queue[h];
      for (std::size_t v = 0; v < n; ++v) {
        const double w = forward ? adj(u, v) : adj(v, u);
        if (v != u && w > 0.0 && !seen[v]) {
          seen[v] = true;
          queue.push_back(v);
        }
      }
    }
    return queue.size() == n;
  };
  return sweep(true) && sweep(false);
}

}  // namespace detail

/// Checks every structural invariant of the spec. Violations are data.
inline ValidationReport validate(const ProtocolSpec& spec) {
  ValidationReport rep;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, PppKind>) detail::validate_ppp(spec, body, rep);
        else if constexpr (std::is_same_v<T, SppKind>) detail::validate_spp(spec, body, rep);
        else if constexpr (std::is_same_v<T, MppKind>) detail::validate_mpp(spec, body, rep);
        else detail::validate_lvp(spec, body, rep);
      },
      spec.body);
  return rep;
}

// ---------------------------------------------------------------------------
// SPP view of non-PPP kinds
// ---------------------------------------------------------------------------

/// Expresses an MPP or LVP spec in the general rate/switch family.
inline SppKind as_spp(const ProtocolSpec& spec) {
  const std::size_t k = spec.k();
  if (const auto* spp = std::get_if<SppKind>(&spec.body)) return *spp;
  SppKind out;
  if (const auto* mpp = std::get_if<MppKind>(&spec.body)) {
    for (std::size_t i = 0; i < k; ++i) {
      out.rates.push_back(ConstantRate{mpp->rates[i]});
      std::vector<SwitchExpr> row;
      for (std::size_t j = 0; j < k; ++j) row.push_back(ConstantSwitch{mpp->p(i, j)});
      out.p.push_back(std::move(row));
    }
    return out;
  }
  if (const auto* lvp = std::get_if<LvpKind>(&spec.body)) {
    for (std::size_t i = 0; i < k; ++i) {
      out.rates.push_back(LinearImmunityRate{lvp->gamma, lvp->delta, lvp->immunity[i]});
      out.p.push_back(std::vector<SwitchExpr>(k, PairingSwitch{}));
    }
    return out;
  }
  throw KindError("PPP specs have no direct rate/switch form; use ppp_to_spp");
}

inline RateExpr rate_expr(const ProtocolSpec& spec, std::size_t i) {
  if (const auto* spp = std::get_if<SppKind>(&spec.body)) return spp->rates.at(i);
  if (const auto* mpp = std::get_if<MppKind>(&spec.body)) return ConstantRate{mpp->rates.at(i)};
  if (const auto* lvp = std::get_if<LvpKind>(&spec.body))
    return LinearImmunityRate{lvp->gamma, lvp->delta, lvp->immunity.at(i)};
  throw KindError("PPP specs have no direct rate form; use ppp_to_spp");
}

inline SwitchExpr switch_expr(const ProtocolSpec& spec, std::size_t i, std::size_t j) {
  if (const auto* spp = std::get_if<SppKind>(&spec.body)) return spp->p.at(i).at(j);
  if (const auto* mpp = std::get_if<MppKind>(&spec.body)) return ConstantSwitch{mpp->p(i, j)};
  if (spec.is<LvpKind>()) return PairingSwitch{};
  throw KindError("PPP specs have no direct switch form; use ppp_to_spp");
}

/// lambda_i(x). Throws EvaluationError if the result is negative.
inline double eval_rate(const ProtocolSpec& spec, std::size_t i, std::span<const double> x) {
  const double v = rate_value(rate_expr(spec, i), x);
  if (v < -1e-12)
    throw EvaluationError("rate of " + detail::state_label(spec, i) + " is negative (" +
                          format_number(v) + ")");
  return std::max(v, 0.0);
}

/// p_ij(x). Throws EvaluationError if the result is negative.
inline double eval_switch(const ProtocolSpec& spec, std::size_t i, std::size_t j,
                          std::span<const double> x) {
  const double v = switch_value(switch_expr(spec, i, j), j, x);
  if (v < -1e-12)
    throw EvaluationError("switch " + spec.states.name(i) + "->" + spec.states.name(j) +
                          " is negative (" + format_number(v) + ")");
  return std::max(v, 0.0);
}

}  // namespace popdyn
