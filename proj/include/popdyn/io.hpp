#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "popdyn/protocol.hpp"

namespace popdyn {

// Line-oriented protocol files:
//
//   kind ppp|spp|mpp|lvp
//   states <name> <name> ...
//   rule <s> <s> -> <s> <s>                      (ppp)
//   rate <s> <positive real>                     (mpp)
//   switch <s> <s> <probability>                 (mpp)
//   gamma <real> / delta <positive real>         (lvp)
//   immunity <s> <s> <integer>                   (lvp, once per unordered pair)
//   rate <s> affine <c0> <c1> ... <ck>           (spp; also `rate <s> const <c>`)
//   switch <s> <s> pairing | const <p> | ratio <c0..ck> / <d0..dk>   (spp)
//
// `#` starts a comment. Switch entries left out are zero.

struct ParseIssue {
  std::size_t line = 0;  // 0 when the issue is not tied to a line
  std::string message;
};

class ParseError : public Error {
 public:
  explicit ParseError(std::vector<ParseIssue> issues)
      : Error(render(issues)), issues_(std::move(issues)) {}
  const std::vector<ParseIssue>& issues() const { return issues_; }

 private:
  static std::string render(const std::vector<ParseIssue>& issues) {
    std::string out;
    for (const auto& i : issues) {
      if (!out.empty()) out += '\n';
      if (i.line) out += "line " + std::to_string(i.line) + ": ";
      out += i.message;
    }
    return out;
  }
  std::vector<ParseIssue> issues_;
};

namespace detail {

inline std::vector<std::string> tokenize(std::string_view line) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string> toks;
  std::istringstream is{std::string(line)};
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

class ProtocolParser {
 public:
  ProtocolSpec parse(std::string_view text) {
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
      ++lineno;
      line_ = lineno;
      handle(tokenize(line));
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    line_ = 0;
    if (!kind_) error("missing `kind` directive");
    if (names_.empty()) error("missing `states` directive");
    if (!issues_.empty()) throw ParseError(std::move(issues_));
    ProtocolSpec spec = assemble();
    if (!issues_.empty()) throw ParseError(std::move(issues_));
    return spec;
  }

 private:
  void error(std::string msg) { issues_.push_back({line_, std::move(msg)}); }

  bool need_kind(Kind k, std::string_view directive) {
    if (!kind_) {
      error("`" + std::string(directive) + "` before `kind`");
      return false;
    }
    if (*kind_ != k) {
      error("`" + std::string(directive) + "` is not allowed in a " +
            std::string(kind_name(*kind_)) + " file");
      return false;
    }
    if (names_.empty()) {
      error("`" + std::string(directive) + "` before `states`");
      return false;
    }
    return true;
  }

  std::optional<std::size_t> state(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    error("unknown state '" + name + "'");
    return std::nullopt;
  }

  std::optional<double> number(const std::string& tok) {
    double v;
    if (parse_number(tok, v) && std::isfinite(v)) return v;
    error("expected a number, got '" + tok + "'");
    return std::nullopt;
  }

  std::optional<long> integer(const std::string& tok) {
    long v;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec == std::errc() && p == tok.data() + tok.size()) return v;
    error("expected an integer, got '" + tok + "'");
    return std::nullopt;
  }

  bool arity(const std::vector<std::string>& t, std::size_t n, std::string_view usage) {
    if (t.size() == n) return true;
    error("arity mismatch: expected `" + std::string(usage) + "`");
    return false;
  }

  std::optional<Affine> affine(const std::vector<std::string>& t, std::size_t from) {
    Affine a;
    bool ok = true;
    for (std::size_t i = from; i < from + names_.size() + 1; ++i) {
      auto v = number(t[i]);
      if (!v) ok = false;
      else if (i == from) a.c0 = *v;
      else a.coeffs.push_back(*v);
    }
    if (!ok) return std::nullopt;
    return a;
  }

  void handle(const std::vector<std::string>& t) {
    if (t.empty()) return;
    const std::string& d = t[0];
    const std::size_t k = names_.size();
    if (d == "kind") {
      if (!arity(t, 2, "kind ppp|spp|mpp|lvp")) return;
      if (kind_) return error("duplicate `kind` directive");
      if (t[1] == "ppp") kind_ = Kind::Ppp;
      else if (t[1] == "spp") kind_ = Kind::Spp;
      else if (t[1] == "mpp") kind_ = Kind::Mpp;
      else if (t[1] == "lvp") kind_ = Kind::Lvp;
      else error("unknown kind '" + t[1] + "'");
    } else if (d == "states") {
      if (!names_.empty()) return error("duplicate `states` directive");
      if (t.size() < 2) return error("arity mismatch: `states` needs at least one name");
      for (std::size_t i = 1; i < t.size(); ++i) {
        if (std::find(names_.begin(), names_.end(), t[i]) != names_.end())
          error("duplicate state name '" + t[i] + "'");
        names_.push_back(t[i]);
      }
      mpp_rates_.assign(names_.size(), std::nullopt);
      spp_rates_.assign(names_.size(), std::nullopt);
      mpp_p_ = Matrix(names_.size(), names_.size());
      spp_p_.assign(names_.size(), std::vector<SwitchExpr>(names_.size(), ConstantSwitch{0.0}));
      spp_set_.assign(names_.size() * names_.size(), false);
      immunity_.assign(names_.size(), std::vector<long>(names_.size(), 0));
      immunity_set_.assign(names_.size() * names_.size(), false);
    } else if (d == "rule") {
      if (!need_kind(Kind::Ppp, d) || !arity(t, 6, "rule <s> <s> -> <s> <s>")) return;
      if (t[3] != "->") return error("expected `->` in rule");
      auto a = state(t[1]), b = state(t[2]), c = state(t[4]), e = state(t[5]);
      if (!a || !b || !c || !e) return;
      if (*a == *b) return error("left states must differ");
      if (*c == *e) return error("right states must differ");
      rules_.push_back(PppRule{{*a, *b}, {*c, *e}});
    } else if (d == "rate" && kind_ == Kind::Mpp) {
      if (!need_kind(Kind::Mpp, d) || !arity(t, 3, "rate <s> <positive real>")) return;
      auto s = state(t[1]);
      auto v = number(t[2]);
      if (!s || !v) return;
      if (mpp_rates_[*s]) return error("duplicate rate for state '" + t[1] + "'");
      mpp_rates_[*s] = *v;
    } else if (d == "rate") {
      if (!need_kind(Kind::Spp, d)) return;
      if (t.size() < 3) return error("arity mismatch: expected `rate <s> affine <c0> ... <ck>`");
      auto s = state(t[1]);
      if (!s) return;
      if (spp_rates_[*s]) return error("duplicate rate for state '" + t[1] + "'");
      if (t[2] == "affine") {
        if (!arity(t, 4 + k, "rate <s> affine <c0> <c1> ... <ck>")) return;
        if (auto a = affine(t, 3)) spp_rates_[*s] = AffineRate{*a};
      } else if (t[2] == "const") {
        if (!arity(t, 4, "rate <s> const <c>")) return;
        if (auto v = number(t[3])) spp_rates_[*s] = ConstantRate{*v};
      } else {
        error("unknown rate form '" + t[2] + "'");
      }
    } else if (d == "switch" && kind_ == Kind::Mpp) {
      if (!need_kind(Kind::Mpp, d) || !arity(t, 4, "switch <s> <s> <probability>")) return;
      auto a = state(t[1]), b = state(t[2]);
      auto v = number(t[3]);
      if (!a || !b || !v) return;
      if (spp_set_[*a * k + *b]) return error("duplicate switch " + t[1] + " -> " + t[2]);
      spp_set_[*a * k + *b] = true;
      mpp_p_(*a, *b) = *v;
    } else if (d == "switch") {
      if (!need_kind(Kind::Spp, d)) return;
      if (t.size() < 4) return error("arity mismatch: expected `switch <s> <s> <form>`");
      auto a = state(t[1]), b = state(t[2]);
      if (!a || !b) return;
      if (spp_set_[*a * k + *b]) return error("duplicate switch " + t[1] + " -> " + t[2]);
      spp_set_[*a * k + *b] = true;
      if (t[3] == "pairing") {
        if (arity(t, 4, "switch <s> <s> pairing")) spp_p_[*a][*b] = PairingSwitch{};
      } else if (t[3] == "const") {
        if (!arity(t, 5, "switch <s> <s> const <p>")) return;
        if (auto v = number(t[4])) spp_p_[*a][*b] = ConstantSwitch{*v};
      } else if (t[3] == "ratio") {
        if (!arity(t, 7 + 2 * k, "switch <s> <s> ratio <c0..ck> / <d0..dk>")) return;
        if (t[5 + k] != "/") return error("expected `/` between numerator and denominator");
        auto n = affine(t, 4), dd = affine(t, 6 + k);
        if (n && dd) spp_p_[*a][*b] = RatioSwitch{*n, *dd};
      } else {
        error("unknown switch form '" + t[3] + "'");
      }
    } else if (d == "gamma" || d == "delta") {
      if (!need_kind(Kind::Lvp, d) || !arity(t, 2, d + " <real>")) return;
      auto v = number(t[1]);
      if (!v) return;
      auto& slot = d == "gamma" ? gamma_ : delta_;
      if (slot) return error("duplicate `" + d + "` directive");
      slot = *v;
    } else if (d == "immunity") {
      if (!need_kind(Kind::Lvp, d) || !arity(t, 4, "immunity <s> <s> <integer>")) return;
      auto a = state(t[1]), b = state(t[2]);
      auto v = integer(t[3]);
      if (!a || !b || !v) return;
      if (immunity_set_[*a * k + *b])
        return error("duplicate immunity declaration for " + t[1] + ", " + t[2]);
      immunity_set_[*a * k + *b] = immunity_set_[*b * k + *a] = true;
      immunity_[*a][*b] = immunity_[*b][*a] = *v;
    } else {
      error("unknown directive '" + d + "'");
    }
  }

  ProtocolSpec assemble() {
    ProtocolSpec spec{StateSet(names_), PppKind{}};
    switch (*kind_) {
      case Kind::Ppp:
        spec.body = PppKind{rules_};
        break;
      case Kind::Mpp: {
        MppKind mpp{Vector(names_.size()), mpp_p_};
        for (std::size_t i = 0; i < names_.size(); ++i) {
          if (!mpp_rates_[i]) error("missing rate for state '" + names_[i] + "'");
          else mpp.rates[i] = *mpp_rates_[i];
        }
        spec.body = std::move(mpp);
        break;
      }
      case Kind::Spp: {
        SppKind spp;
        for (std::size_t i = 0; i < names_.size(); ++i) {
          if (!spp_rates_[i]) error("missing rate for state '" + names_[i] + "'");
          else spp.rates.push_back(*spp_rates_[i]);
        }
        spp.p = spp_p_;
        spec.body = std::move(spp);
        break;
      }
      case Kind::Lvp:
        if (!gamma_) error("missing `gamma` directive");
        if (!delta_) error("missing `delta` directive");
        spec.body = LvpKind{immunity_, gamma_.value_or(0.0), delta_.value_or(1.0)};
        break;
    }
    return spec;
  }

  std::size_t line_ = 0;
  std::vector<ParseIssue> issues_;
  std::optional<Kind> kind_;
  std::vector<std::string> names_;
  std::vector<PppRule> rules_;
  std::vector<std::optional<double>> mpp_rates_;
  Matrix mpp_p_;
  std::vector<std::optional<RateExpr>> spp_rates_;
  std::vector<std::vector<SwitchExpr>> spp_p_;
  std::vector<bool> spp_set_;
  std::optional<double> gamma_, delta_;
  std::vector<std::vector<long>> immunity_;
  std::vector<bool> immunity_set_;
};

}  // namespace detail

/// Parses without structural validation; syntax errors throw ParseError.
inline ProtocolSpec parse_protocol_unchecked(std::string_view text) {
  return detail::ProtocolParser{}.parse(text);
}

/// Parses and validates. Syntax errors and invariant violations are
/// aggregated into one ParseError.
inline ProtocolSpec parse_protocol_file(std::string_view text) {
  ProtocolSpec spec = parse_protocol_unchecked(text);
  const auto rep = validate(spec);
  if (!rep.valid()) {
    std::vector<ParseIssue> issues;
    for (const auto& v : rep.violations) issues.push_back({0, v.message});
    throw ParseError(std::move(issues));
  }
  return spec;
}

namespace detail {

inline std::string affine_tokens(const Affine& a) {
  std::string s = format_number(a.c0);
  for (double c : a.coeffs) s += ' ' + format_number(c);
  return s;
}

}  // namespace detail

/// Inverse of parse_protocol_file: parse(serialize(s)) == s.
inline std::string serialize_protocol(const ProtocolSpec& spec) {
  std::ostringstream os;
  const auto& names = spec.states.names();
  os << "kind " << kind_name(spec.kind()) << '\n';
  os << "states";
  for (const auto& n : names) os << ' ' << n;
  os << '\n';
  const std::size_t k = spec.k();
  switch (spec.kind()) {
    case Kind::Ppp:
      for (const auto& r : spec.as<PppKind>().rules)
        os << "rule " << names[r.left.first] << ' ' << names[r.left.second] << " -> "
           << names[r.right.first] << ' ' << names[r.right.second] << '\n';
      break;
    case Kind::Mpp: {
      const auto& mpp = spec.as<MppKind>();
      for (std::size_t i = 0; i < k; ++i) os << "rate " << names[i] << ' ' << format_number(mpp.rates[i]) << '\n';
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          if (mpp.p(i, j) != 0.0)
            os << "switch " << names[i] << ' ' << names[j] << ' ' << format_number(mpp.p(i, j)) << '\n';
      break;
    }
    case Kind::Lvp: {
      const auto& lvp = spec.as<LvpKind>();
      os << "gamma " << format_number(lvp.gamma) << '\n';
      os << "delta " << format_number(lvp.delta) << '\n';
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j)
          if (lvp.immunity[i][j] != 0)
            os << "immunity " << names[i] << ' ' << names[j] << ' ' << lvp.immunity[i][j] << '\n';
      break;
    }
    case Kind::Spp: {
      const auto& spp = spec.as<SppKind>();
      for (std::size_t i = 0; i < k; ++i) {
        os << "rate " << names[i] << ' ';
        std::visit(
            [&](const auto& r) {
              using T = std::decay_t<decltype(r)>;
              if constexpr (std::is_same_v<T, ConstantRate>) os << "const " << format_number(r.c);
              else if constexpr (std::is_same_v<T, AffineRate>) os << "affine " << detail::affine_tokens(r.form);
              else throw KindError("serialize: immunity rates only appear in lvp files");
            },
            spp.rates[i]);
        os << '\n';
      }
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const auto& e = spp.p[i][j];
          if (const auto* c = std::get_if<ConstantSwitch>(&e)) {
            if (c->p != 0.0) os << "switch " << names[i] << ' ' << names[j] << " const " << format_number(c->p) << '\n';
          } else if (std::holds_alternative<PairingSwitch>(e)) {
            os << "switch " << names[i] << ' ' << names[j] << " pairing\n";
          } else {
            const auto& r = std::get<RatioSwitch>(e);
            os << "switch " << names[i] << ' ' << names[j] << " ratio "
               << detail::affine_tokens(r.numer) << " / " << detail::affine_tokens(r.denom) << '\n';
          }
        }
      break;
    }
  }
  return os.str();
}

}  // namespace popdyn
