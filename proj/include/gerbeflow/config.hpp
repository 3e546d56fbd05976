#pragma once

// Experiment configuration: INI-style sections with strict key validation
// and line-precise diagnostics.  Spatial profiles come from a deliberately
// small expression grammar -- sums of a*sin(kx), a*cos(ky) -- so every
// configured field is an analytic trigonometric polynomial by construction.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gerbeflow/errors.hpp"
#include "gerbeflow/field.hpp"
#include "gerbeflow/grid.hpp"

namespace gf {

struct trig_term {
  double amp = 0.0;
  bool is_sin = true;
  long k = 0;   // integer wave number; the 2 pi / L factor is applied on evaluation
  int axis = 0;
};

struct trig_sum {
  std::vector<trig_term> terms;
  std::string source;
};

/// Parse "0.3*sin(1x) - 0.1*cos(2y)".  Axis letters x, y, z map to axes
/// 0, 1, 2 and must fall inside the slice dimension.
inline result<trig_sum> parse_trig_sum(const std::string& text, int naxes) {
  using RT = result<trig_sum>;
  trig_sum out;
  out.source = text;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  };
  auto fail = [&](const std::string& what) {
    return RT::failure(errc::parse_error,
                       "char " + std::to_string(i + 1) + ": " + what);
  };
  skip();
  if (i == text.size()) return fail("empty expression");
  bool first = true;
  while (true) {
    skip();
    double sign = 1.0;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
      sign = text[i] == '-' ? -1.0 : 1.0;
      ++i;
      skip();
    } else if (!first) {
      if (i == text.size()) break;
      return fail("expected '+' or '-' between terms");
    }
    trig_term t;
    const char* b = text.data() + i;
    const char* e = text.data() + text.size();
    auto [p1, ec1] = std::from_chars(b, e, t.amp);
    if (ec1 != std::errc()) return fail("expected a numeric coefficient");
    i = std::size_t(p1 - text.data());
    t.amp *= sign;
    skip();
    if (i >= text.size() || text[i] != '*') return fail("expected '*' after the coefficient");
    ++i;
    skip();
    if (text.compare(i, 3, "sin") == 0) {
      t.is_sin = true;
    } else if (text.compare(i, 3, "cos") == 0) {
      t.is_sin = false;
    } else {
      return fail("expected 'sin' or 'cos'");
    }
    i += 3;
    skip();
    if (i >= text.size() || text[i] != '(') return fail("expected '(' after the function name");
    ++i;
    skip();
    auto [p2, ec2] = std::from_chars(text.data() + i, e, t.k);
    if (ec2 != std::errc() || t.k < 1) return fail("expected a positive integer wave number");
    i = std::size_t(p2 - text.data());
    skip();
    if (i >= text.size() || text[i] < 'x' || text[i] > 'z') return fail("expected an axis letter x, y, or z");
    t.axis = text[i] - 'x';
    if (t.axis >= naxes)
      return fail("axis '" + std::string(1, text[i]) + "' exceeds the slice dimension");
    ++i;
    skip();
    if (i >= text.size() || text[i] != ')') return fail("expected ')'");
    ++i;
    out.terms.push_back(t);
    first = false;
    skip();
    if (i == text.size()) break;
  }
  return RT(std::move(out));
}

template <class R = double>
field<R> evaluate(const trig_sum& e, const lattice& g) {
  field<R> out = field<R>::scalar(g);
  const double two_pi = 2.0 * std::acos(-1.0);
  fill_component(out, 0, [&](const std::array<double, 4>& x) {
    double v = 0.0;
    for (const trig_term& t : e.terms) {
      const double arg = two_pi * double(t.k) * x[std::size_t(t.axis)] / g.length(t.axis);
      v += t.amp * (t.is_sin ? std::sin(arg) : std::cos(arg));
    }
    return v;
  });
  return out;
}

enum class probe_kind { flat, homogeneous, generic };

struct experiment_config {
  // [grid]
  int n = 2;
  std::vector<std::size_t> sizes;
  std::vector<double> lengths;
  // [evolution]
  bool has_evolution = false;
  double dt = 0.0;
  long steps = 0;
  double lambda = 0.0;
  long record_every = 1;
  probe_kind probe = probe_kind::generic;
  // [constraints2d]
  bool has_constraints = false;
  double c = 1.0;
  double k = 0.0;
  std::string F = "zero";
  trig_sum phi;
  // [io]
  bool has_io = false;
  std::string out;
  // [seed]
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parse the configuration text.  `origin` names the source in diagnostics,
/// e.g. "run.ini:12: unknown key 'dts' in [evolution]".
inline result<experiment_config> parse_config_text(const std::string& text,
                                                   const std::string& origin) {
  using RC = result<experiment_config>;
  experiment_config cfg;
  bool grid_seen = false;
  std::string section;
  std::vector<std::string> seen_keys;  // "section/key" to reject duplicates

  // deferred so [grid] may appear after [constraints2d]
  std::string phi_text;
  long phi_line = 0;

  std::size_t pos = 0;
  long line_no = 0;
  auto fail = [&](long ln, const std::string& what) {
    return RC::failure(errc::parse_error, origin + ":" + std::to_string(ln) + ": " + what);
  };

  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (std::size_t h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty() || line[0] == ';') continue;

    if (line.front() == '[') {
      if (line.back() != ']') return fail(line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "grid" && section != "evolution" && section != "constraints2d" &&
          section != "io" && section != "seed")
        return fail(line_no, "unknown section '[" + section + "]'");
      if (section == "grid") grid_seen = true;
      if (section == "evolution") cfg.has_evolution = true;
      if (section == "constraints2d") cfg.has_constraints = true;
      if (section == "io") cfg.has_io = true;
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) return fail(line_no, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (section.empty()) return fail(line_no, "key '" + key + "' appears before any section");
    if (key.empty()) return fail(line_no, "missing key before '='");
    if (val.empty()) return fail(line_no, "missing value for '" + key + "'");

    const std::string tagged = section + "/" + key;
    for (const std::string& s : seen_keys)
      if (s == tagged) return fail(line_no, "duplicate key '" + key + "' in [" + section + "]");
    seen_keys.push_back(tagged);

    auto bad_value = [&](const std::string& why) {
      return fail(line_no, "invalid value for '" + key + "': " + why);
    };
    auto parse_long = [&](const std::string& s, long& dst) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), dst);
      return ec == std::errc() && p == s.data() + s.size();
    };
    auto parse_dbl = [&](const std::string& s, double& dst) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), dst);
      return ec == std::errc() && p == s.data() + s.size();
    };

    if (section == "grid") {
      if (key == "n") {
        long n = 0;
        if (!parse_long(val, n) || (n != 2 && n != 3)) return bad_value("n must be 2 or 3");
        cfg.n = int(n);
      } else if (key == "sizes") {
        for (const std::string& tok : detail::split_ws(val)) {
          long v = 0;
          if (!parse_long(tok, v) || v < 8 || v % 2 != 0)
            return bad_value("sizes must be even integers >= 8");
          cfg.sizes.push_back(std::size_t(v));
        }
      } else if (key == "lengths") {
        for (const std::string& tok : detail::split_ws(val)) {
          double v = 0;
          if (!parse_dbl(tok, v) || !(v > 0)) return bad_value("lengths must be positive reals");
          cfg.lengths.push_back(v);
        }
      } else {
        return fail(line_no, "unknown key '" + key + "' in [grid]");
      }
    } else if (section == "evolution") {
      if (key == "dt") {
        if (!parse_dbl(val, cfg.dt) || !(cfg.dt > 0)) return bad_value("dt must be positive");
      } else if (key == "steps") {
        if (!parse_long(val, cfg.steps) || cfg.steps < 0) return bad_value("steps must be >= 0");
      } else if (key == "lambda") {
        if (!parse_dbl(val, cfg.lambda)) return bad_value("lambda must be a real number");
      } else if (key == "record_every") {
        if (!parse_long(val, cfg.record_every) || cfg.record_every < 1)
          return bad_value("record_every must be >= 1");
      } else if (key == "probe") {
        if (val == "flat") cfg.probe = probe_kind::flat;
        else if (val == "homogeneous") cfg.probe = probe_kind::homogeneous;
        else if (val == "generic") cfg.probe = probe_kind::generic;
        else return bad_value("probe must be flat, homogeneous, or generic");
      } else {
        return fail(line_no, "unknown key '" + key + "' in [evolution]");
      }
    } else if (section == "constraints2d") {
      if (key == "c") {
        if (!parse_dbl(val, cfg.c)) return bad_value("c must be a real number");
      } else if (key == "k") {
        if (!parse_dbl(val, cfg.k)) return bad_value("k must be a real number");
      } else if (key == "F") {
        if (val != "zero" && val != "const1" && val != "linear")
          return bad_value("F must be zero, const1, or linear");
        cfg.F = val;
      } else if (key == "phi") {
        phi_text = val;
        phi_line = line_no;
      } else {
        return fail(line_no, "unknown key '" + key + "' in [constraints2d]");
      }
    } else if (section == "io") {
      if (key == "out") {
        cfg.out = val;
      } else {
        return fail(line_no, "unknown key '" + key + "' in [io]");
      }
    } else {  // seed
      if (key == "value") {
        long v = 0;
        if (!parse_long(val, v) || v < 0) return bad_value("seed must be a non-negative integer");
        cfg.seed = std::uint64_t(v);
      } else {
        return fail(line_no, "unknown key '" + key + "' in [seed]");
      }
    }
  }

  if (!grid_seen) return RC::failure(errc::parse_error, origin + ": missing required section [grid]");
  if (cfg.sizes.empty()) return RC::failure(errc::parse_error, origin + ": [grid] is missing 'sizes'");
  if (cfg.lengths.empty())
    return RC::failure(errc::parse_error, origin + ": [grid] is missing 'lengths'");
  if (int(cfg.sizes.size()) != cfg.n)
    return RC::failure(errc::parse_error,
                       origin + ": [grid] 'sizes' must list exactly n = " +
                           std::to_string(cfg.n) + " entries");
  if (int(cfg.lengths.size()) != cfg.n)
    return RC::failure(errc::parse_error,
                       origin + ": [grid] 'lengths' must list exactly n = " +
                           std::to_string(cfg.n) + " entries");
  if (cfg.has_evolution && !(cfg.dt > 0))
    return RC::failure(errc::parse_error, origin + ": [evolution] is missing 'dt'");
  if (cfg.has_constraints) {
    if (phi_text.empty())
      return RC::failure(errc::parse_error, origin + ": [constraints2d] is missing 'phi'");
    auto expr = parse_trig_sum(phi_text, cfg.n);
    if (!expr.ok())
      return RC::failure(errc::parse_error, origin + ":" + std::to_string(phi_line) +
                                                ": in value of 'phi': " + expr.err().message);
    cfg.phi = std::move(expr.value());
  }
  if (cfg.has_io && cfg.out.empty())
    return RC::failure(errc::parse_error, origin + ": [io] is missing 'out'");
  return RC(std::move(cfg));
}

inline result<lattice> config_lattice(const experiment_config& cfg) {
  return make_grid(cfg.n, cfg.sizes, cfg.lengths);
}

}  // namespace gf
