#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "gerbeflow/config.hpp"

using namespace gf;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool has(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("trig grammar: accepted forms") {
  SUBCASE("single term") {
    auto r = parse_trig_sum("0.3*sin(1x)", 2);
    REQUIRE(r.ok());
    REQUIRE(r.value().terms.size() == 1);
    const trig_term& t = r.value().terms[0];
    CHECK(t.amp == 0.3);
    CHECK(t.is_sin);
    CHECK(t.k == 1);
    CHECK(t.axis == 0);
  }

  SUBCASE("signed multi-term with scientific coefficients") {
    auto r = parse_trig_sum("-0.5*cos(2y) + 1e-2*sin(3x) - 2*sin(1y)", 2);
    REQUIRE(r.ok());
    REQUIRE(r.value().terms.size() == 3);
    CHECK(r.value().terms[0].amp == -0.5);
    CHECK_FALSE(r.value().terms[0].is_sin);
    CHECK(r.value().terms[0].k == 2);
    CHECK(r.value().terms[0].axis == 1);
    CHECK(r.value().terms[1].amp == 0.01);
    CHECK(r.value().terms[1].k == 3);
    CHECK(r.value().terms[2].amp == -2.0);
  }

  SUBCASE("z axis needs a three-dimensional slice") {
    CHECK(parse_trig_sum("1*sin(1z)", 3).ok());
    auto r = parse_trig_sum("1*sin(1z)", 2);
    REQUIRE_FALSE(r.ok());
    CHECK(has(r.err().message, "exceeds the slice dimension"));
  }

  SUBCASE("whitespace is free") {
    auto r = parse_trig_sum("  0.3 * sin ( 2 x )+0.1*cos(1y)", 2);
    REQUIRE(r.ok());
    CHECK(r.value().terms.size() == 2);
  }
}

TEST_CASE("trig grammar: evaluation matches a hand sum") {
  auto g = make_grid(2, {16, 16}, {1.0, 2.0}).value();
  auto e = parse_trig_sum("0.3*sin(1x) - 0.2*cos(2y)", 2).value();
  field<double> f = evaluate(e, g);
  field<double> ref = field<double>::scalar(g);
  fill_component(ref, 0, [](const std::array<double, 4>& x) {
    // the wave number is in cycles per period, so axis length 2 halves the frequency
    return 0.3 * std::sin(2.0 * kPi * x[0]) - 0.2 * std::cos(2.0 * kPi * 2.0 * x[1] / 2.0);
  });
  ref -= f;
  CHECK(max_abs(ref) < 1e-14);
}

TEST_CASE("trig grammar: char-precise rejections") {
  auto msg = [](const std::string& text, int naxes = 2) {
    auto r = parse_trig_sum(text, naxes);
    REQUIRE_FALSE(r.ok());
    CHECK(r.err().code == errc::parse_error);
    return r.err().message;
  };
  CHECK(msg("") == "char 1: empty expression");
  CHECK(msg("sin(1x)") == "char 1: expected a numeric coefficient");
  CHECK(msg("0.3 sin(1x)") == "char 5: expected '*' after the coefficient");
  CHECK(msg("0.3*tan(1x)") == "char 5: expected 'sin' or 'cos'");
  CHECK(msg("0.3*sin 1x)") == "char 9: expected '(' after the function name");
  CHECK(msg("0.3*sin(0x)") == "char 9: expected a positive integer wave number");
  CHECK(msg("0.3*sin(-2x)") == "char 9: expected a positive integer wave number");
  CHECK(msg("0.3*sin(1w)") == "char 10: expected an axis letter x, y, or z");
  CHECK(msg("0.3*sin(1x") == "char 11: expected ')'");
  CHECK(has(msg("0.3*sin(1x) 0.1*cos(1y)"), "expected '+' or '-' between terms"));
}

namespace {

const char* kFullConfig =
    "# full run description\n"       // 1
    "[grid]\n"                       // 2
    "n = 2\n"                        // 3
    "sizes = 32 32\n"                // 4
    "lengths = 1.0 1.0\n"            // 5
    "\n"                             // 6
    "[evolution]\n"                  // 7
    "dt = 0.005   # stays below the stability bound\n"
    "steps = 40\n"                   // 9
    "lambda = 0.3\n"                 // 10
    "record_every = 4\n"             // 11
    "probe = homogeneous\n"          // 12
    "\n"                             // 13
    "[constraints2d]\n"              // 14
    "c = 1.5\n"                      // 15
    "k = 0.12\n"                     // 16
    "F = const1\n"                   // 17
    "phi = 0.3*sin(1x)\n"            // 18
    "\n"                             // 19
    "[io]\n"                         // 20
    "out = runs/demo\n"              // 21
    "\n"                             // 22
    "[seed]\n"                       // 23
    "value = 42\n";                  // 24

}  // namespace

TEST_CASE("config: full file round-trips into the struct") {
  auto r = parse_config_text(kFullConfig, "run.ini");
  REQUIRE(r.ok());
  const experiment_config& c = r.value();
  CHECK(c.n == 2);
  REQUIRE(c.sizes.size() == 2);
  CHECK(c.sizes[0] == 32);
  CHECK(c.lengths[1] == 1.0);
  CHECK(c.has_evolution);
  CHECK(c.dt == 0.005);
  CHECK(c.steps == 40);
  CHECK(c.lambda == 0.3);
  CHECK(c.record_every == 4);
  CHECK(c.probe == probe_kind::homogeneous);
  CHECK(c.has_constraints);
  CHECK(c.c == 1.5);
  CHECK(c.k == 0.12);
  CHECK(c.F == "const1");
  REQUIRE(c.phi.terms.size() == 1);
  CHECK(c.phi.terms[0].amp == 0.3);
  CHECK(c.has_io);
  CHECK(c.out == "runs/demo");
  CHECK(c.seed == 42);

  auto lat = config_lattice(c);
  REQUIRE(lat.ok());
  CHECK(lat.value().naxes() == 2);
  CHECK(lat.value().size(0) == 32);
}

TEST_CASE("config: sections may arrive in any order") {
  // phi references the slice dimension, so its parse is deferred until the end
  const std::string txt =
      "[constraints2d]\n"
      "phi = 0.1*sin(1y)\n"
      "[grid]\n"
      "n = 2\n"
      "sizes = 16 16\n"
      "lengths = 1 1\n";
  auto r = parse_config_text(txt, "run.ini");
  REQUIRE(r.ok());
  CHECK(r.value().phi.terms[0].axis == 1);
}

TEST_CASE("config: defaults hold for optional keys") {
  auto r = parse_config_text("[grid]\nn = 3\nsizes = 16 16 16\nlengths = 1 1 1\n", "run.ini");
  REQUIRE(r.ok());
  CHECK_FALSE(r.value().has_evolution);
  CHECK_FALSE(r.value().has_constraints);
  CHECK_FALSE(r.value().has_io);
  CHECK(r.value().seed == 0);
  CHECK(r.value().record_every == 1);
  CHECK(r.value().probe == probe_kind::generic);
  CHECK(r.value().F == "zero");
}

TEST_CASE("config: line-precise rejections") {
  auto msg = [](const std::string& text) {
    auto r = parse_config_text(text, "run.ini");
    REQUIRE_FALSE(r.ok());
    CHECK(r.err().code == errc::parse_error);
    return r.err().message;
  };

  CHECK(has(msg("[grid\n"), "run.ini:1: unterminated section header"));
  CHECK(has(msg("[grids]\n"), "run.ini:1: unknown section '[grids]'"));
  CHECK(has(msg("n = 2\n"), "run.ini:1: key 'n' appears before any section"));
  CHECK(has(msg("[grid]\nn 2\n"), "run.ini:2: expected 'key = value'"));
  CHECK(has(msg("[grid]\n= 2\n"), "run.ini:2: missing key before '='"));
  CHECK(has(msg("[grid]\nn =\n"), "run.ini:2: missing value for 'n'"));
  CHECK(has(msg("[grid]\nn = 2\nn = 3\n"), "run.ini:3: duplicate key 'n' in [grid]"));
  CHECK(has(msg("[grid]\nn = 4\n"), "run.ini:2: invalid value for 'n': n must be 2 or 3"));
  CHECK(has(msg("[grid]\nsizes = 15 16\n"), "sizes must be even integers >= 8"));
  CHECK(has(msg("[grid]\nsizes = 4 4\n"), "sizes must be even integers >= 8"));
  CHECK(has(msg("[grid]\nlengths = 1 -1\n"), "lengths must be positive reals"));
  CHECK(has(msg("[grid]\nspacing = 0.1\n"), "run.ini:2: unknown key 'spacing' in [grid]"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[evolution]\ndt = -0.1\n"),
            "run.ini:6: invalid value for 'dt': dt must be positive"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[evolution]\ndt = 0.01\nrecord_every = 0\n"),
            "record_every must be >= 1"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[evolution]\ndt = 0.01\nprobe = bumpy\n"),
            "probe must be flat, homogeneous, or generic"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[constraints2d]\nF = quadratic\nphi = 1*sin(1x)\n"),
            "F must be zero, const1, or linear"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[seed]\nvalue = -3\n"),
            "seed must be a non-negative integer"));
}

TEST_CASE("config: structural requirements") {
  auto msg = [](const std::string& text) {
    auto r = parse_config_text(text, "run.ini");
    REQUIRE_FALSE(r.ok());
    return r.err().message;
  };

  CHECK(has(msg("[io]\nout = runs\n"), "missing required section [grid]"));
  CHECK(has(msg("[grid]\nn = 2\nlengths = 1 1\n"), "[grid] is missing 'sizes'"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\n"), "[grid] is missing 'lengths'"));
  CHECK(has(msg("[grid]\nn = 3\nsizes = 16 16\nlengths = 1 1 1\n"),
            "'sizes' must list exactly n = 3 entries"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1\n"),
            "'lengths' must list exactly n = 2 entries"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[evolution]\nsteps = 4\n"),
            "[evolution] is missing 'dt'"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[constraints2d]\nc = 1\n"),
            "[constraints2d] is missing 'phi'"));
  CHECK(has(msg("[grid]\nn = 2\nsizes = 16 16\nlengths = 1 1\n[io]\nother = x\n"),
            "unknown key 'other' in [io]"));

  // a phi grammar error is reported at the key's line with its char offset
  const std::string bad_phi =
      "[grid]\n"
      "n = 2\n"
      "sizes = 16 16\n"
      "lengths = 1 1\n"
      "[constraints2d]\n"
      "phi = 0.3*tan(1x)\n";
  const std::string m = msg(bad_phi);
  CHECK(has(m, "run.ini:6: in value of 'phi': char 5: expected 'sin' or 'cos'"));
}
