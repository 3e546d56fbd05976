#pragma once

// Config-driven experiment entry points behind the CLI.  Each run_* returns a
// process exit code -- 0 success, 1 config or hypothesis error, 2 verification
// failure, 3 numerical abort, 4 inconclusive calibration -- and writes its
// artifacts with a temp-file + rename so interrupted runs never leave partial
// output behind.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "gerbeflow/cauchy.hpp"
#include "gerbeflow/config.hpp"
#include "gerbeflow/constraint2d.hpp"
#include "gerbeflow/frames.hpp"
#include "gerbeflow/gerbe.hpp"
#include "gerbeflow/geometry.hpp"
#include "gerbeflow/io.hpp"
#include "gerbeflow/soliton.hpp"

namespace gf {

namespace detail {

/// Shortest round-trip decimal form; the basis of byte-identical re-runs.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), p);
}

inline status write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) return fail(errc::io_error, "cannot open " + tmp + " for writing");
  const bool wrote = std::fwrite(content.data(), 1, content.size(), f) == content.size();
  if (std::fclose(f) != 0 || !wrote) {
    std::remove(tmp.c_str());
    return fail(errc::io_error, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    return fail(errc::io_error, "cannot rename " + tmp + " into place");
  }
  return ok();
}

inline status ensure_outdir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return fail(errc::io_error, "cannot create output directory " + dir + ": " + ec.message());
  return ok();
}

inline int exit_code_for(const error& e) {
  switch (e.code) {
    case errc::numerical:
    case errc::solver_failure:
      return 3;
    case errc::inconclusive:
      return 4;
    default:
      return 1;  // config, hypothesis, io, parse
  }
}

inline int fail_run(const error& e) {
  std::fprintf(stderr, "error: %s\n", e.message.c_str());
  return exit_code_for(e);
}

// ---------------------------------------------------------------------------
// Seeded analytic probes for the verification suite.  A mode table is drawn
// once per field component and then sampled on every study lattice, so the
// coarse and fine grids see the same smooth function.  Amplitudes decay as
// 0.6^k up to k = 12: resolved grids push the residual to roundoff while an
// under-resolved grid is held at its aliasing floor, which is what turns the
// order estimate into a meaningful diagnostic.

struct trig_mode {
  int axis;
  long k;
  double ca, sa;
};

inline std::vector<trig_mode> draw_modes(std::mt19937_64& rng, int naxes, long kmax) {
  std::uniform_real_distribution<double> coef(-0.5, 0.5);
  std::vector<trig_mode> out;
  for (int a = 0; a < naxes; ++a)
    for (long k = 1; k <= kmax; ++k) {
      const double ca = coef(rng);
      const double sa = coef(rng);
      out.push_back({a, k, ca, sa});
    }
  return out;
}

template <class R>
void set_probe_component(field<R>& f, int c, double base, double amp,
                         const std::vector<trig_mode>& modes) {
  const lattice& g = f.lat();
  const double two_pi = 2.0 * std::acos(-1.0);
  std::array<double, 4> invlen{};
  for (int a = 0; a < g.naxes(); ++a) invlen[std::size_t(a)] = 1.0 / g.length(a);
  std::vector<double> wc(modes.size()), ws(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const double w = amp * std::pow(0.6, double(modes[i].k));
    wc[i] = w * modes[i].ca;
    ws[i] = w * modes[i].sa;
  }
  fill_component(f, c, [&](const std::array<double, 4>& x) {
    double v = base;
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const trig_mode& m = modes[i];
      const double arg = two_pi * double(m.k) * x[std::size_t(m.axis)] * invlen[std::size_t(m.axis)];
      v += wc[i] * std::cos(arg) + ws[i] * std::sin(arg);
    }
    return v;
  });
}

/// Everything run_verify samples, drawn in one fixed pass over the generator.
/// The order-study probes carry modes up to k = 12 so an under-resolved grid
/// sits at its aliasing floor; the exact-identity probes stay low-mode because
/// symmetry checks should not pay the roundoff amplification of steep fields.
struct verify_probes {
  std::array<std::vector<trig_mode>, 6> metric;  // sym2 components in 3d
  std::vector<trig_mode> phi;
  std::array<std::vector<trig_mode>, 3> alpha;       // 2-form test components
  std::array<std::vector<trig_mode>, 6> metric_lo;   // exact-check variants, k <= 4
  std::vector<trig_mode> phi_lo;
  std::array<std::vector<trig_mode>, 3> theta_lo;    // curving representative
  std::array<std::vector<trig_mode>, 3> beta_lo;     // 1-form gauge seed
};

inline verify_probes draw_verify_probes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  verify_probes p;
  for (auto& t : p.metric) t = draw_modes(rng, 3, 12);
  p.phi = draw_modes(rng, 3, 12);
  for (auto& t : p.alpha) t = draw_modes(rng, 3, 12);
  for (auto& t : p.metric_lo) t = draw_modes(rng, 3, 4);
  p.phi_lo = draw_modes(rng, 3, 4);
  for (auto& t : p.theta_lo) t = draw_modes(rng, 3, 4);
  for (auto& t : p.beta_lo) t = draw_modes(rng, 3, 4);
  return p;
}

/// delta + a perturbation small enough to stay uniformly positive definite.
inline field<double> probe_metric(const lattice& g,
                                  const std::array<std::vector<trig_mode>, 6>& modes) {
  field<double> h = field<double>::sym2(g);
  const std::array<double, 3> diag{1.0, 1.15, 1.3};
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const int c = sym2_index(3, i, j);
      const double base = i == j ? diag[std::size_t(i)] : 0.0;
      const double amp = i == j ? 0.08 : 0.04;
      set_probe_component(h, c, base, amp, modes[std::size_t(c)]);
    }
  return h;
}

inline field<double> probe_scalar(const lattice& g, const std::vector<trig_mode>& modes,
                                  double amp) {
  field<double> f = field<double>::scalar(g);
  set_probe_component(f, 0, 0.0, amp, modes);
  return f;
}

template <std::size_t N>
field<double> probe_kform(const lattice& g, int rank,
                          const std::array<std::vector<trig_mode>, N>& modes, double amp) {
  field<double> f = field<double>::kform(g, rank);
  for (int c = 0; c < int(N); ++c) set_probe_component(f, c, 0.0, amp, modes[std::size_t(c)]);
  return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// verify: identity and exactness suite on a (N, 2N) refinement pair.

namespace detail {

struct check_row {
  std::string name;
  bool is_order = false;  // order rows carry coarse/fine, exact rows a value
  double coarse = 0.0, fine = 0.0, order = 0.0;
  double value = 0.0, tol = 0.0;
  bool pass = false;
};

inline check_row order_row(const std::string& name, double coarse, double fine) {
  check_row r;
  r.name = name;
  r.is_order = true;
  r.coarse = coarse;
  r.fine = fine;
  r.order = std::log2(coarse / std::max(fine, 1e-300));
  r.tol = 1e-6;
  r.pass = r.order >= 3.5 && fine <= r.tol;
  return r;
}

inline check_row exact_row(const std::string& name, double value, double tol) {
  check_row r;
  r.name = name;
  r.value = value;
  r.tol = tol;
  r.pass = value <= tol;
  return r;
}

}  // namespace detail

inline int run_verify(const experiment_config& cfg, long threads = 1) {
  using nlohmann::ordered_json;
  if (cfg.n != 3)
    return detail::fail_run({errc::invalid_argument, "verify runs on a three-dimensional slice ([grid] n = 3)"});
  if (!cfg.has_io)
    return detail::fail_run({errc::invalid_argument, "verify requires an [io] section with 'out'"});

  auto coarse_r = config_lattice(cfg);
  if (!coarse_r.ok()) return detail::fail_run(coarse_r.err());
  std::vector<std::size_t> fine_sizes = cfg.sizes;
  for (auto& s : fine_sizes) s *= 2;
  auto fine_r = make_grid(cfg.n, fine_sizes, cfg.lengths);
  if (!fine_r.ok()) return detail::fail_run(fine_r.err());
  const lattice& coarse = coarse_r.value();
  const lattice& fine = fine_r.value();

  const detail::verify_probes probes = detail::draw_verify_probes(cfg.seed);
  std::vector<detail::check_row> rows;

  // conformal identities + operator identities, coarse vs fine
  struct level_vals {
    double ric, codiff, hess, bianchi, deltadelta;
  };
  auto eval_level = [&](const lattice& g) -> result<level_vals> {
    using RL = result<level_vals>;
    field<double> met = detail::probe_metric(g, probes);
    field<double> phi = detail::probe_scalar(g, probes.phi, 0.3);
    field<double> alpha = detail::probe_kform(g, 2, probes.alpha, 0.2);
    auto conf = conformal_identity_residuals(met, phi, 3, alpha);
    if (!conf.ok()) return RL::failure(conf.err().code, conf.err().message);
    auto gm = make_geom(met);
    if (!gm.ok()) return RL::failure(gm.err().code, gm.err().message);
    // delta Ric + 1/2 dS = 0 with delta the negative divergence
    field<double> bi = div_symtensor(gm.value(), ricci(gm.value()));
    auto dS = exterior_derivative(scalar_curvature(gm.value()), deriv_scheme::spectral);
    if (!dS.ok()) return RL::failure(dS.err().code, dS.err().message);
    dS.value() *= 0.5;
    bi += dS.value();
    auto d1 = codifferential(gm.value(), alpha);
    if (!d1.ok()) return RL::failure(d1.err().code, d1.err().message);
    auto d0 = codifferential(gm.value(), d1.value());
    if (!d0.ok()) return RL::failure(d0.err().code, d0.err().message);
    level_vals v;
    v.ric = max_abs(conf.value().ric);
    v.codiff = max_abs(conf.value().codiff);
    v.hess = max_abs(conf.value().hess);
    v.bianchi = max_abs(bi);
    v.deltadelta = max_abs(d0.value());
    return RL(v);
  };

  auto lo = eval_level(coarse);
  if (!lo.ok()) return detail::fail_run(lo.err());
  auto hi = eval_level(fine);
  if (!hi.ok()) return detail::fail_run(hi.err());
  rows.push_back(detail::order_row("conformal_ricci", lo.value().ric, hi.value().ric));
  rows.push_back(detail::order_row("conformal_codifferential", lo.value().codiff, hi.value().codiff));
  rows.push_back(detail::order_row("conformal_hessian", lo.value().hess, hi.value().hess));
  rows.push_back(detail::order_row("contracted_bianchi", lo.value().bianchi, hi.value().bianchi));
  rows.push_back(detail::order_row("codifferential_squared", lo.value().deltadelta, hi.value().deltadelta));

  // equivariance of the stationary residual evaluators on the fine lattice
  {
    field<double> met = detail::probe_metric(fine, probes);
    field<double> phi = detail::probe_scalar(fine, probes.phi, 0.3);
    auto flux = flux_representative(2, fine);
    if (!flux.ok()) return detail::fail_run(flux.err());
    curving_rep<double> crep{make_flux_data(2, fine).value(),
                             detail::probe_kform(fine, 2, probes.theta, 0.2)};
    auto H = curvature(crep);
    if (!H.ok()) return detail::fail_run(H.err());
    auto sol = make_soliton(met, H.value(), phi);
    if (!sol.ok()) return detail::fail_run(sol.err());

    bool cubic = true;
    for (int a = 1; a < 3; ++a)
      cubic = cubic && fine.size(a) == fine.size(0) &&
              std::abs(fine.length(a) - fine.length(0)) < 1e-14;
    affine_map m;
    m.src = cubic ? std::array<int, 4>{1, 2, 0, 3} : std::array<int, 4>{0, 1, 2, 3};
    m.flip = {1, 1, 1, 1};
    m.shift = {3, 5, 7, 0};

    auto moved = pullback_soliton(sol.value(), m);
    if (!moved.ok()) return detail::fail_run(moved.err());
    auto ra = string_residuals(moved.value());
    auto rb = string_residuals(sol.value());
    if (!ra.ok()) return detail::fail_run(ra.err());
    if (!rb.ok()) return detail::fail_run(rb.err());
    field<double> de = pullback_affine(rb.value().einstein, m).value();
    field<double> dm = pullback_affine(rb.value().maxwell, m).value();
    de -= ra.value().einstein;
    dm -= ra.value().maxwell;
    rows.push_back(detail::exact_row("equivariance", std::max(max_abs(de), max_abs(dm)), 1e-12));

    // flux quantization of the class-2 representative, then gauge invariance
    auto q1 = quantization_check(H.value());
    if (!q1.ok()) return detail::fail_run(q1.err());
    const double four_pi = 4.0 * std::acos(-1.0);
    const double qdev = q1.value().multiple == 2
                            ? std::abs(quantization_check(flux.value()).value().period - four_pi)
                            : 1.0;
    rows.push_back(detail::exact_row("flux_quantization", qdev, 1e-12));

    field<double> sigma = field<double>::kform(fine, 2);
    fill_component(sigma, 0, [&](const std::array<double, 4>&) {
      return 2.0 * std::acos(-1.0) / (fine.length(0) * fine.length(1));
    });
    auto dbeta = exterior_derivative(detail::probe_kform(fine, 1, probes.beta, 0.2),
                                     deriv_scheme::spectral);
    if (!dbeta.ok()) return detail::fail_run(dbeta.err());
    sigma += dbeta.value();
    auto shifted = gauge_act(crep, sigma);
    if (!shifted.ok()) return detail::fail_run(shifted.err());
    auto q2 = quantization_check(curvature(shifted.value()).value());
    if (!q2.ok()) return detail::fail_run(q2.err());
    const double gdev = q1.value().multiple == q2.value().multiple
                            ? std::abs(q1.value().period - q2.value().period)
                            : 1.0;
    rows.push_back(detail::exact_row("gauge_invariance", gdev, 1e-10));
  }

  bool all_pass = true;
  for (const auto& r : rows) {
    all_pass = all_pass && r.pass;
    if (r.is_order)
      std::printf("%-26s order   coarse %.3e  fine %.3e  order %5.2f  [%s]\n", r.name.c_str(),
                  r.coarse, r.fine, r.order, r.pass ? "pass" : "FAIL");
    else
      std::printf("%-26s exact   value %.3e  tol %.0e                [%s]\n", r.name.c_str(),
                  r.value, r.tol, r.pass ? "pass" : "FAIL");
  }

  if (auto st = detail::ensure_outdir(cfg.out); !st.ok()) return detail::fail_run(st.err());
  ordered_json doc;
  doc["seed"] = cfg.seed;
  doc["threads"] = threads;
  doc["grid"] = {{"n", cfg.n}, {"sizes", cfg.sizes}, {"lengths", cfg.lengths}};
  doc["checks"] = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json jr;
    jr["name"] = r.name;
    jr["kind"] = r.is_order ? "order" : "exact";
    if (r.is_order) {
      jr["coarse"] = r.coarse;
      jr["fine"] = r.fine;
      jr["observed_order"] = r.order;
      jr["min_order"] = 3.5;
      jr["fine_tolerance"] = r.tol;
    } else {
      jr["value"] = r.value;
      jr["tolerance"] = r.tol;
    }
    jr["pass"] = r.pass;
    doc["checks"].push_back(jr);
  }
  doc["passed"] = all_pass;
  const std::string path = cfg.out + "/verify_report.json";
  if (auto st = detail::write_text_atomic(path, doc.dump(2) + "\n"); !st.ok())
    return detail::fail_run(st.err());
  std::printf("verify: %s (%s)\n", all_pass ? "all checks passed" : "FAILED", path.c_str());
  return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// solve-constraints: separated-ansatz initial data on the flat 2d branch.

inline int run_solve_constraints(const experiment_config& cfg) {
  using nlohmann::ordered_json;
  if (cfg.n != 2)
    return detail::fail_run({errc::invalid_argument, "the constraint solver runs on a two-dimensional slice ([grid] n = 2)"});
  if (!cfg.has_constraints)
    return detail::fail_run({errc::invalid_argument, "solve-constraints requires a [constraints2d] section"});
  if (!cfg.has_io)
    return detail::fail_run({errc::invalid_argument, "solve-constraints requires an [io] section with 'out'"});

  auto lat_r = config_lattice(cfg);
  if (!lat_r.ok()) return detail::fail_run(lat_r.err());
  const lattice& g = lat_r.value();

  ansatz_params<double> p;
  p.c = cfg.c;
  p.k = cfg.k;
  if (cfg.F == "const1") {
    p.F = [](double) { return 1.0; };
    p.intF = [](double t) { return t; };
  } else if (cfg.F == "linear") {
    p.F = [](double t) { return t; };
    p.intF = [](double t) { return 0.5 * t * t; };
  }
  p.phi = evaluate(cfg.phi, g);

  field<double> h0 = field<double>::sym2(g);
  for (int i = 0; i < 2; ++i)
    fill_component(h0, sym2_index(2, i, i), [](const std::array<double, 4>&) { return 1.0; });

  auto sol = solve_conformal_constraints(p, h0);
  if (!sol.ok()) return detail::fail_run(sol.err());
  const auto& s = sol.value();

  if (auto st = detail::ensure_outdir(cfg.out); !st.ok()) return detail::fail_run(st.err());
  std::vector<named_field> fields;
  fields.push_back({"h", s.state.h});
  fields.push_back({"K", s.state.K});
  fields.push_back({"phi", s.state.phi});
  fields.push_back({"rho", s.state.rho});
  fields.push_back({"psi", s.state.psi});
  fields.push_back({"theta", s.state.theta});
  fields.push_back({"flux0", s.state.flux0});
  fields.push_back({"u", s.u});
  const std::string state_path = cfg.out + "/state.gfld";
  if (auto st = write_gfld(state_path, fields); !st.ok()) return detail::fail_run(st.err());

  ordered_json doc;
  doc["c"] = cfg.c;
  doc["k"] = cfg.k;
  doc["F"] = cfg.F;
  doc["residuals"] = {{"C1", s.c1_max}, {"C2", s.c2_max}, {"C3", s.c3_max}};
  doc["newton_iters"] = s.newton_iters;
  doc["final_residual"] = s.newton_residuals.empty() ? 0.0 : s.newton_residuals.back();
  if (auto st = detail::write_text_atomic(cfg.out + "/solve_report.json", doc.dump(2) + "\n");
      !st.ok())
    return detail::fail_run(st.err());

  std::printf("solve-constraints: C1 %.3e  C2 %.3e  C3 %.3e  (%d Newton iterations) -> %s\n",
              s.c1_max, s.c2_max, s.c3_max, s.newton_iters, state_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evolve: march a stored state and record constraint norms + snapshots.

inline int run_evolve(const experiment_config& cfg, const std::string& state_path) {
  if (!cfg.has_evolution)
    return detail::fail_run({errc::invalid_argument, "evolve requires an [evolution] section"});
  if (!cfg.has_io)
    return detail::fail_run({errc::invalid_argument, "evolve requires an [io] section with 'out'"});
  if (state_path.empty())
    return detail::fail_run({errc::invalid_argument, "evolve requires --state <file.gfld>"});

  auto fields_r = read_gfld(state_path);
  if (!fields_r.ok()) return detail::fail_run(fields_r.err());
  auto& fields = fields_r.value();
  auto find = [&](const char* name) -> const field<double>* {
    for (const auto& nf : fields)
      if (nf.name == name) return &nf.data;
    return nullptr;
  };
  const std::array<const char*, 7> names{"h", "K", "phi", "rho", "psi", "theta", "flux0"};
  std::array<const field<double>*, 7> got{};
  for (std::size_t i = 0; i < names.size(); ++i) {
    got[i] = find(names[i]);
    if (!got[i])
      return detail::fail_run({errc::invalid_argument,
                               "state file is missing field '" + std::string(names[i]) + "'"});
  }
  auto state = make_cauchy_state(*got[0], *got[1], *got[2], *got[3], *got[4], *got[5], *got[6],
                                 0.0, cfg.n);
  if (!state.ok()) return detail::fail_run(state.err());

  evolution_config ecfg;
  ecfg.lambda = cfg.lambda;
  ecfg.n = cfg.n;
  ecfg.dt = cfg.dt;
  ecfg.steps = cfg.steps;
  ecfg.record_every = cfg.record_every;

  auto traj = evolve(state.value(), ecfg);
  if (!traj.ok()) return detail::fail_run(traj.err());
  const auto& t = traj.value();

  if (auto st = detail::ensure_outdir(cfg.out); !st.ok()) return detail::fail_run(st.err());
  std::string csv = "tau,C1_max,C1_l2,C2_max,C2_l2,C3_max,C3_l2\n";
  for (const auto& row : t.history) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) csv += ',';
      csv += detail::format_double(row[i]);
    }
    csv += '\n';
  }
  if (auto st = detail::write_text_atomic(cfg.out + "/residuals.csv", csv); !st.ok())
    return detail::fail_run(st.err());

  for (std::size_t i = 0; i < t.states.size(); ++i) {
    const auto& s = t.states[i];
    std::vector<named_field> snap;
    snap.push_back({"h", s.h});
    snap.push_back({"K", s.K});
    snap.push_back({"phi", s.phi});
    snap.push_back({"rho", s.rho});
    snap.push_back({"psi", s.psi});
    snap.push_back({"theta", s.theta});
    snap.push_back({"flux0", s.flux0});
    const std::string path = cfg.out + "/state_" + std::to_string(i) + ".gfld";
    if (auto st = write_gfld(path, snap); !st.ok()) return detail::fail_run(st.err());
  }

  const auto& last = t.history.back();
  double worst = 0.0;
  for (std::size_t i = 1; i < last.size(); ++i) worst = std::max(worst, std::abs(last[i]));
  std::printf("evolve: %ld steps to tau %.6g, final constraint norm %.3e, %zu snapshots -> %s\n",
              cfg.steps, last[0], worst, t.states.size(), cfg.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// calibrate: refinement study over the propagation-identity coefficients.

namespace detail {

inline cauchy_state<double> calib_zero_state(const lattice& g) {
  cauchy_state<double> s;
  s.h = field<double>::sym2(g);
  for (int i = 0; i < g.naxes(); ++i)
    fill_component(s.h, sym2_index(g.naxes(), i, i), [](const std::array<double, 4>&) { return 1.0; });
  s.K = field<double>::sym2(g);
  s.phi = field<double>::scalar(g);
  s.rho = field<double>::scalar(g);
  s.psi = field<double>::kform(g, 2);
  s.theta = field<double>::kform(g, 2);
  s.flux0 = field<double>::kform(g, 3);
  return s;
}

inline cauchy_state<double> calib_homog_state(const lattice& g) {
  cauchy_state<double> s = calib_zero_state(g);
  const int d = g.naxes();
  for (int i = 0; i < d; ++i) {
    fill_component(s.K, sym2_index(d, i, i), [](const std::array<double, 4>&) { return 0.2; });
  }
  fill_component(s.rho, 0, [](const std::array<double, 4>&) { return 0.7; });
  fill_component(s.psi, 0, [](const std::array<double, 4>&) { return 0.2; });
  return s;
}

/// Fixed low-mode analytic data; resolution-independent by construction.
inline cauchy_state<double> calib_wavy_state(const lattice& g, double amp) {
  cauchy_state<double> s = calib_zero_state(g);
  const double two_pi = 2.0 * std::acos(-1.0);
  const double lx = g.length(0), ly = g.length(1);
  fill_component(s.h, sym2_index(2, 0, 0), [=](const std::array<double, 4>& x) {
    return 1.0 + amp * std::sin(two_pi * x[0] / lx) * std::cos(two_pi * x[1] / ly);
  });
  fill_component(s.h, sym2_index(2, 1, 1), [=](const std::array<double, 4>& x) {
    return 1.3 + amp * std::cos(two_pi * x[1] / ly);
  });
  fill_component(s.h, sym2_index(2, 0, 1), [=](const std::array<double, 4>& x) {
    return 0.5 * amp * std::sin(two_pi * (x[0] / lx + x[1] / ly));
  });
  fill_component(s.K, sym2_index(2, 0, 0), [=](const std::array<double, 4>& x) {
    return amp * std::cos(two_pi * x[0] / lx);
  });
  fill_component(s.K, sym2_index(2, 1, 1), [=](const std::array<double, 4>& x) {
    return 0.2 + amp * std::sin(two_pi * x[1] / ly);
  });
  fill_component(s.phi, 0, [=](const std::array<double, 4>& x) {
    return amp * std::sin(two_pi * x[1] / ly) + 0.5 * amp * std::cos(two_pi * x[0] / lx);
  });
  fill_component(s.rho, 0, [=](const std::array<double, 4>& x) {
    return 0.3 * amp + amp * std::cos(two_pi * (x[0] / lx - x[1] / ly));
  });
  fill_component(s.psi, 0, [=](const std::array<double, 4>& x) {
    return amp * (1.0 + std::sin(two_pi * x[0] / lx));
  });
  return s;
}

inline const char* probe_name(probe_kind k) {
  switch (k) {
    case probe_kind::flat: return "flat";
    case probe_kind::homogeneous: return "homogeneous";
    default: return "generic";
  }
}

}  // namespace detail

inline int run_calibrate(const experiment_config& cfg) {
  using nlohmann::ordered_json;
  if (cfg.n != 2)
    return detail::fail_run({errc::invalid_argument, "calibrate runs on a two-dimensional slice ([grid] n = 2)"});
  if (!cfg.has_evolution)
    return detail::fail_run({errc::invalid_argument, "calibrate requires an [evolution] section"});
  if (!cfg.has_io)
    return detail::fail_run({errc::invalid_argument, "calibrate requires an [io] section with 'out'"});

  auto gen = [&](std::size_t nres) -> result<cauchy_state<double>> {
    using RS = result<cauchy_state<double>>;
    auto lat = make_grid(2, {nres, nres}, cfg.lengths);
    if (!lat.ok()) return RS::failure(lat.err().code, lat.err().message);
    switch (cfg.probe) {
      case probe_kind::flat:
        return RS(detail::calib_zero_state(lat.value()));
      case probe_kind::homogeneous:
        return RS(detail::calib_homog_state(lat.value()));
      default:
        return RS(detail::calib_wavy_state(lat.value(), 0.1));
    }
  };

  evolution_config ecfg;
  ecfg.lambda = cfg.lambda;
  ecfg.n = cfg.n;
  ecfg.dt = cfg.dt;
  ecfg.steps = cfg.steps;
  ecfg.record_every = cfg.record_every;

  auto rep_r = calibrate_identities<double>(gen, cfg.sizes[0], ecfg);
  if (!rep_r.ok()) return detail::fail_run(rep_r.err());
  const auto& rep = rep_r.value();

  auto variant_json = [](const prop_variant& v) {
    ordered_json j;
    j["dc2_weight"] = v.dc2_w;
    j["source"] = v.src_dtpsi ? "dtpsi" : "psi";
    j["c3_weight"] = v.c3_w;
    j["dc1_weight"] = v.dc1_w;
    j["k_sign"] = v.k_sign;
    return j;
  };

  ordered_json doc;
  doc["conclusive"] = rep.conclusive;
  doc["discriminating"] = rep.discriminating;
  doc["printed_set_conclusive"] = rep.printed_set_conclusive;
  doc["winner"] = variant_json(rep.winner);
  doc["winner_orders"] = rep.winner_orders;
  doc["winner_fine"] = rep.winner_fine;
  doc["best_rival_fine"] = rep.best_rival_fine;
  doc["note"] = rep.note;
  doc["probe"] = detail::probe_name(cfg.probe);
  doc["coarse_resolution"] = cfg.sizes[0];
  doc["dt"] = cfg.dt;
  doc["steps"] = cfg.steps;
  doc["lambda"] = cfg.lambda;
  doc["variants"] = ordered_json::array();
  for (const auto& row : rep.table) {
    ordered_json jr = variant_json(row.v);
    jr["coarse"] = row.coarse;
    jr["fine"] = row.fine;
    jr["order"] = row.order;
    doc["variants"].push_back(jr);
  }

  if (auto st = detail::ensure_outdir(cfg.out); !st.ok()) return detail::fail_run(st.err());
  const std::string path = cfg.out + "/convention_ledger.json";
  if (auto st = detail::write_text_atomic(path, doc.dump(2) + "\n"); !st.ok())
    return detail::fail_run(st.err());

  if (rep.conclusive) {
    std::printf("calibrate: selected %s  (orders %.2f %.2f %.2f, rivals >= %.3e vs %.3e) -> %s\n",
                variant_str(rep.winner).c_str(), rep.winner_orders[0], rep.winner_orders[1],
                rep.winner_orders[2], rep.best_rival_fine, rep.winner_fine, path.c_str());
    return 0;
  }
  std::printf("calibrate: inconclusive (%s) -> %s\n", rep.note.c_str(), path.c_str());
  return 4;
}

}  // namespace gf
