#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gerbeflow/soliton.hpp"

namespace gf {

/// Reduced first-order Cauchy data on the (all-periodic) spatial slice:
/// K = d/dtau h, rho = d/dtau phi, psi the derived 2-form family with
/// potential theta (d/dtau theta = psi).  flux0 is the fixed closed
/// background 3-form; the transverse gauge field is pinned to zero, so the
/// reconstructed flux is flux0 + d theta throughout.
template <class R>
struct cauchy_state {
  field<R> h;      // sym2, SPD
  field<R> K;      // sym2
  field<R> phi;    // scalar
  field<R> rho;    // scalar
  field<R> psi;    // 2-form
  field<R> theta;  // 2-form
  field<R> flux0;  // 3-form (identically zero unless the slice is 3d)
  double tau = 0.0;
};

struct evolution_config {
  double lambda = 0.0;
  int n = 2;              // slice dimension
  double dt = 0.0;
  long steps = 0;
  long record_every = 1;  // snapshot cadence in steps
  double filter_threshold = -1.0;  // relative Krasny cutoff; <0 picks per precision
};

template <class R>
struct cauchy_rhs {
  field<R> dh, dK, dphi, drho, dpsi, dtheta;
};

template <class R>
struct constraint_set {
  field<R> c1;  // one-form (momentum type)
  field<R> c2;  // scalar (Hamiltonian type)
  field<R> c3;  // one-form (flux type)
  R c1_max{}, c1_l2{}, c2_max{}, c2_l2{}, c3_max{}, c3_l2{};
};

namespace detail {

template <class R>
R default_filter_threshold() {
  return sizeof(R) > 8 ? R(1e-17) : R(1e-12);
}

/// dst += w * f (component-wise).
template <class R>
void add_scaled(field<R>& dst, const field<R>& f, R w) {
  auto& d = dst.raw();
  const auto& s = f.raw();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += w * s[i];
}

/// dst += w * m * f with m a scalar field multiplying every component.
template <class R>
void add_scaled(field<R>& dst, const field<R>& f, const field<R>& m, R w) {
  const std::size_t n = dst.npts();
  const R* mm = m.comp(0);
  for (int c = 0; c < dst.ncomp(); ++c) {
    R* d = dst.comp(c);
    const R* s = f.comp(c);
    for (std::size_t p = 0; p < n; ++p) d[p] += w * mm[p] * s[p];
  }
}

template <class R>
status check_state(const cauchy_state<R>& s, const evolution_config& cfg) {
  const lattice& lat = s.h.lat();
  if (cfg.n < 2) return fail(errc::invalid_argument, "slice dimension must be >= 2");
  if (lat.naxes() != cfg.n)
    return fail(errc::invalid_argument, "state lattice does not match the configured slice dimension");
  for (int a = 0; a < lat.naxes(); ++a)
    if (!lat.periodic(a)) return fail(errc::invalid_argument, "Cauchy slice must be fully periodic");
  if (s.h.rank() != 2 || s.h.sym() != symmetry::sym || s.K.rank() != 2 || s.K.sym() != symmetry::sym)
    return fail(errc::invalid_argument, "h and K must be symmetric 2-tensors");
  if (s.phi.rank() != 0 || s.rho.rank() != 0)
    return fail(errc::invalid_argument, "phi and rho must be scalars");
  if (s.psi.rank() != 2 || s.psi.sym() != symmetry::antisym || s.theta.rank() != 2 ||
      s.theta.sym() != symmetry::antisym)
    return fail(errc::invalid_argument, "psi and theta must be 2-forms");
  if (s.flux0.rank() != 3)
    return fail(errc::invalid_argument, "flux0 must be a 3-form");
  for (const field<R>* f : {&s.h, &s.K, &s.phi, &s.rho, &s.psi, &s.theta, &s.flux0}) {
    if (!(f->lat() == lat)) return fail(errc::invalid_argument, "state fields live on different lattices");
    if (!f->finite()) return fail(errc::numerical, "state contains non-finite values");
  }
  return ok();
}

}  // namespace detail

/// Reconstructed flux flux0 + d theta; on a 2d slice theta is top-degree and
/// the flux is the (empty) 3-form.
template <class R>
result<field<R>> assemble_flux(const cauchy_state<R>& s, deriv_scheme scheme = deriv_scheme::spectral) {
  if (s.theta.rank() >= s.theta.lat().naxes()) return result<field<R>>(s.flux0);
  auto dth = exterior_derivative(s.theta, scheme);
  if (!dth.ok()) return result<field<R>>::failure(dth.err().code, dth.err().message);
  field<R> H = s.flux0;
  H += dth.value();
  return result<field<R>>(std::move(H));
}

/// Validated construction; checks shapes, SPD metric, finiteness and closure
/// of the background flux.
template <class R>
result<cauchy_state<R>> make_cauchy_state(field<R> h, field<R> K, field<R> phi, field<R> rho,
                                          field<R> psi, field<R> theta, field<R> flux0,
                                          double tau = 0.0, int n = 2,
                                          deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<cauchy_state<R>>;
  cauchy_state<R> s;
  s.h = std::move(h);
  s.K = std::move(K);
  s.phi = std::move(phi);
  s.rho = std::move(rho);
  s.psi = std::move(psi);
  s.theta = std::move(theta);
  s.flux0 = std::move(flux0);
  s.tau = tau;
  evolution_config probe;
  probe.n = n;
  if (auto st = detail::check_state(s, probe); !st.ok())
    return RS::failure(st.err().code, st.err().message);
  auto gm = make_geom(s.h, scheme);
  if (!gm.ok()) return RS::failure(gm.err().code, gm.err().message);
  if (auto st = detail::check_closed(s.flux0, scheme, "flux0"); !st.ok())
    return RS::failure(st.err().code, st.err().message);
  return RS(std::move(s));
}

/// Right-hand side of the first-order evolution system.  Coefficients follow
/// the reduced equations verbatim:
///   d/dtau K   = 2 Ric + K o K - 1/2 Tr(K) K - (2/(n-1)) dphi (x) dphi
///                + (2/(n-1)) (e^{-4phi/(n-1)} (|psi|^2 + |H|^2) + lambda e^{2phi/(n-1)}) h
///                - e^{-4phi/(n-1)} (psi o psi + H o H)
///   d/dtau psi = delta H + (4/(n-1)) H(dphi#) + K Delta1 psi
///                + ((4/(n-1)) rho - 1/2 Tr(K)) psi
///   d/dtau rho = delta dphi - 1/2 rho Tr(K)
///                - e^{-4phi/(n-1)} (|psi|^2 + |H|^2) - lambda e^{2phi/(n-1)}
/// together with dh = K, dphi = rho, dtheta = psi.
template <class R>
result<cauchy_rhs<R>> evolution_rhs(const cauchy_state<R>& s, const evolution_config& cfg,
                                    deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<cauchy_rhs<R>>;
  if (auto st = detail::check_state(s, cfg); !st.ok())
    return RS::failure(st.err().code, st.err().message);
  auto gmr = make_geom(s.h, scheme);
  if (!gmr.ok()) return RS::failure(gmr.err().code, gmr.err().message);
  const geom<R>& gm = gmr.value();
  auto Hr = assemble_flux(s, scheme);
  if (!Hr.ok()) return RS::failure(Hr.err().code, Hr.err().message);
  const field<R>& H = Hr.value();
  const lattice& lat = s.h.lat();
  const std::size_t npts = lat.npts();
  const R inv = R(1) / R(cfg.n - 1);
  const R lam = R(cfg.lambda);

  auto dphir = exterior_derivative(s.phi, scheme);
  if (!dphir.ok()) return RS::failure(dphir.err().code, dphir.err().message);
  const field<R>& dphi = dphir.value();
  field<R> trk = trace_h(gm, s.K);

  field<R> em = field<R>::scalar(lat);  // e^{-4phi/(n-1)}
  field<R> ep = field<R>::scalar(lat);  // e^{+2phi/(n-1)}
  for (std::size_t p = 0; p < npts; ++p) {
    em.at(0, p) = std::exp(R(-4) * inv * s.phi.at(0, p));
    ep.at(0, p) = std::exp(R(2) * inv * s.phi.at(0, p));
  }
  field<R> psi2 = norm2_form(gm, s.psi);
  field<R> h2 = norm2_form(gm, H);

  cauchy_rhs<R> out;
  out.dh = s.K;
  out.dphi = s.rho;
  out.dtheta = s.psi;

  // dK
  field<R> dK = ricci(gm);
  dK *= R(2);
  dK += circ_sym(gm, s.K, s.K);
  detail::add_scaled(dK, s.K, trk, R(-0.5));
  detail::add_scaled(dK, outer_sym(dphi, dphi), R(-2) * inv);
  field<R> w = field<R>::scalar(lat);
  for (std::size_t p = 0; p < npts; ++p)
    w.at(0, p) = R(2) * inv * (em.at(0, p) * (psi2.at(0, p) + h2.at(0, p)) + lam * ep.at(0, p));
  detail::add_scaled(dK, s.h, w, R(1));
  auto pp = circ_form(gm, s.psi, s.psi);
  if (!pp.ok()) return RS::failure(pp.err().code, pp.err().message);
  auto hh = circ_form(gm, H, H);
  if (!hh.ok()) return RS::failure(hh.err().code, hh.err().message);
  detail::add_scaled(dK, pp.value(), em, R(-1));
  detail::add_scaled(dK, hh.value(), em, R(-1));
  out.dK = std::move(dK);

  // dpsi
  auto dH = codifferential(gm, H);
  if (!dH.ok()) return RS::failure(dH.err().code, dH.err().message);
  field<R> dpsi = std::move(dH.value());
  auto hv = form_contract(gm, dphi, H);
  if (!hv.ok()) return RS::failure(hv.err().code, hv.err().message);
  detail::add_scaled(dpsi, hv.value(), R(4) * inv);
  auto kd1 = delta1(gm, s.K, s.psi);
  if (!kd1.ok()) return RS::failure(kd1.err().code, kd1.err().message);
  dpsi += kd1.value();
  field<R> zmul = field<R>::scalar(lat);
  for (std::size_t p = 0; p < npts; ++p)
    zmul.at(0, p) = R(4) * inv * s.rho.at(0, p) - R(0.5) * trk.at(0, p);
  detail::add_scaled(dpsi, s.psi, zmul, R(1));
  out.dpsi = std::move(dpsi);

  // drho
  auto box = codifferential(gm, dphi);
  if (!box.ok()) return RS::failure(box.err().code, box.err().message);
  field<R> drho = std::move(box.value());
  for (std::size_t p = 0; p < npts; ++p)
    drho.at(0, p) += R(-0.5) * s.rho.at(0, p) * trk.at(0, p) -
                     em.at(0, p) * (psi2.at(0, p) + h2.at(0, p)) - lam * ep.at(0, p);
  out.drho = std::move(drho);
  return RS(std::move(out));
}

/// Time-dependent constraints, evaluated verbatim:
///   C1 = delta K + d Tr(K) + (2/(n-1)) rho dphi + e^{-4phi/(n-1)} psi -| H
///   C2 = s^h + 1/4 |K|^2 - 1/4 Tr(K)^2 + lambda e^{2phi/(n-1)}
///        + (1/(n-1)) (rho^2 - |dphi|^2) + 1/2 (|psi|^2 - |H|^2) e^{-4phi/(n-1)}
///   C3 = delta psi + (4/(n-1)) psi(dphi#)
template <class R>
result<constraint_set<R>> constraint_residuals(const cauchy_state<R>& s, const evolution_config& cfg,
                                               deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<constraint_set<R>>;
  if (auto st = detail::check_state(s, cfg); !st.ok())
    return RS::failure(st.err().code, st.err().message);
  auto gmr = make_geom(s.h, scheme);
  if (!gmr.ok()) return RS::failure(gmr.err().code, gmr.err().message);
  const geom<R>& gm = gmr.value();
  auto Hr = assemble_flux(s, scheme);
  if (!Hr.ok()) return RS::failure(Hr.err().code, Hr.err().message);
  const field<R>& H = Hr.value();
  const lattice& lat = s.h.lat();
  const std::size_t npts = lat.npts();
  const R inv = R(1) / R(cfg.n - 1);
  const R lam = R(cfg.lambda);

  auto dphir = exterior_derivative(s.phi, scheme);
  if (!dphir.ok()) return RS::failure(dphir.err().code, dphir.err().message);
  const field<R>& dphi = dphir.value();
  field<R> trk = trace_h(gm, s.K);
  field<R> em = field<R>::scalar(lat);
  for (std::size_t p = 0; p < npts; ++p) em.at(0, p) = std::exp(R(-4) * inv * s.phi.at(0, p));

  constraint_set<R> out;

  field<R> c1 = div_symtensor(gm, s.K);
  auto dtrk = exterior_derivative(trk, scheme);
  if (!dtrk.ok()) return RS::failure(dtrk.err().code, dtrk.err().message);
  c1 += dtrk.value();
  detail::add_scaled(c1, dphi, s.rho, R(2) * inv);
  auto pih = form_contract(gm, s.psi, H);
  if (!pih.ok()) return RS::failure(pih.err().code, pih.err().message);
  detail::add_scaled(c1, pih.value(), em, R(1));
  out.c1 = std::move(c1);

  field<R> c2 = scalar_curvature(gm);
  field<R> k2 = sym2_norm2(gm, s.K);
  field<R> psi2 = norm2_form(gm, s.psi);
  field<R> h2 = norm2_form(gm, H);
  field<R> dphi2 = norm2_form(gm, dphi);
  for (std::size_t p = 0; p < npts; ++p) {
    const R t = trk.at(0, p);
    c2.at(0, p) += R(0.25) * k2.at(0, p) - R(0.25) * t * t +
                   lam * std::exp(R(2) * inv * s.phi.at(0, p)) +
                   inv * (s.rho.at(0, p) * s.rho.at(0, p) - dphi2.at(0, p)) +
                   R(0.5) * (psi2.at(0, p) - h2.at(0, p)) * em.at(0, p);
  }
  out.c2 = std::move(c2);

  auto dpsi = codifferential(gm, s.psi);
  if (!dpsi.ok()) return RS::failure(dpsi.err().code, dpsi.err().message);
  field<R> c3 = std::move(dpsi.value());
  auto pv = form_contract(gm, dphi, s.psi);
  if (!pv.ok()) return RS::failure(pv.err().code, pv.err().message);
  detail::add_scaled(c3, pv.value(), R(4) * inv);
  out.c3 = std::move(c3);

  out.c1_max = max_abs(out.c1);
  out.c1_l2 = l2_norm(out.c1);
  out.c2_max = max_abs(out.c2);
  out.c2_l2 = l2_norm(out.c2);
  out.c3_max = max_abs(out.c3);
  out.c3_l2 = l2_norm(out.c3);
  return RS(std::move(out));
}

namespace detail {

template <class R>
cauchy_state<R> state_axpy(const cauchy_state<R>& s, const cauchy_rhs<R>& k, R w) {
  cauchy_state<R> out = s;
  add_scaled(out.h, k.dh, w);
  add_scaled(out.K, k.dK, w);
  add_scaled(out.phi, k.dphi, w);
  add_scaled(out.rho, k.drho, w);
  add_scaled(out.psi, k.dpsi, w);
  add_scaled(out.theta, k.dtheta, w);
  return out;
}

template <class R>
void rhs_accumulate(cauchy_rhs<R>& acc, const cauchy_rhs<R>& k, R w) {
  add_scaled(acc.dh, k.dh, w);
  add_scaled(acc.dK, k.dK, w);
  add_scaled(acc.dphi, k.dphi, w);
  add_scaled(acc.drho, k.drho, w);
  add_scaled(acc.dpsi, k.dpsi, w);
  add_scaled(acc.dtheta, k.dtheta, w);
}

template <class R>
void filter_state(cauchy_state<R>& s, R thr) {
  const lattice& lat = s.h.lat();
  for (field<R>* f : {&s.h, &s.K, &s.phi, &s.rho, &s.psi, &s.theta})
    for (int c = 0; c < f->ncomp(); ++c) spectral_filter(lat, f->comp(c), thr);
}

}  // namespace detail

/// One classical RK4 step followed by the documented roundoff-hygiene filter
/// (Krasny cutoff + 2/3 truncation per component).
template <class R>
result<cauchy_state<R>> rk4_step(const cauchy_state<R>& s, const evolution_config& cfg,
                                 deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<cauchy_state<R>>;
  const R dt = R(cfg.dt);
  auto k1 = evolution_rhs(s, cfg, scheme);
  if (!k1.ok()) return RS::failure(k1.err().code, k1.err().message);
  auto s2 = detail::state_axpy(s, k1.value(), dt / R(2));
  auto k2 = evolution_rhs(s2, cfg, scheme);
  if (!k2.ok()) return RS::failure(k2.err().code, k2.err().message);
  auto s3 = detail::state_axpy(s, k2.value(), dt / R(2));
  auto k3 = evolution_rhs(s3, cfg, scheme);
  if (!k3.ok()) return RS::failure(k3.err().code, k3.err().message);
  auto s4 = detail::state_axpy(s, k3.value(), dt);
  auto k4 = evolution_rhs(s4, cfg, scheme);
  if (!k4.ok()) return RS::failure(k4.err().code, k4.err().message);

  cauchy_rhs<R> acc = k1.value();
  detail::rhs_accumulate(acc, k2.value(), R(2));
  detail::rhs_accumulate(acc, k3.value(), R(2));
  detail::rhs_accumulate(acc, k4.value(), R(1));
  cauchy_state<R> out = detail::state_axpy(s, acc, dt / R(6));
  out.tau = s.tau + cfg.dt;

  const R thr = cfg.filter_threshold >= 0 ? R(cfg.filter_threshold)
                                          : detail::default_filter_threshold<R>();
  if (thr > R(0)) detail::filter_state(out, thr);
  for (const field<R>* f : {&out.h, &out.K, &out.phi, &out.rho, &out.psi, &out.theta})
    if (!f->finite()) return RS::failure(errc::numerical, "non-finite value");
  return RS(std::move(out));
}

template <class R>
struct trajectory {
  std::vector<cauchy_state<R>> states;        // snapshots at the record cadence
  std::vector<constraint_set<R>> constraints; // aligned with states
  std::vector<std::array<double, 7>> history; // per step: tau + 6 constraint norms
  evolution_config cfg;
  double record_dt = 0.0;                     // tau spacing between snapshots
};

/// Fixed-step RK4 trajectory.  Snapshots (with constraint fields) are kept at
/// a uniform cadence; constraint norms are logged every step.  A non-finite
/// state aborts with the offending step index.
template <class R>
result<trajectory<R>> evolve(const cauchy_state<R>& init, const evolution_config& cfg,
                             deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<trajectory<R>>;
  if (cfg.dt <= 0 || cfg.steps < 0 || cfg.record_every < 1)
    return RS::failure(errc::invalid_argument, "evolution config: need dt > 0, steps >= 0, cadence >= 1");
  const double bound = 0.25 * init.h.lat().min_spacing();
  if (cfg.dt > bound * (1.0 + 1e-12))
    return RS::failure(errc::invalid_argument,
                       "dt = " + std::to_string(cfg.dt) + " violates the stability heuristic dt <= " +
                           std::to_string(bound));
  trajectory<R> traj;
  traj.cfg = cfg;
  traj.record_dt = cfg.dt * double(cfg.record_every);

  cauchy_state<R> s = init;
  auto record = [&](const cauchy_state<R>& st, bool snapshot) -> status {
    auto cr = constraint_residuals(st, cfg, scheme);
    if (!cr.ok()) return fail(cr.err().code, cr.err().message);
    auto& c = cr.value();
    traj.history.push_back({st.tau, double(c.c1_max), double(c.c1_l2), double(c.c2_max),
                            double(c.c2_l2), double(c.c3_max), double(c.c3_l2)});
    if (snapshot) {
      traj.states.push_back(st);
      traj.constraints.push_back(std::move(c));
    }
    return ok();
  };
  if (auto st = record(s, true); !st.ok()) return RS::failure(st.err().code, st.err().message);

  for (long i = 0; i < cfg.steps; ++i) {
    auto next = rk4_step(s, cfg, scheme);
    if (!next.ok())
      return RS::failure(errc::numerical,
                         next.err().message + " at step " + std::to_string(i + 1));
    s = std::move(next.value());
    if (auto st = record(s, (i + 1) % cfg.record_every == 0); !st.ok())
      return RS::failure(st.err().code, st.err().message);
  }
  return RS(std::move(traj));
}

/// Coefficient variant for the constraint-propagation identities:
///   D1 = dC1/dtau - [ -1/2 Tr(K) C1 + dc2_w dC2 - c3_w e^{-4phi/(n-1)} (C3 -| X) ]
///   D2 = dC2/dtau - [ dc1_w delta C1 - Tr(K) C2 ]
///   D3 = dC3/dtau - [ -(1/2 Tr(K) - (4/(n-1)) rho) C3 + k_sign K(C3#) ]
/// with X = psi (src_dtpsi=false) or X = d/dtau psi (true).  The two printed
/// sources correspond to (dc2_w, src, c3_w, dc1_w, k_sign) = (1/2, dtpsi,
/// 1/2, +2, -1) and (1, psi, 1, +2, -1).
struct prop_variant {
  double dc2_w = 1.0;
  bool src_dtpsi = false;
  double c3_w = 1.0;
  double dc1_w = 2.0;
  double k_sign = -1.0;
};

inline std::string variant_str(const prop_variant& v) {
  auto num = [](double x) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%+g", x);
    return std::string(buf);
  };
  return "dC2:" + num(v.dc2_w) + " X:" + (v.src_dtpsi ? "dtpsi" : "psi") + " w3:" + num(v.c3_w) +
         " dC1:" + num(v.dc1_w) + " K:" + num(v.k_sign);
}

/// The candidate set printed with the identities (32 variants).
inline std::vector<prop_variant> printed_variants() {
  std::vector<prop_variant> out;
  for (double a : {0.5, 1.0})
    for (bool b : {false, true})
      for (double c : {0.5, 1.0})
        for (double d : {2.0, -2.0})
          for (double e : {1.0, -1.0}) out.push_back({a, b, c, d, e});
  return out;
}

/// Extended search set (128 variants): widens the two weight axes to signed
/// values and admits |dc1_w| = 1.  Superset of printed_variants().
inline std::vector<prop_variant> extended_variants() {
  std::vector<prop_variant> out;
  for (double a : {0.5, 1.0})
    for (bool b : {false, true})
      for (double c : {-1.0, -0.5, 0.5, 1.0})
        for (double d : {-2.0, -1.0, 1.0, 2.0})
          for (double e : {1.0, -1.0}) out.push_back({a, b, c, d, e});
  return out;
}

template <class R>
struct prop_point {
  double tau;
  R d1, d2, d3;  // max norms
};

namespace detail {

/// Per-record pieces of the propagation identities, so variants reduce to
/// linear combinations.
template <class R>
struct prop_record {
  double tau;
  field<R> dc1dt, dc2dt, dc3dt;        // 4th-order tau differences
  field<R> trk_c1;                      // Tr(K) C1
  field<R> dc2;                         // d C2
  field<R> em_c3_psi, em_c3_dtpsi;      // e^{-4phi/(n-1)} (C3 -| X)
  field<R> delta_c1;                    // scalar
  field<R> trk_c2;                      // Tr(K) C2
  field<R> damp_c3;                     // (1/2 Tr(K) - (4/(n-1)) rho) C3
  field<R> k_c3;                        // K(C3#)
};

template <class R>
result<std::vector<prop_record<R>>> build_prop_workspace(const trajectory<R>& traj,
                                                         deriv_scheme scheme) {
  using RS = result<std::vector<prop_record<R>>>;
  const std::size_t m = traj.states.size();
  if (m < 5)
    return RS::failure(errc::invalid_argument,
                       "propagation residuals need >= 5 recorded times, have " + std::to_string(m));
  const R inv = R(1) / R(traj.cfg.n - 1);
  const R dt = R(traj.record_dt);
  std::vector<prop_record<R>> out;
  out.reserve(m - 4);
  for (std::size_t r = 2; r + 2 < m; ++r) {
    const cauchy_state<R>& s = traj.states[r];
    const constraint_set<R>& c = traj.constraints[r];
    prop_record<R> rec;
    rec.tau = s.tau;
    auto diff = [&](auto get) {
      field<R> d = get(traj.constraints[r - 2]);
      d -= R(8) * get(traj.constraints[r - 1]);
      add_scaled(d, get(traj.constraints[r + 1]), R(8));
      d -= get(traj.constraints[r + 2]);
      d *= R(1) / (R(12) * dt);
      return d;
    };
    rec.dc1dt = diff([](const constraint_set<R>& cs) { return cs.c1; });
    rec.dc2dt = diff([](const constraint_set<R>& cs) { return cs.c2; });
    rec.dc3dt = diff([](const constraint_set<R>& cs) { return cs.c3; });

    auto gmr = make_geom(s.h, scheme);
    if (!gmr.ok()) return RS::failure(gmr.err().code, gmr.err().message);
    const geom<R>& gm = gmr.value();
    field<R> trk = trace_h(gm, s.K);
    const std::size_t npts = s.h.npts();
    field<R> em = field<R>::scalar(s.h.lat());
    for (std::size_t p = 0; p < npts; ++p) em.at(0, p) = std::exp(R(-4) * inv * s.phi.at(0, p));

    rec.trk_c1 = c.c1;
    for (int cc = 0; cc < rec.trk_c1.ncomp(); ++cc) {
      R* d = rec.trk_c1.comp(cc);
      const R* t = trk.comp(0);
      for (std::size_t p = 0; p < npts; ++p) d[p] *= t[p];
    }
    auto dc2 = exterior_derivative(c.c2, scheme);
    if (!dc2.ok()) return RS::failure(dc2.err().code, dc2.err().message);
    rec.dc2 = std::move(dc2.value());

    auto rhs = evolution_rhs(s, traj.cfg, scheme);
    if (!rhs.ok()) return RS::failure(rhs.err().code, rhs.err().message);
    auto hook = [&](const field<R>& x) -> result<field<R>> {
      auto fc = form_contract(gm, c.c3, x);
      if (!fc.ok()) return fc;
      field<R> f = std::move(fc.value());
      for (int cc = 0; cc < f.ncomp(); ++cc) {
        R* d = f.comp(cc);
        const R* e = em.comp(0);
        for (std::size_t p = 0; p < npts; ++p) d[p] *= e[p];
      }
      return result<field<R>>(std::move(f));
    };
    auto hp = hook(s.psi);
    if (!hp.ok()) return RS::failure(hp.err().code, hp.err().message);
    rec.em_c3_psi = std::move(hp.value());
    auto hd = hook(rhs.value().dpsi);
    if (!hd.ok()) return RS::failure(hd.err().code, hd.err().message);
    rec.em_c3_dtpsi = std::move(hd.value());

    auto d1 = codifferential(gm, c.c1);
    if (!d1.ok()) return RS::failure(d1.err().code, d1.err().message);
    rec.delta_c1 = std::move(d1.value());
    rec.trk_c2 = c.c2;
    {
      R* d = rec.trk_c2.comp(0);
      const R* t = trk.comp(0);
      for (std::size_t p = 0; p < npts; ++p) d[p] *= t[p];
    }
    rec.damp_c3 = c.c3;
    for (int cc = 0; cc < rec.damp_c3.ncomp(); ++cc) {
      R* d = rec.damp_c3.comp(cc);
      const R* t = trk.comp(0);
      const R* rr = s.rho.comp(0);
      for (std::size_t p = 0; p < npts; ++p) d[p] *= R(0.5) * t[p] - R(4) * inv * rr[p];
    }
    field<R> c3sharp = sharp(gm, c.c3);
    rec.k_c3 = field<R>::oneform(s.h.lat());
    const int n = traj.cfg.n;
    for (int i = 0; i < n; ++i) {
      R* d = rec.k_c3.comp(i);
      for (std::size_t p = 0; p < npts; ++p) {
        R acc(0);
        for (int j = 0; j < n; ++j) acc += s.K.at(sym2_index(n, i, j), p) * c3sharp.at(j, p);
        d[p] = acc;
      }
    }
    out.push_back(std::move(rec));
  }
  return RS(std::move(out));
}

template <class R>
std::vector<prop_point<R>> eval_variant(const std::vector<prop_record<R>>& ws,
                                        const prop_variant& v) {
  std::vector<prop_point<R>> out;
  out.reserve(ws.size());
  for (const auto& rec : ws) {
    field<R> d1 = rec.dc1dt;
    add_scaled(d1, rec.trk_c1, R(0.5));
    add_scaled(d1, rec.dc2, R(-v.dc2_w));
    add_scaled(d1, v.src_dtpsi ? rec.em_c3_dtpsi : rec.em_c3_psi, R(v.c3_w));
    field<R> d2 = rec.dc2dt;
    add_scaled(d2, rec.delta_c1, R(-v.dc1_w));
    add_scaled(d2, rec.trk_c2, R(1));
    field<R> d3 = rec.dc3dt;
    add_scaled(d3, rec.damp_c3, R(1));
    add_scaled(d3, rec.k_c3, R(-v.k_sign));
    out.push_back({rec.tau, max_abs(d1), max_abs(d2), max_abs(d3)});
  }
  return out;
}

}  // namespace detail

/// Finite-difference check of one propagation-identity variant along a
/// recorded trajectory: D_i = (d/dtau C_i by 4th-order differencing) minus the
/// variant right-hand side, max norms per interior record.
template <class R>
result<std::vector<prop_point<R>>> propagation_residuals(const trajectory<R>& traj,
                                                         const prop_variant& v,
                                                         deriv_scheme scheme = deriv_scheme::spectral) {
  auto ws = detail::build_prop_workspace(traj, scheme);
  if (!ws.ok())
    return result<std::vector<prop_point<R>>>::failure(ws.err().code, ws.err().message);
  return result<std::vector<prop_point<R>>>(detail::eval_variant(ws.value(), v));
}

template <class R>
struct calib_row {
  prop_variant v;
  R coarse{}, fine{};  // max over interior records of max(D1,D2,D3)
  double order = 0.0;
};

template <class R>
struct calib_report {
  bool conclusive = false;
  bool discriminating = true;       // false when the data cannot separate variants
  bool printed_set_conclusive = false;
  prop_variant winner{};
  std::array<double, 3> winner_orders{};  // per-identity observed orders
  R winner_fine{};
  R best_rival_fine{};
  std::vector<calib_row<R>> table;   // extended set, in extended_variants() order
  std::string note;
};

/// Refinement study over the coefficient candidates.  gen(N) must produce the
/// same analytic data sampled at resolution N; the study evolves at (N, dt)
/// and (2N, dt/2) over a fixed tau window and compares per-variant residuals.
/// Selection requires a unique variant with observed order >= 3.5 whose
/// rivals all sit above 10x its fine-level residual; anything else is
/// reported inconclusive (never silently picked).
template <class R>
result<calib_report<R>> calibrate_identities(
    const std::function<result<cauchy_state<R>>(std::size_t)>& gen, std::size_t n_coarse,
    evolution_config cfg, deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<calib_report<R>>;
  auto run = [&](std::size_t nres, const evolution_config& c)
      -> result<std::vector<detail::prop_record<R>>> {
    auto st = gen(nres);
    if (!st.ok())
      return result<std::vector<detail::prop_record<R>>>::failure(st.err().code, st.err().message);
    auto traj = evolve(st.value(), c, scheme);
    if (!traj.ok())
      return result<std::vector<detail::prop_record<R>>>::failure(traj.err().code,
                                                                  traj.err().message);
    return detail::build_prop_workspace(traj.value(), scheme);
  };
  // Simultaneous refinement: halving dt at unchanged cadence also halves the
  // record spacing, so the tau differencing refines together with the grid.
  evolution_config fine_cfg = cfg;
  fine_cfg.dt = cfg.dt / 2;
  fine_cfg.steps = cfg.steps * 2;

  auto ws_c = run(n_coarse, cfg);
  if (!ws_c.ok()) return RS::failure(ws_c.err().code, ws_c.err().message);
  auto ws_f = run(2 * n_coarse, fine_cfg);
  if (!ws_f.ok()) return RS::failure(ws_f.err().code, ws_f.err().message);

  // The fine run's interior records reach closer to the window endpoints
  // where the residual is largest; compare both levels over the coarse
  // run's tau range so the max is taken over a common window.
  double tlo = ws_c.value().front().tau, thi = ws_c.value().back().tau;
  const double tpad = 1e-9 * (thi - tlo + 1.0);
  tlo -= tpad;
  thi += tpad;
  auto resid = [tlo, thi](const std::vector<prop_point<R>>& pts) {
    R m(0);
    for (const auto& p : pts)
      if (p.tau >= tlo && p.tau <= thi) m = std::max({m, p.d1, p.d2, p.d3});
    return m;
  };
  calib_report<R> rep;
  const auto variants = extended_variants();
  rep.table.reserve(variants.size());
  R best_fine = std::numeric_limits<R>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    calib_row<R> row;
    row.v = variants[i];
    row.coarse = resid(detail::eval_variant(ws_c.value(), variants[i]));
    row.fine = resid(detail::eval_variant(ws_f.value(), variants[i]));
    row.order = row.fine > R(0) ? double(std::log2(row.coarse / row.fine)) : 99.0;
    if (row.fine < best_fine) {
      best_fine = row.fine;
      best_idx = i;
    }
    rep.table.push_back(std::move(row));
  }

  // Degenerate data: all variants at roundoff, or all indistinguishable (a
  // homogeneous trajectory kills every variant-dependent term, leaving the
  // same residual for each candidate).  Refuse to name a winner.
  R worst_fine(0);
  for (const auto& row : rep.table) worst_fine = std::max(worst_fine, row.fine);
  if (worst_fine <= R(2) * best_fine + R(1e-13)) {
    rep.discriminating = false;
    rep.conclusive = false;
    rep.winner = rep.table[best_idx].v;
    rep.winner_fine = best_fine;
    rep.best_rival_fine = worst_fine;
    rep.note = "variant residuals are indistinguishable; data does not discriminate";
    return RS(std::move(rep));
  }

  const calib_row<R>& w = rep.table[best_idx];
  bool unique = true;
  R best_rival = std::numeric_limits<R>::infinity();
  for (std::size_t i = 0; i < rep.table.size(); ++i) {
    if (i == best_idx) continue;
    best_rival = std::min(best_rival, rep.table[i].fine);
    if (rep.table[i].fine <= R(10) * w.fine) unique = false;
  }
  rep.winner = w.v;
  rep.winner_fine = w.fine;
  rep.best_rival_fine = best_rival;
  if (w.order >= 3.5 && unique) {
    rep.conclusive = true;
    // per-identity orders for the winner
    auto pc = detail::eval_variant(ws_c.value(), w.v);
    auto pf = detail::eval_variant(ws_f.value(), w.v);
    R c1(0), c2(0), c3(0), f1(0), f2(0), f3(0);
    for (const auto& p : pc)
      if (p.tau >= tlo && p.tau <= thi)
        c1 = std::max(c1, p.d1), c2 = std::max(c2, p.d2), c3 = std::max(c3, p.d3);
    for (const auto& p : pf)
      if (p.tau >= tlo && p.tau <= thi)
        f1 = std::max(f1, p.d1), f2 = std::max(f2, p.d2), f3 = std::max(f3, p.d3);
    rep.winner_orders = {f1 > R(0) ? double(std::log2(c1 / f1)) : 99.0,
                         f2 > R(0) ? double(std::log2(c2 / f2)) : 99.0,
                         f3 > R(0) ? double(std::log2(c3 / f3)) : 99.0};
  } else {
    rep.conclusive = false;
    rep.note = unique ? "best variant converges at order < 3.5" : "no unique convergent variant";
  }

  // Verdict restricted to the printed candidate set.
  const auto printed = printed_variants();
  R pbest = std::numeric_limits<R>::infinity();
  std::size_t pidx = 0;
  for (std::size_t i = 0; i < printed.size(); ++i) {
    R f = resid(detail::eval_variant(ws_f.value(), printed[i]));
    if (f < pbest) {
      pbest = f;
      pidx = i;
    }
  }
  {
    R pc = resid(detail::eval_variant(ws_c.value(), printed[pidx]));
    const double order = pbest > R(0) ? double(std::log2(pc / pbest)) : 99.0;
    bool punique = true;
    for (std::size_t i = 0; i < printed.size(); ++i) {
      if (i == pidx) continue;
      if (resid(detail::eval_variant(ws_f.value(), printed[i])) <= R(10) * pbest) punique = false;
    }
    rep.printed_set_conclusive = order >= 3.5 && punique;
  }
  return RS(std::move(rep));
}

/// Rebuild the ambient configuration g = dtau^2 + h_tau, H = dtau ^ psi_tau
/// + (flux0 + d theta_tau), phi = phi_tau on the cylinder spanned by the
/// recorded snapshots.
template <class R>
result<soliton_fields<R>> assemble_spacetime(const trajectory<R>& traj,
                                             deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<soliton_fields<R>>;
  const std::size_t m = traj.states.size();
  if (m < 9)
    return RS::failure(errc::invalid_argument,
                       "spacetime assembly needs >= 9 uniform snapshots, have " + std::to_string(m));
  const lattice& slat = traj.states[0].h.lat();
  const int n = traj.cfg.n;
  auto cylr = make_cylinder(slat, m, traj.record_dt);
  if (!cylr.ok()) return RS::failure(cylr.err().code, cylr.err().message);
  const lattice cyl = cylr.value();
  const std::size_t snp = slat.npts();
  const int d = n + 1;

  field<R> g = field<R>::sym2(cyl);
  field<R> phi = field<R>::scalar(cyl);
  field<R> H = field<R>::kform(cyl, 3);
  for (std::size_t r = 0; r < m; ++r) {
    const cauchy_state<R>& s = traj.states[r];
    auto Hs = assemble_flux(s, scheme);
    if (!Hs.ok()) return RS::failure(Hs.err().code, Hs.err().message);
    const std::size_t base = r * snp;
    for (std::size_t q = 0; q < snp; ++q) g.at(sym2_index(d, 0, 0), base + q) = R(1);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const int src = sym2_index(n, i, j);
        const int dst = sym2_index(d, i + 1, j + 1);
        for (std::size_t q = 0; q < snp; ++q) g.at(dst, base + q) = s.h.at(src, q);
      }
    for (std::size_t q = 0; q < snp; ++q) phi.at(0, base + q) = s.phi.at(0, q);
    // dtau ^ psi: components (0, i+1, j+1) carry psi_{ij}
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const auto [sc, ss] = antisym_lookup(n, 2, {i, j, 0, 0});
        const auto [dc, ds] = antisym_lookup(d, 3, {0, i + 1, j + 1, 0});
        for (std::size_t q = 0; q < snp; ++q)
          H.at(dc, base + q) += R(ds * ss) * s.psi.at(sc, q);
      }
    // spatial flux block (nonempty only for a 3d slice)
    if (n >= 3) {
      const field<R>& hs = Hs.value();
      for (int c = 0; c < hs.ncomp(); ++c) {
        const auto t = antisym_tuples(n, 3)[std::size_t(c)];
        const auto [dc, ds] = antisym_lookup(d, 3, {t[0] + 1, t[1] + 1, t[2] + 1, 0});
        for (std::size_t q = 0; q < snp; ++q) H.at(dc, base + q) += R(ds) * hs.at(c, q);
      }
    }
  }
  return make_soliton(std::move(g), std::move(H), std::move(phi), std::nullopt, std::nullopt,
                      scheme);
}

template <class R>
struct reduction_norms {
  R einstein{}, maxwell{}, dilaton{};
};

/// Quantitative form of the three reduction lemmas: the assembled cylinder
/// configuration satisfies the ambient system up to truncation, measured on
/// interior tau slices.
template <class R>
result<reduction_norms<R>> reduction_equivalence(const trajectory<R>& traj,
                                                 deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<reduction_norms<R>>;
  auto s = assemble_spacetime(traj, scheme);
  if (!s.ok()) return RS::failure(s.err().code, s.err().message);
  auto r = einstein_residuals(s.value(), R(traj.cfg.lambda), traj.cfg.n);
  if (!r.ok()) return RS::failure(r.err().code, r.err().message);
  reduction_norms<R> out;
  out.einstein = interior_max_abs(r.value().einstein);
  out.maxwell = interior_max_abs(r.value().maxwell);
  out.dilaton = interior_max_abs(r.value().dilaton);
  return RS(std::move(out));
}

/// The evolution equations are invariant under (tau, K, rho, psi) ->
/// (-tau, -K, -rho, -psi); useful for reversibility checks.
template <class R>
cauchy_state<R> time_reflect(cauchy_state<R> s) {
  s.K *= R(-1);
  s.rho *= R(-1);
  s.psi *= R(-1);
  s.tau = -s.tau;
  return s;
}

}  // namespace gf
