#pragma once

// Initial-data construction on the flat two-torus.  The two-form sector is
// fixed by the volume-form ansatz psi = c e^{4 phi} nu_h, the momentum
// constraint by Theta = ((intF)(phi) + k) h + Theta_o with rho = -F(phi),
// and the Hamiltonian constraint reduces, after writing h = e^u h0 for a
// flat background h0, to the scalar elliptic problem
//
//   G(u) = delta du + A e^u - B e^{-u} - w = 0
//
// solved here by Newton iteration with a preconditioned conjugate-gradient
// linear solve.  The solvable branch requires A >= 0 pointwise, Theta_o = 0
// (else B < 0), and nonconstant phi (else the integral hypothesis on w
// fails); violations are hard errors, never clamped.

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "gerbeflow/cauchy.hpp"
#include "gerbeflow/fft.hpp"

namespace gf {

/// Separated-ansatz parameters.  F and intF are a callable pair (intF an
/// antiderivative of F), both evaluated pointwise at phi; leaving both empty
/// means F == 0.  theta_o, when present, must be h-traceless and
/// divergence-free, and must vanish for the Hamiltonian solve.
template <class R>
struct ansatz_params {
  R c = R(1);
  R k = R(0);
  std::function<R(R)> F;
  std::function<R(R)> intF;
  std::optional<field<R>> theta_o;
  field<R> phi;
};

/// psi = c e^{4 phi} nu_h on a two-dimensional slice.
template <class R>
result<field<R>> psi_from_phi(R c, const field<R>& phi, const field<R>& h) {
  using RF = result<field<R>>;
  const lattice& lat = h.lat();
  if (lat.naxes() != 2)
    return RF::failure(errc::invalid_argument, "flux ansatz: slice must be two-dimensional");
  if (h.rank() != 2 || h.sym() != symmetry::sym)
    return RF::failure(errc::invalid_argument, "flux ansatz: h must be a sym2 metric");
  if (phi.rank() != 0 || !(phi.lat() == lat))
    return RF::failure(errc::invalid_argument, "flux ansatz: phi must be a scalar on the slice");
  field<R> out = field<R>::kform(lat, 2);
  R* dst = out.comp(0);
  for (std::size_t p = 0; p < lat.npts(); ++p) {
    const R a = h.at(0, p), b = h.at(1, p), d = h.at(2, p);
    const R det = a * d - b * b;
    if (!(a > R(0)) || !(det > R(0)))
      return RF::failure(errc::invalid_argument, "flux ansatz: h is not positive definite");
    dst[p] = c * std::exp(R(4) * phi.at(0, p)) * std::sqrt(det);
  }
  return RF(std::move(out));
}

template <class R>
struct momentum_ansatz {
  field<R> theta;  // second fundamental form (half the metric velocity)
  field<R> rho;
};

/// Theta = ((intF)(phi) + k) h + Theta_o, rho = -F(phi).  The trace-vs-rho
/// cancellation in the momentum constraint needs the slice dimension to be 2.
template <class R>
result<momentum_ansatz<R>> build_momentum_ansatz(const ansatz_params<R>& p, const field<R>& h,
                                                 deriv_scheme scheme = deriv_scheme::spectral) {
  using RM = result<momentum_ansatz<R>>;
  const lattice& lat = h.lat();
  if (lat.naxes() != 2)
    return RM::failure(errc::invalid_argument, "momentum ansatz: slice must be two-dimensional");
  if (bool(p.F) != bool(p.intF))
    return RM::failure(errc::invalid_argument,
                       "momentum ansatz: F and its antiderivative must be supplied together");
  if (p.phi.rank() != 0 || !(p.phi.lat() == lat))
    return RM::failure(errc::invalid_argument, "momentum ansatz: phi must be a scalar on the slice");
  auto gmr = make_geom(h, scheme);
  if (!gmr.ok()) return RM::failure(gmr.err().code, gmr.err().message);

  momentum_ansatz<R> out{field<R>::sym2(lat), field<R>::scalar(lat)};
  const std::size_t n = lat.npts();
  for (std::size_t pt = 0; pt < n; ++pt) {
    const R ph = p.phi.at(0, pt);
    const R f = (p.intF ? p.intF(ph) : R(0)) + p.k;
    for (int c = 0; c < 3; ++c) out.theta.at(c, pt) = f * h.at(c, pt);
    out.rho.at(0, pt) = p.F ? -p.F(ph) : R(0);
  }
  if (p.theta_o) {
    const field<R>& to = *p.theta_o;
    if (to.rank() != 2 || to.sym() != symmetry::sym || !(to.lat() == lat))
      return RM::failure(errc::invalid_argument, "momentum ansatz: theta_o must be sym2 on the slice");
    const R scale = R(1) + max_abs(to);
    if (max_abs(trace_h(gmr.value(), to)) > R(1e-12) * scale)
      return RM::failure(errc::invalid_argument, "momentum ansatz: theta_o must be traceless");
    if (max_abs(div_symtensor(gmr.value(), to)) > R(1e-8) * scale)
      return RM::failure(errc::invalid_argument, "momentum ansatz: theta_o must be divergence-free");
    out.theta += to;
  }
  return RM(std::move(out));
}

struct newton_options {
  double tol = 1e-10;       // converged when max|G| <= tol
  int max_iters = 50;
  double cg_tol = 1e-12;    // relative l2 residual of the inner solve
  int cg_max_iters = 2000;
};

template <class R>
struct newton_report {
  field<R> u;
  std::vector<R> residuals;  // max|G| at entry to each iteration, then final
  int iters = 0;
};

namespace detail {

/// (mean(h^{ab}) k_a k_b + cbar)^{-1} by full-lattice FFT.  For a
/// constant-coefficient background this inverts delta d + cbar exactly on
/// the resolved modes, which is all a preconditioner needs.
template <class R>
void fourier_precondition(const lattice& g, const std::vector<R>& hinv_mean, R cbar, const R* in,
                          R* out) {
  using api = fftw_api<R>;
  const std::size_t n = g.npts();
  scratch_buf<R> buf(n);
  for (std::size_t p = 0; p < n; ++p) {
    buf.ptr[p][0] = in[p];
    buf.ptr[p][1] = R(0);
  }
  auto fwd = plan_cache<R>::get(g, -1, FFTW_FORWARD);
  api::execute_dft(fwd, buf.ptr, buf.ptr);
  const int d = g.naxes();
  const R two_pi = R(2) * std::acos(R(-1));
  for (std::size_t p = 0; p < n; ++p) {
    R kap[kMaxAxes] = {};
    for (int a = 0; a < d; ++a) {
      const std::size_t na = g.size(a);
      const std::size_t m = (p / g.stride(a)) % na;
      if (2 * m == na)
        kap[a] = R(0);  // Nyquist, matching the derivative convention
      else
        kap[a] = two_pi / R(g.length(a)) * (m <= na / 2 ? R(m) : -R(na - m));
    }
    R sym(0);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        sym += (i == j ? R(1) : R(2)) * hinv_mean[std::size_t(sym2_index(d, i, j))] * kap[i] * kap[j];
    const R den = sym + cbar;
    buf.ptr[p][0] /= den;
    buf.ptr[p][1] /= den;
  }
  auto bwd = plan_cache<R>::get(g, -1, FFTW_BACKWARD);
  api::execute_dft(bwd, buf.ptr, buf.ptr);
  const R scale = R(1) / R(n);
  for (std::size_t p = 0; p < n; ++p) out[p] = buf.ptr[p][0] * scale;
}

/// Preconditioned CG for (delta d + m) x = b with m >= 0, mean(m) > 0.
/// Assumes a constant-coefficient metric so the operator is self-adjoint in
/// plain l2.
template <class R>
result<field<R>> pcg_helmholtz(const geom<R>& gm, const field<R>& m, const field<R>& b, R rel_tol,
                               int max_iters) {
  using RF = result<field<R>>;
  const lattice& lat = b.lat();
  const std::size_t n = lat.npts();

  auto apply = [&](const field<R>& x) -> result<field<R>> {
    auto dx = exterior_derivative(x, gm.scheme);
    if (!dx.ok()) return dx;
    auto lap = codifferential(gm, dx.value());
    if (!lap.ok()) return lap;
    field<R> out = std::move(lap.value());
    R* o = out.comp(0);
    const R* mm = m.comp(0);
    const R* xx = x.comp(0);
    for (std::size_t p = 0; p < n; ++p) o[p] += mm[p] * xx[p];
    return result<field<R>>(std::move(out));
  };
  auto dot = [n](const field<R>& a, const field<R>& c) {
    R acc(0);
    const R* pa = a.comp(0);
    const R* pc = c.comp(0);
    for (std::size_t p = 0; p < n; ++p) acc += pa[p] * pc[p];
    return acc;
  };

  std::vector<R> hbar(std::size_t(gm.d * (gm.d + 1) / 2), R(0));
  for (std::size_t c = 0; c < hbar.size(); ++c) {
    const R* v = gm.hinv.comp(int(c));
    R acc(0);
    for (std::size_t p = 0; p < n; ++p) acc += v[p];
    hbar[c] = acc / R(n);
  }
  R cbar(0);
  {
    const R* mm = m.comp(0);
    for (std::size_t p = 0; p < n; ++p) cbar += mm[p];
    cbar = std::max(cbar / R(n), R(1e-30));
  }

  field<R> x = field<R>::scalar(lat);
  field<R> r = b;
  const R bnorm = std::sqrt(dot(b, b));
  if (bnorm == R(0)) return RF(std::move(x));
  field<R> z = field<R>::scalar(lat);
  fourier_precondition(lat, hbar, cbar, r.comp(0), z.comp(0));
  field<R> pdir = z;
  R rz = dot(r, z);
  for (int it = 0; it < max_iters; ++it) {
    auto ap = apply(pdir);
    if (!ap.ok()) return ap;
    const R alpha = rz / dot(pdir, ap.value());
    {
      R* px = x.comp(0);
      R* pr = r.comp(0);
      const R* pp = pdir.comp(0);
      const R* pa = ap.value().comp(0);
      for (std::size_t p = 0; p < n; ++p) {
        px[p] += alpha * pp[p];
        pr[p] -= alpha * pa[p];
      }
    }
    if (std::sqrt(dot(r, r)) <= rel_tol * bnorm) return RF(std::move(x));
    fourier_precondition(lat, hbar, cbar, r.comp(0), z.comp(0));
    const R rz_next = dot(r, z);
    const R beta = rz_next / rz;
    rz = rz_next;
    R* pp = pdir.comp(0);
    const R* pz = z.comp(0);
    for (std::size_t p = 0; p < n; ++p) pp[p] = pz[p] + beta * pp[p];
  }
  return RF::failure(errc::solver_failure, "conjugate gradient did not reach the requested tolerance");
}

template <class R>
std::string residual_history_str(const std::vector<R>& rs) {
  std::string s;
  char num[32];
  for (const R& r : rs) {
    std::snprintf(num, sizeof num, "%.3e", double(r));
    if (!s.empty()) s += ", ";
    s += num;
  }
  return s;
}

}  // namespace detail

/// Newton solve of delta du + A e^u - B e^{-u} - w = 0 on a flat
/// constant-coefficient background.  Hypotheses (A, B >= 0, integral of
/// A - B and of w positive) are checked up front and failures are hard
/// errors.  Default start: u0 = log(max(int w / int A, 1e-6)).
template <class R>
result<newton_report<R>> solve_exp_elliptic(
    const field<R>& h_mu, const field<R>& A, const field<R>& B, const field<R>& w,
    std::optional<field<std::type_identity_t<R>>> u0 = std::nullopt, newton_options opts = {},
    deriv_scheme scheme = deriv_scheme::spectral) {
  using RN = result<newton_report<R>>;
  const lattice& lat = h_mu.lat();
  for (const field<R>* f : {&A, &B, &w})
    if (f->rank() != 0 || !(f->lat() == lat))
      return RN::failure(errc::invalid_argument,
                         "elliptic solve: A, B, w must be scalars on the metric's lattice");
  for (int c = 0; c < h_mu.ncomp(); ++c) {
    R lo = h_mu.at(c, 0), hi = lo;
    for (std::size_t p = 1; p < lat.npts(); ++p) {
      lo = std::min(lo, h_mu.at(c, p));
      hi = std::max(hi, h_mu.at(c, p));
    }
    if (hi - lo > R(1e-12) * (R(1) + std::abs(hi)))
      return RN::failure(errc::invalid_argument,
                         "elliptic solve: background metric must have constant coefficients");
  }
  auto gmr = make_geom(h_mu, scheme);
  if (!gmr.ok()) return RN::failure(gmr.err().code, gmr.err().message);
  const geom<R>& gm = gmr.value();

  auto minval = [&](const field<R>& f) {
    R lo = f.at(0, 0);
    for (std::size_t p = 1; p < lat.npts(); ++p) lo = std::min(lo, f.at(0, p));
    return lo;
  };
  if (minval(A) < -R(1e-12) * (R(1) + max_abs(A)))
    return RN::failure(errc::invalid_argument, "hypothesis failed: A must be non-negative");
  if (minval(B) < -R(1e-12) * (R(1) + max_abs(B)))
    return RN::failure(errc::invalid_argument, "hypothesis failed: B must be non-negative");
  field<R> amb = A;
  amb -= B;
  const R int_amb = integrate(gm, amb);
  if (!(int_amb > R(0)))
    return RN::failure(errc::invalid_argument, "hypothesis failed: integral of A - B must be positive");
  const R int_w = integrate(gm, w);
  if (!(int_w > R(0)))
    return RN::failure(errc::invalid_argument, "hypothesis failed: integral of w must be positive");

  const std::size_t n = lat.npts();
  newton_report<R> rep;
  if (u0) {
    if (u0->rank() != 0 || !(u0->lat() == lat))
      return RN::failure(errc::invalid_argument, "elliptic solve: u0 must be a scalar on the lattice");
    rep.u = *u0;
  } else {
    rep.u = field<R>::scalar(lat);
    const R g0 = std::log(std::max(int_w / integrate(gm, A), R(1e-6)));
    R* pu = rep.u.comp(0);
    for (std::size_t p = 0; p < n; ++p) pu[p] = g0;
  }

  field<R> eu = field<R>::scalar(lat), emu = field<R>::scalar(lat);
  for (int it = 0;; ++it) {
    {
      const R* pu = rep.u.comp(0);
      R* pe = eu.comp(0);
      R* pm = emu.comp(0);
      for (std::size_t p = 0; p < n; ++p) {
        pe[p] = std::exp(pu[p]);
        pm[p] = R(1) / pe[p];
      }
    }
    auto du = exterior_derivative(rep.u, scheme);
    if (!du.ok()) return RN::failure(du.err().code, du.err().message);
    auto lap = codifferential(gm, du.value());
    if (!lap.ok()) return RN::failure(lap.err().code, lap.err().message);
    field<R> G = std::move(lap.value());
    {
      R* pg = G.comp(0);
      const R* pa = A.comp(0);
      const R* pb = B.comp(0);
      const R* pw = w.comp(0);
      const R* pe = eu.comp(0);
      const R* pm = emu.comp(0);
      for (std::size_t p = 0; p < n; ++p) pg[p] += pa[p] * pe[p] - pb[p] * pm[p] - pw[p];
    }
    if (!G.finite())
      return RN::failure(errc::numerical, "elliptic solve: non-finite residual");
    const R res = max_abs(G);
    rep.residuals.push_back(res);
    rep.iters = it;
    if (res <= R(opts.tol)) return RN(std::move(rep));
    if (it >= opts.max_iters)
      return RN::failure(errc::solver_failure,
                         "Newton did not converge; residual history: " +
                             detail::residual_history_str(rep.residuals));
    // linearization: (delta d + A e^u + B e^{-u}) du = -G
    field<R> m = field<R>::scalar(lat);
    {
      R* pm2 = m.comp(0);
      const R* pa = A.comp(0);
      const R* pb = B.comp(0);
      const R* pe = eu.comp(0);
      const R* pmu = emu.comp(0);
      for (std::size_t p = 0; p < n; ++p) pm2[p] = pa[p] * pe[p] + pb[p] * pmu[p];
    }
    G *= R(-1);
    auto step = detail::pcg_helmholtz(gm, m, G, R(opts.cg_tol), opts.cg_max_iters);
    if (!step.ok()) return RN::failure(step.err().code, step.err().message);
    rep.u += step.value();
  }
}

template <class R>
struct constraint_solution {
  cauchy_state<R> state;
  field<R> u;                   // conformal exponent, h = e^u h0
  std::vector<R> newton_residuals;
  int newton_iters = 0;
  R c1_max{}, c2_max{}, c3_max{};
};

/// End-to-end initial data on the flat branch: builds the ansatz fields,
/// reduces the Hamiltonian constraint to the elliptic problem with
///   A = F(phi)^2 + (c^2/2) e^{4 phi} - 2 (k + (intF)(phi))^2,
///   B = 0,  w = |d phi|^2 - s,
/// solves for u, and returns the assembled state (lambda = 0, H = 0 on a
/// two-dimensional slice) together with its constraint residuals.
template <class R>
result<constraint_solution<R>> solve_conformal_constraints(
    const ansatz_params<R>& p, const field<R>& h0, newton_options opts = {},
    deriv_scheme scheme = deriv_scheme::spectral) {
  using RC = result<constraint_solution<R>>;
  const lattice& lat = h0.lat();
  if (lat.naxes() != 2)
    return RC::failure(errc::invalid_argument, "constraint solve: slice must be two-dimensional");
  if (bool(p.F) != bool(p.intF))
    return RC::failure(errc::invalid_argument,
                       "constraint solve: F and its antiderivative must be supplied together");
  if (p.phi.rank() != 0 || !(p.phi.lat() == lat))
    return RC::failure(errc::invalid_argument, "constraint solve: phi must be a scalar on the slice");
  if (p.theta_o && max_abs(*p.theta_o) > R(0))
    return RC::failure(errc::invalid_argument,
                       "constraint solve: theta_o must vanish on the solvable branch "
                       "(nonzero theta_o makes B negative)");
  {
    R lo = p.phi.at(0, 0), hi = lo;
    for (std::size_t q = 1; q < lat.npts(); ++q) {
      lo = std::min(lo, p.phi.at(0, q));
      hi = std::max(hi, p.phi.at(0, q));
    }
    if (hi - lo < R(1e-14) * (R(1) + std::abs(hi)))
      return RC::failure(errc::invalid_argument,
                         "constraint solve: phi is constant, so the solvability hypothesis "
                         "integrate(|d phi|^2) > 0 fails");
  }
  auto gm0r = make_geom(h0, scheme);
  if (!gm0r.ok()) return RC::failure(gm0r.err().code, gm0r.err().message);
  const geom<R>& gm0 = gm0r.value();

  const std::size_t n = lat.npts();
  field<R> A = field<R>::scalar(lat);
  for (std::size_t q = 0; q < n; ++q) {
    const R ph = p.phi.at(0, q);
    const R fv = p.F ? p.F(ph) : R(0);
    const R f = (p.intF ? p.intF(ph) : R(0)) + p.k;
    A.at(0, q) = fv * fv + p.c * p.c / R(2) * std::exp(R(4) * ph) - R(2) * f * f;
  }
  {
    R lo = A.at(0, 0);
    for (std::size_t q = 1; q < n; ++q) lo = std::min(lo, A.at(0, q));
    if (lo < -R(1e-12) * (R(1) + max_abs(A))) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", double(lo));
      return RC::failure(errc::invalid_argument,
                         std::string("constraint solve: pointwise solvability A >= 0 violated "
                                     "(min A = ") + buf + ")");
    }
  }
  auto dphi = exterior_derivative(p.phi, scheme);
  if (!dphi.ok()) return RC::failure(dphi.err().code, dphi.err().message);
  field<R> w = norm2_form(gm0, dphi.value());
  w -= scalar_curvature(gm0);
  field<R> B = field<R>::scalar(lat);

  auto sol = solve_exp_elliptic(h0, A, B, w, std::nullopt, opts, scheme);
  if (!sol.ok()) return RC::failure(sol.err().code, sol.err().message);
  newton_report<R>& rep = sol.value();

  field<R> h = h0;
  for (int c = 0; c < 3; ++c) {
    R* dst = h.comp(c);
    const R* pu = rep.u.comp(0);
    for (std::size_t q = 0; q < n; ++q) dst[q] *= std::exp(pu[q]);
  }
  ansatz_params<R> pm = p;
  pm.theta_o.reset();
  auto mom = build_momentum_ansatz(pm, h, scheme);
  if (!mom.ok()) return RC::failure(mom.err().code, mom.err().message);
  field<R> K = mom.value().theta;
  K *= R(2);
  auto psi = psi_from_phi(p.c, p.phi, h);
  if (!psi.ok()) return RC::failure(psi.err().code, psi.err().message);

  auto st = make_cauchy_state(h, K, p.phi, mom.value().rho, psi.value(), field<R>::kform(lat, 2),
                              field<R>::kform(lat, 3), 0.0, 2, scheme);
  if (!st.ok()) return RC::failure(st.err().code, st.err().message);

  evolution_config ccfg;
  ccfg.n = 2;
  ccfg.lambda = 0.0;
  auto cres = constraint_residuals(st.value(), ccfg, scheme);
  if (!cres.ok()) return RC::failure(cres.err().code, cres.err().message);

  constraint_solution<R> out{std::move(st.value()), std::move(rep.u), std::move(rep.residuals),
                             rep.iters, cres.value().c1_max, cres.value().c2_max,
                             cres.value().c3_max};
  return RC(std::move(out));
}

}  // namespace gf
