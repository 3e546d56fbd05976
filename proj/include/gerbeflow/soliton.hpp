#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>

#include "gerbeflow/frames.hpp"
#include "gerbeflow/geometry.hpp"

namespace gf {

/// Full-dimensional soliton configuration.  v holds vector (contravariant)
/// components and defaults to sharp(d phi); alpha is a closed 2-form
/// defaulting to zero.  Closure of H (and alpha, if supplied) is validated
/// at construction against a truncation-scaled threshold.
template <class R>
struct soliton_fields {
  field<R> g;      // sym2
  field<R> H;      // 3-form
  field<R> phi;    // scalar
  field<R> v;      // rank-1, vector components
  field<R> alpha;  // 2-form
  deriv_scheme scheme = deriv_scheme::spectral;
};

namespace detail {

/// Expected |d f| for an analytically closed form f, estimated from the data:
/// along every axis handled by FD4 the leading truncation is dx^4/30 |d^5f|,
/// with the fifth derivative measured by repeated differencing; spectral axes
/// only contribute a roundoff floor.  The hard error fires at 100x this.
template <class R>
R closure_expectation(const field<R>& f, deriv_scheme scheme) {
  const lattice& g = f.lat();
  const R scale = max_abs(f);
  R dx_min(0);
  for (int a = 0; a < g.naxes(); ++a) {
    const R dx = R(g.spacing(a));
    if (dx_min == R(0) || dx < dx_min) dx_min = dx;
  }
  R est = R(1e-14) * scale / dx_min + R(1e-14);
  for (int a = 0; a < g.naxes(); ++a) {
    if (g.periodic(a) && scheme != deriv_scheme::fd4) continue;
    field<R> d5 = f;
    for (int pass = 0; pass < 5; ++pass) d5 = partial_derivative(d5, a, deriv_scheme::fd4);
    const R dx = R(g.spacing(a));
    est += dx * dx * dx * dx / R(30) * max_abs(d5);
  }
  return est;
}

template <class R>
status check_closed(const field<R>& f, deriv_scheme scheme, const std::string& name) {
  if (f.rank() >= f.lat().naxes()) return ok();  // top degree: closed identically
  auto df = exterior_derivative(f, scheme);
  if (!df.ok()) return fail(df.err().code, df.err().message);
  const R got = max_abs(df.value());
  const R allowed = R(100) * closure_expectation(f, scheme);
  if (got > allowed)
    return fail(errc::invalid_argument,
                name + " is not closed: max |d " + name + "| = " + std::to_string(double(got)) +
                    ", allowed " + std::to_string(double(allowed)));
  return ok();
}

}  // namespace detail

template <class R>
result<soliton_fields<R>> make_soliton(field<R> g, field<R> H, field<R> phi,
                                       std::optional<field<std::type_identity_t<R>>> v = std::nullopt,
                                       std::optional<field<std::type_identity_t<R>>> alpha = std::nullopt,
                                       deriv_scheme scheme = deriv_scheme::spectral) {
  using RS = result<soliton_fields<R>>;
  const lattice& lat = g.lat();
  const int d = lat.naxes();
  if (g.rank() != 2 || g.sym() != symmetry::sym)
    return RS::failure(errc::invalid_argument, "soliton fields: g must be a metric");
  if (phi.rank() != 0 || !(phi.lat() == lat))
    return RS::failure(errc::invalid_argument, "soliton fields: phi must be a scalar on g's lattice");
  if (H.rank() != 3 || !(H.lat() == lat))
    return RS::failure(errc::invalid_argument, "soliton fields: H must be a 3-form on g's lattice");
  if (d < 3 && max_abs(H) != R(0))
    return RS::failure(errc::invalid_argument, "soliton fields: nonzero flux needs ambient dim >= 3");
  if (!g.finite() || !H.finite() || !phi.finite())
    return RS::failure(errc::invalid_argument, "soliton fields: non-finite input");

  auto gm = make_geom(g, scheme);
  if (!gm.ok()) return RS::failure(gm.err().code, gm.err().message);

  if (auto st = detail::check_closed(H, scheme, "H"); !st.ok())
    return RS::failure(st.err().code, st.err().message);

  soliton_fields<R> s;
  s.g = std::move(g);
  s.H = std::move(H);
  s.phi = std::move(phi);
  s.scheme = scheme;

  if (v.has_value()) {
    if (v->rank() != 1 || !(v->lat() == lat))
      return RS::failure(errc::invalid_argument, "soliton fields: v must be rank 1 on g's lattice");
    s.v = std::move(*v);
  } else {
    s.v = sharp(gm.value(), exterior_derivative(s.phi, scheme).value());
  }

  if (alpha.has_value()) {
    if (alpha->rank() != 2 || alpha->sym() != symmetry::antisym || !(alpha->lat() == lat))
      return RS::failure(errc::invalid_argument, "soliton fields: alpha must be a 2-form");
    if (auto st = detail::check_closed(*alpha, scheme, "alpha"); !st.ok())
      return RS::failure(st.err().code, st.err().message);
    s.alpha = std::move(*alpha);
  } else {
    s.alpha = field<R>::kform(lat, 2);
  }
  return RS(std::move(s));
}

template <class R>
struct string_resid {
  field<R> einstein;  // sym2
  field<R> maxwell;   // 2-form
};

/// E  = Ric + 1/2 L_v g - 1/2 H o H
/// Mx = delta H + iota_v H + alpha
template <class R>
result<string_resid<R>> string_residuals(const soliton_fields<R>& s) {
  using RS = result<string_resid<R>>;
  auto gm_r = make_geom(s.g, s.scheme);
  if (!gm_r.ok()) return RS::failure(gm_r.err().code, gm_r.err().message);
  const geom<R>& gm = gm_r.value();

  string_resid<R> out;
  field<R> vflat = flat(gm, s.v);
  out.einstein = ricci(gm);
  field<R> lie = lie_metric(gm, vflat);
  lie *= R(0.5);
  out.einstein += lie;
  field<R> hh = circ_form(gm, s.H, s.H).value();
  hh *= R(0.5);
  out.einstein -= hh;

  out.maxwell = codifferential(gm, s.H).value();
  out.maxwell += form_contract(gm, vflat, s.H).value();
  out.maxwell += s.alpha;
  return RS(std::move(out));
}

/// lambda = delta d phi + |d phi|^2 - |H|^2 (gradient case).
template <class R>
result<field<R>> lambda_field(const soliton_fields<R>& s) {
  using RF = result<field<R>>;
  auto gm_r = make_geom(s.g, s.scheme);
  if (!gm_r.ok()) return RF::failure(gm_r.err().code, gm_r.err().message);
  const geom<R>& gm = gm_r.value();
  field<R> dphi = exterior_derivative(s.phi, s.scheme).value();
  field<R> out = codifferential(gm, dphi).value();
  out += norm2_form(gm, dphi);
  out -= norm2_form(gm, s.H);
  return RF(std::move(out));
}

/// Reporting helper: (mean, max deviation from the mean).
template <class R>
std::pair<R, R> field_mean_maxdev(const field<R>& f) {
  R mean(0);
  for (const R& v : f.raw()) mean += v;
  mean /= R(f.raw().size());
  R dev(0);
  for (const R& v : f.raw()) dev = std::max(dev, std::abs(v - mean));
  return {mean, dev};
}

template <class R>
struct einstein_resid {
  field<R> einstein;  // sym2
  field<R> maxwell;   // 2-form
  field<R> dilaton;   // scalar
};

/// The Einstein-frame system evaluated on (g_E = s.g, H, phi):
///   Ric - 1/(n-1) dphi x dphi + 1/(n-1) (e^{-4phi/(n-1)} |H|^2
///     + lambda e^{2phi/(n-1)}) g - 1/2 e^{-4phi/(n-1)} H o H
///   delta H + 4/(n-1) H(dphi sharp)
///   delta dphi - e^{-4phi/(n-1)} |H|^2 - lambda e^{2phi/(n-1)}
template <class R>
result<einstein_resid<R>> einstein_residuals(const soliton_fields<R>& s, R lambda, int n) {
  using RS = result<einstein_resid<R>>;
  if (n < 2 || s.g.lat().naxes() != n + 1)
    return RS::failure(errc::invalid_argument, "einstein residuals: ambient dim must be n+1, n >= 2");
  auto gm_r = make_geom(s.g, s.scheme);
  if (!gm_r.ok()) return RS::failure(gm_r.err().code, gm_r.err().message);
  const geom<R>& gm = gm_r.value();
  const R inv = R(1) / R(n - 1);
  const std::size_t np = s.g.npts();

  field<R> dphi = exterior_derivative(s.phi, s.scheme).value();
  field<R> h2 = norm2_form(gm, s.H);

  einstein_resid<R> out;
  out.einstein = ricci(gm);
  {
    field<R> oo = outer_sym(dphi, dphi);
    oo *= -inv;
    out.einstein += oo;
    field<R> hh = circ_form(gm, s.H, s.H).value();
    for (int c = 0; c < out.einstein.ncomp(); ++c)
      for (std::size_t p = 0; p < np; ++p) {
        const R em = std::exp(R(-4) * s.phi.at(0, p) * inv);
        const R ep = std::exp(R(2) * s.phi.at(0, p) * inv);
        out.einstein.at(c, p) += inv * (em * h2.at(0, p) + lambda * ep) * s.g.at(c, p) -
                                 R(0.5) * em * hh.at(c, p);
      }
  }

  out.maxwell = codifferential(gm, s.H).value();
  {
    field<R> ins = form_contract(gm, dphi, s.H).value();
    ins *= R(4) * inv;
    out.maxwell += ins;
  }

  out.dilaton = codifferential(gm, dphi).value();
  for (std::size_t p = 0; p < np; ++p) {
    const R em = std::exp(R(-4) * s.phi.at(0, p) * inv);
    const R ep = std::exp(R(2) * s.phi.at(0, p) * inv);
    out.dilaton.at(0, p) -= em * h2.at(0, p) + lambda * ep;
  }
  return RS(std::move(out));
}

/// Pull back every field of the configuration by a grid-compatible affine
/// torus map.  For the axis-permutation + reflection maps admitted by
/// pullback_affine, vector and covector components transform identically.
template <class R>
result<soliton_fields<R>> pullback_soliton(const soliton_fields<R>& s, const affine_map& m) {
  using RS = result<soliton_fields<R>>;
  soliton_fields<R> out;
  out.scheme = s.scheme;
  auto take = [&](const field<R>& f, field<R>& dst) -> bool {
    auto r = pullback_affine(f, m);
    if (!r.ok()) return false;
    dst = std::move(r.value());
    return true;
  };
  if (!take(s.g, out.g) || !take(s.H, out.H) || !take(s.phi, out.phi) || !take(s.v, out.v) ||
      !take(s.alpha, out.alpha))
    return RS::failure(errc::invalid_argument, "pullback: map not grid-compatible");
  return RS(std::move(out));
}

/// Max-abs over interior tau-slices of a cylinder field: the first and last
/// `margin` slices along the open axis are excluded (one-sided stencils).
/// On fully periodic lattices this is the plain max norm.
template <class R>
R interior_max_abs(const field<R>& f, int margin = 4) {
  const lattice& g = f.lat();
  if (g.periodic(0)) return max_abs(f);
  const std::size_t m = g.axis(0).size;
  const std::size_t stride = g.stride(0);
  R worst(0);
  for (int c = 0; c < f.ncomp(); ++c) {
    const R* ptr = f.comp(c);
    for (std::size_t i = std::size_t(margin); i + std::size_t(margin) < m; ++i)
      for (std::size_t r = 0; r < stride; ++r)
        worst = std::max(worst, std::abs(ptr[i * stride + r]));
  }
  return worst;
}

}  // namespace gf
