#pragma once

#include <cmath>
#include <string>

#include "gerbeflow/geometry.hpp"

namespace gf {

enum class frame_tag { string_frame, einstein_frame };

/// g_E = e^{-2 phi / (n-1)} g, where n+1 is the ambient dimension.
template <class R>
result<field<R>> to_einstein(const field<R>& g, const field<R>& phi, int n) {
  using RF = result<field<R>>;
  if (n < 2) return RF::failure(errc::invalid_argument, "frame map: n >= 2 required");
  if (g.rank() != 2 || g.sym() != symmetry::sym || phi.rank() != 0 || !(g.lat() == phi.lat()))
    return RF::failure(errc::invalid_argument, "frame map: metric + scalar on one lattice");
  field<R> out = g;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const R w = std::exp(R(-2) * phi.at(0, p) / R(n - 1));
    for (int c = 0; c < g.ncomp(); ++c) out.at(c, p) *= w;
  }
  return RF(std::move(out));
}

/// Inverse map: g = e^{+2 phi / (n-1)} g_E.
template <class R>
result<field<R>> to_string(const field<R>& g_e, const field<R>& phi, int n) {
  using RF = result<field<R>>;
  if (n < 2) return RF::failure(errc::invalid_argument, "frame map: n >= 2 required");
  if (g_e.rank() != 2 || g_e.sym() != symmetry::sym || phi.rank() != 0 || !(g_e.lat() == phi.lat()))
    return RF::failure(errc::invalid_argument, "frame map: metric + scalar on one lattice");
  field<R> out = g_e;
  for (std::size_t p = 0; p < g_e.npts(); ++p) {
    const R w = std::exp(R(2) * phi.at(0, p) / R(n - 1));
    for (int c = 0; c < g_e.ncomp(); ++c) out.at(c, p) *= w;
  }
  return RF(std::move(out));
}

/// Pointwise max-abs residuals of the three conformal-change identities,
/// each evaluated two independent ways: the left side directly from
/// g = e^{2 phi/(n-1)} g_E, the right side assembled from g_E-quantities.
template <class R>
struct conformal_residuals {
  field<R> ric;     // Ricci identity
  field<R> codiff;  // codifferential identity on the supplied test form
  field<R> hess;    // Hessian-of-the-dilaton identity
};

namespace detail {

template <class R>
field<R> comp_max_abs(const field<R>& a) {
  field<R> out = field<R>::scalar(a.lat());
  for (int c = 0; c < a.ncomp(); ++c)
    for (std::size_t p = 0; p < a.npts(); ++p)
      out.at(0, p) = std::max(out.at(0, p), std::abs(a.at(c, p)));
  return out;
}

}  // namespace detail

template <class R>
result<conformal_residuals<R>> conformal_identity_residuals(
    const field<R>& g_e, const field<R>& phi, int n, const field<R>& alpha,
    deriv_scheme scheme = deriv_scheme::spectral) {
  using RC = result<conformal_residuals<R>>;
  if (n < 2) return RC::failure(errc::invalid_argument, "conformal identities: n >= 2 required");
  if (alpha.rank() < 1 || alpha.sym() == symmetry::sym)
    return RC::failure(errc::invalid_argument, "conformal identities: test form must be a k-form, k >= 1");

  auto gres = to_string(g_e, phi, n);
  if (!gres.ok()) return RC::failure(gres.err().code, gres.err().message);
  auto gg_r = make_geom(gres.value(), scheme);
  if (!gg_r.ok()) return RC::failure(gg_r.err().code, gg_r.err().message);
  auto ge_r = make_geom(g_e, scheme);
  if (!ge_r.ok()) return RC::failure(ge_r.err().code, ge_r.err().message);
  const geom<R>& gg = gg_r.value();
  const geom<R>& ge = ge_r.value();

  const R inv = R(1) / R(n - 1);
  const std::size_t np = g_e.npts();

  field<R> dphi = exterior_derivative(phi, scheme).value();
  field<R> dphi2 = norm2_form(ge, dphi);
  field<R> ddphi = codifferential(ge, dphi).value();  // delta^{g_E} d phi

  conformal_residuals<R> out;

  // Ric^g = Ric^{g_E} - (grad dphi - inv dphi x dphi)
  //         + inv (delta dphi - |dphi|^2) g_E
  {
    field<R> lhs = ricci(gg);
    field<R> rhs = ricci(ge);
    rhs -= hessian(ge, phi);
    field<R> oo = outer_sym(dphi, dphi);
    oo *= inv;
    rhs += oo;
    for (int c = 0; c < rhs.ncomp(); ++c)
      for (std::size_t p = 0; p < np; ++p)
        rhs.at(c, p) += inv * (ddphi.at(0, p) - dphi2.at(0, p)) * g_e.at(c, p);
    lhs -= rhs;
    out.ric = detail::comp_max_abs(lhs);
  }

  // delta^g a = e^{-2 phi/(n-1)} (delta^{g_E} a - (n+1-2k)/(n-1) a(dphi sharp))
  {
    const int k = alpha.rank();
    field<R> lhs = codifferential(gg, alpha).value();
    field<R> rhs = codifferential(ge, alpha).value();
    field<R> ins = form_contract(ge, dphi, alpha).value();
    ins *= R(n + 1 - 2 * k) * inv;
    rhs -= ins;
    for (int c = 0; c < rhs.ncomp(); ++c)
      for (std::size_t p = 0; p < np; ++p)
        rhs.at(c, p) *= std::exp(R(-2) * phi.at(0, p) * inv);
    lhs -= rhs;
    out.codiff = detail::comp_max_abs(lhs);
  }

  // grad^g dphi = grad^{g_E} dphi - 2 inv dphi x dphi + inv |dphi|^2 g_E
  {
    field<R> lhs = hessian(gg, phi);
    field<R> rhs = hessian(ge, phi);
    field<R> oo = outer_sym(dphi, dphi);
    oo *= R(-2) * inv;
    rhs += oo;
    for (int c = 0; c < rhs.ncomp(); ++c)
      for (std::size_t p = 0; p < np; ++p) rhs.at(c, p) += inv * dphi2.at(0, p) * g_e.at(c, p);
    lhs -= rhs;
    out.hess = detail::comp_max_abs(lhs);
  }

  return RC(std::move(out));
}

}  // namespace gf
