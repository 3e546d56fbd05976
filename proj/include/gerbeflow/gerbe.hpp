#pragma once

// Flux-level gerbe bookkeeping on the torus: Dirac quantization of
// three-form periods, the gauge action on curvings by closed integral
// two-forms, and the closure relations tying a tau-family of fluxes to
// its two-form potentials.
//
// The model is deliberately coarse: a class is an integer m, a curving is
// a global two-form theta modulo closed integral two-forms, and the
// curvature is H = H0 + d theta with H0 the constant harmonic
// representative of period 2 pi m.  Cocycle-level data is out of scope.

#include <cmath>
#include <cstdio>
#include <string>
#include <type_traits>
#include <vector>

#include "gerbeflow/fft.hpp"
#include "gerbeflow/geometry.hpp"

namespace gf {

template <class R>
struct flux_data {
  int m = 0;       // integer class
  field<R> H0;     // constant harmonic representative, period 2 pi m
  R vol = R(0);    // coordinate volume of the torus
};

template <class R>
struct curving_rep {
  flux_data<R> flux;
  field<R> theta;  // global two-form part; curvature is H0 + d theta
};

/// Constant-coefficient three-form with period exactly 2 pi m.  Any lattice
/// accepts m = 0; a nonzero class needs three axes.
template <class R = double>
result<field<R>> flux_representative(int m, const lattice& g) {
  using RF = result<field<R>>;
  if (m != 0 && g.naxes() != 3)
    return RF::failure(errc::invalid_argument,
                       "flux_representative: nonzero class needs a three-dimensional slice");
  field<R> H = field<R>::kform(g, 3);
  if (m != 0) {
    R vol(1);
    for (int a = 0; a < 3; ++a) vol *= R(g.length(a));
    const R coeff = R(2) * std::acos(R(-1)) * R(m) / vol;
    R* dst = H.comp(0);
    for (std::size_t p = 0; p < g.npts(); ++p) dst[p] = coeff;
  }
  return RF(std::move(H));
}

template <class R = double>
result<flux_data<R>> make_flux_data(int m, const lattice& g) {
  using RF = result<flux_data<R>>;
  if (g.naxes() != 3)
    return RF::failure(errc::invalid_argument, "make_flux_data: slice must be three-dimensional");
  auto H = flux_representative<R>(m, g);
  if (!H.ok()) return RF::failure(H.err().code, H.err().message);
  flux_data<R> out;
  out.m = m;
  out.H0 = std::move(H.value());
  out.vol = R(1);
  for (int a = 0; a < 3; ++a) out.vol *= R(g.length(a));
  return RF(std::move(out));
}

template <class R>
result<field<R>> curvature(const curving_rep<R>& c, deriv_scheme scheme = deriv_scheme::spectral) {
  auto dth = exterior_derivative(c.theta, scheme);
  if (!dth.ok()) return dth;
  return result<field<R>>(c.flux.H0 + dth.value());
}

template <class R>
struct quantization_result {
  long multiple = 0;
  R period{};
  R residual{};
};

/// Round the fundamental period of a top-degree flux to the nearest 2 pi Z
/// point.  Top forms on the torus are closed identically, so no separate
/// closedness check applies at this rank.
template <class R>
result<quantization_result<R>> quantization_check(const field<R>& H) {
  using RQ = result<quantization_result<R>>;
  if (H.lat().naxes() != 3 || H.rank() != 3)
    return RQ::failure(errc::invalid_argument,
                       "quantization_check: expected a three-form on a three-dimensional slice");
  auto per = fundamental_period(H, {0, 1, 2});
  if (!per.ok()) return RQ::failure(per.err().code, per.err().message);
  const R two_pi = R(2) * std::acos(R(-1));
  quantization_result<R> q;
  q.period = per.value();
  q.multiple = std::lround(double(q.period / two_pi));
  q.residual = std::abs(q.period - two_pi * R(q.multiple));
  return RQ(q);
}

namespace detail {

/// Plaquette periods of a two-form over every coordinate 2-torus; max
/// distance to 2 pi Z.
template <class R>
R worst_integrality(const field<R>& sigma) {
  const int d = sigma.lat().naxes();
  const R two_pi = R(2) * std::acos(R(-1));
  R worst(0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const R p = fundamental_period(sigma, {i, j}).value();
      worst = std::max(worst, std::abs(p - two_pi * std::round(double(p / two_pi))));
    }
  return worst;
}

}  // namespace detail

/// Act on a curving by a closed two-form with 2 pi Z plaquette periods:
/// theta shifts, the class and the curvature stay put.
template <class R>
result<curving_rep<R>> gauge_act(const curving_rep<R>& c, const field<R>& sigma,
                                 deriv_scheme scheme = deriv_scheme::spectral) {
  using RC = result<curving_rep<R>>;
  if (sigma.rank() != 2 || sigma.sym() != symmetry::antisym ||
      sigma.lat().npts() != c.theta.lat().npts())
    return RC::failure(errc::invalid_argument,
                       "gauge_act: sigma must be a two-form on the curving's lattice");
  auto dsig = exterior_derivative(sigma, scheme);
  if (!dsig.ok()) return RC::failure(dsig.err().code, dsig.err().message);
  const R closed = max_abs(dsig.value());
  const R integral = detail::worst_integrality(sigma);
  const R tol = R(1e-8) * (R(1) + max_abs(sigma));
  if (closed > tol || integral > R(1e-8)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "gauge_act: sigma is non-closed or non-integral (|d sigma| = %.3e, period "
                  "defect = %.3e)",
                  double(closed), double(integral));
    return RC::failure(errc::invalid_argument, buf);
  }
  curving_rep<R> out = c;
  out.theta += sigma;
  return RC(std::move(out));
}

template <class R>
struct harmonic_split_result {
  R harmonic{};       // constant coefficient of the class part
  field<R> primitive; // two-form with d(primitive) = H - harmonic * dx^dy^dz
};

/// Hodge-style split of a top-degree form on the three-torus: the mean is
/// the harmonic (class) part, and the mean-free remainder is d of an
/// explicitly constructed two-form.  Equality of classes is therefore
/// checkable as "difference has vanishing harmonic part".
template <class R>
result<harmonic_split_result<R>> harmonic_split(const field<R>& H) {
  using RH = result<harmonic_split_result<R>>;
  const lattice& g = H.lat();
  if (g.naxes() != 3 || H.rank() != 3)
    return RH::failure(errc::invalid_argument,
                       "harmonic_split: expected a three-form on a three-dimensional slice");
  for (int a = 0; a < 3; ++a)
    if (!g.periodic(a))
      return RH::failure(errc::invalid_argument, "harmonic_split: slice must be fully periodic");

  using api = fftw_api<R>;
  const std::size_t n = g.npts();
  detail::scratch_buf<R> in(n), cxy(n), cxz(n), cyz(n);
  const R* src = H.comp(0);
  for (std::size_t p = 0; p < n; ++p) {
    in.ptr[p][0] = src[p];
    in.ptr[p][1] = R(0);
  }
  auto fwd = detail::plan_cache<R>::get(g, -1, FFTW_FORWARD);
  api::execute_dft(fwd, in.ptr, in.ptr);

  harmonic_split_result<R> out;
  out.harmonic = in.ptr[0][0] / R(n);

  const R two_pi = R(2) * std::acos(R(-1));
  for (std::size_t p = 0; p < n; ++p) {
    R kap[3];
    bool nyquist = false;
    for (int a = 0; a < 3; ++a) {
      const std::size_t na = g.size(a);
      const std::size_t m = (p / g.stride(a)) % na;
      if (2 * m == na) nyquist = true;
      kap[a] = two_pi / R(g.length(a)) * (m <= na / 2 ? R(m) : -R(na - m));
    }
    const R k2 = kap[0] * kap[0] + kap[1] * kap[1] + kap[2] * kap[2];
    if (p == 0 || nyquist || k2 == R(0)) {
      cxy.ptr[p][0] = cxy.ptr[p][1] = R(0);
      cxz.ptr[p][0] = cxz.ptr[p][1] = R(0);
      cyz.ptr[p][0] = cyz.ptr[p][1] = R(0);
      continue;
    }
    const R re = in.ptr[p][0] / k2, im = in.ptr[p][1] / k2;
    // theta_hat = -i kap_x f_hat / |k|^2 on the yz component, etc., so that
    // d theta reproduces the mean-free part of H.
    cyz.ptr[p][0] = kap[0] * im;
    cyz.ptr[p][1] = -kap[0] * re;
    cxz.ptr[p][0] = -kap[1] * im;
    cxz.ptr[p][1] = kap[1] * re;
    cxy.ptr[p][0] = kap[2] * im;
    cxy.ptr[p][1] = -kap[2] * re;
  }

  auto bwd = detail::plan_cache<R>::get(g, -1, FFTW_BACKWARD);
  out.primitive = field<R>::kform(g, 2);
  const R scale = R(1) / R(n);
  // component order of two-forms on three axes: (0,1), (0,2), (1,2)
  typename api::cplx* bufs[3] = {cxy.ptr, cxz.ptr, cyz.ptr};
  for (int c = 0; c < 3; ++c) {
    api::execute_dft(bwd, bufs[c], bufs[c]);
    R* dst = out.primitive.comp(c);
    for (std::size_t p = 0; p < n; ++p) dst[p] = bufs[c][p][0] * scale;
  }
  return RH(std::move(out));
}

template <class R>
struct closure_report {
  R dtH_minus_dpsi = R(0);  // max |FD4_tau H - d psi| over interior samples
  R dH_max = R(0);          // max |d H| over all samples (zero at top rank)
  R dtA_minus_dPsi = R(0);  // gauge-datum relation, when families supplied
  bool has_gauge = false;
};

/// Closure relations of a tau-family of fluxes: dH/dtau should equal d psi
/// and H should stay closed.  Optionally checks the gauge-datum relation
/// dA/dtau = d Psi for supplied one-form/scalar families.
template <class R>
result<closure_report<R>> reduction_closure_check(
    const std::vector<field<R>>& H, const std::vector<field<R>>& psi, double dt,
    const std::vector<field<std::type_identity_t<R>>>* A = nullptr,
    const std::vector<field<std::type_identity_t<R>>>* Psi = nullptr,
    deriv_scheme scheme = deriv_scheme::spectral) {
  using RC = result<closure_report<R>>;
  if (H.size() < 5)
    return RC::failure(errc::invalid_argument,
                       "reduction_closure_check: need at least 5 uniform tau samples");
  if (psi.size() != H.size())
    return RC::failure(errc::invalid_argument,
                       "reduction_closure_check: H and psi sample counts differ");
  if (!(dt > 0))
    return RC::failure(errc::invalid_argument, "reduction_closure_check: dt must be positive");
  if (bool(A) != bool(Psi) || (A && A->size() != H.size()))
    return RC::failure(errc::invalid_argument,
                       "reduction_closure_check: gauge families must both be supplied, one per sample");

  closure_report<R> rep;
  const int d = H.front().lat().naxes();

  // fourth-order centered tau derivative against the spatial derivative of
  // the companion family
  auto scan = [&](const std::vector<field<R>>& F, const std::vector<field<R>>& G_) -> result<R> {
    R worst(0);
    for (std::size_t i = 2; i + 2 < F.size(); ++i) {
      field<R> dtF = F[i + 1];
      dtF -= F[i - 1];
      dtF *= R(8);
      dtF -= F[i + 2];
      dtF += F[i - 2];
      dtF *= R(1) / (R(12) * R(dt));
      auto dG = exterior_derivative(G_[i], scheme);
      if (!dG.ok()) return result<R>::failure(dG.err().code, dG.err().message);
      dtF -= dG.value();
      worst = std::max(worst, max_abs(dtF));
    }
    return result<R>(worst);
  };

  auto r1 = scan(H, psi);
  if (!r1.ok()) return RC::failure(r1.err().code, r1.err().message);
  rep.dtH_minus_dpsi = r1.value();

  if (H.front().rank() < d) {
    for (const auto& Hi : H) {
      auto dH = exterior_derivative(Hi, scheme);
      if (!dH.ok()) return RC::failure(dH.err().code, dH.err().message);
      rep.dH_max = std::max(rep.dH_max, max_abs(dH.value()));
    }
  }

  if (A) {
    auto r2 = scan(*A, *Psi);
    if (!r2.ok()) return RC::failure(r2.err().code, r2.err().message);
    rep.dtA_minus_dPsi = r2.value();
    rep.has_gauge = true;
  }
  return RC(rep);
}

}  // namespace gf
