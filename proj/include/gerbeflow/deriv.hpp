#pragma once

#include <array>
#include <cstddef>

#include "gerbeflow/errors.hpp"
#include "gerbeflow/fft.hpp"
#include "gerbeflow/field.hpp"

namespace gf {

enum class deriv_scheme {
  spectral,  // FFT * (ik) on periodic axes (default: the solver paths need it)
  fd4,       // 4th-order centered stencil with periodic wrap
};

namespace detail {

/// FD4 along one axis of one component plane.  Periodic axes wrap; open axes
/// use 4th-order one-sided stencils on the two boundary layers.
template <class R>
void fd4_axis(const lattice& g, const R* in, R* out, int axis) {
  const std::size_t na = g.size(axis);
  const std::size_t sa = g.stride(axis);
  const std::size_t n = g.npts();
  const R inv12h = R(1) / (R(12) * R(g.spacing(axis)));
  const bool per = g.periodic(axis);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = (p / sa) % na;
    const std::size_t base = p - i * sa;
    auto f = [&](std::size_t j) { return in[base + j * sa]; };
    // grouped as differences so constants are annihilated exactly
    R v;
    if (per) {
      const std::size_t im2 = (i + na - 2) % na, im1 = (i + na - 1) % na;
      const std::size_t ip1 = (i + 1) % na, ip2 = (i + 2) % na;
      v = ((f(im2) - f(ip2)) + R(8) * (f(ip1) - f(im1))) * inv12h;
    } else if (i >= 2 && i + 2 < na) {
      v = ((f(i - 2) - f(i + 2)) + R(8) * (f(i + 1) - f(i - 1))) * inv12h;
    } else if (i == 0) {
      // -25 48 -36 16 -3, anchored at f0
      v = (R(48) * (f(1) - f(0)) - R(36) * (f(2) - f(0)) + R(16) * (f(3) - f(0)) - R(3) * (f(4) - f(0))) *
          inv12h;
    } else if (i == 1) {
      // -3 -10 18 -6 1, anchored at f1
      v = (R(-3) * (f(0) - f(1)) + R(18) * (f(2) - f(1)) - R(6) * (f(3) - f(1)) + (f(4) - f(1))) * inv12h;
    } else if (i == na - 2) {
      // mirror of i == 1
      v = (R(3) * (f(na - 1) - f(na - 2)) - R(18) * (f(na - 3) - f(na - 2)) + R(6) * (f(na - 4) - f(na - 2)) -
           (f(na - 5) - f(na - 2))) *
          inv12h;
    } else {  // i == na-1, mirror of i == 0
      v = (R(-48) * (f(na - 2) - f(na - 1)) + R(36) * (f(na - 3) - f(na - 1)) -
           R(16) * (f(na - 4) - f(na - 1)) + R(3) * (f(na - 5) - f(na - 1))) *
          inv12h;
    }
    out[p] = v;
  }
}

}  // namespace detail

/// d/dx_axis applied componentwise; same rank and symmetry as the input.
/// Periodic axes default to the spectral kernel; the open tau axis always
/// uses the FD4 one-sided/centered stencils.
template <class R>
field<R> partial_derivative(const field<R>& f, int axis,
                            deriv_scheme scheme = deriv_scheme::spectral) {
  field<R> out(f.lat(), f.rank(), f.sym());
  for (int c = 0; c < f.ncomp(); ++c) {
    if (f.lat().periodic(axis) && scheme == deriv_scheme::spectral)
      spectral_derivative<R>(f.lat(), f.comp(c), out.comp(c), axis);
    else
      detail::fd4_axis<R>(f.lat(), f.comp(c), out.comp(c), axis);
  }
  return out;
}

/// Rectangle rule: sum f * prod(spacing).  Fixed flat-index order, so the
/// reduction is deterministic.  Exact for resolved trigonometric polynomials.
template <class R>
R integrate(const field<R>& f) {
  R cell(1);
  for (int a = 0; a < f.lat().naxes(); ++a) cell *= R(f.lat().spacing(a));
  R acc(0);
  const R* d = f.comp(0);
  for (std::size_t p = 0; p < f.npts(); ++p) acc += d[p];
  return acc * cell;
}

/// Exterior derivative of a k-form (k < naxes):
/// (d a)_{t0<...<tk} = sum_s (-1)^s  d_{t_s} a_{t0..^ts..tk}.
template <class R>
result<field<R>> exterior_derivative(const field<R>& a, deriv_scheme scheme = deriv_scheme::spectral) {
  const int d = a.lat().naxes();
  const int k = a.rank();
  if (a.sym() == symmetry::sym)
    return result<field<R>>::failure(errc::invalid_argument, "exterior_derivative: not a form");
  if (k >= d)
    return result<field<R>>::failure(errc::invalid_argument,
                                     "exterior_derivative: rank would exceed the lattice dimension");
  field<R> out = field<R>::kform(a.lat(), k + 1);
  // cache partial derivatives of each input component on demand
  std::vector<std::vector<std::vector<R>>> store(std::size_t(a.ncomp()),
                                                 std::vector<std::vector<R>>(std::size_t(d)));
  const auto& out_tuples = antisym_tuples(d, k + 1);
  for (std::size_t oc = 0; oc < out_tuples.size(); ++oc) {
    const auto& T = out_tuples[oc];
    R* dst = out.comp(int(oc));
    for (int s = 0; s <= k; ++s) {
      // source component: T without T[s]
      int src = 0, sign = (s % 2 == 0) ? 1 : -1;
      if (k == 0) {
        src = 0;
      } else {
        std::array<int, 4> rest{};
        int w = 0;
        for (int i = 0; i <= k; ++i)
          if (i != s) rest[std::size_t(w++)] = T[std::size_t(i)];
        auto [ci, sg] = antisym_lookup(d, k, rest);
        src = ci;
        sign *= sg;  // rest is sorted, sg == 1; kept for clarity
      }
      const int ax = T[std::size_t(s)];
      auto& slot = store[std::size_t(src)][std::size_t(ax)];
      if (slot.empty()) {
        slot.resize(a.npts());
        if (a.lat().periodic(ax) && scheme == deriv_scheme::spectral)
          spectral_derivative<R>(a.lat(), a.comp(src), slot.data(), ax);
        else
          detail::fd4_axis<R>(a.lat(), a.comp(src), slot.data(), ax);
      }
      for (std::size_t p = 0; p < a.npts(); ++p) dst[p] += R(sign) * slot[p];
    }
  }
  return out;
}

/// Period of a k-form over the coordinate k-torus spanned by `cycle`,
/// evaluated at index-0 transverse position: the pulled-back component is the
/// cycle component itself on a flat torus.
template <class R>
result<R> fundamental_period(const field<R>& a, const std::vector<int>& cycle) {
  const int d = a.lat().naxes();
  const int k = a.rank();
  if (int(cycle.size()) != k)
    return result<R>::failure(errc::invalid_argument, "fundamental_period: cycle size must equal form rank");
  std::array<int, 4> idx{};
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (cycle[i] < 0 || cycle[i] >= d)
      return result<R>::failure(errc::invalid_argument, "fundamental_period: axis out of range");
    idx[i] = cycle[i];
  }
  auto [comp, sign] = antisym_lookup(d, k, idx);
  if (k > 0 && sign == 0)
    return result<R>::failure(errc::invalid_argument, "fundamental_period: repeated axis in cycle");

  R cell(1);
  for (int c : cycle) cell *= R(a.lat().spacing(c));
  // iterate the sub-lattice of the cycle axes at transverse index 0
  std::size_t count = 1;
  for (int c : cycle) count *= a.lat().size(c);
  // Neumaier-compensated sum: the 2 pi Z contract on periods is tighter
  // than naive accumulation over large cycles allows.
  R acc(0), comp_err(0);
  const R* data = a.comp(comp);
  std::vector<std::size_t> sub(cycle.size(), 0);
  for (std::size_t it = 0; it < count; ++it) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < cycle.size(); ++i) p += sub[i] * a.lat().stride(cycle[i]);
    const R v = data[p];
    const R t = acc + v;
    comp_err += std::abs(acc) >= std::abs(v) ? (acc - t) + v : (v - t) + acc;
    acc = t;
    for (std::size_t i = cycle.size(); i-- > 0;) {
      if (++sub[i] < a.lat().size(cycle[i])) break;
      sub[i] = 0;
    }
  }
  return R(sign) * (acc + comp_err) * cell;
}

/// Grid-compatible affine torus map: output axis b samples input axis
/// src[b], optionally direction-reversed, shifted by an integer number of
/// cells.  Pullback transforms components by the (signed permutation)
/// Jacobian.  Requires matching sizes and lengths on paired axes.
struct affine_map {
  std::array<int, 4> src{};     // source axis per output axis
  std::array<int, 4> flip{};    // +1 or -1
  std::array<long, 4> shift{};  // integer cell shifts
};

template <class R>
result<field<R>> pullback_affine(const field<R>& f, const affine_map& m) {
  const lattice& g = f.lat();
  const int d = g.naxes();
  std::array<bool, 4> used{};
  for (int b = 0; b < d; ++b) {
    const int s = m.src[std::size_t(b)];
    if (s < 0 || s >= d || used[std::size_t(s)])
      return result<field<R>>::failure(errc::invalid_argument, "pullback_affine: src is not a permutation");
    used[std::size_t(s)] = true;
    if (g.size(b) != g.size(s) || g.length(b) != g.length(s) || g.periodic(b) != g.periodic(s))
      return result<field<R>>::failure(errc::invalid_argument, "pullback_affine: incompatible axes");
    if (m.flip[std::size_t(b)] != 1 && m.flip[std::size_t(b)] != -1)
      return result<field<R>>::failure(errc::invalid_argument, "pullback_affine: flip must be +-1");
    if (!g.periodic(b) && (m.flip[std::size_t(b)] != 1 || m.shift[std::size_t(b)] != 0))
      return result<field<R>>::failure(errc::invalid_argument, "pullback_affine: open axis must map rigidly");
  }

  field<R> out(g, f.rank(), f.sym());
  const std::size_t n = g.npts();
  for (std::size_t p = 0; p < n; ++p) {
    // decode output multi-index, build source point index
    std::size_t rem = p, q = 0;
    std::array<long, 4> oi{};
    for (int a = 0; a < d; ++a) {
      oi[std::size_t(a)] = long(rem / g.stride(a));
      rem %= g.stride(a);
    }
    for (int b = 0; b < d; ++b) {
      const int s = m.src[std::size_t(b)];
      const long na = long(g.size(s));
      long j = m.flip[std::size_t(b)] * oi[std::size_t(b)] + m.shift[std::size_t(b)];
      j %= na;
      if (j < 0) j += na;
      q += std::size_t(j) * g.stride(s);
    }
    if (f.rank() == 0) {
      out.at(0, p) = f.at(0, q);
    } else if (f.rank() == 1) {
      for (int b = 0; b < d; ++b)
        out.at(b, p) = R(m.flip[std::size_t(b)]) * f.at(m.src[std::size_t(b)], q);
    } else if (f.sym() == symmetry::sym) {
      for (int b = 0; b < d; ++b)
        for (int c = b; c < d; ++c)
          out.at(sym2_index(d, b, c), p) =
              R(m.flip[std::size_t(b)] * m.flip[std::size_t(c)]) *
              f.at(sym2_index(d, m.src[std::size_t(b)], m.src[std::size_t(c)]), q);
    } else {
      const auto& tuples = antisym_tuples(d, f.rank());
      for (std::size_t oc = 0; oc < tuples.size(); ++oc) {
        std::array<int, 4> mapped{};
        int fsign = 1;
        for (int i = 0; i < f.rank(); ++i) {
          const int b = tuples[oc][std::size_t(i)];
          mapped[std::size_t(i)] = m.src[std::size_t(b)];
          fsign *= m.flip[std::size_t(b)];
        }
        auto [ci, sg] = antisym_lookup(d, f.rank(), mapped);
        out.at(int(oc), p) = R(fsign * sg) * f.at(ci, q);
      }
    }
  }
  return out;
}

}  // namespace gf
