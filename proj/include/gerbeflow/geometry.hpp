#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gerbeflow/deriv.hpp"
#include "gerbeflow/errors.hpp"
#include "gerbeflow/field.hpp"

namespace gf {

namespace detail {

/// Eigenvalue range of a small symmetric matrix via cyclic Jacobi sweeps.
template <class R, int DMAX = 4>
void sym_eig_range(const R m_in[DMAX][DMAX], int d, R& lo, R& hi) {
  R m[DMAX][DMAX];
  R scale(0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      m[i][j] = m_in[i][j];
      scale = std::max(scale, std::abs(m[i][j]));
    }
  if (scale == R(0)) {
    lo = hi = R(0);
    return;
  }
  for (int sweep = 0; sweep < 32; ++sweep) {
    R off(0);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) off += m[i][j] * m[i][j];
    if (off < scale * scale * R(1e-36)) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        if (std::abs(m[p][q]) < scale * R(1e-30)) continue;
        const R theta = (m[q][q] - m[p][p]) / (R(2) * m[p][q]);
        const R t = (theta >= R(0) ? R(1) : R(-1)) / (std::abs(theta) + std::sqrt(theta * theta + R(1)));
        const R c = R(1) / std::sqrt(t * t + R(1));
        const R s = t * c;
        for (int k = 0; k < d; ++k) {
          const R mkp = m[k][p], mkq = m[k][q];
          m[k][p] = c * mkp - s * mkq;
          m[k][q] = s * mkp + c * mkq;
        }
        for (int k = 0; k < d; ++k) {
          const R mpk = m[p][k], mqk = m[q][k];
          m[p][k] = c * mpk - s * mqk;
          m[q][k] = s * mpk + c * mqk;
        }
      }
  }
  lo = hi = m[0][0];
  for (int i = 1; i < d; ++i) {
    lo = std::min(lo, m[i][i]);
    hi = std::max(hi, m[i][i]);
  }
}

/// Gauss-Jordan inverse with partial pivoting; returns determinant (0 on
/// singular input).
template <class R, int DMAX = 4>
R small_inverse(const R m_in[DMAX][DMAX], int d, R out[DMAX][DMAX]) {
  R a[DMAX][2 * DMAX];
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a[i][j] = m_in[i][j];
    for (int j = 0; j < d; ++j) a[i][d + j] = (i == j) ? R(1) : R(0);
  }
  R det(1);
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == R(0)) return R(0);
    if (piv != col) {
      for (int j = 0; j < 2 * d; ++j) std::swap(a[piv][j], a[col][j]);
      det = -det;
    }
    det *= a[col][col];
    const R inv = R(1) / a[col][col];
    for (int j = 0; j < 2 * d; ++j) a[col][j] *= inv;
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const R f = a[r][col];
      if (f == R(0)) continue;
      for (int j = 0; j < 2 * d; ++j) a[r][j] -= f * a[col][j];
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[i][j] = a[i][d + j];
  return det;
}

}  // namespace detail

/// Levi-Civita coefficients, symmetric in the lower pair (packed).
template <class R>
struct christoffel {
  lattice lat;
  int d = 0;
  int nsym = 0;
  std::vector<R> v;  // [(k * nsym + sym2) * npts + p]

  R at(int k, int i, int j, std::size_t p) const {
    return v[(std::size_t(k) * nsym + std::size_t(sym2_index(d, i, j))) * lat.npts() + p];
  }
  R& slot(int k, int ij, std::size_t p) {
    return v[(std::size_t(k) * nsym + std::size_t(ij)) * lat.npts() + p];
  }
  const R* plane(int k, int ij) const {
    return v.data() + (std::size_t(k) * nsym + std::size_t(ij)) * lat.npts();
  }
};

/// Metric context: the metric, its pointwise inverse and determinant, and
/// Christoffel coefficients, all computed once at construction.  SPD is
/// enforced here (smallest eigenvalue > 1e-10, condition <= 1e10).
template <class R>
struct geom {
  field<R> h;     // sym2
  field<R> hinv;  // sym2
  field<R> det;   // scalar
  christoffel<R> gamma;
  deriv_scheme scheme = deriv_scheme::spectral;
  int d = 0;

  const lattice& lat() const { return h.lat(); }
  std::size_t npts() const { return h.npts(); }

  void unpack(const field<R>& s2, std::size_t p, R m[4][4]) const {
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) m[i][j] = m[j][i] = s2.at(sym2_index(d, i, j), p);
  }
};

template <class R>
result<geom<R>> make_geom(const field<R>& h, deriv_scheme scheme = deriv_scheme::spectral) {
  using RG = result<geom<R>>;
  if (h.rank() != 2 || h.sym() != symmetry::sym)
    return RG::failure(errc::invalid_argument, "metric: expected a symmetric 2-tensor");
  geom<R> g;
  g.h = h;
  g.scheme = scheme;
  g.d = h.lat().naxes();
  g.hinv = field<R>(h.lat(), 2, symmetry::sym);
  g.det = field<R>::scalar(h.lat());
  const int d = g.d;
  const std::size_t n = h.npts();

  R m[4][4] = {}, inv[4][4] = {};
  for (std::size_t p = 0; p < n; ++p) {
    g.unpack(h, p, m);
    R lo, hi;
    detail::sym_eig_range<R>(m, d, lo, hi);
    if (!(lo > R(1e-10)) || !(hi / lo <= R(1e10))) {
      std::string where = "point " + std::to_string(p) + " (";
      std::size_t rem = p;
      for (int a = 0; a < d; ++a) {
        where += std::to_string(rem / h.lat().stride(a));
        rem %= h.lat().stride(a);
        where += a + 1 < d ? "," : ")";
      }
      return RG::failure(errc::invalid_argument, "degenerate metric at " + where);
    }
    const R dt = detail::small_inverse<R>(m, d, inv);
    g.det.at(0, p) = dt;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) g.hinv.at(sym2_index(d, i, j), p) = inv[i][j];
  }

  // Christoffel: Gamma^k_ij = 1/2 h^{kl} (d_i h_jl + d_j h_il - d_l h_ij)
  const int nsym = component_count(d, 2, symmetry::sym);
  g.gamma.lat = h.lat();
  g.gamma.d = d;
  g.gamma.nsym = nsym;
  g.gamma.v.assign(std::size_t(d) * nsym * n, R(0));
  std::vector<field<R>> dh;
  dh.reserve(std::size_t(d));
  for (int a = 0; a < d; ++a) dh.push_back(partial_derivative(h, a, scheme));
  for (std::size_t p = 0; p < n; ++p) {
    R hin[4][4];
    g.unpack(g.hinv, p, hin);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const int ij = sym2_index(d, i, j);
        for (int k = 0; k < d; ++k) {
          R acc(0);
          for (int l = 0; l < d; ++l)
            acc += hin[k][l] * (dh[std::size_t(i)].at(sym2_index(d, j, l), p) +
                                dh[std::size_t(j)].at(sym2_index(d, i, l), p) -
                                dh[std::size_t(l)].at(ij, p));
          g.gamma.slot(k, ij, p) = acc / R(2);
        }
      }
  }
  return RG(std::move(g));
}

/// Derivative helper bound to the geom's scheme (keeps one code path).
template <class R>
void detailed_derivative(const geom<R>& g, const field<R>& in, field<R>& out, int axis) {
  if (g.lat().periodic(axis) && g.scheme == deriv_scheme::spectral)
    spectral_derivative<R>(g.lat(), in.comp(0), out.comp(0), axis);
  else
    detail::fd4_axis<R>(g.lat(), in.comp(0), out.comp(0), axis);
}

/// Ric_ij = d_k Gamma^k_ij - d_i Gamma^k_kj + Gamma^k_kl Gamma^l_ij
///        - Gamma^k_il Gamma^l_kj
template <class R>
field<R> ricci(const geom<R>& g) {
  const int d = g.d;
  const lattice& lat = g.lat();
  const std::size_t n = g.npts();
  field<R> out(lat, 2, symmetry::sym);

  // divergence part: sum_k d_k Gamma^k_ij, one derivative per (k, ij) plane
  field<R> plane = field<R>::scalar(lat);
  field<R> dplane = field<R>::scalar(lat);
  for (int k = 0; k < d; ++k)
    for (int ij = 0; ij < g.gamma.nsym; ++ij) {
      const R* src = g.gamma.plane(k, ij);
      std::copy(src, src + n, plane.comp(0));
      detailed_derivative(g, plane, dplane, k);
      R* dst = out.comp(ij);
      const R* add = dplane.comp(0);
      for (std::size_t p = 0; p < n; ++p) dst[p] += add[p];
    }

  // trace part: T_j = Gamma^k_kj, subtract d_i T_j (symmetrized -- the two
  // orderings agree analytically, and the symmetric form keeps the discrete
  // tensor exactly equivariant under lattice isometries)
  std::vector<field<R>> dT;
  {
    field<R> T = field<R>::oneform(lat);
    for (int j = 0; j < d; ++j)
      for (std::size_t p = 0; p < n; ++p) {
        R acc(0);
        for (int k = 0; k < d; ++k) acc += g.gamma.at(k, k, j, p);
        T.at(j, p) = acc;
      }
    for (int i = 0; i < d; ++i) dT.push_back(partial_derivative(T, i, g.scheme));
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      R* dst = out.comp(sym2_index(d, i, j));
      const R* sij = dT[std::size_t(i)].comp(j);
      const R* sji = dT[std::size_t(j)].comp(i);
      for (std::size_t p = 0; p < n; ++p) dst[p] -= (sij[p] + sji[p]) / R(2);
    }

  // quadratic terms
  for (std::size_t p = 0; p < n; ++p) {
    R T[4];
    for (int l = 0; l < d; ++l) {
      R acc(0);
      for (int k = 0; k < d; ++k) acc += g.gamma.at(k, k, l, p);
      T[l] = acc;
    }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        R acc(0);
        for (int l = 0; l < d; ++l) acc += T[l] * g.gamma.at(l, i, j, p);
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) acc -= g.gamma.at(k, i, l, p) * g.gamma.at(l, k, j, p);
        out.at(sym2_index(d, i, j), p) += acc;
      }
  }
  return out;
}

template <class R>
field<R> trace_h(const geom<R>& g, const field<R>& a) {
  field<R> out = field<R>::scalar(g.lat());
  const int d = g.d;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    R acc(0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        acc += g.hinv.at(sym2_index(d, i, j), p) * a.at(sym2_index(d, i, j), p);
    out.at(0, p) = acc;
  }
  return out;
}

template <class R>
field<R> scalar_curvature(const geom<R>& g) {
  return trace_h(g, ricci(g));
}

/// (grad df)_ij = d_i d_j f - Gamma^k_ij d_k f
template <class R>
field<R> hessian(const geom<R>& g, const field<R>& f) {
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out(g.lat(), 2, symmetry::sym);
  std::vector<field<R>> df;
  for (int a = 0; a < d; ++a) df.push_back(partial_derivative(f, a, g.scheme));
  field<R> d2 = field<R>::scalar(g.lat());
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      detailed_derivative(g, df[std::size_t(j)], d2, i);
      R* dst = out.comp(sym2_index(d, i, j));
      const R* s = d2.comp(0);
      for (std::size_t p = 0; p < n; ++p) {
        R corr(0);
        for (int k = 0; k < d; ++k) corr += g.gamma.at(k, i, j, p) * df[std::size_t(k)].at(0, p);
        dst[p] = s[p] - corr;
      }
    }
  return out;
}

/// delta alpha = -h^{ab} (nabla_a alpha)_{b J}  (codifferential, first slot).
/// Sign: delta(df) = -sum d^2 f on the flat metric.
template <class R>
result<field<R>> codifferential(const geom<R>& g, const field<R>& a) {
  using RF = result<field<R>>;
  const int d = g.d;
  const int k = a.rank();
  if (k < 1 || a.sym() == symmetry::sym)
    return RF::failure(errc::invalid_argument, "codifferential: needs a k-form with k >= 1");
  const std::size_t n = g.npts();
  field<R> out = field<R>::kform(g.lat(), k - 1);

  std::vector<field<R>> da;  // da[axis] = componentwise derivative of a
  for (int ax = 0; ax < d; ++ax) da.push_back(partial_derivative(a, ax, g.scheme));

  auto comp_of = [&](int first, const std::array<int, 4>& rest, int restlen) -> std::pair<int, int> {
    std::array<int, 4> idx{};
    idx[0] = first;
    for (int m = 0; m < restlen; ++m) idx[std::size_t(m + 1)] = rest[std::size_t(m)];
    return antisym_lookup(d, restlen + 1, idx);
  };

  const auto& out_tuples = k >= 2 ? antisym_tuples(d, k - 1) : std::vector<std::array<int, 4>>{{{0, 0, 0, 0}}};
  const int nout = k >= 2 ? int(out_tuples.size()) : 1;
  for (int oc = 0; oc < nout; ++oc) {
    std::array<int, 4> J = k >= 2 ? out_tuples[std::size_t(oc)] : std::array<int, 4>{};
    const int jl = k - 1;
    R* dst = out.comp(oc);
    for (std::size_t p = 0; p < n; ++p) {
      R acc(0);
      for (int aa = 0; aa < d; ++aa)
        for (int b = 0; b < d; ++b) {
          const R w = g.hinv.at(sym2_index(d, aa, b), p);
          if (w == R(0)) continue;
          auto [c0, s0] = comp_of(b, J, jl);
          R val = s0 == 0 ? R(0) : R(s0) * da[std::size_t(aa)].at(c0, p);
          // - Gamma^c_{a b} alpha_{c J}
          for (int c = 0; c < d; ++c) {
            auto [c1, s1] = comp_of(c, J, jl);
            if (s1 != 0) val -= g.gamma.at(c, aa, b, p) * R(s1) * a.at(c1, p);
          }
          // - sum_m Gamma^c_{a j_m} alpha_{b, J[m -> c]}
          for (int mslot = 0; mslot < jl; ++mslot) {
            std::array<int, 4> Jm = J;
            for (int c = 0; c < d; ++c) {
              Jm[std::size_t(mslot)] = c;
              auto [c2, s2] = comp_of(b, Jm, jl);
              if (s2 != 0) val -= g.gamma.at(c, aa, J[std::size_t(mslot)], p) * R(s2) * a.at(c2, p);
            }
          }
          acc += w * val;
        }
      dst[p] = -acc;
    }
  }
  return RF(std::move(out));
}

/// (delta T)_j = -h^{ab} (nabla_a T)_{bj} for symmetric 2-tensors.
template <class R>
field<R> div_symtensor(const geom<R>& g, const field<R>& t) {
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out = field<R>::oneform(g.lat());
  std::vector<field<R>> dt;
  for (int ax = 0; ax < d; ++ax) dt.push_back(partial_derivative(t, ax, g.scheme));
  for (int j = 0; j < d; ++j) {
    R* dst = out.comp(j);
    for (std::size_t p = 0; p < n; ++p) {
      R acc(0);
      for (int aa = 0; aa < d; ++aa)
        for (int b = 0; b < d; ++b) {
          const R w = g.hinv.at(sym2_index(d, aa, b), p);
          if (w == R(0)) continue;
          R val = dt[std::size_t(aa)].at(sym2_index(d, b, j), p);
          for (int c = 0; c < d; ++c)
            val -= g.gamma.at(c, aa, b, p) * t.at(sym2_index(d, c, j), p) +
                   g.gamma.at(c, aa, j, p) * t.at(sym2_index(d, b, c), p);
          acc += w * val;
        }
      dst[p] = -acc;
    }
  }
  return out;
}

namespace detail {

/// Gram determinant det[ h^{i_a j_b} ] over two increasing index tuples.
template <class R>
R gram_det(const geom<R>& g, const std::array<int, 4>& I, const std::array<int, 4>& J, int k,
           std::size_t p) {
  R m[4][4] = {};
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      m[a][b] = g.hinv.at(sym2_index(g.d, I[std::size_t(a)], J[std::size_t(b)]), p);
  if (k == 1) return m[0][0];
  if (k == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  // k == 3
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace detail

/// Determinant inner product of equal-rank forms: the 1/k!-weighted full
/// contraction, i.e. the Gram-determinant sum over increasing tuples, so
/// orthonormal wedge monomials have unit norm.
template <class R>
result<field<R>> det_inner(const geom<R>& g, const field<R>& a, const field<R>& b) {
  using RF = result<field<R>>;
  if (a.rank() != b.rank() || a.sym() == symmetry::sym || b.sym() == symmetry::sym)
    return RF::failure(errc::invalid_argument, "det_inner: forms of equal rank required");
  if (a.rank() > 3)
    return RF::failure(errc::invalid_argument, "det_inner: rank > 3 unsupported");
  const int k = a.rank();
  field<R> out = field<R>::scalar(g.lat());
  const std::size_t n = g.npts();
  if (k == 0) {
    for (std::size_t p = 0; p < n; ++p) out.at(0, p) = a.at(0, p) * b.at(0, p);
    return RF(std::move(out));
  }
  const auto& tuples = antisym_tuples(g.d, k);
  for (std::size_t ci = 0; ci < tuples.size(); ++ci)
    for (std::size_t cj = 0; cj < tuples.size(); ++cj)
      for (std::size_t p = 0; p < n; ++p)
        out.at(0, p) += a.at(int(ci), p) * b.at(int(cj), p) *
                        detail::gram_det(g, tuples[ci], tuples[cj], k, p);
  return RF(std::move(out));
}

template <class R>
field<R> norm2_form(const geom<R>& g, const field<R>& a) {
  return det_inner(g, a, a).value();
}

/// (alpha o beta)(v, w) = <iota_v alpha, iota_w beta>  (first-slot insertions,
/// determinant inner product on the rest).
template <class R>
result<field<R>> circ_form(const geom<R>& g, const field<R>& a, const field<R>& b) {
  using RF = result<field<R>>;
  if (a.rank() != b.rank() || a.rank() < 1)
    return RF::failure(errc::invalid_argument, "circ_form: equal rank >= 1 required");
  const int k = a.rank();
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out(g.lat(), 2, symmetry::sym);

  auto inserted = [&](const field<R>& f, int v, const std::array<int, 4>& J, std::size_t p) -> R {
    std::array<int, 4> idx{};
    idx[0] = v;
    for (int m = 0; m + 1 < k; ++m) idx[std::size_t(m + 1)] = J[std::size_t(m)];
    auto [c, s] = antisym_lookup(d, k, idx);
    return s == 0 ? R(0) : R(s) * f.at(c, p);
  };

  if (k == 1) {
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        for (std::size_t p = 0; p < n; ++p)
          out.at(sym2_index(d, i, j), p) = a.at(i, p) * b.at(j, p);
    return RF(std::move(out));
  }
  const auto& rest = antisym_tuples(d, k - 1);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      R* dst = out.comp(sym2_index(d, i, j));
      for (std::size_t p = 0; p < n; ++p) {
        R acc(0);
        for (std::size_t ci = 0; ci < rest.size(); ++ci) {
          const R ai = inserted(a, i, rest[ci], p);
          if (ai == R(0)) continue;
          for (std::size_t cj = 0; cj < rest.size(); ++cj) {
            const R bj = inserted(b, j, rest[cj], p);
            if (bj == R(0)) continue;
            acc += ai * bj * detail::gram_det(g, rest[ci], rest[cj], k - 1, p);
          }
        }
        dst[p] = acc;
      }
    }
  return RF(std::move(out));
}

/// (A o B)_ij = A_ik h^{kl} B_lj  (evaluated at i <= j; symmetric for A = B).
template <class R>
field<R> circ_sym(const geom<R>& g, const field<R>& a, const field<R>& b) {
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out(g.lat(), 2, symmetry::sym);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      R* dst = out.comp(sym2_index(d, i, j));
      for (std::size_t p = 0; p < n; ++p) {
        R acc(0);
        for (int kk = 0; kk < d; ++kk)
          for (int l = 0; l < d; ++l)
            acc += a.at(sym2_index(d, i, kk), p) * g.hinv.at(sym2_index(d, kk, l), p) *
                   b.at(sym2_index(d, l, j), p);
        dst[p] = acc;
      }
    }
  return out;
}

/// Tensor norm |A|^2 = A_ij A_kl h^{ik} h^{jl} = Tr((h^{-1}A)^2).
template <class R>
field<R> sym2_norm2(const geom<R>& g, const field<R>& a) {
  const int d = g.d;
  field<R> out = field<R>::scalar(g.lat());
  for (std::size_t p = 0; p < g.npts(); ++p) {
    R hin[4][4], av[4][4], m[4][4];
    g.unpack(g.hinv, p, hin);
    g.unpack(a, p, av);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        R acc(0);
        for (int k = 0; k < d; ++k) acc += hin[i][k] * av[k][j];
        m[i][j] = acc;
      }
    R tr(0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) tr += m[i][j] * m[j][i];
    out.at(0, p) = tr;
  }
  return out;
}

/// K Delta1 alpha = sum_i K(e_i) ^ alpha(e_i)
///                = sum_{a,b} h^{ab} (K_{a .} dx^.) ^ iota_b alpha.
template <class R>
result<field<R>> delta1(const geom<R>& g, const field<R>& kt, const field<R>& a) {
  using RF = result<field<R>>;
  if (a.rank() < 1 || a.sym() == symmetry::sym)
    return RF::failure(errc::invalid_argument, "delta1: k-form with k >= 1 required");
  const int k = a.rank();
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out = field<R>::kform(g.lat(), k);
  const auto& tuples = antisym_tuples(d, k);
  for (std::size_t oc = 0; oc < tuples.size(); ++oc) {
    const auto& T = tuples[oc];
    R* dst = out.comp(int(oc));
    for (std::size_t p = 0; p < n; ++p) {
      R acc(0);
      for (int s = 0; s < k; ++s) {
        const int ts = T[std::size_t(s)];
        const R sgn = (s % 2 == 0) ? R(1) : R(-1);
        // iota_b alpha evaluated on T minus slot s
        std::array<int, 4> restidx{};
        int w = 0;
        for (int m = 0; m < k; ++m)
          if (m != s) restidx[std::size_t(w++)] = T[std::size_t(m)];
        for (int aa = 0; aa < d; ++aa)
          for (int b = 0; b < d; ++b) {
            std::array<int, 4> full{};
            full[0] = b;
            for (int m = 0; m + 1 < k; ++m) full[std::size_t(m + 1)] = restidx[std::size_t(m)];
            auto [ci, si] = antisym_lookup(d, k, full);
            if (si == 0) continue;
            acc += sgn * g.hinv.at(sym2_index(d, aa, b), p) * kt.at(sym2_index(d, aa, ts), p) *
                   R(si) * a.at(ci, p);
          }
      }
      dst[p] = acc;
    }
  }
  return RF(std::move(out));
}

/// (psi contract H)_J = (1/p!) psi^{I} H_{I J}: raise psi with Gram
/// determinants over increasing tuples, then contract into the leading slots.
template <class R>
result<field<R>> form_contract(const geom<R>& g, const field<R>& psi, const field<R>& bigh) {
  using RF = result<field<R>>;
  const int p_rank = psi.rank();
  const int q_rank = bigh.rank();
  if (p_rank > q_rank) return RF::failure(errc::invalid_argument, "form_contract: p > q");
  if (psi.sym() == symmetry::sym || bigh.sym() == symmetry::sym || p_rank > 3)
    return RF::failure(errc::invalid_argument, "form_contract: forms required");
  const int d = g.d;
  const std::size_t n = g.npts();
  const int out_rank = q_rank - p_rank;
  field<R> out = field<R>::kform(g.lat(), out_rank);
  if (p_rank == 0) {
    for (int c = 0; c < bigh.ncomp(); ++c)
      for (std::size_t pt = 0; pt < n; ++pt) out.at(c, pt) = psi.at(0, pt) * bigh.at(c, pt);
    return RF(std::move(out));
  }

  const auto& ptuples = antisym_tuples(d, p_rank);
  const auto& otuples =
      out_rank >= 1 ? antisym_tuples(d, out_rank) : std::vector<std::array<int, 4>>{{{0, 0, 0, 0}}};
  const int nout = out_rank >= 1 ? int(otuples.size()) : 1;

  for (int oc = 0; oc < nout; ++oc) {
    R* dst = out.comp(oc);
    for (std::size_t pt = 0; pt < n; ++pt) {
      R acc(0);
      for (std::size_t ic = 0; ic < ptuples.size(); ++ic) {
        // psi^{I} over increasing I: Gram-raise
        R raised(0);
        for (std::size_t ac = 0; ac < ptuples.size(); ++ac)
          raised += detail::gram_det(g, ptuples[ic], ptuples[ac], p_rank, pt) * psi.at(int(ac), pt);
        if (raised == R(0)) continue;
        std::array<int, 4> full{};
        for (int m = 0; m < p_rank; ++m) full[std::size_t(m)] = ptuples[ic][std::size_t(m)];
        for (int m = 0; m < out_rank; ++m)
          full[std::size_t(p_rank + m)] = otuples[std::size_t(oc)][std::size_t(m)];
        auto [ch, sh] = antisym_lookup(d, q_rank, full);
        if (sh == 0) continue;
        acc += raised * R(sh) * bigh.at(ch, pt);
      }
      dst[pt] = acc;
    }
  }
  return RF(std::move(out));
}

/// Index raising/lowering for one-forms / vectors (components share storage).
template <class R>
field<R> sharp(const geom<R>& g, const field<R>& a) {
  const int d = g.d;
  field<R> out = field<R>::oneform(g.lat());
  for (int i = 0; i < d; ++i)
    for (std::size_t p = 0; p < g.npts(); ++p) {
      R acc(0);
      for (int j = 0; j < d; ++j) acc += g.hinv.at(sym2_index(d, i, j), p) * a.at(j, p);
      out.at(i, p) = acc;
    }
  return out;
}

template <class R>
field<R> flat(const geom<R>& g, const field<R>& v) {
  const int d = g.d;
  field<R> out = field<R>::oneform(g.lat());
  for (int i = 0; i < d; ++i)
    for (std::size_t p = 0; p < g.npts(); ++p) {
      R acc(0);
      for (int j = 0; j < d; ++j) acc += g.h.at(sym2_index(d, i, j), p) * v.at(j, p);
      out.at(i, p) = acc;
    }
  return out;
}

/// (L_v h)_ij for w = v-flat: nabla_i w_j + nabla_j w_i.
template <class R>
field<R> lie_metric(const geom<R>& g, const field<R>& w) {
  const int d = g.d;
  const std::size_t n = g.npts();
  field<R> out(g.lat(), 2, symmetry::sym);
  std::vector<field<R>> dw;
  for (int ax = 0; ax < d; ++ax) dw.push_back(partial_derivative(w, ax, g.scheme));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      R* dst = out.comp(sym2_index(d, i, j));
      for (std::size_t p = 0; p < n; ++p) {
        R val = dw[std::size_t(i)].at(j, p) + dw[std::size_t(j)].at(i, p);
        for (int k = 0; k < d; ++k) val -= R(2) * g.gamma.at(k, i, j, p) * w.at(k, p);
        dst[p] = val;
      }
    }
  return out;
}

/// (a (x) b)_sym: symmetric outer product of one-forms.
template <class R>
field<R> outer_sym(const field<R>& a, const field<R>& b) {
  const int d = a.lat().naxes();
  field<R> out(a.lat(), 2, symmetry::sym);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      R* dst = out.comp(sym2_index(d, i, j));
      for (std::size_t p = 0; p < a.npts(); ++p)
        dst[p] = (a.at(i, p) * b.at(j, p) + a.at(j, p) * b.at(i, p)) / R(2);
    }
  return out;
}

/// Riemannian volume form sqrt(det h) dx^0 ^ ... ^ dx^{d-1}.
template <class R>
field<R> volume_form(const geom<R>& g) {
  field<R> out = field<R>::kform(g.lat(), g.d);
  for (std::size_t p = 0; p < g.npts(); ++p) out.at(0, p) = std::sqrt(g.det.at(0, p));
  return out;
}

/// Integral of a scalar against the metric volume form.
template <class R>
R integrate(const geom<R>& g, const field<R>& f) {
  const lattice& lat = f.lat();
  R cell(1);
  for (int a = 0; a < lat.naxes(); ++a) cell *= R(lat.spacing(a));
  R acc(0);
  const R* v = f.comp(0);
  const R* dt = g.det.comp(0);
  for (std::size_t p = 0; p < lat.npts(); ++p) acc += v[p] * std::sqrt(dt[p]);
  return acc * cell;
}

}  // namespace gf
