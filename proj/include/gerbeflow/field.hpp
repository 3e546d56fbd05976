#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gerbeflow/errors.hpp"
#include "gerbeflow/grid.hpp"

namespace gf {

enum class symmetry : std::uint8_t { none, sym, antisym };

/// Number of independent components of a field of the given rank/symmetry
/// over d axes.  rank 0 -> 1; rank 1 -> d; sym rank 2 -> d(d+1)/2;
/// antisym rank k -> C(d,k).
inline int component_count(int d, int rank, symmetry s) {
  if (rank == 0) return 1;
  if (rank == 1) return d;
  if (s == symmetry::sym) return d * (d + 1) / 2;
  // antisym: binomial
  int num = 1, den = 1;
  for (int j = 0; j < rank; ++j) {
    num *= (d - j);
    den *= (j + 1);
  }
  return num >= 0 ? num / den : 0;
}

/// Upper-triangular packing of a symmetric pair (i <= j), lex order.
inline int sym2_index(int d, int i, int j) {
  if (i > j) std::swap(i, j);
  // row i starts after sum_{r<i} (d - r) entries
  return i * d - i * (i - 1) / 2 + (j - i);
}

/// Lexicographically ordered strictly-increasing k-tuples over d axes.
/// Tables are built once at first use (thread-safe local static).
inline const std::vector<std::array<int, 4>>& antisym_tuples(int d, int k) {
  struct all_tables {
    std::vector<std::array<int, 4>> t[5][5];
    all_tables() {
      for (int dd = 1; dd <= 4; ++dd)
        for (int kk = 1; kk <= dd; ++kk) {
          auto& tab = t[dd][kk];
          std::array<int, 4> cur{};
          for (int i = 0; i < kk; ++i) cur[std::size_t(i)] = i;
          while (true) {
            tab.push_back(cur);
            int pos = kk - 1;
            while (pos >= 0 && cur[std::size_t(pos)] == dd - kk + pos) --pos;
            if (pos < 0) break;
            ++cur[std::size_t(pos)];
            for (int i = pos + 1; i < kk; ++i) cur[std::size_t(i)] = cur[std::size_t(i - 1)] + 1;
          }
        }
    }
  };
  static const all_tables tabs;
  return tabs.t[d][k];
}

/// Component index + sign of a possibly-unsorted index tuple of an
/// antisymmetric field; sign = 0 when an index repeats.
inline std::pair<int, int> antisym_lookup(int d, int k, std::array<int, 4> idx) {
  int sign = 1;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k - 1 - i; ++j)
      if (idx[std::size_t(j)] > idx[std::size_t(j + 1)]) {
        std::swap(idx[std::size_t(j)], idx[std::size_t(j + 1)]);
        sign = -sign;
      }
  for (int i = 0; i + 1 < k; ++i)
    if (idx[std::size_t(i)] == idx[std::size_t(i + 1)]) return {0, 0};
  const auto& tab = antisym_tuples(d, k);
  for (std::size_t c = 0; c < tab.size(); ++c) {
    bool match = true;
    for (int i = 0; i < k; ++i) match = match && tab[c][std::size_t(i)] == idx[std::size_t(i)];
    if (match) return {int(c), sign};
  }
  return {0, 0};  // unreachable for valid input
}

/// Dense field over a lattice.  Component-major storage: component c is a
/// contiguous plane of lattice().npts() values.  (The GFLD disk layout is
/// point-major; io.hpp transposes.)
template <class R>
class field {
 public:
  field() = default;
  field(lattice lat, int rank, symmetry s)
      : lat_(lat), rank_(rank), sym_(s), ncomp_(component_count(lat.naxes(), rank, s)),
        data_(std::size_t(ncomp_) * lat.npts(), R(0)) {}

  static field scalar(const lattice& lat) { return field(lat, 0, symmetry::none); }
  static field oneform(const lattice& lat) { return field(lat, 1, symmetry::none); }
  static field sym2(const lattice& lat) { return field(lat, 2, symmetry::sym); }
  static field kform(const lattice& lat, int k) {
    return k == 0 ? scalar(lat) : k == 1 ? oneform(lat) : field(lat, k, symmetry::antisym);
  }

  const lattice& lat() const { return lat_; }
  int rank() const { return rank_; }
  symmetry sym() const { return sym_; }
  int ncomp() const { return ncomp_; }
  std::size_t npts() const { return lat_.npts(); }

  R* comp(int c) { return data_.data() + std::size_t(c) * lat_.npts(); }
  const R* comp(int c) const { return data_.data() + std::size_t(c) * lat_.npts(); }
  R& at(int c, std::size_t p) { return data_[std::size_t(c) * lat_.npts() + p]; }
  const R& at(int c, std::size_t p) const { return data_[std::size_t(c) * lat_.npts() + p]; }

  std::vector<R>& raw() { return data_; }
  const std::vector<R>& raw() const { return data_; }

  bool finite() const {
    for (const R& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  field& operator+=(const field& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  field& operator-=(const field& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  field& operator*=(R a) {
    for (R& v : data_) v *= a;
    return *this;
  }

 private:
  lattice lat_{};
  int rank_ = 0;
  symmetry sym_ = symmetry::none;
  int ncomp_ = 0;
  std::vector<R> data_;
};

template <class R>
field<R> operator+(field<R> a, const field<R>& b) { a += b; return a; }
template <class R>
field<R> operator-(field<R> a, const field<R>& b) { a -= b; return a; }
template <class R>
field<R> operator*(R s, field<R> a) { a *= s; return a; }

/// Evaluate a function of grid coordinates into an existing component.
/// fn receives the physical coordinates (x0..x3) of each point.
template <class R, class F>
void fill_component(field<R>& f, int c, F&& fn) {
  const lattice& g = f.lat();
  const int d = g.naxes();
  std::array<std::size_t, 4> idx{};
  const std::size_t n = g.npts();
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t rem = p;
    std::array<double, 4> x{};
    for (int a = 0; a < d; ++a) {
      idx[std::size_t(a)] = rem / g.stride(a);
      rem %= g.stride(a);
      x[std::size_t(a)] = double(idx[std::size_t(a)]) * g.spacing(a);
    }
    f.at(c, p) = R(fn(x));
  }
}

template <class R>
R max_abs(const field<R>& f) {
  R m(0);
  for (const R& v : f.raw()) m = std::max(m, std::abs(v));
  return m;
}

/// L2 norm: sqrt( sum_c integrate(comp_c^2) ) with the rectangle rule.
template <class R>
R l2_norm(const field<R>& f) {
  const lattice& g = f.lat();
  R cell(1);
  for (int a = 0; a < g.naxes(); ++a) cell *= R(g.spacing(a));
  R acc(0);
  for (const R& v : f.raw()) acc += v * v;
  return std::sqrt(acc * cell);
}

/// Downcast / upcast between precisions (same layout).
template <class To, class From>
field<To> convert(const field<From>& f) {
  field<To> out(f.lat(), f.rank(), f.sym());
  for (std::size_t i = 0; i < f.raw().size(); ++i) out.raw()[i] = To(f.raw()[i]);
  return out;
}

}  // namespace gf
