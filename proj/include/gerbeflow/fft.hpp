#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "gerbeflow/grid.hpp"

namespace gf {

/// Precision selection of the FFTW C API.  double -> fftw_*, long double -> fftwl_*.
template <class R>
struct fftw_api;

template <>
struct fftw_api<double> {
  using cplx = fftw_complex;
  using plan = fftw_plan;
  static plan plan_guru(int rank, const fftw_iodim* dims, int hrank, const fftw_iodim* hdims, cplx* in,
                        cplx* out, int sign) {
    return fftw_plan_guru_dft(rank, dims, hrank, hdims, in, out, sign, FFTW_ESTIMATE);
  }
  static void execute_dft(plan p, cplx* in, cplx* out) { fftw_execute_dft(p, in, out); }
  static void* alloc(std::size_t bytes) { return fftw_malloc(bytes); }
  static void dealloc(void* p) { fftw_free(p); }
  static constexpr const char* tag = "d";
};

template <>
struct fftw_api<long double> {
  using cplx = fftwl_complex;
  using plan = fftwl_plan;
  static plan plan_guru(int rank, const fftw_iodim* dims, int hrank, const fftw_iodim* hdims, cplx* in,
                        cplx* out, int sign) {
    return fftwl_plan_guru_dft(rank, dims, hrank, hdims, in, out, sign, FFTW_ESTIMATE);
  }
  static void execute_dft(plan p, cplx* in, cplx* out) { fftwl_execute_dft(p, in, out); }
  static void* alloc(std::size_t bytes) { return fftwl_malloc(bytes); }
  static void dealloc(void* p) { fftwl_free(p); }
  static constexpr const char* tag = "l";
};

namespace detail {

/// Process-wide plan cache.  FFTW planning is not thread-safe; creation is
/// serialized, execution uses the thread-safe new-array interface on
/// fftw-allocated scratch (alignment-compatible by construction).
template <class R>
class plan_cache {
 public:
  using api = fftw_api<R>;
  using plan_t = typename api::plan;

  /// axis < 0 means a full transform over all axes of the lattice.
  static plan_t get(const lattice& g, int axis, int sign) {
    std::string key = std::string(api::tag) + (sign < 0 ? "f" : "b") + ":" + std::to_string(axis);
    for (int a = 0; a < g.naxes(); ++a) key += "," + std::to_string(g.size(a));
    static std::map<std::string, plan_t> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    fftw_iodim dims[kMaxAxes], hdims[kMaxAxes];
    int rank = 0, hrank = 0;
    for (int a = 0; a < g.naxes(); ++a) {
      fftw_iodim d{int(g.size(a)), int(g.stride(a)), int(g.stride(a))};
      if (axis < 0 || a == axis)
        dims[rank++] = d;
      else
        hdims[hrank++] = d;
    }
    auto* scratch = static_cast<typename api::cplx*>(api::alloc(sizeof(typename api::cplx) * g.npts()));
    plan_t p = api::plan_guru(rank, dims, hrank, hdims, scratch, scratch, sign);
    api::dealloc(scratch);
    cache.emplace(key, p);
    return p;
  }
};

template <class R>
struct scratch_buf {
  using api = fftw_api<R>;
  typename api::cplx* ptr = nullptr;
  explicit scratch_buf(std::size_t n) {
    ptr = static_cast<typename api::cplx*>(api::alloc(sizeof(typename api::cplx) * n));
  }
  ~scratch_buf() { api::dealloc(ptr); }
  scratch_buf(const scratch_buf&) = delete;
  scratch_buf& operator=(const scratch_buf&) = delete;
};

}  // namespace detail

/// Spectral first derivative of one real component plane along a periodic
/// axis: FFT, multiply by i*k (k = 2*pi*m/L, m the signed mode index), zero
/// the Nyquist bin (odd derivative of the unresolved mode is ambiguous),
/// inverse FFT, normalize.
template <class R>
void spectral_derivative(const lattice& g, const R* in, R* out, int axis) {
  using api = fftw_api<R>;
  const std::size_t n = g.npts();
  detail::scratch_buf<R> buf(n);
  for (std::size_t p = 0; p < n; ++p) {
    buf.ptr[p][0] = in[p];
    buf.ptr[p][1] = R(0);
  }
  auto fwd = detail::plan_cache<R>::get(g, axis, FFTW_FORWARD);
  api::execute_dft(fwd, buf.ptr, buf.ptr);

  const std::size_t na = g.size(axis);
  const std::size_t sa = g.stride(axis);
  const R two_pi = R(2) * std::acos(R(-1));
  const R klen = two_pi / R(g.length(axis));
  // iterate points; mode index along `axis` determines the multiplier
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t m = (p / sa) % na;
    R k;
    if (2 * m == na) {
      k = R(0);  // Nyquist
    } else if (m <= na / 2) {
      k = klen * R(m);
    } else {
      k = -klen * R(na - m);
    }
    const R re = buf.ptr[p][0], im = buf.ptr[p][1];
    buf.ptr[p][0] = -k * im;  // (i k)(re + i im) = -k im + i k re
    buf.ptr[p][1] = k * re;
  }
  auto bwd = detail::plan_cache<R>::get(g, axis, FFTW_BACKWARD);
  api::execute_dft(bwd, buf.ptr, buf.ptr);
  const R scale = R(1) / R(na);
  for (std::size_t p = 0; p < n; ++p) out[p] = buf.ptr[p][0] * scale;
}

/// Roundoff-hygiene filter for the ill-posed evolution (documented
/// stabilization): full FFT over the (all-periodic) lattice, zero every
/// coefficient below rel_threshold * max|coefficient|, zero modes with
/// |m| > N_a/3 on each axis (2/3-rule truncation), inverse, normalize.
template <class R>
void spectral_filter(const lattice& g, R* data, R rel_threshold) {
  using api = fftw_api<R>;
  const std::size_t n = g.npts();
  detail::scratch_buf<R> buf(n);
  for (std::size_t p = 0; p < n; ++p) {
    buf.ptr[p][0] = data[p];
    buf.ptr[p][1] = R(0);
  }
  auto fwd = detail::plan_cache<R>::get(g, -1, FFTW_FORWARD);
  api::execute_dft(fwd, buf.ptr, buf.ptr);

  R maxmag(0);
  for (std::size_t p = 0; p < n; ++p) {
    R mag = std::hypot(buf.ptr[p][0], buf.ptr[p][1]);
    if (mag > maxmag) maxmag = mag;
  }
  const R cut = rel_threshold * maxmag;
  for (std::size_t p = 0; p < n; ++p) {
    bool kill = std::hypot(buf.ptr[p][0], buf.ptr[p][1]) < cut;
    for (int a = 0; a < g.naxes() && !kill; ++a) {
      const std::size_t na = g.size(a);
      const std::size_t m = (p / g.stride(a)) % na;
      const std::size_t mfold = m <= na / 2 ? m : na - m;
      kill = 3 * mfold > na;
    }
    if (kill) buf.ptr[p][0] = buf.ptr[p][1] = R(0);
  }
  auto bwd = detail::plan_cache<R>::get(g, -1, FFTW_BACKWARD);
  api::execute_dft(bwd, buf.ptr, buf.ptr);
  const R scale = R(1) / R(n);
  for (std::size_t p = 0; p < n; ++p) data[p] = buf.ptr[p][0] * scale;
}

}  // namespace gf
