#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gerbeflow/errors.hpp"

namespace gf {

inline constexpr int kMaxAxes = 4;  // up to tau + T^3

struct axis_spec {
  std::size_t size = 0;
  double length = 0.0;  // physical period (periodic) or sample span basis (open: spacing*size is not used)
  bool periodic = true;
  double spacing = 0.0;  // periodic: length/size; open: the step
};

/// A structured lattice: the common substrate of Grid (all axes periodic,
/// spatial T^n) and CylinderGrid (axis 0 open in tau).  Axis 0 is the
/// slowest-varying in memory; the last axis is fastest (row-major).
class lattice {
 public:
  lattice() = default;

  static result<lattice> make(int naxes, const std::array<axis_spec, kMaxAxes>& ax) {
    if (naxes < 1 || naxes > kMaxAxes)
      return result<lattice>::failure(errc::invalid_argument, "lattice: axis count must be 1..4");
    lattice g;
    g.naxes_ = naxes;
    for (int a = 0; a < naxes; ++a) {
      axis_spec s = ax[std::size_t(a)];
      if (s.size < 2) return result<lattice>::failure(errc::invalid_argument, "lattice: axis too short");
      if (s.periodic) {
        if (s.length <= 0.0)
          return result<lattice>::failure(errc::invalid_argument, "lattice: nonpositive axis length");
        s.spacing = s.length / double(s.size);
      } else {
        if (s.spacing <= 0.0)
          return result<lattice>::failure(errc::invalid_argument, "lattice: nonpositive open-axis step");
        s.length = s.spacing * double(s.size - 1);
      }
      g.ax_[std::size_t(a)] = s;
    }
    g.npts_ = 1;
    for (int a = naxes - 1; a >= 0; --a) {
      g.stride_[std::size_t(a)] = g.npts_;
      g.npts_ *= g.ax_[std::size_t(a)].size;
    }
    return g;
  }

  int naxes() const { return naxes_; }
  std::size_t npts() const { return npts_; }
  const axis_spec& axis(int a) const { return ax_[std::size_t(a)]; }
  std::size_t stride(int a) const { return stride_[std::size_t(a)]; }
  std::size_t size(int a) const { return ax_[std::size_t(a)].size; }
  double spacing(int a) const { return ax_[std::size_t(a)].spacing; }
  double length(int a) const { return ax_[std::size_t(a)].length; }
  bool periodic(int a) const { return ax_[std::size_t(a)].periodic; }

  double min_spacing() const {
    double m = ax_[0].spacing;
    for (int a = 1; a < naxes_; ++a) m = m < ax_[std::size_t(a)].spacing ? m : ax_[std::size_t(a)].spacing;
    return m;
  }

  bool operator==(const lattice& o) const {
    if (naxes_ != o.naxes_) return false;
    for (int a = 0; a < naxes_; ++a) {
      const auto& x = ax_[std::size_t(a)];
      const auto& y = o.ax_[std::size_t(a)];
      if (x.size != y.size || x.length != y.length || x.periodic != y.periodic) return false;
    }
    return true;
  }
  bool operator!=(const lattice& o) const { return !(*this == o); }

 private:
  int naxes_ = 0;
  std::size_t npts_ = 0;
  std::array<axis_spec, kMaxAxes> ax_{};
  std::array<std::size_t, kMaxAxes> stride_{};
};

/// Periodic grid on T^n, n in {1,2,3}; every size even and >= 8.
inline result<lattice> make_grid(int n, const std::vector<std::size_t>& shape,
                                 const std::vector<double>& lengths) {
  if (n < 1 || n > 3) return result<lattice>::failure(errc::invalid_argument, "grid: n must be 1, 2, or 3");
  if (int(shape.size()) != n || int(lengths.size()) != n)
    return result<lattice>::failure(errc::invalid_argument, "grid: shape/lengths arity mismatch");
  std::array<axis_spec, kMaxAxes> ax{};
  for (int a = 0; a < n; ++a) {
    if (shape[std::size_t(a)] < 8 || shape[std::size_t(a)] % 2 != 0)
      return result<lattice>::failure(errc::invalid_argument, "grid: shape entries must be even and >= 8");
    if (!(lengths[std::size_t(a)] > 0.0))
      return result<lattice>::failure(errc::invalid_argument, "grid: lengths must be positive");
    ax[std::size_t(a)] = axis_spec{shape[std::size_t(a)], lengths[std::size_t(a)], true, 0.0};
  }
  return lattice::make(n, ax);
}

/// Cylinder I x T^n: axis 0 is the open tau axis (M >= 9 samples, uniform
/// step dtau > 0, samples tau_i = tau0 + i*dtau), axes 1..n the spatial grid.
inline result<lattice> make_cylinder(const lattice& spatial, std::size_t m_tau, double dtau) {
  if (m_tau < 9) return result<lattice>::failure(errc::invalid_argument, "cylinder: tau axis needs >= 9 samples");
  if (!(dtau > 0.0)) return result<lattice>::failure(errc::invalid_argument, "cylinder: dtau must be positive");
  if (spatial.naxes() + 1 > kMaxAxes)
    return result<lattice>::failure(errc::invalid_argument, "cylinder: too many axes");
  for (int a = 0; a < spatial.naxes(); ++a)
    if (!spatial.periodic(a))
      return result<lattice>::failure(errc::invalid_argument, "cylinder: spatial grid must be periodic");
  std::array<axis_spec, kMaxAxes> ax{};
  ax[0] = axis_spec{m_tau, 0.0, false, dtau};
  for (int a = 0; a < spatial.naxes(); ++a) ax[std::size_t(a + 1)] = spatial.axis(a);
  return lattice::make(spatial.naxes() + 1, ax);
}

}  // namespace gf
