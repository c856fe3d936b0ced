#pragma once

// Semiclassical wave-packet motion in a flat band:
//   dk/dt = F,   dr/dt = -dk/dt x Omega(k) = (-F_y Omega, F_x Omega).

#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "zeno/band.hpp"
#include "zeno/lattice.hpp"

namespace zeno {

/// Bilinear interpolation of a BZ grid on the torus.
class PeriodicField {
 public:
  explicit PeriodicField(BZGrid<double> grid) : grid_(std::move(grid)) {}

  double operator()(Vec2 k) const {
    const double h = grid_.spacing();
    const double u = k.x / h - grid_.offset().x;
    const double v = k.y / h - grid_.offset().y;
    const double iu = std::floor(u), iv = std::floor(v);
    const double fu = u - iu, fv = v - iv;
    const int i = int(iu), j = int(iv);
    return (1 - fu) * (1 - fv) * grid_.at(i, j) + fu * (1 - fv) * grid_.at(i + 1, j) +
           (1 - fu) * fv * grid_.at(i, j + 1) + fu * fv * grid_.at(i + 1, j + 1);
  }

  const BZGrid<double>& grid() const { return grid_; }

 private:
  BZGrid<double> grid_;
};

struct SemiclassicalPath {
  std::vector<double> times;
  /// Wrapped into (-pi, pi] per component.
  std::vector<Vec2> k;
  std::vector<Vec2> r;
};

namespace detail {

inline constexpr double kQuadTol = 1e-10;

template <class F>
double integrate_1d(F&& f, double a, double b) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, kQuadTol);
}

}  // namespace detail

/// Samples r(t) on a uniform grid over [0, t_final] with spacing at most dt.
/// k(t) = k0 + F t is exact; each segment of r is an adaptive Gauss-Kronrod
/// quadrature of the anomalous velocity.
inline SemiclassicalPath integrate_semiclassical(Vec2 k0, Vec2 r0, Vec2 force, const PeriodicField& curvature,
                                                 double t_final, double dt) {
  if (!(dt > 0.0) || !(t_final >= 0.0)) throw DomainError("integrate_semiclassical: need dt > 0 and t_final >= 0");
  SemiclassicalPath path;
  const long steps = std::max(1L, long(std::ceil(t_final / dt - 1e-9)));
  auto omega_at = [&](double t) { return curvature(k0 + t * force); };
  Vec2 r = r0;
  double t_prev = 0.0;
  path.times.push_back(0.0);
  path.k.push_back({wrap_momentum(k0.x), wrap_momentum(k0.y)});
  path.r.push_back(r);
  for (long i = 1; i <= steps; ++i) {
    const double t = i == steps ? t_final : t_final * double(i) / double(steps);
    const double flux = detail::integrate_1d(omega_at, t_prev, t);
    r += Vec2{-force.y * flux, force.x * flux};
    const Vec2 k = k0 + t * force;
    path.times.push_back(t);
    path.k.push_back({wrap_momentum(k.x), wrap_momentum(k.y)});
    path.r.push_back(r);
    t_prev = t;
  }
  return path;
}

/// Time after which k(t) = k0 + F t returns to its start on the BZ torus,
/// or 0 when F has no small rational direction.
inline double closed_orbit_period(Vec2 force, int max_winding = 12) {
  const double f = force.norm();
  if (f == 0.0) return 0.0;
  for (int w = 1; w <= max_winding; ++w) {
    for (int p = -w; p <= w; ++p) {
      for (int q = -w; q <= w; ++q) {
        if (std::max(std::abs(p), std::abs(q)) != w || std::gcd(p, q) != 1) continue;
        const double cross = force.x * q - force.y * p;
        if (std::abs(cross) < 1e-9 * f && force.x * p + force.y * q > 0.0) {
          return kTwoPi * std::hypot(double(p), double(q)) / f;
        }
      }
    }
  }
  return 0.0;
}

/// x displacement -integral_0^{ky} Omega(0, k'_y) dk'_y along k_x = 0.
inline double transverse_displacement(const PeriodicField& curvature, double ky_final) {
  return -detail::integrate_1d([&](double ky) { return curvature({0.0, ky}); }, 0.0, ky_final);
}

}  // namespace zeno
