#pragma once

// Geometry of the decoherence-free (lower) band: damping gap, Bloch spinors,
// Berry curvature on the lattice and in closed form, Chern number, spin
// texture, and Gaussian smoothing of the curvature over the BZ torus.

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "zeno/lattice.hpp"

namespace zeno {

using Spinor = std::array<cplx, 2>;

inline constexpr double kGapFloor = 1e-12;

/// Lower-band spinor Delta^{-1/2} (l_down, -l_up). It is annihilated by the
/// pairing sum_sigma l_sigma u_sigma and orthogonal to the upper spinor
/// Delta^{-1/2} (l_up*, l_down*).
inline Spinor lower_band_spinor(const Symbol& l, double gap_floor = kGapFloor) {
  const double gap = damping_gap(l);
  if (!(gap > gap_floor)) throw ZeroGap("damping gap " + std::to_string(gap) + " below floor");
  const double s = 1.0 / std::sqrt(gap);
  return {s * l[1], -s * l[0]};
}

inline Spinor upper_band_spinor(const Symbol& l, double gap_floor = kGapFloor) {
  const double gap = damping_gap(l);
  if (!(gap > gap_floor)) throw ZeroGap("damping gap " + std::to_string(gap) + " below floor");
  const double s = 1.0 / std::sqrt(gap);
  return {s * std::conj(l[0]), s * std::conj(l[1])};
}

inline cplx inner(const Spinor& a, const Spinor& b) { return std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1]; }

struct CurvatureResult {
  /// Plaquette-centred curvature (grid offset 1/2, 1/2), units a^2.
  BZGrid<double> curvature;
  /// Total flux / 2 pi before rounding.
  double winding = 0.0;
  int chern = 0;
};

/// Gauge-invariant link-variable curvature. Each plaquette's flux is the
/// phase of the product of normalized overlaps around it; the curvature
/// density is flux / dk^2 so that sum(Omega) dk^2 = 2 pi C.
inline CurvatureResult berry_curvature_numeric(const BZGrid<Spinor>& spinors) {
  const int n = spinors.n();
  const double dk = spinors.spacing();
  CurvatureResult out{BZGrid<double>(n, 0.0, spinors.offset() + Vec2{0.5, 0.5})};
  auto link = [](const Spinor& a, const Spinor& b) {
    const cplx z = inner(a, b);
    const double m = std::abs(z);
    return m > 0.0 ? z / m : cplx(1.0, 0.0);
  };
  double total = 0.0;
  for (int mx = spinors.lo(); mx <= spinors.hi(); ++mx) {
    for (int my = spinors.lo(); my <= spinors.hi(); ++my) {
      const Spinor& u00 = spinors.at(mx, my);
      const Spinor& u10 = spinors.at(mx + 1, my);
      const Spinor& u11 = spinors.at(mx + 1, my + 1);
      const Spinor& u01 = spinors.at(mx, my + 1);
      // The overlap phase around the loop is minus the enclosed Berry flux
      // for A = i <u|grad u>.
      const double flux = -std::arg(link(u00, u10) * link(u10, u11) * link(u11, u01) * link(u01, u00));
      out.curvature.at(mx, my) = flux / (dk * dk);
      total += flux;
    }
  }
  out.winding = total / kTwoPi;
  out.chern = int(std::lround(out.winding));
  return out;
}

/// Closed-form curvature of the p-wave model; depends only on |l_up|.
inline double berry_curvature_analytic_A(Vec2 k, cplx l_up) {
  const double l2 = std::norm(l_up);
  const double sx = std::sin(k.x), sy = std::sin(k.y);
  const double den = l2 + 4.0 * sx * sx + 4.0 * sy * sy;
  return -8.0 * l2 * std::cos(k.x) * std::cos(k.y) / (den * den);
}

/// Closed-form curvature for the model with s-wave up coupling, written in the
/// normalization where the up symbol is (cos kx + cos ky + lp) and the down
/// symbol is (i sin kx - sin ky). The unit-coefficient stencil of
/// model_b_stencil(2 lp) has exactly this band (its symbol is twice this one).
inline double berry_curvature_analytic_B(Vec2 k, double l_up_prime, double gap_floor = kGapFloor) {
  const double cx = std::cos(k.x), cy = std::cos(k.y);
  const double sx = std::sin(k.x), sy = std::sin(k.y);
  const double s = cx + cy + l_up_prime;
  const double den = sx * sx + sy * sy + s * s;
  if (!(den > gap_floor)) throw ZeroGap("analytic curvature B: vanishing gap");
  return -2.0 * s * (cx + cy + l_up_prime * cx * cy) / (den * den);
}

namespace detail {

// Normalized periodic Gaussian weights w[j] for offsets j in centered order,
// summing periodic images of exp(-d^2 / 2 sigma^2).
inline std::vector<double> periodic_gaussian(int n, double sigma) {
  const double dk = kTwoPi / n;
  std::vector<double> w(n, 0.0);
  const int images = 2 + int(std::ceil(8.0 * sigma / kTwoPi));
  double sum = 0.0;
  for (int j = grid_min(n); j <= grid_max(n); ++j) {
    double v = 0.0;
    for (int p = -images; p <= images; ++p) {
      const double d = dk * j + kTwoPi * p;
      v += std::exp(-d * d / (2.0 * sigma * sigma));
    }
    w[j - grid_min(n)] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Convolution with a normalized Gaussian of width sigma_k on the BZ torus.
/// Weights are normalized on the grid, so constants map to themselves and the
/// BZ integral is preserved.
inline BZGrid<double> smooth_curvature(const BZGrid<double>& field, double sigma_k) {
  if (!(sigma_k > 0.0)) throw DomainError("smooth_curvature: sigma_k must be positive");
  const int n = field.n();
  const auto w = detail::periodic_gaussian(n, sigma_k);
  const int lo = field.lo(), hi = field.hi();
  BZGrid<double> tmp(n, 0.0, field.offset());
  for (int mx = lo; mx <= hi; ++mx)
    for (int my = lo; my <= hi; ++my) {
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j) acc += w[j - lo] * field.at(mx + j, my);
      tmp.at(mx, my) = acc;
    }
  BZGrid<double> out(n, 0.0, field.offset());
  for (int mx = lo; mx <= hi; ++mx)
    for (int my = lo; my <= hi; ++my) {
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j) acc += w[j - lo] * tmp.at(mx, my + j);
      out.at(mx, my) = acc;
    }
  return out;
}

/// Bloch-sphere vector (<sx>, <sy>, <sz>) of each spinor.
inline BZGrid<Vec3> spin_texture(const BZGrid<Spinor>& spinors) {
  BZGrid<Vec3> out(spinors.n(), Vec3{}, spinors.offset());
  for (std::size_t i = 0; i < spinors.values().size(); ++i) {
    const Spinor& u = spinors.values()[i];
    const cplx c = std::conj(u[0]) * u[1];
    out.values()[i] = {2.0 * c.real(), 2.0 * c.imag(), std::norm(u[0]) - std::norm(u[1])};
  }
  return out;
}

struct BandData {
  int n = 0;
  BZGrid<Symbol> symbols;
  BZGrid<double> delta;
  BZGrid<Spinor> spinor_lower;
  BZGrid<double> curvature;
  std::optional<BZGrid<double>> curvature_smoothed;
  double winding = 0.0;
  int chern = 0;
  BZGrid<Vec3> texture;
};

inline BandData compute_band(const JumpStencil& stencil, int n, std::optional<double> sigma_k = {},
                             double gap_floor = kGapFloor) {
  BandData band;
  band.n = n;
  band.symbols = BZGrid<Symbol>::sample(n, [&](Vec2 k) { return stencil_symbol(stencil, k); });
  band.delta = BZGrid<double>(n);
  band.spinor_lower = BZGrid<Spinor>(n);
  for (std::size_t i = 0; i < band.symbols.values().size(); ++i) {
    band.delta.values()[i] = damping_gap(band.symbols.values()[i]);
    band.spinor_lower.values()[i] = lower_band_spinor(band.symbols.values()[i], gap_floor);
  }
  auto curv = berry_curvature_numeric(band.spinor_lower);
  band.curvature = std::move(curv.curvature);
  band.winding = curv.winding;
  band.chern = curv.chern;
  if (sigma_k) band.curvature_smoothed = smooth_curvature(band.curvature, *sigma_k);
  band.texture = spin_texture(band.spinor_lower);
  return band;
}

}  // namespace zeno
