#pragma once

// Independent reference values: recoil of the initial decay, ballistic
// motion of the BZ density, free spreading of a hopping packet, and the
// retroreflection detector.

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "zeno/band.hpp"
#include "zeno/dynamics.hpp"
#include "zeno/lattice.hpp"

namespace zeno {

struct RecoilResult {
  Vec2 k_mean;
  Vec2 r_mean;
  double norm2_after = 0.0;
};

enum class RecoilMethod { continuum, lattice_sum };

struct RecoilOptions {
  RecoilMethod method = RecoilMethod::continuum;
  /// Grid size for the lattice sum.
  int n = 80;
  /// Panels per axis of the 20-point Gauss rule in the continuum method.
  int panels = 8;
};

namespace detail {

// The five integrands (k_x, k_y, r_x, r_y, norm) at one k, for an initial
// Gaussian of BZ width sigma and spin (1, 1)/sqrt 2.
inline std::array<double, 5> recoil_integrand(const Symbol& l, const std::array<Symbol, 2>& grad, Vec2 k,
                                              double sigma, double gap_floor) {
  const double s2 = sigma * sigma;
  const double gap = damping_gap(l);
  if (!(gap > gap_floor)) throw ZeroGap("recoil oracle: damping gap vanishes");
  const double k2 = k.x * k.x + k.y * k.y;
  const double g_half = std::exp(-k2 / (2.0 * s2));
  const double g_quarter = std::exp(-k2 / (4.0 * s2));
  const cplx cross = l[0] * std::conj(l[1]);
  const double pref = 1.0 / (kPi * s2 * gap);

  // f = q / gap * exp(-k^2 / 4 s^2), q = |l_up|^2 - |l_dn|^2.
  const double q = std::norm(l[0]) - std::norm(l[1]);
  std::array<double, 2> df{};
  for (int a = 0; a < 2; ++a) {
    const double dup = 2.0 * (std::conj(l[0]) * grad[a][0]).real();
    const double ddn = 2.0 * (std::conj(l[1]) * grad[a][1]).real();
    const double dratio = ((dup - ddn) * gap - q * (dup + ddn)) / (gap * gap);
    const double ka = a == 0 ? k.x : k.y;
    df[a] = g_quarter * (dratio - (q / gap) * ka / (2.0 * s2));
  }
  const double wr = -pref * cross.imag() * g_quarter;
  const double wk = -pref * cross.real() * g_half;
  return {wk * k.x, wk * k.y, wr * df[0], wr * df[1], std::norm(l[0] - l[1]) * g_half / (4.0 * kPi * s2 * gap)};
}

// Nodes and weights of `panels` 20-point Gauss rules tiling [-half, half].
inline std::vector<std::pair<double, double>> composite_gauss(double half, int panels) {
  using G = boost::math::quadrature::gauss<double, 20>;
  std::vector<std::pair<double, double>> out;
  const double width = 2.0 * half / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = -half + (p + 0.5) * width, h = 0.5 * width;
    for (std::size_t j = 0; j < G::abscissa().size(); ++j) {
      out.emplace_back(mid - h * G::abscissa()[j], h * G::weights()[j]);
      out.emplace_back(mid + h * G::abscissa()[j], h * G::weights()[j]);
    }
  }
  return out;
}

}  // namespace detail

/// Recoil of a Gaussian packet (BZ width sigma_k, spin (1,1)/sqrt 2, centred
/// at k = 0) after its upper-band part has decayed. `symbol(k)` returns
/// (l_up, l_dn) and `gradient(k)` returns {d/dkx, d/dky} of both.
template <class SymbolFn, class GradientFn>
RecoilResult recoil_oracle(SymbolFn&& symbol, GradientFn&& gradient, double sigma_k, const RecoilOptions& opt = {},
                           double gap_floor = kGapFloor) {
  if (!(sigma_k > 0.0)) throw DomainError("recoil_oracle: sigma_k must be positive");
  // Quadrature nodes can straddle isolated gap zeros; probe the lattice grid too.
  for (int mx = grid_min(opt.n); mx <= grid_max(opt.n); ++mx)
    for (int my = grid_min(opt.n); my <= grid_max(opt.n); ++my)
      if (!(damping_gap(symbol(Vec2{kTwoPi * mx / opt.n, kTwoPi * my / opt.n})) > gap_floor))
        throw ZeroGap("recoil oracle: damping gap vanishes");
  std::array<double, 5> acc{};
  if (opt.method == RecoilMethod::lattice_sum) {
    const int n = opt.n;
    const double dk = kTwoPi / n;
    for (int mx = grid_min(n); mx <= grid_max(n); ++mx)
      for (int my = grid_min(n); my <= grid_max(n); ++my) {
        const Vec2 k{dk * mx, dk * my};
        const auto v = detail::recoil_integrand(symbol(k), gradient(k), k, sigma_k, gap_floor);
        for (int i = 0; i < 5; ++i) acc[i] += v[i] * dk * dk;
      }
  } else {
    // Smooth integrand: a fixed composite Gauss-Legendre product rule beats
    // adaptive nesting, which stalls on components that integrate to zero.
    const auto nodes = detail::composite_gauss(std::min(kPi, 10.0 * sigma_k), opt.panels);
    for (const auto& [kx, wx] : nodes)
      for (const auto& [ky, wy] : nodes) {
        const Vec2 k{kx, ky};
        const auto v = detail::recoil_integrand(symbol(k), gradient(k), k, sigma_k, gap_floor);
        for (int i = 0; i < 5; ++i) acc[i] += v[i] * wx * wy;
      }
  }
  return {{acc[0], acc[1]}, {acc[2], acc[3]}, acc[4]};
}

inline RecoilResult recoil_oracle(const JumpStencil& stencil, double sigma_k, const RecoilOptions& opt = {}) {
  return recoil_oracle([&](Vec2 k) { return stencil_symbol(stencil, k); },
                       [&](Vec2 k) { return stencil_symbol_gradient(stencil, k); }, sigma_k, opt);
}

namespace detail {

// Keys cubic-convolution kernel (a = -1/2).
inline double cubic_kernel(double x) {
  x = std::abs(x);
  if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

// out(m) = in(m - s) along one axis of the torus.
inline BZGrid<double> shift_axis(const BZGrid<double>& in, double s, int axis) {
  BZGrid<double> out(in.n(), 0.0, in.offset());
  const double base = std::floor(s);
  const double frac = s - base;
  const int ib = int(base);
  for (int mx = in.lo(); mx <= in.hi(); ++mx)
    for (int my = in.lo(); my <= in.hi(); ++my) {
      double v = 0.0;
      // Source position m - s = (m - ib - 1) + (1 - frac).
      for (int j = -1; j <= 2; ++j) {
        const double w = cubic_kernel(double(j) - (1.0 - frac));
        if (w == 0.0) continue;
        const int src = j - ib - 1;
        v += w * (axis == 0 ? in.at(mx + src, my) : in.at(mx, my + src));
      }
      out.at(mx, my) = v;
    }
  return out;
}

inline BZGrid<double> normalized(BZGrid<double> g) {
  double sum = 0.0;
  for (double v : g.values()) sum += v;
  if (!(sum > 0.0)) throw EmptyState("density has no weight");
  for (double& v : g.values()) v /= sum;
  return g;
}

}  // namespace detail

/// L1 distance between `evolved` and `initial` translated by `shift` on the
/// BZ torus (cubic-convolution interpolation for off-grid shifts). Both
/// densities are normalized to unit sum first.
inline double ballistic_check(const BZGrid<double>& initial, const BZGrid<double>& evolved, Vec2 shift) {
  if (initial.n() != evolved.n()) throw Error("ballistic_check: grid sizes differ");
  const double h = initial.spacing();
  BZGrid<double> moved = detail::shift_axis(detail::normalized(initial), shift.x / h, 0);
  moved = detail::shift_axis(moved, shift.y / h, 1);
  const BZGrid<double> target = detail::normalized(evolved);
  double dist = 0.0;
  for (std::size_t i = 0; i < moved.values().size(); ++i) dist += std::abs(target.values()[i] - moved.values()[i]);
  return dist;
}

/// Predicted variance per axis of a free hopping packet with isotropic
/// initial width sigma0 and group velocity v:
///   sigma^2(t) = sigma0^2 + (J t / sigma0)^2 (1 - (v / 2J)^2).
inline Vec2 free_spread_oracle(double hopping, double sigma0, Vec2 velocity, double t) {
  if (!(hopping > 0.0) || !(sigma0 > 0.0)) throw DomainError("free_spread_oracle: J and sigma0 must be positive");
  const double vmax = 2.0 * hopping * (1.0 + 1e-12);
  if (std::abs(velocity.x) > vmax || std::abs(velocity.y) > vmax) {
    throw DomainError("free_spread_oracle: velocity exceeds the band maximum 2J");
  }
  auto axis = [&](double v) {
    const double r = v / (2.0 * hopping);
    const double grow = hopping * t / sigma0;
    return sigma0 * sigma0 + grow * grow * std::max(0.0, 1.0 - r * r);
  };
  return {axis(velocity.x), axis(velocity.y)};
}

/// Theil-Sen slope: median of pairwise slopes.
inline double fit_velocity(const std::vector<double>& t, const std::vector<double>& x) {
  if (t.size() != x.size() || t.size() < 2) throw DomainError("fit_velocity: need at least two samples");
  std::vector<double> slopes;
  slopes.reserve(t.size() * (t.size() - 1) / 2);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (t[j] != t[i]) slopes.push_back((x[j] - x[i]) / (t[j] - t[i]));
  if (slopes.empty()) throw DomainError("fit_velocity: degenerate sample times");
  const auto mid = slopes.begin() + std::ptrdiff_t(slopes.size() / 2);
  std::nth_element(slopes.begin(), mid, slopes.end());
  if (slopes.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(slopes.begin(), mid);
  return 0.5 * (lower + upper);
}

struct RetroOptions {
  /// x coordinate of the wall the packet approaches.
  double x_boundary = 0.0;
  double sigma_r = 1.0;
  /// Time for the k-drift to close one orbit of the BZ.
  double bz_period = kTwoPi;
  double window_fraction = 0.2;
  double blackout_fraction = 0.05;
};

struct RetroReport {
  double collision_time = 0.0;
  int pre_velocity_sign = 0;
  int post_velocity_sign = 0;
  double pre_velocity = 0.0;
  double post_velocity = 0.0;
  /// x displacement per BZ period.
  double pre_step = 0.0;
  double post_step = 0.0;
};

/// Collision = sample of maximal com_x. Velocities are robust fits over
/// windows before and after it, skipping a blackout interval around the
/// collision itself.
inline RetroReport detect_retroreflection(const TrajectoryRecord& traj, const RetroOptions& opt) {
  const std::size_t m = traj.times.size();
  if (m < 8 || traj.com_r.size() != m) throw NoCollision("trajectory too short");
  std::size_t c = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (traj.com_r[i].x > traj.com_r[c].x) c = i;
  if (traj.com_r[c].x < opt.x_boundary - 3.0 * opt.sigma_r) {
    throw NoCollision("centre of mass never comes within 3 sigma_r of the boundary");
  }
  const auto window = std::size_t(std::lround(opt.window_fraction * double(m)));
  const auto blackout = std::size_t(std::lround(opt.blackout_fraction * double(m)));
  auto fit = [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    begin = std::max<std::ptrdiff_t>(begin, 0);
    end = std::min<std::ptrdiff_t>(end, std::ptrdiff_t(m));
    if (end - begin < 2) throw NoCollision("not enough samples on both sides of the collision");
    std::vector<double> t, x;
    for (std::ptrdiff_t i = begin; i < end; ++i) {
      t.push_back(traj.times[std::size_t(i)]);
      x.push_back(traj.com_r[std::size_t(i)].x);
    }
    return fit_velocity(t, x);
  };
  const auto ci = std::ptrdiff_t(c), w = std::ptrdiff_t(window), b = std::ptrdiff_t(blackout);
  RetroReport rep;
  rep.collision_time = traj.times[c];
  rep.pre_velocity = fit(ci - b - w, ci - b + 1);
  rep.post_velocity = fit(ci + b, ci + b + w + 1);
  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  rep.pre_velocity_sign = sign(rep.pre_velocity);
  rep.post_velocity_sign = sign(rep.post_velocity);
  rep.pre_step = std::abs(rep.pre_velocity) * opt.bz_period;
  rep.post_step = std::abs(rep.post_velocity) * opt.bz_period;
  return rep;
}

}  // namespace zeno
