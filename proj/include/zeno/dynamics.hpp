#pragma once

// No-jump evolution i d/dt psi = H_eff psi with
//   H_eff = -F.r + H_coherent - (i/2) (Gamma sum_r L_r^dag L_r + sum_j gamma_j n_j),
// plus packet preparation, band projection and centre-of-mass observables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "zeno/band.hpp"
#include "zeno/lattice.hpp"
#include "zeno/models.hpp"

namespace zeno {

using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<cplx>;

struct EffectiveOperator {
  int n = 0;
  int levels = 0;
  /// Diagonal of -F.r, repeated on every level.
  Eigen::VectorXd potential;
  /// Hermitian off-diagonal part (nearest-neighbour hopping or Rabi couplings).
  SparseMatrix coherent;
  /// One row per jump operator L_r.
  SparseMatrix jump;
  SparseMatrix jump_adjoint;
  double gamma = 0.0;
  /// On-site loss rates (masked edge sites, decaying excited level).
  Eigen::VectorXd loss;
  /// Upper bound on the spectral radius used for step control.
  double spectral_bound = 0.0;

  Eigen::Index dim() const { return Eigen::Index(n) * n * levels; }

  /// y = H_eff x.
  void apply(const CVector& x, CVector& y) const {
    y = potential.cast<cplx>().cwiseProduct(x);
    if (coherent.nonZeros() > 0) y.noalias() += coherent * x;
    add_damping(x, y);
  }

  CVector apply(const CVector& x) const {
    CVector y(x.size());
    apply(x, y);
    return y;
  }

  /// The anti-Hermitian part alone, -(i/2)(Gamma K^dag K + diag(loss)) x.
  CVector apply_damping(const CVector& x) const {
    CVector y = CVector::Zero(x.size());
    add_damping(x, y);
    return y;
  }

  /// The Hermitian part alone.
  CVector apply_hermitian(const CVector& x) const {
    CVector y = potential.cast<cplx>().cwiseProduct(x);
    if (coherent.nonZeros() > 0) y.noalias() += coherent * x;
    return y;
  }

 private:
  void add_damping(const CVector& x, CVector& y) const {
    const cplx minus_half_i(0.0, -0.5);
    if (gamma != 0.0 && jump.nonZeros() > 0) {
      CVector lx = jump * x;
      y.noalias() += (minus_half_i * gamma) * (jump_adjoint * lx);
    }
    if (loss.size() > 0) y += minus_half_i * loss.cast<cplx>().cwiseProduct(x);
  }
};

namespace detail {

inline Eigen::VectorXd linear_potential(const LatticeSpec& lattice, int levels, Vec2 force) {
  Eigen::VectorXd v(Eigen::Index(lattice.sites()) * levels);
  for (int s = 0; s < lattice.sites(); ++s) {
    const Site r = lattice.site(s);
    const double e = -(force.x * r.x + force.y * r.y);
    for (int l = 0; l < levels; ++l) v[Eigen::Index(l) * lattice.sites() + s] = e;
  }
  return v;
}

// Resolves r + d under the lattice boundary; returns false when the site is
// cut off by a hard wall.
inline bool neighbour(const LatticeSpec& lattice, Site r, Site d, Site& out) {
  Site t{r.x + d.x, r.y + d.y};
  if (lattice.boundary == Boundary::periodic) {
    t = {wrap_coord(t.x, lattice.n), wrap_coord(t.y, lattice.n)};
  } else if (!lattice.contains(t)) {
    return false;
  }
  out = t;
  return true;
}

inline double max_row_abs_sum(const SparseMatrix& m) {
  double best = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

// Largest eigenvalue of K^dag K by power iteration (Rayleigh quotient from
// below, so a safety factor is applied by the caller).
inline double damping_norm_estimate(const SparseMatrix& k, const SparseMatrix& kt) {
  if (k.nonZeros() == 0) return 0.0;
  CVector v(k.cols());
  std::mt19937_64 rng(12345);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = cplx(double(rng() >> 11) * 0x1.0p-53 - 0.5, double(rng() >> 11) * 0x1.0p-53 - 0.5);
  }
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 60; ++it) {
    CVector w = kt * (k * v);
    lambda = v.dot(w).real();
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
  }
  return lambda;
}

inline void finish_operator(EffectiveOperator& op) {
  op.jump_adjoint = op.jump.adjoint();
  const double herm = op.potential.cwiseAbs().maxCoeff() + max_row_abs_sum(op.coherent);
  const double damp = op.gamma * 1.1 * damping_norm_estimate(op.jump, op.jump_adjoint);
  const double loss = op.loss.size() > 0 ? op.loss.maxCoeff() : 0.0;
  op.spectral_bound = herm + 0.5 * (damp + loss);
}

inline Eigen::VectorXd edge_loss_vector(const LatticeSpec& lattice, int levels, double gamma) {
  if (lattice.loss_mask.empty() || lattice.gamma_edge == 0.0) return {};
  Eigen::VectorXd loss = Eigen::VectorXd::Zero(Eigen::Index(lattice.sites()) * levels);
  for (const Site& s : lattice.loss_mask)
    for (int l = 0; l < levels; ++l)
      loss[Eigen::Index(l) * lattice.sites() + lattice.index(s)] = lattice.gamma_edge * gamma;
  return loss;
}

inline void check_range(const LatticeSpec& lattice, int range) {
  if (2 * range >= lattice.n) {
    throw ConfigError("stencil range " + std::to_string(range) + " is not below N/2 = " +
                      std::to_string(lattice.n / 2.0), "stencil");
  }
}

}  // namespace detail

/// Nearest-neighbour hopping -J sum (c^dag_{r+x} c_r + c^dag_{r+y} c_r + h.c.)
/// on every level, as coherent-part triplets.
inline void append_hopping(const LatticeSpec& lattice, int levels, double hopping, std::vector<Triplet>& trip) {
  if (hopping == 0.0) return;
  for (int s = 0; s < lattice.sites(); ++s) {
    const Site r = lattice.site(s);
    for (Site d : {Site{1, 0}, Site{0, 1}}) {
      Site t;
      if (!detail::neighbour(lattice, r, d, t)) continue;
      const int j = lattice.index(t);
      for (int l = 0; l < levels; ++l) {
        const Eigen::Index off = Eigen::Index(l) * lattice.sites();
        trip.emplace_back(off + j, off + s, -hopping);
        trip.emplace_back(off + s, off + j, -hopping);
      }
    }
  }
}

/// Assembles H_eff for a two-level model with jump stencil `stencil`, damping
/// rate `gamma`, linear potential from `force`, optional hopping and the
/// lattice's edge-loss mask. Open boundaries drop stencil terms that leave the
/// lattice.
inline EffectiveOperator build_effective(const LatticeSpec& lattice, const JumpStencil& stencil, double gamma,
                                         Vec2 force, double hopping = 0.0) {
  lattice.validate();
  detail::check_range(lattice, stencil.range());
  const int levels = 2;
  EffectiveOperator op;
  op.n = lattice.n;
  op.levels = levels;
  op.gamma = gamma;
  op.potential = detail::linear_potential(lattice, levels, force);

  std::vector<Triplet> coh;
  append_hopping(lattice, levels, hopping, coh);
  op.coherent = SparseMatrix(op.dim(), op.dim());
  op.coherent.setFromTriplets(coh.begin(), coh.end());

  std::vector<Triplet> trip;
  trip.reserve(std::size_t(lattice.sites()) * stencil.entries.size());
  for (int s = 0; s < lattice.sites(); ++s) {
    const Site r = lattice.site(s);
    const double sign = stencil.staggered_sign && ((r.x + r.y) % 2 != 0) ? -1.0 : 1.0;
    for (const auto& e : stencil.entries) {
      if (e.level == Level::e) throw ConfigError("two-level stencil references the excited level", "stencil");
      Site t;
      if (!detail::neighbour(lattice, r, e.d, t)) continue;
      const Eigen::Index col = Eigen::Index(static_cast<int>(e.level)) * lattice.sites() + lattice.index(t);
      trip.emplace_back(s, col, sign * e.coeff);
    }
  }
  op.jump = SparseMatrix(lattice.sites(), op.dim());
  op.jump.setFromTriplets(trip.begin(), trip.end());
  op.loss = detail::edge_loss_vector(lattice, levels, gamma);
  detail::finish_operator(op);
  return op;
}

/// Three-level (up, down, e) model: coherent coupling
///   (1/2) sum Omega_{r,r',sigma} c^dag_{r e} c_{r' sigma} + h.c.,
///   Omega_{r,r',sigma} = (-1)^(x+y) Omega_{r'-r,sigma},
/// with p-wave down coupling of strength `rabi`, on-site up coupling
/// `rabi_prime`, and loss `kappa` on the excited level.
inline EffectiveOperator build_three_level(const LatticeSpec& lattice, cplx rabi, cplx rabi_prime, double kappa,
                                           Vec2 force) {
  lattice.validate();
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive", "kappa");
  const int levels = 3;
  const int ns = lattice.sites();
  EffectiveOperator op;
  op.n = lattice.n;
  op.levels = levels;
  op.potential = detail::linear_potential(lattice, levels, force);

  JumpStencil couplings = p_wave_down_part();
  for (auto& e : couplings.entries) e.coeff *= rabi;
  couplings.add(0, 0, Level::up, rabi_prime);
  detail::check_range(lattice, couplings.range());

  std::vector<Triplet> trip;
  for (int s = 0; s < ns; ++s) {
    const Site r = lattice.site(s);
    const double sign = ((r.x + r.y) % 2 != 0) ? -1.0 : 1.0;
    const Eigen::Index row = Eigen::Index(2) * ns + s;
    for (const auto& e : couplings.entries) {
      if (e.coeff == cplx(0.0)) continue;
      Site t;
      if (!detail::neighbour(lattice, r, e.d, t)) continue;
      const Eigen::Index col = Eigen::Index(static_cast<int>(e.level)) * ns + lattice.index(t);
      const cplx v = 0.5 * sign * e.coeff;
      trip.emplace_back(row, col, v);
      trip.emplace_back(col, row, std::conj(v));
    }
  }
  op.coherent = SparseMatrix(op.dim(), op.dim());
  op.coherent.setFromTriplets(trip.begin(), trip.end());
  op.jump = SparseMatrix(0, op.dim());
  op.loss = Eigen::VectorXd::Zero(op.dim());
  op.loss.segment(Eigen::Index(2) * ns, ns).setConstant(kappa);
  detail::finish_operator(op);
  return op;
}

/// Seeded random loss mask in a strip of width `depth` along the right edge.
inline LatticeSpec add_irregular_edge(LatticeSpec lattice, std::uint64_t seed, int depth, double fill_prob) {
  if (depth < 0 || 4 * depth >= lattice.n) throw ConfigError("edge depth must be below N/4", "edge_depth");
  std::mt19937_64 rng(seed);
  for (int x = lattice.hi() - depth + 1; x <= lattice.hi(); ++x) {
    for (int y = lattice.lo(); y <= lattice.hi(); ++y) {
      const double u = double(rng() >> 11) * 0x1.0p-53;
      if (u < fill_prob) lattice.loss_mask.push_back({x, y});
    }
  }
  return lattice;
}

struct PacketSpec {
  Vec2 r0;
  Vec2 k0;
  /// Real-space standard deviation; sigma_r^2 = N / 4 pi by default.
  double sigma_r = 0.0;
  std::vector<cplx> spin{cplx(1.0), cplx(1.0)};

  static double default_sigma_r(int n) { return std::sqrt(n / (4.0 * kPi)); }
};

/// Gaussian packet exp(-(r - r0)^2 / 4 sigma_r^2) e^{i k0.r} times the spin
/// vector, normalized to unit norm.
inline StateVector make_packet(const LatticeSpec& lattice, const PacketSpec& spec, std::ostream* warn = &std::cerr) {
  const double sigma = spec.sigma_r > 0.0 ? spec.sigma_r : PacketSpec::default_sigma_r(lattice.n);
  if (spec.sigma_r < 0.0 || !std::isfinite(sigma)) throw ConfigError("sigma_r must be positive", "sigma_r");
  if (spec.spin.empty() || spec.spin.size() > 3) throw ConfigError("spin must have 1 to 3 components", "spin");
  double spin_norm = 0.0;
  for (cplx c : spec.spin) spin_norm += std::norm(c);
  if (!(spin_norm > 0.0)) throw ConfigError("spin vector is zero", "spin");

  const int levels = std::max<int>(2, int(spec.spin.size()));
  StateVector psi(lattice.n, levels);
  double inside = 0.0;
  for (int s = 0; s < lattice.sites(); ++s) {
    const Site r = lattice.site(s);
    const double dx = r.x - spec.r0.x, dy = r.y - spec.r0.y;
    const double g = std::exp(-(dx * dx + dy * dy) / (4.0 * sigma * sigma));
    inside += g * g;
    const cplx phase = std::polar(g, spec.k0.x * r.x + spec.k0.y * r.y);
    for (std::size_t l = 0; l < spec.spin.size(); ++l) psi(int(l), s) = phase * spec.spin[l];
  }
  if (warn) {
    // Lattice sum of the squared Gaussian over a padded window for comparison.
    double total = 0.0;
    const int pad = int(std::ceil(8.0 * sigma)) + lattice.n;
    for (int x = -pad; x <= pad; ++x)
      for (int y = -pad; y <= pad; ++y) {
        const double dx = x + std::round(spec.r0.x) - spec.r0.x, dy = y + std::round(spec.r0.y) - spec.r0.y;
        total += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }
    if (1.0 - inside / total > 1e-6) {
      *warn << "warning: packet tail mass outside lattice " << (1.0 - inside / total) << "\n";
    }
  }
  psi.amp() /= std::sqrt(psi.amp().squaredNorm());
  psi.refresh_norm();
  return psi;
}

inline Vec2 com_position(const StateVector& state) {
  const double norm2 = state.amp().squaredNorm();
  if (!(norm2 > 1e-12)) throw EmptyState("com_position: state norm underflow");
  const auto rho = state.site_density();
  const LatticeSpec lat{state.n()};
  Vec2 acc;
  for (int s = 0; s < state.sites(); ++s) {
    const Site r = lat.site(s);
    acc += rho[s] * Vec2{double(r.x), double(r.y)};
  }
  return (1.0 / norm2) * acc;
}

namespace detail {

// Mean momentum along one axis from its marginal, with the window re-centred
// on the marginal's peak.
inline double peak_centered_mean(const std::vector<double>& marginal, int n) {
  const int lo = grid_min(n);
  int peak = 0;
  for (int i = 1; i < n; ++i)
    if (marginal[i] > marginal[peak]) peak = i;
  const double dk = kTwoPi / n;
  double w = 0.0, acc = 0.0;
  for (int j = grid_min(n); j <= grid_max(n); ++j) {
    const int idx = ((peak + j) % n + n) % n;
    const double p = marginal[idx];
    w += p;
    acc += p * dk * (peak + lo + j);
  }
  return wrap_momentum(acc / w);
}

}  // namespace detail

inline Vec2 com_momentum(const BZGrid<double>& density) {
  const int n = density.n();
  std::vector<double> px(n, 0.0), py(n, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = density.values()[std::size_t(i) * n + j];
      px[i] += v;
      py[j] += v;
      total += v;
    }
  if (!(total > 1e-12)) throw EmptyState("com_momentum: state norm underflow");
  return {detail::peak_centered_mean(px, n), detail::peak_centered_mean(py, n)};
}

inline Vec2 com_momentum(const StateVector& state) { return com_momentum(bz_density(state)); }

/// Keeps only the lower-band component psi_-(k) = <u_k|psi(k)> at every k.
inline StateVector project_lower(const StateVector& state, const BandData& band) {
  if (state.levels() != 2) throw Error("project_lower: two-level state required");
  if (band.n != state.n()) throw Error("project_lower: band grid does not match the lattice");
  KAmplitudes kamp = fourier_forward(state);
  for (std::size_t i = 0; i < kamp[0].values().size(); ++i) {
    const Spinor& u = band.spinor_lower.values()[i];
    const cplx c = std::conj(u[0]) * kamp[0].values()[i] + std::conj(u[1]) * kamp[1].values()[i];
    kamp[0].values()[i] = c * u[0];
    kamp[1].values()[i] = c * u[1];
  }
  return fourier_inverse(kamp);
}

/// Weight outside the lower band.
inline double upper_band_weight(const StateVector& state, const BandData& band) {
  const StateVector lower = project_lower(state, band);
  return std::max(0.0, state.amp().squaredNorm() - lower.amp().squaredNorm());
}

struct Snapshot {
  double t = 0.0;
  std::vector<double> real_density;
  BZGrid<double> bz_density;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vec2> com_r;
  std::vector<Vec2> com_k;
  std::vector<double> norm2;
  /// Population of each level at each sample.
  std::vector<std::vector<double>> populations;
  std::vector<Snapshot> snapshots;
  long steps = 0;
  long rejected = 0;
};

struct PropagationOptions {
  double t_final = 1.0;
  /// Sample times in [0, t_final]; empty means 101 uniform samples.
  std::vector<double> sample_times;
  std::vector<double> snapshot_times;
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Upper step limit; 0 picks 3 / spectral_bound.
  double dt_max = 0.0;
  long max_steps = 200'000'000;
  bool measure_momentum = true;
  /// Called at every sample with the current (unnormalized) state.
  std::function<void(double, const StateVector&)> observer;
};

struct Propagation {
  TrajectoryRecord record;
  StateVector state;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline std::vector<double> merged_events(const PropagationOptions& opt) {
  std::vector<double> ev = opt.sample_times;
  if (ev.empty()) {
    for (int i = 0; i <= 100; ++i) ev.push_back(opt.t_final * i / 100.0);
  }
  ev.insert(ev.end(), opt.snapshot_times.begin(), opt.snapshot_times.end());
  ev.push_back(opt.t_final);
  std::sort(ev.begin(), ev.end());
  ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
  ev.erase(std::remove_if(ev.begin(), ev.end(), [&](double t) { return t < 0.0 || t > opt.t_final; }), ev.end());
  return ev;
}

inline bool contains_time(const std::vector<double>& v, double t) {
  return std::find(v.begin(), v.end(), t) != v.end();
}

}  // namespace detail

/// Integrates i d/dt psi = H_eff psi with adaptive Dormand-Prince 5(4) steps
/// (local error measured in the state 2-norm), landing exactly on every
/// sample and snapshot time. A step that raises the norm by more than 1e-10
/// (relative) is rejected.
inline Propagation propagate(StateVector state, const EffectiveOperator& op, const PropagationOptions& opt) {
  using DP = detail::DormandPrince;
  if (state.size() != op.dim()) throw Error("propagate: state and operator dimensions differ");
  if (!(opt.t_final >= 0.0)) throw ConfigError("t_final must be non-negative", "t_final");

  const std::vector<double> events = detail::merged_events(opt);
  const std::vector<double> samples = opt.sample_times.empty() ? events : opt.sample_times;
  const double bound = std::max(op.spectral_bound, 1e-12);
  const double dt_cap = opt.dt_max > 0.0 ? opt.dt_max : 3.0 / bound;

  Propagation out;
  TrajectoryRecord& rec = out.record;
  auto record = [&](double t, const StateVector& s) {
    if (detail::contains_time(samples, t) || opt.sample_times.empty()) {
      rec.times.push_back(t);
      rec.norm2.push_back(s.norm2());
      rec.com_r.push_back(s.norm2() > 1e-12 ? com_position(s) : Vec2{NAN, NAN});
      rec.com_k.push_back(opt.measure_momentum && s.norm2() > 1e-12 ? com_momentum(s) : Vec2{NAN, NAN});
      std::vector<double> pops(s.levels());
      for (int l = 0; l < s.levels(); ++l) pops[l] = s.level_population(l);
      rec.populations.push_back(std::move(pops));
      if (opt.observer) opt.observer(t, s);
    }
    if (detail::contains_time(opt.snapshot_times, t)) {
      Snapshot snap;
      snap.t = t;
      snap.real_density = s.site_density();
      snap.bz_density = bz_density(s);
      rec.snapshots.push_back(std::move(snap));
    }
  };

  state.refresh_norm();
  CVector& y = state.amp();
  const Eigen::Index dim = y.size();
  const cplx mi(0.0, -1.0);
  auto rhs = [&](const CVector& v, CVector& k) {
    op.apply(v, k);
    k *= mi;
  };
  CVector k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), tmp(dim), ynew(dim);
  rhs(y, k1);

  double t = 0.0;
  double h = std::min(dt_cap, 0.5 / bound);
  double err_prev = 1e-4;
  std::size_t next = 0;
  if (!events.empty() && events.front() == 0.0) {
    record(0.0, state);
    next = 1;
  }
  while (next < events.size()) {
    const double target = events[next];
    const double h_try = std::min(h, dt_cap);
    bool clipped = false;
    double step = h_try;
    if (t + step >= target - 1e-14 * std::max(1.0, target)) {
      step = target - t;
      clipped = true;
    }
    if (step <= 0.0) {
      record(target, state);
      ++next;
      continue;
    }

    tmp = y + step * DP::a21 * k1;
    rhs(tmp, k2);
    tmp = y + step * (DP::a31 * k1 + DP::a32 * k2);
    rhs(tmp, k3);
    tmp = y + step * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3);
    rhs(tmp, k4);
    tmp = y + step * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4);
    rhs(tmp, k5);
    tmp = y + step * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5);
    rhs(tmp, k6);
    ynew = y + step * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
    rhs(ynew, k7);
    tmp = step * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);

    const double ynorm = std::max(y.norm(), ynew.norm());
    const double err = tmp.norm() / (opt.atol + opt.rtol * ynorm);
    const double norm2_new = ynew.squaredNorm();
    const bool norm_ok = norm2_new <= state.norm2() * (1.0 + 1e-10) + 1e-300;

    if (err <= 1.0 && norm_ok && std::isfinite(err)) {
      t = clipped ? target : t + step;
      y.swap(ynew);
      k1.swap(k7);
      state.refresh_norm();
      ++rec.steps;
      // PI controller.
      const double e = std::max(err, 1e-10);
      const double fac = std::clamp(0.9 * std::pow(e, -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0), 0.2, 5.0);
      err_prev = e;
      if (!clipped || step >= h_try) h = h_try * fac;
      if (clipped) {
        record(target, state);
        ++next;
      }
    } else {
      ++rec.rejected;
      const double fac = std::isfinite(err) && err > 1.0 ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.5;
      h = step * (norm_ok ? fac : std::min(fac, 0.5));
    }
    if (h < 1e-13 * std::max(1.0, t) || rec.steps + rec.rejected > opt.max_steps) {
      throw StepFailure("propagate: step control failed at t = " + std::to_string(t), op.spectral_bound);
    }
  }
  out.state = std::move(state);
  return out;
}

}  // namespace zeno
