#pragma once

// Lattice geometry, single-particle states, jump stencils and the
// real <-> momentum transforms shared by the rest of the library.
//
// Conventions: lengths are in units of the lattice constant a, hbar = 1.
// Site coordinates and k-grid indices both run over
//   m in { -ceil(N/2)+1, ..., floor(N/2) },
// and k = (2 pi / N) * (m_x, m_y).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <fftw3.h>

#include "zeno/errors.hpp"

namespace zeno {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
  Vec2& operator+=(Vec2 b) {
    x += b.x;
    y += b.y;
    return *this;
  }
  double dot(Vec2 b) const { return x * b.x + y * b.y; }
  double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Integer lattice coordinates (units of a).
struct Site {
  int x = 0;
  int y = 0;
  friend bool operator==(Site, Site) = default;
};

inline int grid_min(int n) { return -((n + 1) / 2) + 1; }
inline int grid_max(int n) { return n / 2; }

/// Wraps an integer coordinate into the centered range of an n-point axis.
inline int wrap_coord(int m, int n) {
  const int lo = grid_min(n);
  int r = (m - lo) % n;
  if (r < 0) r += n;
  return r + lo;
}

/// Wraps a momentum component into (-pi, pi].
inline double wrap_momentum(double k) {
  double r = std::remainder(k, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

enum class Boundary { open, periodic };

enum class Level : int { up = 0, down = 1, e = 2 };

inline const char* to_string(Boundary b) { return b == Boundary::open ? "open" : "periodic"; }

struct LatticeSpec {
  int n = 0;
  Boundary boundary = Boundary::open;
  /// Sites with extra on-site loss.
  std::vector<Site> loss_mask;
  /// Loss rate on masked sites, in units of Gamma.
  double gamma_edge = 1.0;

  int sites() const { return n * n; }
  int lo() const { return grid_min(n); }
  int hi() const { return grid_max(n); }

  bool contains(Site s) const { return s.x >= lo() && s.x <= hi() && s.y >= lo() && s.y <= hi(); }

  /// Row-major site index, x slow.
  int index(Site s) const { return (s.x - lo()) * n + (s.y - lo()); }
  Site site(int idx) const { return {idx / n + lo(), idx % n + lo()}; }

  void validate() const {
    if (n < 4) throw ConfigError("lattice size must be at least 4", "n");
    if (gamma_edge < 0.0) throw ConfigError("edge loss rate must be non-negative", "gamma_edge");
    for (const Site& s : loss_mask) {
      if (!contains(s)) {
        throw ConfigError("loss-mask site (" + std::to_string(s.x) + "," + std::to_string(s.y) +
                          ") lies outside the lattice", "loss_mask");
      }
    }
  }
};

/// Single-particle amplitudes over (level, site), level-major storage, with a
/// cached squared norm.
class StateVector {
 public:
  StateVector() = default;
  StateVector(int n, int levels) : n_(n), levels_(levels), amp_(CVector::Zero(std::size_t(n) * n * levels)) {}
  StateVector(int n, int levels, CVector amp) : n_(n), levels_(levels), amp_(std::move(amp)) {
    if (amp_.size() != Eigen::Index(n) * n * levels) throw Error("StateVector: amplitude size mismatch");
    refresh_norm();
  }

  int n() const { return n_; }
  int levels() const { return levels_; }
  int sites() const { return n_ * n_; }
  Eigen::Index size() const { return amp_.size(); }

  cplx& operator()(int level, int site) { return amp_[Eigen::Index(level) * sites() + site]; }
  cplx operator()(int level, int site) const { return amp_[Eigen::Index(level) * sites() + site]; }

  const CVector& amp() const { return amp_; }
  /// Mutable access; callers must refresh_norm() afterwards.
  CVector& amp() { return amp_; }

  double norm2() const { return norm2_; }
  double refresh_norm() {
    norm2_ = amp_.squaredNorm();
    return norm2_;
  }

  /// Total probability on each site, summed over levels.
  std::vector<double> site_density() const {
    std::vector<double> rho(sites(), 0.0);
    for (int l = 0; l < levels_; ++l)
      for (int s = 0; s < sites(); ++s) rho[s] += std::norm((*this)(l, s));
    return rho;
  }

  double level_population(int level) const {
    return amp_.segment(Eigen::Index(level) * sites(), sites()).squaredNorm();
  }

 private:
  int n_ = 0;
  int levels_ = 0;
  CVector amp_;
  double norm2_ = 0.0;
};

/// Values on the N x N Brillouin-zone grid. `offset` shifts every sample
/// point by a fraction of the grid spacing (0.5 for plaquette centers).
template <class T>
class BZGrid {
 public:
  BZGrid() = default;
  explicit BZGrid(int n, T fill = T{}, Vec2 offset = {}) : n_(n), offset_(offset), values_(std::size_t(n) * n, fill) {}

  int n() const { return n_; }
  Vec2 offset() const { return offset_; }
  double spacing() const { return kTwoPi / n_; }
  int lo() const { return grid_min(n_); }
  int hi() const { return grid_max(n_); }

  /// Index access with periodic wrap-around, (mx, my) centered.
  T& at(int mx, int my) { return values_[flat(mx, my)]; }
  const T& at(int mx, int my) const { return values_[flat(mx, my)]; }

  Vec2 k(int mx, int my) const { return {spacing() * (mx + offset_.x), spacing() * (my + offset_.y)}; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  std::size_t flat(int mx, int my) const {
    return std::size_t(wrap_coord(mx, n_) - lo()) * n_ + std::size_t(wrap_coord(my, n_) - lo());
  }

  template <class F>
  static BZGrid sample(int n, F&& f, Vec2 offset = {}) {
    BZGrid g(n, T{}, offset);
    for (int mx = g.lo(); mx <= g.hi(); ++mx)
      for (int my = g.lo(); my <= g.hi(); ++my) g.at(mx, my) = f(g.k(mx, my));
    return g;
  }

 private:
  int n_ = 0;
  Vec2 offset_{};
  std::vector<T> values_;
};

using KAmplitudes = std::vector<BZGrid<cplx>>;

struct StencilEntry {
  Site d;
  Level level;
  cplx coeff;
};

/// Finite map (displacement, level) -> coefficient defining
///   L_r = sum_{d, sigma} l_{d, sigma} c_{r + d, sigma}.
struct JumpStencil {
  std::vector<StencilEntry> entries;
  /// Multiplies L_r by (-1)^(x+y); only the three-level coupling uses it.
  bool staggered_sign = false;

  JumpStencil& add(int dx, int dy, Level level, cplx coeff) {
    for (auto& e : entries) {
      if (e.d == Site{dx, dy} && e.level == level) {
        e.coeff += coeff;
        return *this;
      }
    }
    entries.push_back({{dx, dy}, level, coeff});
    return *this;
  }

  int range() const {
    int r = 0;
    for (const auto& e : entries) r = std::max({r, std::abs(e.d.x), std::abs(e.d.y)});
    return r;
  }
};

using Symbol = std::array<cplx, 2>;

/// l_{k sigma} = sum_d e^{i k.d} l_{d sigma}, for sigma = up, down.
inline Symbol stencil_symbol(const JumpStencil& stencil, Vec2 k) {
  Symbol l{};
  for (const auto& e : stencil.entries) {
    if (e.level == Level::e) continue;
    l[static_cast<int>(e.level)] += e.coeff * std::polar(1.0, k.x * e.d.x + k.y * e.d.y);
  }
  return l;
}

/// Gradient of the symbol, {d/dkx, d/dky} per level.
inline std::array<Symbol, 2> stencil_symbol_gradient(const JumpStencil& stencil, Vec2 k) {
  std::array<Symbol, 2> g{};
  for (const auto& e : stencil.entries) {
    if (e.level == Level::e) continue;
    const cplx term = cplx(0.0, 1.0) * e.coeff * std::polar(1.0, k.x * e.d.x + k.y * e.d.y);
    g[0][static_cast<int>(e.level)] += double(e.d.x) * term;
    g[1][static_cast<int>(e.level)] += double(e.d.y) * term;
  }
  return g;
}

inline double damping_gap(const Symbol& l) { return std::norm(l[0]) + std::norm(l[1]); }

namespace detail {

// FFTW plans are created under a lock; executing an existing plan on fresh
// arrays (fftw_execute_dft) is thread-safe.
class FftPlans {
 public:
  static fftw_plan get(int n, int sign) {
    static FftPlans instance;
    std::lock_guard lock(instance.mutex_);
    const long key = long(n) * 4 + (sign < 0 ? 0 : 1);
    auto it = instance.plans_.find(key);
    if (it != instance.plans_.end()) return it->second;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::size_t(n) * n));
    fftw_plan p = fftw_plan_dft_2d(n, n, buf, buf, sign, FFTW_ESTIMATE);
    fftw_free(buf);
    instance.plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<long, fftw_plan> plans_;
};

struct FftwBuffer {
  explicit FftwBuffer(std::size_t count)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count))) {}
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  cplx* get() { return reinterpret_cast<cplx*>(data); }
  fftw_complex* data;
};

// Transforms one N x N block given in centered order. With index j = m mod N
// the centered transform is exactly the standard DFT.
inline void centered_dft(const cplx* in, cplx* out, int n, int sign) {
  const std::size_t count = std::size_t(n) * n;
  FftwBuffer buf(count);
  cplx* b = buf.get();
  const int lo = grid_min(n);
  auto fft_index = [n, lo](int i) { return ((i + lo) % n + n) % n; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b[std::size_t(fft_index(i)) * n + fft_index(j)] = in[std::size_t(i) * n + j];
  fftw_execute_dft(FftPlans::get(n, sign), buf.data, buf.data);
  const double scale = 1.0 / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] = scale * b[std::size_t(fft_index(i)) * n + fft_index(j)];
}

}  // namespace detail

/// psi_sigma(k) = N^-1 sum_r e^{-i k.r} psi_sigma(r), one grid per level.
inline KAmplitudes fourier_forward(const StateVector& state) {
  const int n = state.n();
  KAmplitudes out;
  out.reserve(state.levels());
  for (int l = 0; l < state.levels(); ++l) {
    BZGrid<cplx> g(n);
    detail::centered_dft(state.amp().data() + std::size_t(l) * state.sites(), g.values().data(), n, FFTW_FORWARD);
    out.push_back(std::move(g));
  }
  return out;
}

inline StateVector fourier_inverse(const KAmplitudes& kamp) {
  if (kamp.empty()) throw Error("fourier_inverse: no levels");
  const int n = kamp.front().n();
  StateVector state(n, int(kamp.size()));
  for (std::size_t l = 0; l < kamp.size(); ++l) {
    detail::centered_dft(kamp[l].values().data(), state.amp().data() + l * state.sites(), n, FFTW_BACKWARD);
  }
  state.refresh_norm();
  return state;
}

/// Momentum-space density summed over levels.
inline BZGrid<double> bz_density(const KAmplitudes& kamp) {
  BZGrid<double> rho(kamp.front().n());
  for (const auto& g : kamp)
    for (std::size_t i = 0; i < g.values().size(); ++i) rho.values()[i] += std::norm(g.values()[i]);
  return rho;
}

inline BZGrid<double> bz_density(const StateVector& state) { return bz_density(fourier_forward(state)); }

}  // namespace zeno
