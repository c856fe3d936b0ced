#pragma once

// The jump stencils shipped with the library.

#include <algorithm>
#include <limits>
#include <string>

#include "zeno/lattice.hpp"

namespace zeno {

/// Smallest damping gap over the N x N Brillouin-zone grid.
inline double min_damping_gap(const JumpStencil& stencil, int n) {
  double gap = std::numeric_limits<double>::infinity();
  const double dk = kTwoPi / n;
  for (int mx = grid_min(n); mx <= grid_max(n); ++mx)
    for (int my = grid_min(n); my <= grid_max(n); ++my)
      gap = std::min(gap, damping_gap(stencil_symbol(stencil, {dk * mx, dk * my})));
  return gap;
}

inline void require_gapped(const JumpStencil& stencil, int n, double gap_floor = 1e-12) {
  const double gap = min_damping_gap(stencil, n);
  if (!(gap > gap_floor)) {
    throw ZeroGap("damping gap vanishes on the Brillouin zone (min " + std::to_string(gap) + ")");
  }
}

/// p-wave down coupling plus an on-site up coefficient:
///   L_r = l_up c_{r,up} + c_{r+x,dn} + i c_{r+y,dn} - c_{r-x,dn} - i c_{r-y,dn}.
inline JumpStencil p_wave_down_part(JumpStencil s = {}) {
  s.add(1, 0, Level::down, 1.0);
  s.add(0, 1, Level::down, cplx(0.0, 1.0));
  s.add(-1, 0, Level::down, -1.0);
  s.add(0, -1, Level::down, cplx(0.0, -1.0));
  return s;
}

inline JumpStencil model_a_stencil(cplx l_up) {
  JumpStencil s;
  s.add(0, 0, Level::up, l_up);
  return p_wave_down_part(std::move(s));
}

/// Model with s-wave-like up coupling: on-site l_up_prime plus unit
/// nearest-neighbour up coefficients, and the same p-wave down part.
inline JumpStencil model_b_stencil(double l_up_prime) {
  JumpStencil s;
  s.add(0, 0, Level::up, l_up_prime);
  s.add(1, 0, Level::up, 1.0);
  s.add(0, 1, Level::up, 1.0);
  s.add(-1, 0, Level::up, 1.0);
  s.add(0, -1, Level::up, 1.0);
  return p_wave_down_part(std::move(s));
}

}  // namespace zeno
