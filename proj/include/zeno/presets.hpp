#pragma once

// Named experiment presets. Forces are unit vectors (omega = |F| a = 1), so
// times are in units of 1/omega; the hopping preset measures time in 1/J.

#include <cmath>
#include <string>
#include <vector>

#include "zeno/config.hpp"

namespace zeno {

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "band-fig2",          "zhe-short-fig3",          "gamma-scan-figS1S2",       "spread-scan-figS3",
      "phase-scan-figS4",   "retro-fig4",              "retro-irregular-figS5",    "ergodic-figS6",
      "retro-modelB-figS7sup", "ordinary-reflection-figS8", "adiabatic-figS7"};
  return names;
}

namespace detail {

inline Vec2 unit(double x, double y) {
  const double n = std::hypot(x, y);
  return {x / n, y / n};
}

inline ExperimentConfig long_run_base(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.gamma = 1000.0;
  c.force = unit(-1.0, 3.0);
  c.r0 = {13.0, 0.0};
  c.t_final = 100.0;
  c.sample_dt = 0.25;
  c.retro = true;
  return c;
}

}  // namespace detail

inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "band-fig2") {
    c.task = Task::band;
    c.smoothing = true;
  } else if (name == "zhe-short-fig3") {
    c.semiclassics = true;
    c.smoothing = true;
    c.recoil = true;
    c.ballistic_times = {0.25, 0.5, 1.0};
  } else if (name == "gamma-scan-figS1S2") {
    c.n = 40;
    // Same packet as the N = 80 runs; the smaller lattice only speeds up the scan.
    c.sigma_r = PacketSpec::default_sigma_r(80);
    c.semiclassics = true;
    c.smoothing = true;
    c.scan = ScanParameter::gamma;
    c.scan_values = {"0.25", "0.5", "1", "2", "3", "5", "7", "10", "20", "50", "100", "1000"};
  } else if (name == "spread-scan-figS3") {
    c.semiclassics = true;
    c.recoil = true;
    c.scan = ScanParameter::sigma_scale;
    c.scan_values = {"1", "2", "3"};
  } else if (name == "phase-scan-figS4") {
    c.recoil = true;
    c.snapshots = {0.1, 1.0};
    c.scan = ScanParameter::l_up;
    c.scan_values = {"(1,0)", "(0,1)", "(-1,0)", "(0,-1)"};
  } else if (name == "retro-fig4") {
    c = detail::long_run_base(name);
    c.snapshots = {20.0, 60.0, 100.0};
  } else if (name == "retro-irregular-figS5") {
    c = detail::long_run_base(name);
    c.spin = {cplx(0.0), cplx(1.0)};
    c.edge_depth = 5;
    c.edge_fill = 0.5;
    c.seed = 2017;
    c.snapshots = {16.0, 50.0, 84.0};
  } else if (name == "ergodic-figS6") {
    c = detail::long_run_base(name);
    c.scan = ScanParameter::force;
    const Vec2 ergodic = detail::unit(-1.0, std::sqrt(2.0));
    const Vec2 diagonal = detail::unit(-1.0, 1.0);
    c.scan_values = {detail::Codec<Vec2>::write(ergodic), detail::Codec<Vec2>::write(diagonal)};
  } else if (name == "retro-modelB-figS7sup") {
    c = detail::long_run_base(name);
    c.model = ModelKind::model_b;
    c.l_up_prime = -5.0;
    // Wider damping spectrum and twice the run length: Gamma = 1000 would take hours.
    c.gamma = 100.0;
    c.force = detail::unit(-1.0, 1.0);
    c.t_final = 200.0;
    c.snapshots = {20.0, 100.0, 180.0};
  } else if (name == "ordinary-reflection-figS8") {
    c.model = ModelKind::hopping;
    c.hopping = 1.0;
    c.gamma = 0.0;
    c.force = {0.0, 0.0};
    c.r0 = {13.0, 0.0};
    c.k0 = {kPi / 2.0, std::asin(1.0 / 3.0)};
    c.spin = {cplx(1.0), cplx(0.0)};
    c.t_final = 24.0;
    c.sample_dt = 0.05;
    c.spread = true;
    c.retro = true;
    c.snapshots = {4.0, 14.0, 24.0};
  } else if (name == "adiabatic-figS7") {
    c.task = Task::adiabatic;
    c.model = ModelKind::three_level;
    c.n = 40;
    c.sigma_r = PacketSpec::default_sigma_r(80);
    c.kappa = 250.0;
    c.rabi = 50.0;
    c.rabi_prime = {0.0, -50.0};
    c.gamma = 10.0;
    c.scan = ScanParameter::spin;
    c.scan_values = {"0, 1", detail::Codec<std::vector<cplx>>::write({cplx(kInvSqrt2), cplx(kInvSqrt2)})};
  } else {
    throw UnknownPreset("unknown preset '" + name + "'");
  }
  return c;
}

}  // namespace zeno
