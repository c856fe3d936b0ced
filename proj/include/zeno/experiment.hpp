#pragma once

// Turns an ExperimentConfig into runs (one per scan value, two per value for
// the adiabatic comparison), executes them, and writes one directory of
// CSV/text outputs.

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "zeno/band.hpp"
#include "zeno/config.hpp"
#include "zeno/dynamics.hpp"
#include "zeno/io.hpp"
#include "zeno/models.hpp"
#include "zeno/oracles.hpp"
#include "zeno/semiclassics.hpp"

namespace zeno {

struct SpreadSample {
  double t = 0.0;
  Vec2 measured;
  Vec2 oracle;
};

struct RunResult {
  /// File-name prefix; empty for a single run.
  std::string label;
  /// Scan value that produced this run (empty without a scan).
  std::string scan_value;
  ExperimentConfig config;
  TrajectoryRecord trajectory;
  std::optional<SemiclassicalPath> semiclassical;
  std::optional<SemiclassicalPath> semiclassical_smoothed;
  std::optional<RecoilResult> recoil;
  std::optional<RetroReport> retro;
  std::string retro_note;
  std::vector<SpreadSample> spread;
  /// (t, L1 distance) pairs.
  std::vector<std::pair<double, double>> ballistic;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::optional<BandData> band;
  std::vector<RunResult> runs;
};

/// The two-level stencil a config describes. The three-level model maps to
/// its adiabatically eliminated stencil; the hopping model has none.
inline JumpStencil stencil_for(const ExperimentConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::model_a:
      return model_a_stencil(cfg.l_up);
    case ModelKind::model_b:
      return model_b_stencil(cfg.l_up_prime);
    case ModelKind::three_level:
      return model_a_stencil(cfg.rabi_prime / cfg.rabi);
    case ModelKind::hopping:
      return {};
  }
  return {};
}

/// Two-level model obtained by eliminating the excited level:
/// Gamma = |Omega|^2 / kappa, l_up = Omega' / Omega.
inline ExperimentConfig effective_config(ExperimentConfig cfg) {
  cfg.gamma = std::norm(cfg.rabi) / cfg.kappa;
  cfg.l_up = cfg.rabi_prime / cfg.rabi;
  cfg.model = ModelKind::model_a;
  if (cfg.spin.size() > 2) cfg.spin.resize(2);
  return cfg;
}

inline LatticeSpec lattice_for(const ExperimentConfig& cfg) {
  LatticeSpec lat{cfg.n, cfg.boundary, {}, cfg.gamma_edge};
  if (cfg.edge_depth > 0 && cfg.edge_fill > 0.0) lat = add_irregular_edge(lat, cfg.seed, cfg.edge_depth, cfg.edge_fill);
  return lat;
}

inline EffectiveOperator operator_for(const ExperimentConfig& cfg, const LatticeSpec& lat) {
  if (cfg.model == ModelKind::three_level) return build_three_level(lat, cfg.rabi, cfg.rabi_prime, cfg.kappa, cfg.force);
  const JumpStencil stencil = stencil_for(cfg);
  if (!stencil.entries.empty()) require_gapped(stencil, cfg.n);
  return build_effective(lat, stencil, cfg.model == ModelKind::hopping ? 0.0 : cfg.gamma, cfg.force, cfg.hopping);
}

inline PacketSpec packet_for(const ExperimentConfig& cfg) {
  PacketSpec p;
  p.r0 = cfg.r0;
  p.k0 = cfg.k0;
  p.sigma_r = cfg.packet_sigma_r();
  p.spin = cfg.spin;
  if (cfg.model == ModelKind::three_level) {
    p.spin.resize(3, cplx(0.0));
  } else if (p.spin.size() > 2) {
    throw ConfigError("two-level models take a two-component spin", "spin");
  }
  return p;
}

inline std::vector<double> sample_times(const ExperimentConfig& cfg) {
  std::vector<double> t;
  const long count = std::lround(std::floor(cfg.t_final / cfg.sample_dt + 1e-9));
  for (long i = 0; i <= count; ++i) t.push_back(double(i) * cfg.sample_dt);
  if (t.back() < cfg.t_final) t.push_back(cfg.t_final);
  return t;
}

namespace detail {

// Per-axis variance of the normalized real-space density.
inline Vec2 density_variance(const StateVector& s) {
  const auto rho = s.site_density();
  const LatticeSpec lat{s.n()};
  double w = 0.0, mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0;
  for (int i = 0; i < lat.sites(); ++i) {
    const Site r = lat.site(i);
    const double p = rho[std::size_t(i)];
    w += p;
    mx += p * r.x;
    my += p * r.y;
    xx += p * r.x * r.x;
    yy += p * r.y * r.y;
  }
  mx /= w;
  my /= w;
  return {xx / w - mx * mx, yy / w - my * my};
}

inline RunResult run_dynamics(const ExperimentConfig& cfg, std::string label, std::string scan_value) {
  RunResult run;
  run.label = std::move(label);
  run.scan_value = std::move(scan_value);
  run.config = cfg;

  const LatticeSpec lat = lattice_for(cfg);
  const EffectiveOperator op = operator_for(cfg, lat);
  const PacketSpec packet = packet_for(cfg);
  const StateVector psi0 = make_packet(lat, packet, nullptr);

  PropagationOptions opt;
  opt.t_final = cfg.t_final;
  opt.sample_times = sample_times(cfg);
  opt.snapshot_times = cfg.snapshots;
  opt.snapshot_times.insert(opt.snapshot_times.end(), cfg.ballistic_times.begin(), cfg.ballistic_times.end());
  opt.rtol = cfg.rtol;
  opt.atol = cfg.atol;
  const Vec2 v_group{2.0 * cfg.hopping * std::sin(cfg.k0.x), 2.0 * cfg.hopping * std::sin(cfg.k0.y)};
  if (cfg.spread) {
    opt.observer = [&](double t, const StateVector& s) {
      run.spread.push_back({t, density_variance(s), free_spread_oracle(cfg.hopping, packet.sigma_r, v_group, t)});
    };
  }
  run.trajectory = propagate(psi0, op, opt).record;

  const JumpStencil stencil = stencil_for(cfg);
  const bool two_level_band = !stencil.entries.empty() && cfg.model != ModelKind::three_level;
  if (two_level_band && (cfg.semiclassics || !cfg.ballistic_times.empty())) {
    const BandData band = compute_band(stencil, cfg.n, cfg.smoothing ? std::optional(cfg.packet_sigma_k()) : std::nullopt);
    if (cfg.semiclassics) {
      run.semiclassical = integrate_semiclassical(cfg.k0, cfg.r0, cfg.force, PeriodicField(band.curvature),
                                                  cfg.t_final, cfg.sample_dt);
      if (band.curvature_smoothed) {
        run.semiclassical_smoothed = integrate_semiclassical(
            cfg.k0, cfg.r0, cfg.force, PeriodicField(*band.curvature_smoothed), cfg.t_final, cfg.sample_dt);
      }
    }
    if (!cfg.ballistic_times.empty()) {
      const BZGrid<double> initial = bz_density(project_lower(psi0, band));
      for (double t : cfg.ballistic_times) {
        for (const auto& snap : run.trajectory.snapshots) {
          if (snap.t == t) run.ballistic.emplace_back(t, ballistic_check(initial, snap.bz_density, t * cfg.force));
        }
      }
    }
  }
  if (cfg.recoil && two_level_band) run.recoil = recoil_oracle(stencil, cfg.packet_sigma_k());
  if (cfg.retro) {
    RetroOptions ro;
    ro.x_boundary = lat.hi() - cfg.edge_depth;
    ro.sigma_r = packet.sigma_r;
    ro.bz_period = cfg.bz_period > 0.0 ? cfg.bz_period : closed_orbit_period(cfg.force);
    try {
      run.retro = detect_retroreflection(run.trajectory, ro);
    } catch (const NoCollision& e) {
      run.retro_note = e.what();
    }
  }
  return run;
}

struct RunJob {
  ExperimentConfig config;
  std::string label;
  std::string scan_value;
};

}  // namespace detail

/// Executes every run of the experiment, up to `threads` at a time. Runs are
/// independent, so the result does not depend on the thread count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1) {
  validate(cfg);
  ExperimentResult result;
  result.config = cfg;
  if (cfg.task == Task::band) {
    const JumpStencil stencil = stencil_for(cfg);
    if (stencil.entries.empty()) throw ConfigError("band task needs a jump stencil", "kind");
    result.band = compute_band(stencil, cfg.n, cfg.smoothing ? std::optional(cfg.packet_sigma_k()) : std::nullopt);
    return result;
  }

  std::vector<detail::RunJob> jobs;
  std::vector<std::pair<ExperimentConfig, std::string>> variants;
  if (cfg.scan == ScanParameter::none) {
    variants.emplace_back(cfg, "");
  } else {
    for (const auto& v : cfg.scan_values) variants.emplace_back(with_scan_value(cfg, v), v);
  }
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string prefix = cfg.scan == ScanParameter::none ? "" : "run" + std::to_string(i) + "_";
    const auto& [vcfg, value] = variants[i];
    if (cfg.task == Task::adiabatic) {
      jobs.push_back({vcfg, "full_" + prefix, value});
      jobs.push_back({effective_config(vcfg), "effective_" + prefix, value});
    } else {
      jobs.push_back({vcfg, prefix, value});
    }
  }

  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        result.runs[i] = detail::run_dynamics(jobs[i].config, jobs[i].label, jobs[i].scan_value);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min<int>(threads, int(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

inline KeyValueRecord run_record(const RunResult& run) {
  KeyValueRecord rec;
  if (!run.scan_value.empty()) rec.add("scan_value", run.scan_value);
  const auto& tr = run.trajectory;
  if (!tr.times.empty()) {
    rec.add("t_final", tr.times.back());
    rec.add("norm2_final", tr.norm2.back());
    rec.add("com_r_final", tr.com_r.back());
    rec.add("com_k_final", tr.com_k.back());
    rec.add("steps", int(tr.steps));
    rec.add("rejected_steps", int(tr.rejected));
  }
  if (run.recoil) {
    rec.add("recoil_k_mean", run.recoil->k_mean);
    rec.add("recoil_r_mean", run.recoil->r_mean);
    rec.add("recoil_norm2_after", run.recoil->norm2_after);
  }
  if (run.semiclassical) rec.add("semiclassical_r_final", run.semiclassical->r.back());
  if (run.semiclassical_smoothed) rec.add("semiclassical_smoothed_r_final", run.semiclassical_smoothed->r.back());
  if (run.retro) {
    rec.add("retro_collision_time", run.retro->collision_time);
    rec.add("retro_pre_velocity", run.retro->pre_velocity);
    rec.add("retro_post_velocity", run.retro->post_velocity);
    rec.add("retro_pre_velocity_sign", run.retro->pre_velocity_sign);
    rec.add("retro_post_velocity_sign", run.retro->post_velocity_sign);
    rec.add("retro_pre_step", run.retro->pre_step);
    rec.add("retro_post_step", run.retro->post_step);
  } else if (!run.retro_note.empty()) {
    rec.add("retro", "no collision: " + run.retro_note);
  }
  for (const auto& [t, d] : run.ballistic) rec.add("ballistic_l1_t" + detail::format_double(t), d);
  return rec;
}

/// Writes the experiment directory and returns the list of files written
/// (also recorded in manifest.txt).
inline std::vector<std::string> write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  {
    auto out = detail::open_output(dir / "config.ini");
    out << serialize_config(result.config);
    files.push_back("config.ini");
  }
  if (result.band) {
    const BandData& b = *result.band;
    write_grid_csv(dir / "delta.csv", b.delta);
    write_grid_csv(dir / "curvature.csv", b.curvature);
    write_texture_csv(dir / "texture.csv", b.texture);
    files.insert(files.end(), {"delta.csv", "curvature.csv", "texture.csv"});
    if (b.curvature_smoothed) {
      write_grid_csv(dir / "curvature_smoothed.csv", *b.curvature_smoothed);
      files.push_back("curvature_smoothed.csv");
    }
    double lo = b.curvature.values().front(), hi = lo;
    for (double v : b.curvature.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    KeyValueRecord rec;
    rec.add("n", b.n);
    rec.add("chern", b.chern);
    rec.add("winding", b.winding);
    rec.add("curvature_min", lo);
    rec.add("curvature_max", hi);
    rec.write(dir / "band.txt");
    files.push_back("band.txt");
  }
  for (const auto& run : result.runs) {
    const std::string& p = run.label;
    write_trajectory_csv(dir / (p + "trajectory.csv"), run.trajectory);
    write_populations_csv(dir / (p + "populations.csv"), run.trajectory);
    files.push_back(p + "trajectory.csv");
    files.push_back(p + "populations.csv");
    if (run.semiclassical) {
      write_path_csv(dir / (p + "semiclassical.csv"), *run.semiclassical);
      files.push_back(p + "semiclassical.csv");
    }
    if (run.semiclassical_smoothed) {
      write_path_csv(dir / (p + "semiclassical_smoothed.csv"), *run.semiclassical_smoothed);
      files.push_back(p + "semiclassical_smoothed.csv");
    }
    if (!run.spread.empty()) {
      auto out = detail::open_output(dir / (p + "spread.csv"));
      out << "t,sigma2_x,sigma2_y,oracle_sigma2_x,oracle_sigma2_y\n";
      for (const auto& s : run.spread)
        out << detail::csv_row({s.t, s.measured.x, s.measured.y, s.oracle.x, s.oracle.y});
      files.push_back(p + "spread.csv");
    }
    const auto snaps = write_snapshots(dir, p, run.config.n, run.trajectory.snapshots);
    files.insert(files.end(), snaps.begin(), snaps.end());
    run_record(run).write(dir / (p + "oracle.txt"));
    files.push_back(p + "oracle.txt");
  }
  if (result.config.scan != ScanParameter::none) {
    auto out = detail::open_output(dir / "scan.csv");
    out << "label,value,norm2_final,com_x_final,com_y_final\n";
    for (const auto& run : result.runs) {
      const auto& tr = run.trajectory;
      out << run.label << ",\"" << run.scan_value << "\","
          << detail::csv_row({tr.norm2.back(), tr.com_r.back().x, tr.com_r.back().y});
    }
    files.push_back("scan.csv");
  }
  {
    auto out = detail::open_output(dir / "manifest.txt");
    out << "experiment = " << result.config.name << "\n";
    for (const auto& f : files) out << "file = " << f << "\n";
    files.push_back("manifest.txt");
  }
  return files;
}

}  // namespace zeno
