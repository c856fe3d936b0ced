#pragma once

// CSV and key-value writers. Numbers use shortest round-trip formatting so
// identical results give identical bytes.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "zeno/band.hpp"
#include "zeno/config.hpp"
#include "zeno/dynamics.hpp"
#include "zeno/semiclassics.hpp"

namespace zeno {

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::string csv_row(std::initializer_list<double> values) {
  std::string row;
  bool first = true;
  for (double v : values) {
    if (!first) row += ',';
    row += format_double(v);
    first = false;
  }
  return row + '\n';
}

}  // namespace detail

inline constexpr const char* kTrajectoryHeader = "t_omega,com_x_a,com_y_a,com_kx_a,com_ky_a,norm2\n";

inline void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryRecord& rec) {
  auto out = detail::open_output(path);
  out << kTrajectoryHeader;
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    out << detail::csv_row(
        {rec.times[i], rec.com_r[i].x, rec.com_r[i].y, rec.com_k[i].x, rec.com_k[i].y, rec.norm2[i]});
  }
}

/// Level populations per sample: t_omega, pop_0, pop_1[, pop_2].
inline void write_populations_csv(const std::filesystem::path& path, const TrajectoryRecord& rec) {
  auto out = detail::open_output(path);
  const std::size_t levels = rec.populations.empty() ? 0 : rec.populations.front().size();
  out << "t_omega";
  for (std::size_t l = 0; l < levels; ++l) out << ",pop_" << l;
  out << '\n';
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    out << detail::format_double(rec.times[i]);
    for (double p : rec.populations[i]) out << ',' << detail::format_double(p);
    out << '\n';
  }
}

/// Semiclassical path in the trajectory schema; norm2 is fixed at 1.
inline void write_path_csv(const std::filesystem::path& path, const SemiclassicalPath& p) {
  auto out = detail::open_output(path);
  out << kTrajectoryHeader;
  for (std::size_t i = 0; i < p.times.size(); ++i) {
    out << detail::csv_row({p.times[i], p.r[i].x, p.r[i].y, p.k[i].x, p.k[i].y, 1.0});
  }
}

inline void write_grid_csv(const std::filesystem::path& path, const BZGrid<double>& g) {
  auto out = detail::open_output(path);
  out << "kx_index,ky_index,kx,ky,value\n";
  for (int mx = g.lo(); mx <= g.hi(); ++mx)
    for (int my = g.lo(); my <= g.hi(); ++my) {
      const Vec2 k = g.k(mx, my);
      out << mx << ',' << my << ',' << detail::csv_row({k.x, k.y, g.at(mx, my)});
    }
}

inline void write_texture_csv(const std::filesystem::path& path, const BZGrid<Vec3>& g) {
  auto out = detail::open_output(path);
  out << "kx_index,ky_index,kx,ky,sx,sy,sz\n";
  for (int mx = g.lo(); mx <= g.hi(); ++mx)
    for (int my = g.lo(); my <= g.hi(); ++my) {
      const Vec2 k = g.k(mx, my);
      const Vec3 s = g.at(mx, my);
      out << mx << ',' << my << ',' << detail::csv_row({k.x, k.y, s.x, s.y, s.z});
    }
}

/// Real-space density on the lattice: x, y, value.
inline void write_density_csv(const std::filesystem::path& path, int n, const std::vector<double>& density) {
  auto out = detail::open_output(path);
  out << "x,y,value\n";
  const LatticeSpec lat{n};
  for (int s = 0; s < lat.sites(); ++s) {
    const Site r = lat.site(s);
    out << r.x << ',' << r.y << ',' << detail::format_double(density[std::size_t(s)]) << '\n';
  }
}

/// Writes every snapshot as a real-space and a BZ grid file, plus a manifest
/// (index, t_omega, real_file, bz_file). Returns the files written.
inline std::vector<std::string> write_snapshots(const std::filesystem::path& dir, const std::string& prefix, int n,
                                                const std::vector<Snapshot>& snaps) {
  std::vector<std::string> files;
  if (snaps.empty()) return files;
  const std::string manifest = prefix + "snapshots.csv";
  auto out = detail::open_output(dir / manifest);
  out << "index,t_omega,real_file,bz_file\n";
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const std::string real = prefix + "snapshot_" + std::to_string(i) + "_real.csv";
    const std::string bz = prefix + "snapshot_" + std::to_string(i) + "_bz.csv";
    write_density_csv(dir / real, n, snaps[i].real_density);
    write_grid_csv(dir / bz, snaps[i].bz_density);
    out << i << ',' << detail::format_double(snaps[i].t) << ',' << real << ',' << bz << '\n';
    files.push_back(real);
    files.push_back(bz);
  }
  files.push_back(manifest);
  return files;
}

/// Ordered key = value text record.
class KeyValueRecord {
 public:
  void add(const std::string& key, double v) { entries_.emplace_back(key, detail::format_double(v)); }
  void add(const std::string& key, int v) { entries_.emplace_back(key, std::to_string(v)); }
  void add(const std::string& key, Vec2 v) { entries_.emplace_back(key, detail::Codec<Vec2>::write(v)); }
  void add(const std::string& key, const std::string& v) { entries_.emplace_back(key, v); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void write(const std::filesystem::path& path) const {
    auto out = detail::open_output(path);
    out << str();
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace zeno
