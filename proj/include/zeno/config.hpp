#pragma once

// Experiment configuration: a flat INI-style text format
//
//   # comment
//   [section]
//   key = value
//
// Every key is known in advance; unknown sections or keys, duplicates and
// malformed values are ConfigErrors carrying the line number and key.
// Doubles are written in shortest round-trip form, so serialize -> parse
// reproduces a config bit for bit.

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "zeno/dynamics.hpp"
#include "zeno/lattice.hpp"

namespace zeno {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

enum class ModelKind { model_a, model_b, three_level, hopping };
enum class Task { band, dynamics, adiabatic };
enum class ScanParameter { none, gamma, sigma_scale, l_up, force, spin };

struct ExperimentConfig {
  // [experiment]
  std::string name = "experiment";
  Task task = Task::dynamics;
  std::uint64_t seed = 1;

  // [model]
  ModelKind model = ModelKind::model_a;
  cplx l_up{0.0, -1.0};
  double l_up_prime = -5.0;
  cplx rabi{50.0, 0.0};
  cplx rabi_prime{0.0, -50.0};
  double kappa = 250.0;
  /// Nearest-neighbour hopping J, added to any model.
  double hopping = 0.0;

  // [lattice]
  int n = 80;
  Boundary boundary = Boundary::open;
  /// Loss on masked sites in units of gamma.
  double gamma_edge = 1.0;
  int edge_depth = 0;
  double edge_fill = 0.0;

  // [dynamics]
  double gamma = 1000.0;
  Vec2 force{0.0, 1.0};

  // [packet]
  Vec2 r0{};
  Vec2 k0{};
  /// Unset ("auto") selects sqrt(N / 4 pi).
  std::optional<double> sigma_r;
  /// Multiplies the (possibly default) sigma_r.
  double sigma_scale = 1.0;
  std::vector<cplx> spin{cplx(kInvSqrt2), cplx(kInvSqrt2)};

  // [schedule]
  double t_final = 1.0;
  double sample_dt = 0.01;
  std::vector<double> snapshots;

  // [integrator]
  double rtol = 1e-8;
  double atol = 1e-10;

  // [analysis]
  bool semiclassics = false;
  /// Also integrate over the curvature smoothed with the packet's sigma_k.
  bool smoothing = false;
  bool recoil = false;
  bool retro = false;
  /// Time for one closed BZ orbit; 0 derives it from a rational force direction.
  double bz_period = 0.0;
  bool spread = false;
  std::vector<double> ballistic_times;

  // [scan]
  ScanParameter scan = ScanParameter::none;
  std::vector<std::string> scan_values;

  double packet_sigma_r() const { return sigma_r.value_or(PacketSpec::default_sigma_r(n)) * sigma_scale; }
  double packet_sigma_k() const { return 0.5 / packet_sigma_r(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (s[i] == sep && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct ParseContext {
  std::string key;
  int line = 0;
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(what, key, line); }
};

inline double parse_double(std::string_view s, const ParseContext& ctx) {
  s = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    ctx.fail("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(std::string_view s, const ParseContext& ctx) {
  s = trim(s);
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    ctx.fail("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

// "(re,im)" or a plain real number.
inline cplx parse_complex(std::string_view s, const ParseContext& ctx) {
  s = trim(s);
  if (!s.empty() && s.front() == '(') {
    if (s.back() != ')') ctx.fail("unterminated complex value '" + std::string(s) + "'");
    const auto parts = split(s.substr(1, s.size() - 2), ',');
    if (parts.size() != 2) ctx.fail("complex value must be (re,im)");
    return {parse_double(parts[0], ctx), parse_double(parts[1], ctx)};
  }
  return {parse_double(s, ctx), 0.0};
}

inline std::string format_complex(cplx z) { return "(" + format_double(z.real()) + "," + format_double(z.imag()) + ")"; }

template <class T>
struct Codec;

template <>
struct Codec<double> {
  static double read(std::string_view s, const ParseContext& c) { return parse_double(s, c); }
  static std::string write(double v) { return format_double(v); }
};

template <>
struct Codec<int> {
  static int read(std::string_view s, const ParseContext& c) { return parse_integer<int>(s, c); }
  static std::string write(int v) { return std::to_string(v); }
};

template <>
struct Codec<std::uint64_t> {
  static std::uint64_t read(std::string_view s, const ParseContext& c) { return parse_integer<std::uint64_t>(s, c); }
  static std::string write(std::uint64_t v) { return std::to_string(v); }
};

template <>
struct Codec<bool> {
  static bool read(std::string_view s, const ParseContext& c) {
    s = trim(s);
    if (s == "true") return true;
    if (s == "false") return false;
    c.fail("expected true or false");
  }
  static std::string write(bool v) { return v ? "true" : "false"; }
};

template <>
struct Codec<std::string> {
  static std::string read(std::string_view s, const ParseContext&) { return std::string(trim(s)); }
  static std::string write(const std::string& v) { return v; }
};

template <>
struct Codec<std::optional<double>> {
  static std::optional<double> read(std::string_view s, const ParseContext& c) {
    if (trim(s) == "auto") return std::nullopt;
    return parse_double(s, c);
  }
  static std::string write(const std::optional<double>& v) { return v ? format_double(*v) : "auto"; }
};

template <>
struct Codec<cplx> {
  static cplx read(std::string_view s, const ParseContext& c) { return parse_complex(s, c); }
  static std::string write(cplx v) { return format_complex(v); }
};

template <>
struct Codec<Vec2> {
  static Vec2 read(std::string_view s, const ParseContext& c) {
    const auto parts = split(s, ',');
    if (parts.size() != 2) c.fail("expected two components 'x, y'");
    return {parse_double(parts[0], c), parse_double(parts[1], c)};
  }
  static std::string write(Vec2 v) { return format_double(v.x) + ", " + format_double(v.y); }
};

template <>
struct Codec<std::vector<double>> {
  static std::vector<double> read(std::string_view s, const ParseContext& c) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (auto p : split(s, ',')) out.push_back(parse_double(p, c));
    return out;
  }
  static std::string write(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
    return out;
  }
};

template <>
struct Codec<std::vector<cplx>> {
  static std::vector<cplx> read(std::string_view s, const ParseContext& c) {
    std::vector<cplx> out;
    if (trim(s).empty()) return out;
    for (auto p : split(s, ',')) out.push_back(parse_complex(p, c));
    return out;
  }
  static std::string write(const std::vector<cplx>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_complex(v[i]);
    return out;
  }
};

// Scan values are separated by ';' so that each may itself be a list.
template <>
struct Codec<std::vector<std::string>> {
  static std::vector<std::string> read(std::string_view s, const ParseContext&) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    for (auto p : split(s, ';')) out.emplace_back(p);
    return out;
  }
  static std::string write(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "; " : "") + v[i];
    return out;
  }
};

template <class E>
struct EnumCodec {
  std::vector<std::pair<E, const char*>> names;
  E read(std::string_view s, const ParseContext& c) const {
    s = trim(s);
    std::string options;
    for (const auto& [e, name] : names) {
      if (s == name) return e;
      options += (options.empty() ? "" : ", ") + std::string(name);
    }
    c.fail("unknown value '" + std::string(s) + "' (expected one of: " + options + ")");
  }
  std::string write(E e) const {
    for (const auto& [v, name] : names)
      if (v == e) return name;
    return "?";
  }
};

inline const EnumCodec<ModelKind> kModelNames{
    {{ModelKind::model_a, "model_a"}, {ModelKind::model_b, "model_b"}, {ModelKind::three_level, "three_level"},
     {ModelKind::hopping, "hopping"}}};
inline const EnumCodec<Task> kTaskNames{{{Task::band, "band"}, {Task::dynamics, "dynamics"}, {Task::adiabatic, "adiabatic"}}};
inline const EnumCodec<Boundary> kBoundaryNames{{{Boundary::open, "open"}, {Boundary::periodic, "periodic"}}};
inline const EnumCodec<ScanParameter> kScanNames{
    {{ScanParameter::none, "none"}, {ScanParameter::gamma, "gamma"}, {ScanParameter::sigma_scale, "sigma_scale"},
     {ScanParameter::l_up, "l_up"}, {ScanParameter::force, "force"}, {ScanParameter::spin, "spin"}}};

// One field: its section, key, and type-erased read/write.
struct Field {
  std::string section;
  std::string key;
  std::function<void(std::string_view, const ParseContext&)> read;
  std::function<std::string()> write;
};

template <class T>
Field make_field(std::string section, std::string key, T& ref) {
  return {std::move(section), std::move(key),
          [&ref](std::string_view s, const ParseContext& c) { ref = Codec<T>::read(s, c); },
          [&ref] { return Codec<T>::write(ref); }};
}

template <class E>
Field make_enum_field(std::string section, std::string key, E& ref, const EnumCodec<E>& codec) {
  return {std::move(section), std::move(key),
          [&ref, &codec](std::string_view s, const ParseContext& c) { ref = codec.read(s, c); },
          [&ref, &codec] { return codec.write(ref); }};
}

inline std::vector<Field> config_fields(ExperimentConfig& c) {
  return {
      make_field("experiment", "name", c.name),
      make_enum_field("experiment", "task", c.task, kTaskNames),
      make_field("experiment", "seed", c.seed),
      make_enum_field("model", "kind", c.model, kModelNames),
      make_field("model", "l_up", c.l_up),
      make_field("model", "l_up_prime", c.l_up_prime),
      make_field("model", "rabi", c.rabi),
      make_field("model", "rabi_prime", c.rabi_prime),
      make_field("model", "kappa", c.kappa),
      make_field("model", "hopping", c.hopping),
      make_field("lattice", "n", c.n),
      make_enum_field("lattice", "boundary", c.boundary, kBoundaryNames),
      make_field("lattice", "gamma_edge", c.gamma_edge),
      make_field("lattice", "edge_depth", c.edge_depth),
      make_field("lattice", "edge_fill", c.edge_fill),
      make_field("dynamics", "gamma", c.gamma),
      make_field("dynamics", "force", c.force),
      make_field("packet", "r0", c.r0),
      make_field("packet", "k0", c.k0),
      make_field("packet", "sigma_r", c.sigma_r),
      make_field("packet", "sigma_scale", c.sigma_scale),
      make_field("packet", "spin", c.spin),
      make_field("schedule", "t_final", c.t_final),
      make_field("schedule", "sample_dt", c.sample_dt),
      make_field("schedule", "snapshots", c.snapshots),
      make_field("integrator", "rtol", c.rtol),
      make_field("integrator", "atol", c.atol),
      make_field("analysis", "semiclassics", c.semiclassics),
      make_field("analysis", "smoothing", c.smoothing),
      make_field("analysis", "recoil", c.recoil),
      make_field("analysis", "retro", c.retro),
      make_field("analysis", "bz_period", c.bz_period),
      make_field("analysis", "spread", c.spread),
      make_field("analysis", "ballistic_times", c.ballistic_times),
      make_enum_field("scan", "parameter", c.scan, kScanNames),
      make_field("scan", "values", c.scan_values),
  };
}

}  // namespace detail

/// Applies one scan value to a copy of the config.
inline ExperimentConfig with_scan_value(ExperimentConfig cfg, const std::string& value, int line = 0) {
  const detail::ParseContext ctx{"values", line};
  switch (cfg.scan) {
    case ScanParameter::none:
      break;
    case ScanParameter::gamma:
      cfg.gamma = detail::parse_double(value, ctx);
      break;
    case ScanParameter::sigma_scale:
      cfg.sigma_scale = detail::parse_double(value, ctx);
      break;
    case ScanParameter::l_up:
      cfg.l_up = detail::parse_complex(value, ctx);
      break;
    case ScanParameter::force:
      cfg.force = detail::Codec<Vec2>::read(value, ctx);
      break;
    case ScanParameter::spin:
      cfg.spin = detail::Codec<std::vector<cplx>>::read(value, ctx);
      break;
  }
  return cfg;
}

/// Semantic checks that do not depend on file positions.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& key, const std::string& what) { throw ConfigError(what, key); };
  if (c.n < 4) fail("n", "lattice size must be at least 4");
  if (c.sigma_r && !(*c.sigma_r > 0.0)) fail("sigma_r", "sigma_r must be positive (or auto)");
  if (!(c.sigma_scale > 0.0)) fail("sigma_scale", "sigma_scale must be positive");
  if (c.spin.empty() || c.spin.size() > 3) fail("spin", "spin must have 1 to 3 components");
  if (!(c.t_final >= 0.0)) fail("t_final", "t_final must be non-negative");
  if (!(c.sample_dt > 0.0)) fail("sample_dt", "sample_dt must be positive");
  if (!(c.rtol > 0.0) || !(c.atol > 0.0)) fail("rtol", "tolerances must be positive");
  if (c.gamma < 0.0) fail("gamma", "gamma must be non-negative");
  if (c.model == ModelKind::three_level && !(c.kappa > 0.0)) fail("kappa", "kappa must be positive");
  if (c.edge_fill < 0.0 || c.edge_fill > 1.0) fail("edge_fill", "edge_fill must lie in [0, 1]");
  if (c.edge_depth < 0 || 4 * c.edge_depth >= c.n) fail("edge_depth", "edge depth must be below N/4");
  if (c.scan != ScanParameter::none && c.scan_values.empty()) fail("values", "scan needs at least one value");
  if (c.scan == ScanParameter::none && !c.scan_values.empty()) fail("values", "scan values given without a parameter");
  if (c.task == Task::adiabatic && c.model != ModelKind::three_level) {
    fail("task", "the adiabatic comparison needs the three_level model");
  }
  for (double t : c.snapshots)
    if (t < 0.0 || t > c.t_final) fail("snapshots", "snapshot times must lie in [0, t_final]");
  for (double t : c.ballistic_times)
    if (t < 0.0 || t > c.t_final) fail("ballistic_times", "ballistic times must lie in [0, t_final]");
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  auto fields = detail::config_fields(cfg);
  std::map<std::string, detail::Field*> table;
  for (auto& f : fields) table[f.section + "." + f.key] = &f;
  std::map<std::string, int> seen;
  std::string section;
  std::string raw;
  int line_no = 0;
  int scan_line = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", {}, line_no);
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& f : fields) known = known || f.section == section;
      if (!known) throw ConfigError("unknown section", section, line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", {}, line_no);
    const std::string key(detail::trim(line.substr(0, eq)));
    if (section.empty()) throw ConfigError("key outside of any section", key, line_no);
    const std::string full = section + "." + key;
    auto it = table.find(full);
    if (it == table.end()) throw ConfigError("unknown key in section [" + section + "]", key, line_no);
    if (seen.count(full)) {
      throw ConfigError("duplicate key (first set on line " + std::to_string(seen[full]) + ")", key, line_no);
    }
    seen[full] = line_no;
    if (full == "scan.values") scan_line = line_no;
    it->second->read(line.substr(eq + 1), detail::ParseContext{key, line_no});
  }
  validate(cfg);
  for (const auto& v : cfg.scan_values) validate(with_scan_value(cfg, v, scan_line));
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  auto fields = detail::config_fields(copy);
  std::string out;
  std::string section;
  for (const auto& f : fields) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.write() + "\n";
  }
  return out;
}

}  // namespace zeno
