// zeno: run presets, config files, or a glob of config files.

#include <glob.h>

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "zeno/experiment.hpp"
#include "zeno/presets.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string out = "out";
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

zeno::ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw zeno::Error("cannot read " + path.string());
  try {
    return zeno::parse_config(in);
  } catch (const zeno::ConfigError& e) {
    throw zeno::ConfigError(path.string() + ": " + e.what());
  }
}

void run_one(zeno::ExperimentConfig cfg, const fs::path& dir, const Options& opt, int threads) {
  if (opt.seed) cfg.seed = *opt.seed;
  const auto result = zeno::run_experiment(cfg, threads);
  const auto files = zeno::write_experiment(result, dir);
  std::cout << cfg.name << ": " << files.size() << " files in " << dir.string() << "\n";
  for (const auto& run : result.runs) {
    if (run.retro) {
      std::cout << "  " << (run.label.empty() ? "run" : run.label) << " collision at t = " << run.retro->collision_time
                << ", velocity " << run.retro->pre_velocity << " -> " << run.retro->post_velocity << "\n";
    } else if (!run.retro_note.empty()) {
      std::cout << "  " << (run.label.empty() ? "run" : run.label) << " " << run.retro_note << "\n";
    }
  }
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> paths;
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw zeno::Error("glob failed for '" + pattern + "'");
  return paths;
}

// Each config gets its own directory named after the file stem; configs run
// concurrently, each single-threaded.
void run_scan(const std::string& pattern, const Options& opt) {
  const auto paths = expand_glob(pattern);
  if (paths.empty()) throw zeno::Error("no config files match '" + pattern + "'");
  std::vector<zeno::ExperimentConfig> configs;
  for (const auto& p : paths) configs.push_back(load_config(p));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++) {
      try {
        run_one(configs[i], fs::path(opt.out) / fs::path(paths[i]).stem(), opt, 1);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min<int>(opt.threads, int(paths.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zeno Hall effect simulator"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--out", opt.out, "Output directory")->capture_default_str();
  app.add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", opt.seed, "Override the config seed");

  std::string preset;
  auto* preset_cmd = app.add_subcommand("preset", "Run a named preset");
  preset_cmd->add_option("name", preset, "Preset name")->required();
  bool list = false;
  auto* list_cmd = app.add_subcommand("list", "List preset names");
  list_cmd->callback([&] { list = true; });
  bool export_only = false;
  preset_cmd->add_flag("--export", export_only, "Print the preset as a config file instead of running it");

  std::string config;
  auto* run_cmd = app.add_subcommand("run", "Run a config file");
  run_cmd->add_option("config", config, "Config file")->required();

  std::string pattern;
  auto* scan_cmd = app.add_subcommand("scan", "Run every config matching a glob");
  scan_cmd->add_option("pattern", pattern, "Config glob, e.g. 'configs/*.ini'")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list) {
      for (const auto& n : zeno::preset_names()) std::cout << n << "\n";
    } else if (preset_cmd->parsed()) {
      auto cfg = zeno::preset_config(preset);
      if (opt.seed) cfg.seed = *opt.seed;
      if (export_only) {
        std::cout << zeno::serialize_config(cfg);
      } else {
        run_one(cfg, fs::path(opt.out) / preset, opt, opt.threads);
      }
    } else if (run_cmd->parsed()) {
      const auto cfg = load_config(config);
      run_one(cfg, fs::path(opt.out) / fs::path(config).stem(), opt, opt.threads);
    } else if (scan_cmd->parsed()) {
      run_scan(pattern, opt);
    }
  } catch (const zeno::UnknownPreset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const zeno::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
