// Command-line front end: run, sweep, oracle and histogram subcommands over
// one ExperimentConfig assembled from an optional config file and
// `--section.key value` overrides.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dqd/config.hpp"
#include "dqd/experiment.hpp"

namespace {

using dqd::ConfigError;
using dqd::ExperimentConfig;
using dqd::FlatConfig;
using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int fail(const json& j, int code) {
  std::cerr << j.dump() << "\n";
  return code;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json run_summary(const dqd::RunReport& r) {
  json j = r.to_json();
  j.erase("config");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monitored double-quantum-dot simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value configuration file");
    for (const auto& key : dqd::config_keys()) {
      sub->add_option("--" + key, overrides[key], "override " + key);
    }
  };

  auto* run_cmd = app.add_subcommand("run", "simulate an ensemble and write the requested outputs");
  auto* sweep_cmd = app.add_subcommand("sweep", "one run per sweep.values entry, table in sweep.csv");
  auto* oracle_cmd = app.add_subcommand("oracle", "analytic Markov-chain table (no simulation)");
  auto* hist_cmd = app.add_subcommand("histogram", "occupation histogram of the simplex");
  for (auto* sub : {run_cmd, sweep_cmd, oracle_cmd, hist_cmd}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail({{"error", "usage"}, {"message", e.what()}}, kExitConfig);
  }

  ExperimentConfig cfg;
  try {
    FlatConfig flat;
    if (!config_path.empty()) flat = dqd::load_flat(config_path);
    for (auto* sub : {run_cmd, sweep_cmd, oracle_cmd, hist_cmd}) {
      if (!sub->parsed()) continue;
      for (const auto& key : dqd::config_keys()) {
        if (sub->count("--" + key) > 0) flat[key] = overrides[key];
      }
    }
    if (hist_cmd->parsed()) {
      // the histogram subcommand always produces the histogram file
      dqd::ExperimentConfig probe = dqd::apply_flat(ExperimentConfig{}, flat);
      if (!probe.wants(dqd::Output::Histogram)) {
        std::string outs = "histogram";
        for (auto o : probe.outputs) outs += ", " + std::string(dqd::to_string(o));
        flat["output.outputs"] = outs;
      }
    }
    cfg = dqd::apply_flat(ExperimentConfig{}, flat);
  } catch (const ConfigError& e) {
    return fail(e.to_json(), kExitConfig);
  }

  try {
    if (run_cmd->parsed()) {
      const auto report = dqd::run(cfg);
      std::cout << run_summary(report).dump(2) << "\n";
    } else if (sweep_cmd->parsed()) {
      const auto rows = dqd::sweep(cfg);
      std::cout << dqd::sweep_csv(cfg, rows);
    } else if (oracle_cmd->parsed()) {
      const auto rows = dqd::oracle_table(cfg);
      const std::string csv = dqd::oracle_csv(cfg, rows);
      const std::filesystem::path dir(cfg.output_dir);
      write_file(dir / "oracle.csv", csv);
      const std::vector<std::string> files{"oracle.csv"};
      write_file(dir / "manifest.json", dqd::manifest(cfg, {}, files).dump(2) + "\n");
      std::cout << csv;
    } else if (hist_cmd->parsed()) {
      const auto report = dqd::run(cfg);
      json j = {{"histogram", cfg.output_dir + "/histogram.csv"},
                {"corner_mass", report.histogram ? report.histogram->corner_mass(cfg.r_corner) : 0.0},
                {"r_corner", cfg.r_corner}};
      std::cout << j.dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    return fail(e.to_json(), kExitConfig);
  } catch (const std::exception& e) {
    return fail({{"error", "runtime"}, {"message", e.what()}}, kExitRuntime);
  }
  return 0;
}
