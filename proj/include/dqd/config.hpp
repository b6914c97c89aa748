#pragma once

// Experiment configuration: a flat `section.key = value` text format, its
// lossless JSON form, and the typed ExperimentConfig with full validation.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dqd/feedback.hpp"
#include "dqd/model.hpp"
#include "dqd/sde.hpp"

namespace dqd {

/// Keys in lexicographic order; values are the raw (trimmed) text.
using FlatConfig = std::map<std::string, std::string>;

/// Carries every violation found, not only the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> violations_;
};

/// Parses `key = value` lines. '#' starts a comment, blank lines are skipped,
/// a repeated key keeps the last value. Malformed lines are reported with
/// their line numbers.
FlatConfig parse_flat(std::string_view text);
FlatConfig load_flat(const std::string& path);
std::string format_flat(const FlatConfig& cfg);

/// Nested JSON object keyed by the dotted path. Values become numbers,
/// booleans, arrays (comma-separated text) or strings.
nlohmann::json flat_to_json(const FlatConfig& cfg);
FlatConfig json_to_flat(const nlohmann::json& j);

enum class Output { Trajectory, Events, Flux, Histogram, Oracle };
std::string_view to_string(Output o);

enum class SweepParam { None, H, HMax, BetaMuDiff };
std::string_view to_string(SweepParam p);

struct SweepSpec {
  SweepParam param = SweepParam::None;
  std::vector<double> values;

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct ExperimentConfig {
  ModelParams model;
  MeasurementConfig measurement = MeasurementConfig::symmetric(7.0);
  bool feedback_enabled = false;
  FeedbackConfig feedback;
  IntegratorConfig integrator;  // seed is ignored; see trajectory_seed()

  double T = 100.0;
  int n_trajectories = 1;
  std::uint64_t base_seed = 1;
  CornerLabel initial = CornerLabel::Zero;
  double r_corner = kDefaultCornerRadius;

  std::string output_dir = "out";
  std::vector<Output> outputs{Output::Flux};
  int trajectory_stride = 1;
  int histogram_bins = 100;

  SweepSpec sweep;

  bool wants(Output o) const;
  std::uint64_t trajectory_seed(int index) const { return base_seed + static_cast<std::uint64_t>(index); }

  /// Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;  // throws ConfigError

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Applies the entries of `flat` on top of `base`. Unknown keys and
/// unparsable values are collected together with invariant violations and
/// thrown as one ConfigError. `measurement.h` is shorthand for
/// h_l = -h, h_r = h.
ExperimentConfig apply_flat(ExperimentConfig base, const FlatConfig& flat);
ExperimentConfig from_flat(const FlatConfig& flat);

/// Every key apply_flat() accepts, sorted.
std::vector<std::string> config_keys();

/// Canonical flat form listing every field; from_flat(to_flat(c)) == c.
FlatConfig to_flat(const ExperimentConfig& c);

/// The configuration for one sweep grid point (sweep cleared). For the
/// beta-mu difference d: beta_mu_l = d/2, beta_mu_r = -d/2.
ExperimentConfig at_sweep_point(const ExperimentConfig& c, double value);

}  // namespace dqd
