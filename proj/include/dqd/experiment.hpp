#pragma once

// Ensembles, sweeps and analytic tables on top of the integrator, with the
// CSV / JSON files they emit.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqd/analysis.hpp"
#include "dqd/config.hpp"
#include "dqd/markov.hpp"

namespace dqd {

/// Worker threads for ensembles: $DQD_WORKERS when set to a positive
/// integer, otherwise the hardware concurrency (at least 1).
int worker_count();

/// Calls fn(i) for i in [0, n) on up to `workers` threads. If any call
/// throws, the exception of the lowest failing index is rethrown after all
/// workers have stopped.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double x);

struct TrajectoryResult {
  int index = 0;
  std::uint64_t seed = 0;
  IntegrationStats integration;
  JumpStats jumps;
  std::uint64_t winding_pos = 0, winding_neg = 0;
  double quantum_flux_integral = 0.0;  // time integral of u k over the coarse grid
  double time_at_h_max = 0.0;
  std::optional<SimplexHistogram> histogram;
  std::vector<JumpEvent> events;  // filled when events are requested
};

/// Runs trajectory `index` of the ensemble (seed base_seed + index). Extra
/// observers see the same sample and sub-step stream. Trajectory CSV files
/// are written here when requested, so they never have to be held in memory.
TrajectoryResult simulate_trajectory(const ExperimentConfig& c, int index,
                                     std::span<TrajectoryObserver* const> extra = {},
                                     bool write_files = false);

/// Markov-chain predictions attached to a run.
struct OracleValues {
  MarkovRates rates;
  OccupationVector stationary;
  double analytic_flux = 0.0;
  DensityState mean_steady;
  std::array<double, 3> dwell{};  // 1 / exit rate of 0, L, R
  // feedback runs only
  std::optional<double> feedback_bound;
  std::optional<double> feedback_bound_exact;

  nlohmann::json to_json() const;
};

/// For feedback runs the rates, stationary law and flux are those of the
/// open loop at h_min.
OracleValues oracle_for(const ExperimentConfig& c);

struct RunReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  IntegrationStats integration;  // summed; max_depth_used is the maximum
  JumpStats jumps;
  FluxEstimate flux;     // direct L<->R events
  FluxEstimate winding;  // signed turns around the barycentre
  double quantum_flux = 0.0;  // time average of u k
  MarkovRates fitted;
  std::array<double, 3> dwell{};
  double time_at_h_max = 0.0;
  OracleValues oracle;
  std::optional<SimplexHistogram> histogram;
  std::vector<std::string> files;

  nlohmann::json to_json() const;
};

/// Merges per-trajectory results in index order.
RunReport merge(const ExperimentConfig& c, std::span<const TrajectoryResult> results);

/// Simulates the ensemble and, when `write_files` is set, writes the
/// requested outputs and manifest.json into config.output_dir.
RunReport run(const ExperimentConfig& c, bool write_files = true);

struct SweepRow {
  double value = 0.0;
  RunReport report;
};

inline constexpr const char* kSweepColumns =
    "param,value,flux,flux_err,winding_flux,winding_err,quantum_flux,n_lr,n_rl,t_total,"
    "analytic_flux,bound,bound_exact";

/// One run per grid value; point k writes into <output_dir>/point_<k> and the
/// table goes to <output_dir>/sweep.csv.
std::vector<SweepRow> sweep(const ExperimentConfig& c, bool write_files = true);
std::string sweep_csv(const ExperimentConfig& c, std::span<const SweepRow> rows);

struct OracleRow {
  double value = 0.0;  // sweep value, NaN without a sweep
  ModelParams model;
  MeasurementConfig measurement;
  OracleValues oracle;
};

inline constexpr const char* kOracleColumns =
    "param,value,beta_mu_l,beta_mu_r,h_l,h_r,l_0L,l_L0,l_0R,l_R0,l_LR,l_RL,pi_0,pi_l,pi_r,"
    "analytic_flux,steady_flux,bound,bound_exact";

/// Analytic rows over the sweep grid (a single row without a sweep).
std::vector<OracleRow> oracle_table(const ExperimentConfig& c);
std::string oracle_csv(const ExperimentConfig& c, std::span<const OracleRow> rows);

std::string histogram_csv(const SimplexHistogram& h);
std::string events_csv(std::span<const JumpEvent> events);

/// Manifest for a run: the full resolved configuration plus seeds and files.
nlohmann::json manifest(const ExperimentConfig& c, std::span<const std::uint64_t> seeds,
                        std::span<const std::string> files);

/// Inverse of manifest(): the configuration stored in it.
ExperimentConfig config_from_manifest(const nlohmann::json& m);

}  // namespace dqd
