#include "dqd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "dqd/feedback.hpp"

namespace dqd {

namespace fs = std::filesystem;

int worker_count() {
  if (const char* env = std::getenv("DQD_WORKERS")) {
    int n = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto body = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

DensityState corner_state(CornerLabel c) {
  switch (c) {
    case CornerLabel::Left: return DensityState::corner_left();
    case CornerLabel::Right: return DensityState::corner_right();
    default: return DensityState::corner_zero();
  }
}

// Left-point time integral of u k on the coarse grid.
class QuantumFluxIntegral final : public TrajectoryObserver {
 public:
  explicit QuantumFluxIntegral(double u) : u_(u) {}
  void on_sample(const TrajectorySample& s) override {
    if (started_) value += u_ * last_k_ * (s.t - last_t_);
    started_ = true;
    last_t_ = s.t;
    last_k_ = s.state.k;
  }
  double value = 0.0;

 private:
  double u_;
  bool started_ = false;
  double last_t_ = 0.0, last_k_ = 0.0;
};

// Coarse samples (t, q0, ql, qr, k, x, h_l, h_r), every `stride`-th one.
class TrajectoryWriter final : public TrajectoryObserver {
 public:
  TrajectoryWriter(const fs::path& path, int stride) : out_(path), stride_(stride) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "t,q0,ql,qr,k,x,h_l,h_r\n";
  }
  void on_sample(const TrajectorySample& s) override {
    if (count_++ % stride_ != 0) return;
    const auto& q = s.state;
    out_ << format_number(s.t) << ',' << format_number(q.q0) << ',' << format_number(q.ql) << ','
         << format_number(q.qr) << ',' << format_number(q.k) << ',' << format_number(s.x) << ','
         << format_number(s.h_active.h_l) << ',' << format_number(s.h_active.h_r) << '\n';
  }

 private:
  std::ofstream out_;
  int stride_;
  std::uint64_t count_ = 0;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

nlohmann::json rates_json(const MarkovRates& r) {
  return {{"l_0L", r.l_0L}, {"l_L0", r.l_L0}, {"l_0R", r.l_0R},
          {"l_R0", r.l_R0}, {"l_LR", r.l_LR}, {"l_RL", r.l_RL}};
}

nlohmann::json flux_json(const FluxEstimate& f) {
  return {{"n_lr", f.n_lr}, {"n_rl", f.n_rl}, {"t_total", f.t_total},
          {"flux", f.flux}, {"mc_error", f.mc_error}};
}

nlohmann::json corner_triple(const std::array<double, 3>& v) {
  return {{"0", v[0]}, {"L", v[1]}, {"R", v[2]}};
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

TrajectoryResult simulate_trajectory(const ExperimentConfig& c, int index,
                                     std::span<TrajectoryObserver* const> extra,
                                     bool write_files) {
  TrajectoryResult res;
  res.index = index;
  res.seed = c.trajectory_seed(index);

  IntegratorConfig icfg = c.integrator;
  icfg.seed = res.seed;

  JumpDetector detector(c.r_corner, c.wants(Output::Events));
  WindingCounter winding;
  QuantumFluxIntegral qflux(c.model.u);
  std::vector<TrajectoryObserver*> obs{&detector, &winding, &qflux};

  std::optional<SimplexHistogram> hist;
  if (c.wants(Output::Histogram)) {
    hist.emplace(c.histogram_bins);
    obs.push_back(&*hist);
  }
  std::optional<TrajectoryWriter> writer;
  if (write_files && c.wants(Output::Trajectory)) {
    writer.emplace(fs::path(c.output_dir) / ("trajectory_" + std::to_string(index) + ".csv"),
                   c.trajectory_stride);
    obs.push_back(&*writer);
  }
  std::optional<StrongFieldTimer> high;
  if (c.feedback_enabled && c.feedback.h_min < c.feedback.h_max) {
    high.emplace(c.feedback.h_max);
    obs.push_back(&*high);
  }
  obs.insert(obs.end(), extra.begin(), extra.end());

  const DensityState initial = corner_state(c.initial);
  if (c.feedback_enabled) {
    FeedbackController ctl(c.feedback);
    res.integration = integrate(initial, c.model, ctl, c.T, icfg, obs);
  } else {
    FixedMeasurement ctl(c.measurement);
    res.integration = integrate(initial, c.model, ctl, c.T, icfg, obs);
  }
  detector.finish(c.T);

  res.jumps = detector.stats();
  res.winding_pos = winding.positive();
  res.winding_neg = winding.negative();
  res.quantum_flux_integral = qflux.value;
  res.time_at_h_max = high ? high->time() : 0.0;
  res.histogram = std::move(hist);
  res.events = detector.events();
  return res;
}

nlohmann::json OracleValues::to_json() const {
  nlohmann::json j = {
      {"rates", rates_json(rates)},
      {"stationary", {{"pi_0", stationary.pi_0}, {"pi_l", stationary.pi_l}, {"pi_r", stationary.pi_r}}},
      {"analytic_flux", analytic_flux},
      {"mean_steady_state",
       {{"q0", mean_steady.q0}, {"ql", mean_steady.ql}, {"qr", mean_steady.qr}, {"k", mean_steady.k}}},
      {"dwell", corner_triple(dwell)},
  };
  if (feedback_bound) j["feedback_bound"] = *feedback_bound;
  if (feedback_bound_exact) j["feedback_bound_exact"] = *feedback_bound_exact;
  return j;
}

OracleValues oracle_for(const ExperimentConfig& c) {
  OracleValues o;
  const MeasurementConfig m =
      c.feedback_enabled ? MeasurementConfig::symmetric(c.feedback.h_min) : c.measurement;
  o.rates = rates(c.model, m);
  o.stationary = stationary_closed_form(c.model, m);
  o.analytic_flux = analytic_flux(c.model, m);
  o.mean_steady = mean_steady_state(c.model, m);
  using C = CornerLabel;
  for (C k : {C::Zero, C::Left, C::Right}) {
    const double out = o.rates.exit_rate(k);
    o.dwell[index_of(k)] = out > 0.0 ? 1.0 / out : std::numeric_limits<double>::infinity();
  }
  if (c.feedback_enabled) {
    o.feedback_bound = feedback_flux_bound(c.model, c.feedback.h_min, c.feedback.h_max);
    o.feedback_bound_exact = feedback_flux_bound_exact(c.model, c.feedback.h_min, c.feedback.h_max);
  }
  return o;
}

RunReport merge(const ExperimentConfig& c, std::span<const TrajectoryResult> results) {
  RunReport r;
  r.config = c;
  std::uint64_t pos = 0, neg = 0;
  double qflux = 0.0;
  for (const auto& t : results) {
    r.seeds.push_back(t.seed);
    r.integration.coarse_steps += t.integration.coarse_steps;
    r.integration.substeps += t.integration.substeps;
    r.integration.capped_steps += t.integration.capped_steps;
    r.integration.max_depth_used = std::max(r.integration.max_depth_used, t.integration.max_depth_used);
    r.jumps += t.jumps;
    pos += t.winding_pos;
    neg += t.winding_neg;
    qflux += t.quantum_flux_integral;
    r.time_at_h_max += t.time_at_h_max;
    if (t.histogram) {
      if (!r.histogram) r.histogram.emplace(t.histogram->bins());
      *r.histogram += *t.histogram;
    }
  }
  const double total = r.jumps.t_total;
  r.flux = FluxEstimate::from_counts(r.jumps.count(CornerLabel::Left, CornerLabel::Right),
                                     r.jumps.count(CornerLabel::Right, CornerLabel::Left), total);
  r.winding = FluxEstimate::from_counts(pos, neg, total);
  r.quantum_flux = total > 0.0 ? qflux / total : 0.0;
  r.fitted = fit_rates(r.jumps);
  r.dwell = r.jumps.mean_dwell();
  r.oracle = oracle_for(c);
  return r;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json counts = nlohmann::json::object();
  using C = CornerLabel;
  for (C from : {C::Zero, C::Left, C::Right}) {
    for (C to : {C::Zero, C::Left, C::Right}) {
      if (from == to) continue;
      counts[std::string(to_string(from)) + std::string(to_string(to))] = jumps.count(from, to);
    }
  }
  nlohmann::json j = {
      {"config", flat_to_json(to_flat(config))},
      {"seeds", seeds},
      {"integration",
       {{"coarse_steps", integration.coarse_steps},
        {"substeps", integration.substeps},
        {"capped_steps", integration.capped_steps},
        {"max_depth_used", integration.max_depth_used}}},
      {"t_total", jumps.t_total},
      {"flux", flux_json(flux)},
      {"winding", flux_json(winding)},
      {"quantum_flux", quantum_flux},
      {"counts", counts},
      {"fitted_rates", rates_json(fitted)},
      {"dwell", corner_triple(dwell)},
      {"oracle", oracle.to_json()},
      {"files", files},
  };
  if (config.feedback_enabled) j["time_at_h_max"] = time_at_h_max;
  if (histogram) {
    j["histogram"] = {{"bins", histogram->bins()},
                      {"corner_mass", histogram->corner_mass(config.r_corner)}};
  }
  return j;
}

std::string histogram_csv(const SimplexHistogram& h) {
  std::string out = "i,j,q0,ql,qr,mass\n";
  for (int i = 0; i < h.bins(); ++i) {
    for (int j = 0; i + j < h.bins(); ++j) {
      const auto c = h.cell_centroid(i, j);
      out += std::to_string(i) + ',' + std::to_string(j) + ',' + format_number(c.q0) + ',' +
             format_number(c.ql) + ',' + format_number(c.qr) + ',' + format_number(h.mass(i, j)) +
             '\n';
    }
  }
  return out;
}

std::string events_csv(std::span<const JumpEvent> events) {
  std::string out = "t,from,to\n";
  for (const auto& e : events) {
    out += format_number(e.t) + ',' + std::string(to_string(e.from)) + ',' +
           std::string(to_string(e.to)) + '\n';
  }
  return out;
}

nlohmann::json manifest(const ExperimentConfig& c, std::span<const std::uint64_t> seeds,
                        std::span<const std::string> files) {
  return {{"config", flat_to_json(to_flat(c))},
          {"seeds", std::vector<std::uint64_t>(seeds.begin(), seeds.end())},
          {"seed_rule", "base_seed + trajectory index"},
          {"files", std::vector<std::string>(files.begin(), files.end())}};
}

ExperimentConfig config_from_manifest(const nlohmann::json& m) {
  if (!m.contains("config")) throw ConfigError({"manifest has no 'config' entry"});
  return from_flat(json_to_flat(m.at("config")));
}

RunReport run(const ExperimentConfig& c, bool write_files) {
  c.validate();
  if (write_files) fs::create_directories(c.output_dir);

  std::vector<TrajectoryResult> results(static_cast<std::size_t>(c.n_trajectories));
  parallel_for(c.n_trajectories, worker_count(), [&](int i) {
    results[static_cast<std::size_t>(i)] = simulate_trajectory(c, i, {}, write_files);
  });
  RunReport report = merge(c, results);
  if (!write_files) return report;

  const fs::path dir(c.output_dir);
  std::vector<std::string> files;
  if (c.wants(Output::Trajectory)) {
    for (int i = 0; i < c.n_trajectories; ++i) files.push_back("trajectory_" + std::to_string(i) + ".csv");
  }
  if (c.wants(Output::Events)) {
    for (const auto& t : results) {
      const std::string name = "events_" + std::to_string(t.index) + ".csv";
      write_text(dir / name, events_csv(t.events));
      files.push_back(name);
    }
  }
  if (c.wants(Output::Histogram) && report.histogram) {
    write_text(dir / "histogram.csv", histogram_csv(*report.histogram));
    files.push_back("histogram.csv");
  }
  if (c.wants(Output::Oracle)) {
    write_text(dir / "oracle.json", report.oracle.to_json().dump(2) + "\n");
    files.push_back("oracle.json");
  }
  if (c.wants(Output::Flux)) files.push_back("flux.json");
  report.files = files;
  if (c.wants(Output::Flux)) write_text(dir / "flux.json", report.to_json().dump(2) + "\n");
  write_text(dir / "manifest.json", manifest(c, report.seeds, files).dump(2) + "\n");
  return report;
}

std::vector<SweepRow> sweep(const ExperimentConfig& c, bool write_files) {
  c.validate();
  if (c.sweep.param == SweepParam::None) {
    throw ConfigError({"sweep.param must be set for a sweep"});
  }
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < c.sweep.values.size(); ++k) {
    ExperimentConfig point = at_sweep_point(c, c.sweep.values[k]);
    point.output_dir = (fs::path(c.output_dir) / ("point_" + std::to_string(k))).string();
    rows.push_back({c.sweep.values[k], run(point, write_files)});
  }
  if (write_files) {
    fs::create_directories(c.output_dir);
    write_text(fs::path(c.output_dir) / "sweep.csv", sweep_csv(c, rows));
    std::vector<std::string> files{"sweep.csv"};
    write_text(fs::path(c.output_dir) / "manifest.json",
               manifest(c, std::vector<std::uint64_t>{}, files).dump(2) + "\n");
  }
  return rows;
}

std::string sweep_csv(const ExperimentConfig& c, std::span<const SweepRow> rows) {
  std::string out = std::string(kSweepColumns) + "\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out += std::string(to_string(c.sweep.param)) + ',' + format_number(row.value) + ',' +
           format_number(r.flux.flux) + ',' + format_number(r.flux.mc_error) + ',' +
           format_number(r.winding.flux) + ',' + format_number(r.winding.mc_error) + ',' +
           format_number(r.quantum_flux) + ',' + std::to_string(r.flux.n_lr) + ',' +
           std::to_string(r.flux.n_rl) + ',' + format_number(r.flux.t_total) + ',' +
           format_number(r.oracle.analytic_flux) + ',' + opt_number(r.oracle.feedback_bound) +
           ',' + opt_number(r.oracle.feedback_bound_exact) + '\n';
  }
  return out;
}

std::vector<OracleRow> oracle_table(const ExperimentConfig& c) {
  std::vector<double> values = c.sweep.values;
  if (c.sweep.param == SweepParam::None) values = {std::numeric_limits<double>::quiet_NaN()};
  std::vector<OracleRow> rows;
  for (double v : values) {
    const ExperimentConfig point = c.sweep.param == SweepParam::None ? c : at_sweep_point(c, v);
    const MeasurementConfig m = point.feedback_enabled
                                    ? MeasurementConfig::symmetric(point.feedback.h_min)
                                    : point.measurement;
    rows.push_back({v, point.model, m, oracle_for(point)});
  }
  return rows;
}

std::string oracle_csv(const ExperimentConfig& c, std::span<const OracleRow> rows) {
  std::string out = std::string(kOracleColumns) + "\n";
  for (const auto& row : rows) {
    const auto& o = row.oracle;
    const auto& r = o.rates;
    std::vector<std::string> cells = {
        std::string(to_string(c.sweep.param)),
        format_number(row.value),
        format_number(row.model.beta_mu_l),
        format_number(row.model.beta_mu_r),
        format_number(row.measurement.h_l),
        format_number(row.measurement.h_r),
        format_number(r.l_0L),
        format_number(r.l_L0),
        format_number(r.l_0R),
        format_number(r.l_R0),
        format_number(r.l_LR),
        format_number(r.l_RL),
        format_number(o.stationary.pi_0),
        format_number(o.stationary.pi_l),
        format_number(o.stationary.pi_r),
        format_number(o.analytic_flux),
        format_number(quantum_flux(o.mean_steady, row.model)),
        opt_number(o.feedback_bound),
        opt_number(o.feedback_bound_exact),
    };
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace dqd
