#include "dqd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace dqd {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s) {
  s = trim(s);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int parse_int(std::string_view s) {
  s = trim(s);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + std::string(s) + "'");
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

CornerLabel parse_corner(std::string_view s) {
  s = trim(s);
  if (s == "0" || s == "zero") return CornerLabel::Zero;
  if (s == "L" || s == "left") return CornerLabel::Left;
  if (s == "R" || s == "right") return CornerLabel::Right;
  throw std::invalid_argument("expected one of 0, L, R, got '" + std::string(s) + "'");
}

Output parse_output(std::string_view s) {
  for (Output o : {Output::Trajectory, Output::Events, Output::Flux, Output::Histogram,
                   Output::Oracle}) {
    if (s == to_string(o)) return o;
  }
  throw std::invalid_argument("unknown output '" + std::string(s) + "'");
}

SweepParam parse_sweep_param(std::string_view s) {
  s = trim(s);
  for (SweepParam p : {SweepParam::None, SweepParam::H, SweepParam::HMax, SweepParam::BetaMuDiff}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("expected none, h, h_max or beta_mu_diff, got '" + std::string(s) +
                              "'");
}

nlohmann::json typed_scalar(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  std::int64_t i = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), i);
  if (!s.empty() && r.ec == std::errc() && r.ptr == s.data() + s.size()) return i;
  std::uint64_t u = 0;
  auto ru = std::from_chars(s.data(), s.data() + s.size(), u);
  if (!s.empty() && ru.ec == std::errc() && ru.ptr == s.data() + s.size()) return u;
  double d = 0.0;
  auto rd = std::from_chars(s.data(), s.data() + s.size(), d);
  if (!s.empty() && rd.ec == std::errc() && rd.ptr == s.data() + s.size() && std::isfinite(d)) {
    return d;
  }
  return std::string(s);
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  // is_number_integer() also holds for unsigned values
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  throw std::invalid_argument("unsupported JSON value " + v.dump());
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.a", [](auto& c, auto& v) { c.model.a = parse_double(v); }},
      {"model.b", [](auto& c, auto& v) { c.model.b = parse_double(v); }},
      {"model.beta_mu_l", [](auto& c, auto& v) { c.model.beta_mu_l = parse_double(v); }},
      {"model.beta_mu_r", [](auto& c, auto& v) { c.model.beta_mu_r = parse_double(v); }},
      {"model.u", [](auto& c, auto& v) { c.model.u = parse_double(v); }},
      {"measurement.h_l", [](auto& c, auto& v) { c.measurement.h_l = parse_double(v); }},
      {"measurement.h_r", [](auto& c, auto& v) { c.measurement.h_r = parse_double(v); }},
      {"measurement.h",
       [](auto& c, auto& v) { c.measurement = MeasurementConfig::symmetric(parse_double(v)); }},
      {"feedback.enabled", [](auto& c, auto& v) { c.feedback_enabled = parse_bool(v); }},
      {"feedback.h_min", [](auto& c, auto& v) { c.feedback.h_min = parse_double(v); }},
      {"feedback.h_max", [](auto& c, auto& v) { c.feedback.h_max = parse_double(v); }},
      {"feedback.delta", [](auto& c, auto& v) { c.feedback.delta = parse_double(v); }},
      {"feedback.tau_int", [](auto& c, auto& v) { c.feedback.tau_int = parse_double(v); }},
      {"integrator.dt_coarse", [](auto& c, auto& v) { c.integrator.dt_coarse = parse_double(v); }},
      {"integrator.err_tol", [](auto& c, auto& v) { c.integrator.err_tol = parse_double(v); }},
      {"integrator.max_depth", [](auto& c, auto& v) { c.integrator.max_depth = parse_int<int>(v); }},
      {"integrator.noise_step_cap",
       [](auto& c, auto& v) { c.integrator.noise_step_cap = parse_double(v); }},
      {"run.T", [](auto& c, auto& v) { c.T = parse_double(v); }},
      {"run.n_trajectories", [](auto& c, auto& v) { c.n_trajectories = parse_int<int>(v); }},
      {"run.base_seed", [](auto& c, auto& v) { c.base_seed = parse_int<std::uint64_t>(v); }},
      {"run.initial", [](auto& c, auto& v) { c.initial = parse_corner(v); }},
      {"run.r_corner", [](auto& c, auto& v) { c.r_corner = parse_double(v); }},
      {"output.dir", [](auto& c, auto& v) { c.output_dir = v; }},
      {"output.outputs",
       [](auto& c, auto& v) {
         c.outputs.clear();
         for (const auto& item : split_list(v)) c.outputs.push_back(parse_output(item));
       }},
      {"output.trajectory_stride",
       [](auto& c, auto& v) { c.trajectory_stride = parse_int<int>(v); }},
      {"output.histogram_bins", [](auto& c, auto& v) { c.histogram_bins = parse_int<int>(v); }},
      {"sweep.param", [](auto& c, auto& v) { c.sweep.param = parse_sweep_param(v); }},
      {"sweep.values",
       [](auto& c, auto& v) {
         c.sweep.values.clear();
         for (const auto& item : split_list(v)) c.sweep.values.push_back(parse_double(item));
       }},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& v : violations) msg += "\n  " + v;
        return msg;
      }()),
      violations_(std::move(violations)) {}

nlohmann::json ConfigError::to_json() const {
  return {{"error", "invalid_config"}, {"violations", violations_}};
}

FlatConfig parse_flat(std::string_view text) {
  FlatConfig out;
  std::vector<std::string> errors;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
    ++line_no;
    pos = nl == text.npos ? text.size() + 1 : nl + 1;

    if (const auto hash = line.find('#'); hash != line.npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == line.npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty() || key.find_first_of(" \t") != key.npos) {
      errors.push_back("line " + std::to_string(line_no) + ": malformed key '" +
                       std::string(key) + "'");
      continue;
    }
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return out;
}

FlatConfig load_flat(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_flat(ss.str());
}

std::string format_flat(const FlatConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json flat_to_json(const FlatConfig& cfg) {
  nlohmann::json root = nlohmann::json::object();
  for (const auto& [key, value] : cfg) {
    nlohmann::json* node = &root;
    std::size_t pos = 0;
    while (true) {
      const auto dot = key.find('.', pos);
      const std::string part = key.substr(pos, dot == key.npos ? key.npos : dot - pos);
      if (dot == key.npos) {
        if (value.find(',') != std::string::npos) {
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& item : split_list(value)) arr.push_back(typed_scalar(item));
          (*node)[part] = std::move(arr);
        } else {
          (*node)[part] = typed_scalar(value);
        }
        break;
      }
      node = &(*node)[part];
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) {
        throw ConfigError({"key '" + key + "' conflicts with a scalar at '" + part + "'"});
      }
      pos = dot + 1;
    }
  }
  return root;
}

FlatConfig json_to_flat(const nlohmann::json& j) {
  FlatConfig out;
  std::function<void(const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& node, const std::string& prefix) {
        for (const auto& [k, v] : node.items()) {
          const std::string key = prefix.empty() ? k : prefix + "." + k;
          if (v.is_object()) {
            walk(v, key);
          } else if (v.is_array()) {
            std::string text;
            for (std::size_t i = 0; i < v.size(); ++i) {
              if (i) text += ", ";
              text += scalar_text(v[i]);
            }
            // a one-element list needs the separator to stay a list
            if (v.size() == 1) text += ",";
            out[key] = text;
          } else {
            out[key] = scalar_text(v);
          }
        }
      };
  if (!j.is_object()) throw ConfigError({"configuration JSON must be an object"});
  walk(j, "");
  return out;
}

std::string_view to_string(Output o) {
  switch (o) {
    case Output::Trajectory: return "trajectory";
    case Output::Events: return "events";
    case Output::Flux: return "flux";
    case Output::Histogram: return "histogram";
    case Output::Oracle: return "oracle";
  }
  return "?";
}

std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::None: return "none";
    case SweepParam::H: return "h";
    case SweepParam::HMax: return "h_max";
    case SweepParam::BetaMuDiff: return "beta_mu_diff";
  }
  return "?";
}

bool ExperimentConfig::wants(Output o) const {
  return std::find(outputs.begin(), outputs.end(), o) != outputs.end();
}

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> v;
  auto finite = [](double x) { return std::isfinite(x); };
  if (!(finite(model.a) && model.a > 0.0)) v.push_back("model.a must be > 0");
  if (!(finite(model.b) && model.b > 0.0)) v.push_back("model.b must be > 0");
  if (!(finite(model.u) && model.u >= 0.0)) v.push_back("model.u must be >= 0");
  if (!finite(model.beta_mu_l)) v.push_back("model.beta_mu_l must be finite");
  if (!finite(model.beta_mu_r)) v.push_back("model.beta_mu_r must be finite");
  if (!finite(measurement.h_l)) v.push_back("measurement.h_l must be finite");
  if (!finite(measurement.h_r)) v.push_back("measurement.h_r must be finite");
  if (feedback_enabled) {
    if (!(finite(feedback.h_min) && feedback.h_min > 0.0)) v.push_back("feedback.h_min must be > 0");
    if (!(finite(feedback.h_max) && feedback.h_max >= feedback.h_min)) {
      v.push_back("feedback.h_max must be >= feedback.h_min");
    }
    if (!finite(feedback.delta)) v.push_back("feedback.delta must be finite");
    if (!(finite(feedback.tau_int) && feedback.tau_int > 0.0)) {
      v.push_back("feedback.tau_int must be > 0");
    }
  }
  if (!(finite(integrator.dt_coarse) && integrator.dt_coarse > 0.0)) {
    v.push_back("integrator.dt_coarse must be > 0");
  }
  if (!(finite(integrator.err_tol) && integrator.err_tol > 0.0)) {
    v.push_back("integrator.err_tol must be > 0");
  }
  if (integrator.max_depth < 0 || integrator.max_depth > 60) {
    v.push_back("integrator.max_depth must be in [0, 60]");
  }
  if (!(integrator.noise_step_cap > 0.0)) v.push_back("integrator.noise_step_cap must be > 0");
  if (!(finite(T) && T > 0.0)) v.push_back("run.T must be > 0");
  if (n_trajectories < 1) v.push_back("run.n_trajectories must be >= 1");
  if (!(r_corner > 0.0 && r_corner < 0.5)) v.push_back("run.r_corner must be in (0, 0.5)");
  if (outputs.empty()) v.push_back("output.outputs must not be empty");
  if (trajectory_stride < 1) v.push_back("output.trajectory_stride must be >= 1");
  if (histogram_bins < 1) v.push_back("output.histogram_bins must be >= 1");
  if (sweep.param != SweepParam::None) {
    if (sweep.values.empty()) v.push_back("sweep.values must not be empty");
    for (double x : sweep.values) {
      if (!finite(x)) v.push_back("sweep.values must be finite");
    }
    if (sweep.param == SweepParam::H && feedback_enabled) {
      v.push_back("sweep.param = h needs feedback.enabled = false");
    }
    if (sweep.param == SweepParam::HMax) {
      if (!feedback_enabled) v.push_back("sweep.param = h_max needs feedback.enabled = true");
      for (double x : sweep.values) {
        if (x < feedback.h_min) v.push_back("sweep.values for h_max must be >= feedback.h_min");
      }
    }
  }
  return v;
}

void ExperimentConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

ExperimentConfig apply_flat(ExperimentConfig c, const FlatConfig& flat) {
  std::vector<std::string> errors;
  const auto& table = setters();
  // the shorthand goes first so explicit h_l / h_r entries win
  if (auto it = flat.find("measurement.h"); it != flat.end()) {
    try {
      table.at(it->first)(c, it->second);
    } catch (const std::exception& e) {
      errors.push_back(it->first + ": " + e.what());
    }
  }
  for (const auto& [key, value] : flat) {
    if (key == "measurement.h") continue;
    const auto it = table.find(key);
    if (it == table.end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second(c, value);
    } catch (const std::exception& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  for (auto& v : c.violations()) errors.push_back(std::move(v));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig from_flat(const FlatConfig& flat) { return apply_flat(ExperimentConfig{}, flat); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, setter] : setters()) keys.push_back(k);
  return keys;
}

FlatConfig to_flat(const ExperimentConfig& c) {
  FlatConfig f;
  f["model.a"] = format_double(c.model.a);
  f["model.b"] = format_double(c.model.b);
  f["model.beta_mu_l"] = format_double(c.model.beta_mu_l);
  f["model.beta_mu_r"] = format_double(c.model.beta_mu_r);
  f["model.u"] = format_double(c.model.u);
  f["measurement.h_l"] = format_double(c.measurement.h_l);
  f["measurement.h_r"] = format_double(c.measurement.h_r);
  f["feedback.enabled"] = c.feedback_enabled ? "true" : "false";
  f["feedback.h_min"] = format_double(c.feedback.h_min);
  f["feedback.h_max"] = format_double(c.feedback.h_max);
  f["feedback.delta"] = format_double(c.feedback.delta);
  f["feedback.tau_int"] = format_double(c.feedback.tau_int);
  f["integrator.dt_coarse"] = format_double(c.integrator.dt_coarse);
  f["integrator.err_tol"] = format_double(c.integrator.err_tol);
  f["integrator.max_depth"] = std::to_string(c.integrator.max_depth);
  f["integrator.noise_step_cap"] = format_double(c.integrator.noise_step_cap);
  f["run.T"] = format_double(c.T);
  f["run.n_trajectories"] = std::to_string(c.n_trajectories);
  f["run.base_seed"] = std::to_string(c.base_seed);
  f["run.initial"] = std::string(to_string(c.initial));
  f["run.r_corner"] = format_double(c.r_corner);
  f["output.dir"] = c.output_dir;
  std::string outs;
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    if (i) outs += ", ";
    outs += to_string(c.outputs[i]);
  }
  if (c.outputs.size() == 1) outs += ",";
  f["output.outputs"] = outs;
  f["output.trajectory_stride"] = std::to_string(c.trajectory_stride);
  f["output.histogram_bins"] = std::to_string(c.histogram_bins);
  f["sweep.param"] = std::string(to_string(c.sweep.param));
  std::string values = format_list(c.sweep.values);
  if (c.sweep.values.size() == 1) values += ",";
  f["sweep.values"] = values;
  return f;
}

ExperimentConfig at_sweep_point(const ExperimentConfig& c, double value) {
  ExperimentConfig out = c;
  switch (c.sweep.param) {
    case SweepParam::None: break;
    case SweepParam::H: out.measurement = MeasurementConfig::symmetric(value); break;
    case SweepParam::HMax: out.feedback.h_max = value; break;
    case SweepParam::BetaMuDiff:
      out.model.beta_mu_l = 0.5 * value;
      out.model.beta_mu_r = -0.5 * value;
      break;
  }
  out.sweep = {};
  return out;
}

}  // namespace dqd
