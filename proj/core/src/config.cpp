#include "fricid/config.hpp"

#include <fstream>
#include <sstream>

#include "fricid/errors.hpp"

namespace fricid {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<double> parse_doubles(const std::string& v, int line,
                                  const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(v);
  double x;
  while (ss >> x) out.push_back(x);
  if (out.empty() && !v.empty())
    throw ConfigError("config line " + std::to_string(line) +
                          ": key '" + key + "' expects numbers, got '" + v + "'",
                      line, key);
  return out;
}

double parse_double(const std::string& v, int line, const std::string& key) {
  const auto xs = parse_doubles(v, line, key);
  if (xs.size() != 1)
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects one number",
                      line, key);
  return xs[0];
}

bool parse_onoff(const std::string& v, int line, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                        "' expects on/off",
                    line, key);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  ExperimentConfig cfg;
  cfg.scenario.schedule.segments.clear();

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  bool seeded_sweep_rhos = false;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                              ": malformed section header",
                          line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "scenario" &&
          section != "identifier" && section != "sweep" &&
          section != "bench" && section != "output")
        throw ConfigError("config line " + std::to_string(line_no) +
                              ": unknown section '" + section + "'",
                          line_no, section);
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                            ": expected 'key = value'",
                        line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto num = [&] { return parse_double(val, line_no, key); };
    auto nums = [&] { return parse_doubles(val, line_no, key); };

    bool known = true;
    if (section == "model") {
      if (key == "type") cfg.scenario.model_id = val;
      else if (key == "box_mass") cfg.scenario.box_mass = num();
      else if (key == "box_half_extents") {
        const auto v = nums();
        if (v.size() != 3)
          throw ConfigError("config line " + std::to_string(line_no) +
                                ": box_half_extents expects 3 numbers",
                            line_no, key);
        cfg.scenario.box_half_extents = Eigen::Vector3d(v[0], v[1], v[2]);
      } else if (key == "base_mass") cfg.scenario.base_mass = num();
      else if (key == "thigh_mass") cfg.scenario.monoped.thigh_mass = num();
      else if (key == "thigh_length") cfg.scenario.monoped.thigh_length = num();
      else if (key == "shank_mass") cfg.scenario.monoped.shank_mass = num();
      else if (key == "shank_length") cfg.scenario.monoped.shank_length = num();
      else if (key == "crouch") cfg.scenario.crouch = num();
      else known = false;
    } else if (section == "scenario") {
      if (key == "dt") cfg.scenario.dt = num();
      else if (key == "duration") cfg.scenario.duration = num();
      else if (key == "dt_buffer") {
        cfg.scenario.dt_buffer = num();
        cfg.identifier.dt_buffer = cfg.scenario.dt_buffer;
      } else if (key == "noise_pos") cfg.scenario.noise_pos = num();
      else if (key == "noise_vel") cfg.scenario.noise_vel = num();
      else if (key == "corruption_rate") cfg.scenario.corruption_rate = num();
      else if (key == "seed")
        cfg.scenario.seed = static_cast<std::uint64_t>(num());
      else if (key == "script") {
        if (val == "none") cfg.scenario.script.kind = ScriptKind::None;
        else if (val == "lateral_push")
          cfg.scenario.script.kind = ScriptKind::LateralPush;
        else if (val == "stance_push")
          cfg.scenario.script.kind = ScriptKind::StancePush;
        else if (val == "hop") cfg.scenario.script.kind = ScriptKind::Hop;
        else
          throw ConfigError("config line " + std::to_string(line_no) +
                                ": unknown script '" + val + "'",
                            line_no, key);
      } else if (key == "push_amplitude")
        cfg.scenario.script.push_amplitude = num();
      else if (key == "push_period") cfg.scenario.script.push_period = num();
      else if (key == "push_start") cfg.scenario.script.push_start = num();
      else if (key == "kp") cfg.scenario.script.kp = num();
      else if (key == "kd") cfg.scenario.script.kd = num();
      else if (key == "tau_max") cfg.scenario.script.tau_max = num();
      else if (key == "hop_period") cfg.scenario.script.hop_period = num();
      else if (key == "hop_extend") cfg.scenario.script.hop_extend = num();
      else if (key == "hop_push_fraction")
        cfg.scenario.script.hop_push_fraction = num();
      else if (key == "hop_swing") cfg.scenario.script.hop_swing = num();
      else if (key == "segment") {
        const auto v = nums();
        if (v.size() != 3)
          throw ConfigError("config line " + std::to_string(line_no) +
                                ": segment expects 't0 t1 mu'",
                            line_no, key);
        cfg.scenario.schedule.segments.push_back({v[0], v[1], v[2]});
      } else if (key == "stream_csv") cfg.stream_csv = val;
      else known = false;
    } else if (section == "identifier") {
      if (key == "alpha_rej") cfg.identifier.alpha_rej = num();
      else if (key == "gamma_rej") cfg.identifier.gamma_rej = num();
      else if (key == "dt_bound") cfg.identifier.dt_bound = num();
      else if (key == "sigma_slip") cfg.identifier.weights.sigma_slip = num();
      else if (key == "sigma_q_base")
        cfg.identifier.weights.sigma_q_base = num();
      else if (key == "sigma_q_jnt") cfg.identifier.weights.sigma_q_jnt = num();
      else if (key == "sigma_qdot_base")
        cfg.identifier.weights.sigma_qdot_base = num();
      else if (key == "sigma_qdot_jnt")
        cfg.identifier.weights.sigma_qdot_jnt = num();
      else if (key == "slip_threshold")
        cfg.identifier.weights.slip_speed_threshold = num();
      else if (key == "alpha_conf") cfg.identifier.alpha_conf = num();
      else if (key == "gamma_conf") cfg.identifier.gamma_conf = num();
      else if (key == "epsilon") cfg.identifier.epsilon = num();
      else if (key == "buffer_size")
        cfg.identifier.buffer_size = static_cast<int>(num());
      else if (key == "rho_t") cfg.identifier.rho_t = num();
      else if (key == "mu_def") cfg.identifier.mu_def = num();
      else if (key == "reset_hold") cfg.identifier.reset_hold = num();
      else if (key == "mu_min") cfg.identifier.mu_min = num();
      else if (key == "mu_max") cfg.identifier.mu_max = num();
      else if (key == "method")
        cfg.identifier.method = gradient_method_from_string(val);
      else if (key == "eps_den_rel") cfg.identifier.eps_den_rel = num();
      else if (key == "rejection")
        cfg.identifier.rejection_enabled = parse_onoff(val, line_no, key);
      else if (key == "reset") cfg.reset_enabled = parse_onoff(val, line_no, key);
      else if (key == "n_rand_samples")
        cfg.identifier.n_rand_samples = static_cast<int>(num());
      else if (key == "sigma_rand") cfg.identifier.sigma_rand = num();
      else if (key == "rand_seed")
        cfg.identifier.rand_seed = static_cast<std::uint64_t>(num());
      else if (key == "mu0") cfg.mu0 = num();
      else known = false;
    } else if (section == "sweep") {
      if (key == "initials") cfg.sweep_initials = nums();
      else if (key == "rhos") {
        cfg.sweep_rhos = nums();
        seeded_sweep_rhos = true;
      } else known = false;
    } else if (section == "bench") {
      if (key == "n_trials") cfg.bench_trials = static_cast<int>(num());
      else if (key == "methods") {
        cfg.bench_methods.clear();
        std::istringstream ms(val);
        std::string tok;
        while (ms >> tok)
          cfg.bench_methods.push_back(gradient_method_from_string(tok));
      } else known = false;
    } else if (section == "output") {
      if (key == "dir") cfg.out_dir = val;
      else known = false;
    } else {
      throw ConfigError("config line " + std::to_string(line_no) +
                            ": key '" + key + "' outside any section",
                        line_no, key);
    }
    if (!known)
      throw ConfigError("config line " + std::to_string(line_no) +
                            ": unknown key '" + key + "' in section [" +
                            section + "]",
                        line_no, key);
  }
  (void)seeded_sweep_rhos;

  if (cfg.scenario.schedule.segments.empty())
    cfg.scenario.schedule.segments.push_back(
        {0.0, cfg.scenario.duration, 1.0});
  if (cfg.sweep_initials.empty()) cfg.sweep_initials = default_initials();
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config_text(ss.str());
}

std::string echo_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[model]\n";
  o << "type = " << c.scenario.model_id << "\n";
  o << "box_mass = " << fmt(c.scenario.box_mass) << "\n";
  o << "box_half_extents = " << fmt(c.scenario.box_half_extents.x()) << " "
    << fmt(c.scenario.box_half_extents.y()) << " "
    << fmt(c.scenario.box_half_extents.z()) << "\n";
  o << "base_mass = " << fmt(c.scenario.base_mass) << "\n";
  o << "thigh_mass = " << fmt(c.scenario.monoped.thigh_mass) << "\n";
  o << "thigh_length = " << fmt(c.scenario.monoped.thigh_length) << "\n";
  o << "shank_mass = " << fmt(c.scenario.monoped.shank_mass) << "\n";
  o << "shank_length = " << fmt(c.scenario.monoped.shank_length) << "\n";
  o << "crouch = " << fmt(c.scenario.crouch) << "\n";
  o << "[scenario]\n";
  o << "dt = " << fmt(c.scenario.dt) << "\n";
  o << "duration = " << fmt(c.scenario.duration) << "\n";
  o << "dt_buffer = " << fmt(c.scenario.dt_buffer) << "\n";
  o << "noise_pos = " << fmt(c.scenario.noise_pos) << "\n";
  o << "noise_vel = " << fmt(c.scenario.noise_vel) << "\n";
  o << "corruption_rate = " << fmt(c.scenario.corruption_rate) << "\n";
  o << "seed = " << c.scenario.seed << "\n";
  const char* script = "none";
  switch (c.scenario.script.kind) {
    case ScriptKind::None: script = "none"; break;
    case ScriptKind::LateralPush: script = "lateral_push"; break;
    case ScriptKind::StancePush: script = "stance_push"; break;
    case ScriptKind::Hop: script = "hop"; break;
  }
  o << "script = " << script << "\n";
  o << "push_amplitude = " << fmt(c.scenario.script.push_amplitude) << "\n";
  o << "push_period = " << fmt(c.scenario.script.push_period) << "\n";
  o << "push_start = " << fmt(c.scenario.script.push_start) << "\n";
  o << "kp = " << fmt(c.scenario.script.kp) << "\n";
  o << "kd = " << fmt(c.scenario.script.kd) << "\n";
  o << "tau_max = " << fmt(c.scenario.script.tau_max) << "\n";
  o << "hop_period = " << fmt(c.scenario.script.hop_period) << "\n";
  o << "hop_extend = " << fmt(c.scenario.script.hop_extend) << "\n";
  o << "hop_push_fraction = " << fmt(c.scenario.script.hop_push_fraction)
    << "\n";
  o << "hop_swing = " << fmt(c.scenario.script.hop_swing) << "\n";
  for (const TerrainSegment& s : c.scenario.schedule.segments)
    o << "segment = " << fmt(s.t_start) << " " << fmt(s.t_end) << " "
      << fmt(s.mu) << "\n";
  if (!c.stream_csv.empty()) o << "stream_csv = " << c.stream_csv << "\n";
  o << "[identifier]\n";
  o << "alpha_rej = " << fmt(c.identifier.alpha_rej) << "\n";
  o << "gamma_rej = " << fmt(c.identifier.gamma_rej) << "\n";
  o << "dt_bound = " << fmt(c.identifier.dt_bound) << "\n";
  o << "sigma_slip = " << fmt(c.identifier.weights.sigma_slip) << "\n";
  o << "sigma_q_base = " << fmt(c.identifier.weights.sigma_q_base) << "\n";
  o << "sigma_q_jnt = " << fmt(c.identifier.weights.sigma_q_jnt) << "\n";
  o << "sigma_qdot_base = " << fmt(c.identifier.weights.sigma_qdot_base)
    << "\n";
  o << "sigma_qdot_jnt = " << fmt(c.identifier.weights.sigma_qdot_jnt) << "\n";
  o << "slip_threshold = " << fmt(c.identifier.weights.slip_speed_threshold)
    << "\n";
  o << "alpha_conf = " << fmt(c.identifier.alpha_conf) << "\n";
  o << "gamma_conf = " << fmt(c.identifier.gamma_conf) << "\n";
  o << "epsilon = " << fmt(c.identifier.epsilon) << "\n";
  o << "buffer_size = " << c.identifier.buffer_size << "\n";
  o << "rho_t = " << fmt(c.identifier.rho_t) << "\n";
  o << "mu_def = " << fmt(c.identifier.mu_def) << "\n";
  o << "reset_hold = " << fmt(c.identifier.reset_hold) << "\n";
  o << "mu_min = " << fmt(c.identifier.mu_min) << "\n";
  o << "mu_max = " << fmt(c.identifier.mu_max) << "\n";
  o << "method = ";
  switch (c.identifier.method) {
    case GradientMethod::Nonsmooth: o << "nonsmooth"; break;
    case GradientMethod::Smoothed: o << "smoothed"; break;
    case GradientMethod::RandZeroth: o << "rand0"; break;
    case GradientMethod::RandFirst: o << "rand1"; break;
    case GradientMethod::FiniteDiff: o << "fd"; break;
  }
  o << "\n";
  o << "eps_den_rel = " << fmt(c.identifier.eps_den_rel) << "\n";
  o << "rejection = " << (c.identifier.rejection_enabled ? "on" : "off")
    << "\n";
  o << "reset = " << (c.reset_enabled ? "on" : "off") << "\n";
  o << "n_rand_samples = " << c.identifier.n_rand_samples << "\n";
  o << "sigma_rand = " << fmt(c.identifier.sigma_rand) << "\n";
  o << "rand_seed = " << c.identifier.rand_seed << "\n";
  o << "mu0 = " << fmt(c.mu0) << "\n";
  o << "[sweep]\n";
  o << "initials =";
  for (double x : c.sweep_initials) o << " " << fmt(x);
  o << "\n";
  o << "rhos =";
  for (double x : c.sweep_rhos) o << " " << fmt(x);
  o << "\n";
  o << "[bench]\n";
  o << "n_trials = " << c.bench_trials << "\n";
  o << "methods =";
  for (GradientMethod m : c.bench_methods) {
    switch (m) {
      case GradientMethod::Nonsmooth: o << " nonsmooth"; break;
      case GradientMethod::Smoothed: o << " smoothed"; break;
      case GradientMethod::RandZeroth: o << " rand0"; break;
      case GradientMethod::RandFirst: o << " rand1"; break;
      case GradientMethod::FiniteDiff: o << " fd"; break;
    }
  }
  o << "\n";
  o << "[output]\n";
  o << "dir = " << c.out_dir << "\n";
  return o.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // FNV-1a over the canonical echo.
  const std::string s = echo_config(config);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace fricid
