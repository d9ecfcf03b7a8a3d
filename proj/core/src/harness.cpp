#include "fricid/harness.hpp"

#include <algorithm>
#include <cmath>

#include "fricid/errors.hpp"
#include "fricid/rng.hpp"
#include "fricid/so3.hpp"

namespace fricid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Square wave in +-1 starting at t0, positive first.
double square_wave(double t, double t0, double period) {
  if (t < t0) return 0.0;
  const double phase = std::fmod(t - t0, period);
  return phase < 0.5 * period ? 1.0 : -1.0;
}

struct ScriptOutput {
  Eigen::VectorXd tau;
  Eigen::VectorXd f_ext;  // [force; torque] on the base, world frame
};

ScriptOutput eval_script(const ScenarioConfig& sc, const RobotModel& model,
                         const GeneralizedState& state, double t) {
  ScriptOutput out;
  out.tau = Eigen::VectorXd::Zero(model.na());
  out.f_ext = Eigen::VectorXd::Zero(6);
  const ControlScript& s = sc.script;

  switch (s.kind) {
    case ScriptKind::None:
      break;
    case ScriptKind::LateralPush:
      out.f_ext(0) =
          s.push_amplitude * square_wave(t, s.push_start, s.push_period);
      break;
    case ScriptKind::StancePush: {
      out.f_ext(0) =
          s.push_amplitude * square_wave(t, s.push_start, s.push_period);
      const double th1_ref = sc.crouch;
      const double th2_ref = -2.0 * sc.crouch;
      const Eigen::VectorXd qj = state.joint_angles();
      const Eigen::VectorXd qdj = state.joint_rates();
      out.tau(0) = s.kp * (th1_ref - qj(0)) - s.kd * qdj(0);
      out.tau(1) = s.kp * (th2_ref - qj(1)) - s.kd * qdj(1);
      break;
    }
    case ScriptKind::Hop: {
      const double phase = std::fmod(t, s.hop_period) / s.hop_period;
      // Crouch-extend pulse plus a fore-aft swing so touchdowns carry
      // tangential foot speed.
      double th1_ref = sc.crouch;
      if (phase < s.hop_push_fraction)
        th1_ref = sc.crouch - s.hop_extend * std::sin(M_PI * phase / s.hop_push_fraction);
      const double swing =
          s.hop_swing * std::sin(2.0 * M_PI * t / s.hop_period);
      const double th2_ref = -2.0 * th1_ref;
      const Eigen::VectorXd qj = state.joint_angles();
      const Eigen::VectorXd qdj = state.joint_rates();
      out.tau(0) = s.kp * (th1_ref + swing - qj(0)) - s.kd * qdj(0);
      out.tau(1) = s.kp * (th2_ref - qj(1)) - s.kd * qdj(1);
      break;
    }
  }
  if (out.tau.size() > 0)
    out.tau = out.tau.cwiseMax(-s.tau_max).cwiseMin(s.tau_max);
  return out;
}

}  // namespace

void TerrainSchedule::validate() const {
  if (segments.empty()) throw Error("terrain schedule has no segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const TerrainSegment& s = segments[i];
    if (!(s.t_end > s.t_start)) throw Error("terrain segment has no extent");
    if (!(s.mu > 0.0 && s.mu <= 2.0))
      throw Error("terrain mu must lie in (0, 2]");
    if (i > 0 && std::abs(segments[i - 1].t_end - s.t_start) > 1e-9)
      throw Error("terrain segments must be contiguous");
  }
}

double TerrainSchedule::mu_at(double t) const {
  for (const TerrainSegment& s : segments)
    if (t >= s.t_start && t < s.t_end) return s.mu;
  return segments.empty() ? 1.0 : segments.back().mu;
}

void ScenarioConfig::validate() const {
  if (!(duration > 0.0)) throw Error("scenario duration must be positive");
  if (!(dt > 0.0)) throw Error("scenario dt must be positive");
  const double ratio = dt_buffer / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0 - 1e-9)
    throw Error("scenario dt must divide dt_buffer");
  schedule.validate();
  if (model_id != "box" && model_id != "monoped")
    throw Error("unknown model id: " + model_id);
}

RobotModel build_scenario_model(const ScenarioConfig& sc) {
  if (sc.model_id == "box")
    return build_box_model(sc.box_mass, sc.box_half_extents,
                           box_inertia(sc.box_mass, sc.box_half_extents));
  return build_monoped_model(sc.base_mass, sc.monoped);
}

GeneralizedState scenario_initial_state(const RobotModel& model,
                                        const ScenarioConfig& sc) {
  if (sc.model_id == "box") {
    GeneralizedState s = model.make_state();
    s.q(2) = -model.contact_points.front().offset.z();  // corners on ground
    return s;
  }
  return monoped_nominal_stance(model, sc.crouch);
}

ScenarioResult run_scenario(const ScenarioConfig& sc) {
  sc.validate();
  const RobotModel model = build_scenario_model(sc);
  GeneralizedState state = scenario_initial_state(model, sc);

  auto noise_rng = make_rng(sc.seed, 17);
  auto corrupt_rng = make_rng(sc.seed, 31);
  std::normal_distribution<double> npos(0.0, sc.noise_pos);
  std::normal_distribution<double> nvel(0.0, sc.noise_vel);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int n_sub = static_cast<int>(std::round(sc.dt_buffer / sc.dt));
  const int n_steps = static_cast<int>(std::round(sc.duration / sc.dt));
  const int np = static_cast<int>(model.contact_points.size());

  ScenarioResult out;
  out.n_steps = n_steps;

  for (int step = 0; step < n_steps; ++step) {
    const double t = step * sc.dt;
    const ScriptOutput u = eval_script(sc, model, state, t);

    if (step % n_sub == 0) {
      // Ground-truth foot kinematics at the sample instant.
      const ModelEval ev = evaluate(model, state, 1e300);  // all points
      BufferEntry e = entry_from_state(model, state, u.tau, u.f_ext);
      e.t = t;
      double max_slip = 0.0;
      bool any_contact = false;
      for (int k = 0; k < np; ++k) {
        const Eigen::Vector3d v = ev.contacts[k].J * state.upsilon;
        const bool in_contact = ev.contacts[k].gap < sc.contact_activation;
        if (in_contact) {
          any_contact = true;
          max_slip = std::max(max_slip, v.head<2>().norm());
        }
        bool flag = in_contact;
        if (sc.corruption_rate > 0.0 && uni(corrupt_rng) < sc.corruption_rate)
          flag = !flag;
        e.contact[k] = flag ? 1 : 0;
        e.foot_vel[k] =
            v + Eigen::Vector3d(nvel(noise_rng), nvel(noise_rng),
                                nvel(noise_rng));
      }
      // Measurement noise on the recorded state.
      e.p += Eigen::Vector3d(npos(noise_rng), npos(noise_rng), npos(noise_rng));
      e.R = e.R * exp_so3(Eigen::Vector3d(npos(noise_rng), npos(noise_rng),
                                          npos(noise_rng)));
      e.p_dot += Eigen::Vector3d(nvel(noise_rng), nvel(noise_rng),
                                 nvel(noise_rng));
      e.omega += Eigen::Vector3d(nvel(noise_rng), nvel(noise_rng),
                                 nvel(noise_rng));
      for (int j = 0; j < e.q_jnt.size(); ++j) e.q_jnt(j) += npos(noise_rng);
      for (int j = 0; j < e.qdot_jnt.size(); ++j)
        e.qdot_jnt(j) += nvel(noise_rng);

      out.stream.push_back(std::move(e));
      out.true_max_slip.push_back(max_slip);
      out.true_any_contact.push_back(any_contact ? 1 : 0);
      out.sampled_states.push_back(state);
    }

    try {
      state = step_dynamics(model, state, u.tau, sc.schedule.mu_at(t), sc.dt,
                            u.f_ext, sc.contact_activation)
                  .state;
    } catch (const SolverError& err) {
      throw Error("scenario aborted at step " + std::to_string(step) + ": " +
                  err.what());
    }
  }
  return out;
}

RunMetrics run_identification_experiment(const ScenarioResult& data,
                                         const TerrainSchedule& schedule,
                                         const RobotModel& model,
                                         IdentifierConfig cfg,
                                         const ExperimentOptions& options) {
  RunMetrics m;
  DataBuffer buffer(static_cast<std::size_t>(cfg.buffer_size), cfg.dt_buffer);
  EstimateState st;
  st.mu_hat = std::clamp(options.mu0, cfg.mu_min, cfg.mu_max);
  st.last_mu_star = st.mu_hat;
  st.last_above_threshold = data.stream.empty() ? 0.0 : data.stream.front().t;

  double next_cycle =
      (data.stream.empty() ? 0.0 : data.stream.front().t) + cfg.dt_bound;
  auto run_cycle = [&](double now) {
    CycleRecord rec = run_identifier_cycle(buffer.snapshot(), st, model, cfg,
                                           now, options.reset_enabled);
    if (rec.solved) m.solve_wall_ms.push_back(rec.wall_ms);
    m.max_eta = std::max(m.max_eta, rec.eta);
    if (rec.updated && !schedule.slippery_at(now)) ++m.false_updates;
    m.cycles.push_back(rec);
  };

  for (const BufferEntry& e : data.stream) {
    while (e.t >= next_cycle - 1e-9) {
      run_cycle(next_cycle);
      next_cycle += cfg.dt_bound;
    }
    buffer.push(e);
  }
  if (!data.stream.empty()) run_cycle(next_cycle);

  // Metrics over the slippery windows.
  double sum_loss = 0.0;
  int n_loss = 0;
  for (const CycleRecord& rec : m.cycles) {
    if (!schedule.slippery_at(rec.t)) continue;
    const double mu_true = schedule.mu_at(rec.t);
    if (std::isinf(m.convergence_time) &&
        std::abs(rec.mu_hat - mu_true) < RunMetrics::kBand) {
      double seg_start = rec.t;
      for (const TerrainSegment& s : schedule.segments)
        if (rec.t >= s.t_start && rec.t < s.t_end) seg_start = s.t_start;
      m.convergence_time = rec.t - seg_start;
    }
    if (rec.solved && std::isfinite(rec.loss)) {
      sum_loss += rec.loss;
      ++n_loss;
    }
  }
  if (n_loss > 0) m.avg_slip_loss = sum_loss / n_loss;
  if (!m.cycles.empty()) m.final_mu = m.cycles.back().mu_hat;

  // Estimate at the end of the last slippery cycle seen.
  for (const CycleRecord& rec : m.cycles)
    if (schedule.slippery_at(rec.t)) {
      m.mu_at_slip_end = rec.mu_hat;
      m.converged_in_slip =
          std::abs(rec.mu_hat - schedule.mu_at(rec.t)) < RunMetrics::kBand;
    }
  return m;
}

std::vector<SweepPoint> sweep_initials(const ScenarioResult& data,
                                       const TerrainSchedule& schedule,
                                       const RobotModel& model,
                                       IdentifierConfig cfg,
                                       const std::vector<double>& initials) {
  if (initials.empty()) throw Error("sweep_initials requires initials");
  std::vector<SweepPoint> out;
  for (double mu0 : initials) {
    ExperimentOptions opt;
    opt.mu0 = mu0;
    opt.reset_enabled = false;
    SweepPoint p;
    p.initial_mu = mu0;
    p.metrics = run_identification_experiment(data, schedule, model, cfg, opt);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RhoPoint> sweep_rho(const ScenarioResult& data,
                                const TerrainSchedule& schedule,
                                const RobotModel& model, IdentifierConfig cfg,
                                const std::vector<double>& rho_values) {
  if (rho_values.empty()) throw Error("sweep_rho requires rho values");
  std::vector<RhoPoint> out;
  cfg.method = GradientMethod::Smoothed;
  for (double rho : rho_values) {
    if (!(rho > 0.0)) throw Error("rho values must be positive");
    IdentifierConfig c = cfg;
    c.rho_t = rho;
    RhoPoint p;
    p.rho_t = rho;
    p.metrics = run_identification_experiment(data, schedule, model, c, {});
    p.avg_loss = p.metrics.avg_slip_loss;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<BenchRow> bench_methods(const ScenarioConfig& scenario,
                                    const std::vector<GradientMethod>& methods,
                                    int n_trials, IdentifierConfig cfg) {
  if (n_trials < 1) throw Error("bench_methods requires n_trials >= 1");
  std::vector<BenchRow> rows;
  for (int trial = 0; trial < n_trials; ++trial) {
    ScenarioConfig sc = scenario;
    sc.seed = derive_seed(scenario.seed, static_cast<std::uint64_t>(trial));
    const ScenarioResult data = run_scenario(sc);
    const RobotModel model = build_scenario_model(sc);
    for (GradientMethod method : methods) {
      IdentifierConfig c = cfg;
      c.method = method;
      ExperimentOptions opt;
      opt.reset_enabled = false;
      const RunMetrics m =
          run_identification_experiment(data, sc.schedule, model, c, opt);
      BenchRow row;
      row.method = method;
      row.trial = trial;
      row.final_mu = std::isnan(m.mu_at_slip_end) ? m.final_mu
                                                  : m.mu_at_slip_end;
      row.avg_loss = m.avg_slip_loss;
      row.n_solves = static_cast<int>(m.solve_wall_ms.size());
      if (!m.solve_wall_ms.empty()) {
        std::vector<double> w = m.solve_wall_ms;
        std::sort(w.begin(), w.end());
        row.median_solve_ms = w[w.size() / 2];
        double s = 0.0;
        for (double x : w) s += x;
        row.mean_solve_ms = s / w.size();
      } else {
        row.mean_solve_ms = kNaN;
        row.median_solve_ms = kNaN;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<double> default_initials() {
  std::vector<double> out;
  for (int i = 1; i <= 20; ++i) out.push_back(0.05 * i);
  return out;
}

}  // namespace fricid
