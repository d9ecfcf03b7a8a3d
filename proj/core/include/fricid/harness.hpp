#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fricid/identifier.hpp"
#include "fricid/model.hpp"

namespace fricid {

struct TerrainSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  double mu = 1.0;
};

/// Piecewise-constant ground friction over time. Segments must be
/// contiguous and non-overlapping with mu in (0, 2].
struct TerrainSchedule {
  std::vector<TerrainSegment> segments;

  void validate() const;
  double mu_at(double t) const;
  /// Segments with mu below this are treated as slippery in the metrics.
  static constexpr double kSlipperyMu = 0.5;
  bool slippery_at(double t) const { return mu_at(t) < kSlipperyMu; }
};

enum class ScriptKind { None, LateralPush, StancePush, Hop };

/// Open-loop control patterns: a square-wave lateral push on the base
/// (box or monoped stance) or a crouch-extend hopping reference tracked by
/// joint PD with a fore-aft swing that gives touchdowns tangential speed.
struct ControlScript {
  ScriptKind kind = ScriptKind::None;
  double push_amplitude = 9.0;  // N
  double push_period = 1.4;     // s; the sign flips every half period
  double push_start = 0.5;      // s
  double kp = 60.0;
  double kd = 2.0;
  double tau_max = 40.0;
  double hop_period = 0.7;
  double hop_extend = 0.35;        // rad of crouch released during push-off
  double hop_push_fraction = 0.3;  // of the period
  double hop_swing = 0.25;         // rad fore-aft hip swing
};

struct ScenarioConfig {
  std::string model_id = "monoped";  // "box" | "monoped"
  double box_mass = 1.0;
  Eigen::Vector3d box_half_extents{0.1, 0.1, 0.1};
  double base_mass = 2.5;
  MonopedParams monoped;
  double crouch = 0.5;  // initial stance crouch angle

  TerrainSchedule schedule;
  ControlScript script;
  double dt = 0.01;
  double duration = 12.0;
  double dt_buffer = 0.01;
  double noise_pos = 1e-4;  // std on positions/angles
  double noise_vel = 1e-3;  // std on velocities
  double corruption_rate = 0.0;  // contact-flag flip probability
  std::uint64_t seed = 1;
  double contact_activation = 1e-4;

  void validate() const;
};

RobotModel build_scenario_model(const ScenarioConfig& scenario);
GeneralizedState scenario_initial_state(const RobotModel& model,
                                        const ScenarioConfig& scenario);

/// Ground-truth stream: noisy buffer entries plus per-entry true slip and
/// contact information for the metrics.
struct ScenarioResult {
  std::vector<BufferEntry> stream;
  std::vector<double> true_max_slip;       // max tangential foot speed (m/s)
  std::vector<std::uint8_t> true_any_contact;
  std::vector<GeneralizedState> sampled_states;  // true states at samples
  int n_steps = 0;
};

/// Steps the hard dynamics at the schedule's true friction, sampling a
/// buffer entry every dt_buffer with measurement noise and optional
/// contact-flag corruption. Deterministic given the scenario seed.
ScenarioResult run_scenario(const ScenarioConfig& scenario);

struct ExperimentOptions {
  double mu0 = 0.8;
  bool reset_enabled = true;
};

struct RunMetrics {
  std::vector<CycleRecord> cycles;
  double convergence_time = std::numeric_limits<double>::infinity();
  bool converged_in_slip = false;  // |mu_hat - mu_true| < band at slip end
  double mu_at_slip_end = std::numeric_limits<double>::quiet_NaN();
  double final_mu = std::numeric_limits<double>::quiet_NaN();
  double avg_slip_loss = std::numeric_limits<double>::quiet_NaN();
  int false_updates = 0;  // estimate changes while on non-slippery ground
  std::vector<double> solve_wall_ms;
  double max_eta = 0.0;

  static constexpr double kBand = 0.05;
};

/// Replays a recorded stream through the identifier at the 10 Hz cycle
/// cadence and computes the comparison metrics.
RunMetrics run_identification_experiment(const ScenarioResult& data,
                                         const TerrainSchedule& schedule,
                                         const RobotModel& model,
                                         IdentifierConfig config,
                                         const ExperimentOptions& options = {});

struct SweepPoint {
  double initial_mu = 0.0;
  RunMetrics metrics;
};

/// One identification run per initial estimate on the same data; the reset
/// policy is disabled so each run tests pure convergence.
std::vector<SweepPoint> sweep_initials(const ScenarioResult& data,
                                       const TerrainSchedule& schedule,
                                       const RobotModel& model,
                                       IdentifierConfig config,
                                       const std::vector<double>& initials);

struct RhoPoint {
  double rho_t = 0.0;
  double avg_loss = 0.0;
  RunMetrics metrics;
};

std::vector<RhoPoint> sweep_rho(const ScenarioResult& data,
                                const TerrainSchedule& schedule,
                                const RobotModel& model,
                                IdentifierConfig config,
                                const std::vector<double>& rho_values);

struct BenchRow {
  GradientMethod method = GradientMethod::Smoothed;
  int trial = 0;
  double final_mu = 0.0;
  double mean_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  double avg_loss = 0.0;
  int n_solves = 0;
};

/// Re-runs the scenario with per-trial seeds and times every optimization
/// solve per method.
std::vector<BenchRow> bench_methods(const ScenarioConfig& scenario,
                                    const std::vector<GradientMethod>& methods,
                                    int n_trials, IdentifierConfig config);

std::vector<double> default_initials();  // 0.05 .. 1.0 in 0.05 steps

}  // namespace fricid
