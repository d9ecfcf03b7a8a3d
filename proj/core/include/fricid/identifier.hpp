#pragma once

#include <Eigen/Dense>
#include <deque>
#include <mutex>
#include <vector>

#include "fricid/contact_gradients.hpp"
#include "fricid/contact_solver.hpp"
#include "fricid/model.hpp"

namespace fricid {

/// One timestamped proprioceptive record: base pose/twist, joint state,
/// applied inputs, estimated contact flags and foot velocities.
struct BufferEntry {
  double t = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d p_dot = Eigen::Vector3d::Zero();
  Eigen::VectorXd q_jnt, qdot_jnt;
  Eigen::VectorXd tau;    // joint torques (size na)
  Eigen::VectorXd f_ext;  // known external base wrench [force; torque]
  std::vector<std::uint8_t> contact;       // estimated contact flag per point
  std::vector<Eigen::Vector3d> foot_vel;   // estimated foot velocity per point
  std::vector<std::uint8_t> rejected;      // filled by rejection_scores

  GeneralizedState to_state(const RobotModel& model) const;
  Eigen::VectorXd generalized_external_force(const RobotModel& model) const;
};

BufferEntry entry_from_state(const RobotModel& model,
                             const GeneralizedState& state,
                             const Eigen::VectorXd& tau,
                             const Eigen::VectorXd& f_ext);

/// FIFO ring of capacity H with one writer and one reader; the solver works
/// on a snapshot taken at cycle start.
class DataBuffer {
 public:
  explicit DataBuffer(std::size_t capacity, double dt_buffer = 0.01);

  /// Appends an entry; throws BufferError when timestamps do not increase.
  void push(BufferEntry entry);
  std::vector<BufferEntry> snapshot() const;
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  double dt_buffer() const { return dt_; }

 private:
  mutable std::mutex mutex_;
  std::deque<BufferEntry> entries_;
  std::size_t capacity_;
  double dt_;
};

struct LossWeights {
  double sigma_q_base = 1e-4;
  double sigma_q_jnt = 20.0;
  double sigma_qdot_base = 1e-4;
  double sigma_qdot_jnt = 1.0;
  double sigma_slip = 30.0;  // scales the joint weights while slipping
  double slip_speed_threshold = 0.4;  // m/s
};

struct IdentifierConfig {
  double alpha_rej = 5.0;
  double gamma_rej = 0.4;
  double dt_buffer = 0.01;
  double dt_bound = 0.1;  // per-cycle wall-clock budget (s)
  double alpha_conf = 3.0;
  double gamma_conf = 0.58;
  double epsilon = 0.1;  // direct-update threshold on |mu_hat - mu*|
  int buffer_size = 50;
  double rho_t = 0.05;
  double mu_def = 0.8;
  double reset_hold = 0.5;  // s below gamma_conf before the estimate resets
  double mu_min = 0.01;
  double mu_max = 1.0;
  LossWeights weights;
  GradientMethod method = GradientMethod::Smoothed;
  double eps_den_rel = 1e-6;
  bool rejection_enabled = true;

  // Gauss-Newton internals
  int max_gn_iters = 20;
  double step_tol = 1e-4;
  double loss_tol = 1e-8;
  double lm_lambda = 1e-8;
  double jtj_floor = 1e-12;
  double fd_step = 1e-5;

  // randomized-smoothing baselines
  int n_rand_samples = 50;
  double sigma_rand = 0.05;
  std::uint64_t rand_seed = 0;

  double contact_activation = 1e-4;
  double v_eps = 1e-6;  // tangential speeds below this count as zero
};

/// Current estimate, confidence gating state and last-solve diagnostics.
struct EstimateState {
  double mu_hat = 0.8;
  double eta = 0.0;
  double eta_prev = 0.0;
  double last_above_threshold = 0.0;
  double last_mu_star = 0.8;
  double last_loss = 0.0;
  double last_wall_ms = 0.0;
  int last_iters = 0;
  bool last_no_update = false;
};

/// Rejection scores r_{k,i} = max(r1, r2) with r1 = 1 - c*exp(-alpha*|v_n|)
/// and r2 the change of r1 between consecutive samples (zero before the
/// first). Flags entries with r > gamma_rej as rejected.
Eigen::MatrixXd rejection_scores(std::vector<BufferEntry>& buffer,
                                 double alpha_rej, double gamma_rej);

/// eta = 1 - exp(-alpha_conf * mean tangential speed) over in-contact,
/// non-rejected samples with nonzero tangential velocity; 0 when none.
double confidence_score(const std::vector<BufferEntry>& buffer,
                        double alpha_conf, double v_eps = 1e-6);

struct ResidualJacobian {
  Eigen::VectorXd r;
  Eigen::VectorXd J;
  double loss = 0.0;  // sum of squared weighted residuals
  int pairs_used = 0;
  int pairs_skipped = 0;
};

/// Stacked weighted one-step prediction residuals over consecutive buffer
/// pairs and their derivative in mu (assembled with the configured gradient
/// method). The forward propagation solves hard contact at the candidate mu
/// using each entry's estimated contact flags; rejected contacts are
/// excluded from the gradient contributions only.
ResidualJacobian residual_and_jacobian(const std::vector<BufferEntry>& buffer,
                                       double mu, const RobotModel& model,
                                       const IdentifierConfig& config,
                                       GradientMethod method);

struct IdentificationResult {
  double mu_star = 0.0;
  double loss = 0.0;
  bool no_update = false;
  int iterations = 0;
  double wall_ms = 0.0;
  int pairs_used = 0;
};

/// Bound-constrained Gauss-Newton on the buffer loss, with backtracking
/// line search and a Levenberg fallback; terminates on step/loss tolerance,
/// the iteration cap or the dt_bound wall-clock budget.
IdentificationResult solve_identification(const std::vector<BufferEntry>& buffer,
                                          double mu_hat,
                                          const RobotModel& model,
                                          const IdentifierConfig& config);

/// Confidence-gated update: no change while eta <= gamma_conf; a direct jump
/// to mu* when |mu_hat - mu*| > epsilon; otherwise the convex combination
/// (1 - eta_prev) mu_hat + eta_prev mu*.
EstimateState update_estimate(EstimateState state, double mu_star, double eta,
                              const IdentifierConfig& config, double now);

/// Restores mu_def once eta has stayed at or below gamma_conf for reset_hold.
EstimateState apply_reset(EstimateState state, const IdentifierConfig& config,
                          double now);

struct CycleRecord {
  double t = 0.0;
  double mu_hat = 0.0;
  double mu_star = 0.0;
  double eta = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  GradientMethod method = GradientMethod::Smoothed;
  double wall_ms = 0.0;
  int n_rejected = 0;
  bool solved = false;
  bool updated = false;
};

/// One 10 Hz identifier cycle on a buffer snapshot: rejection, confidence,
/// gated solve + update, reset policy.
CycleRecord run_identifier_cycle(std::vector<BufferEntry> snapshot,
                                 EstimateState& state, const RobotModel& model,
                                 const IdentifierConfig& config, double now,
                                 bool reset_enabled = true);

}  // namespace fricid
