#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fricid/model.hpp"

namespace fricid {

/// Hard per-step contact problem in impulse space. delassus = J M^-1 J^T
/// over the active contacts (3 rows per contact: tangential-x, tangential-y,
/// normal); v_free is the contact velocity at lambda = 0.
struct ContactProblem {
  Eigen::MatrixXd delassus;
  Eigen::VectorXd v_free;
  double mu = 0.0;
  double dt = 0.0;
  int n_contacts = 0;
  /// (J_k M^-1 J_k^T)^-1; weight of the per-contact dissipation objective.
  std::vector<Eigen::Matrix3d> apparent_inertia;

  Eigen::Matrix3d block(int k, int j) const {
    return delassus.block<3, 3>(3 * k, 3 * j);
  }
};

enum class ContactState { Open, Clamping, Sliding };

const char* to_string(ContactState s);

struct ContactSolution {
  Eigen::VectorXd lambda;  // stacked impulses, 3 per contact (N s)
  Eigen::VectorXd v_next;  // post-step contact velocities (m/s)
  std::vector<ContactState> states;
  Eigen::VectorXd theta;  // sliding direction angle; NaN unless Sliding
  int sweeps = 0;
  double impulse_residual = 0.0;

  Eigen::Vector3d lambda_k(int k) const { return lambda.segment<3>(3 * k); }
  Eigen::Vector3d v_k(int k) const { return v_next.segment<3>(3 * k); }
};

struct SolverSettings {
  double tol = 1e-10;       // max per-contact impulse change per sweep
  int max_sweeps = 200;
  int bisection_iters = 40; // refinement of the sliding direction angle
  int coarse_samples = 64;
  double clamp_margin = 1e-8;  // strict cone interior margin, relative
};

/// Builds the Delassus system from a model evaluation. f_ext is an optional
/// generalized external force (e.g. a push on the base), added to B*tau.
ContactProblem assemble_problem(const ModelEval& eval,
                                const GeneralizedState& state,
                                const Eigen::VectorXd& tau, double dt,
                                double mu,
                                const Eigen::VectorXd& f_ext = Eigen::VectorXd());

/// Per-contact Gauss-Seidel in ascending contact order. Each contact is
/// resolved by case analysis: Open if the free normal velocity separates,
/// Clamping if the velocity-zeroing impulse lies strictly inside the cone,
/// otherwise Sliding with the impulse on the cone boundary at the angle
/// minimizing the dissipation objective (bisection). Deterministic: equal
/// inputs give bit-identical solutions.
ContactSolution solve_contacts(const ContactProblem& problem,
                               const SolverSettings& settings = {});

/// Worst complementarity violations of a solution; used for diagnostics and
/// tests. first = max |min(lambda_n, v_n)|, second = max tangential
/// complementarity residual |\|v_t\|*(mu^2 lambda_n^2 - \|lambda_t\|^2)|.
std::pair<double, double> complementarity_residuals(
    const ContactProblem& problem, const ContactSolution& solution);

struct StepResult {
  GeneralizedState state;
  ContactSolution contacts;  // empty when no contact is active
  ModelEval eval;
  ContactProblem problem;
};

/// One full step: evaluate -> assemble -> solve -> velocity update ->
/// integrate. This is the propagation the identifier differentiates.
StepResult step_dynamics(const RobotModel& model, const GeneralizedState& state,
                         const Eigen::VectorXd& tau, double mu, double dt,
                         const Eigen::VectorXd& f_ext = Eigen::VectorXd(),
                         double activation_threshold = 1e-4,
                         const std::vector<std::uint8_t>* active_override = nullptr,
                         const SolverSettings& settings = {});

}  // namespace fricid
