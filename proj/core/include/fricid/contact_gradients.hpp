#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "fricid/contact_solver.hpp"

namespace fricid {

enum class GradientMethod { Nonsmooth, Smoothed, RandZeroth, RandFirst, FiniteDiff };

const char* to_string(GradientMethod m);
GradientMethod gradient_method_from_string(const std::string& s);

struct GradientDiagnostics {
  double condition_number = 0.0;
  int denominator_clamps = 0;
};

/// d lambda / d mu stacked over the problem's contacts (3 rows each; zero
/// rows for open or excluded contacts).
struct ImpulseGradient {
  Eigen::VectorXd dlambda_dmu;
  GradientMethod method = GradientMethod::Nonsmooth;
  GradientDiagnostics diag;
};

/// Reduced stacked system over clamping rows (3 per contact) and sliding
/// normal rows (1 per contact): 0 = A lambda_contact + b, with the sliding
/// tangential impulses eliminated through the cone basis E.
struct StackedContactSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd dA_dmu;
  Eigen::VectorXd b;
  Eigen::VectorXd db_dmu;  // identically zero; kept for shape parity
  std::vector<int> clamping;  // contact indices, ascending
  std::vector<int> sliding;
  std::vector<Eigen::Vector3d> E;  // cone basis per sliding contact
  Eigen::VectorXd lambda_contact;  // [lambda_c; lambda_n_s] from the solution
};

/// Per-contact smoothing terms of the tangential-complementarity relaxation:
/// Gamma_k has the rank-1 top 2x3 block Theta_k rho_hat_k [-2 lambda_t^T,
/// 2 mu^2 lambda_n] and a zero bottom row; gamma_k = [Theta_k rho_hat_k
/// 2 mu lambda_n^2; 0].
struct SmoothedGradientTerms {
  double rho_t = 0.0;
  std::vector<int> active;  // non-open, non-excluded contact indices
  std::vector<std::uint8_t> has_smoothing;  // per active contact
  std::vector<Eigen::Vector2d> Theta;
  std::vector<double> rho_hat;
  std::vector<double> eps_den;  // applied denominator floor per contact
  std::vector<Eigen::Matrix3d> Gamma;
  std::vector<Eigen::Vector3d> gamma_vec;
  int denominator_clamps = 0;
};

/// Partition a hard solution into the Eq.-style reduced system. Contacts
/// with excluded[k] set are treated like open ones.
StackedContactSystem build_stacked_system(
    const ContactProblem& problem, const ContactSolution& solution,
    const std::vector<std::uint8_t>& excluded = {});

SmoothedGradientTerms build_smoothed_terms(
    const ContactProblem& problem, const ContactSolution& solution,
    double rho_t, double eps_den_rel = 1e-6,
    const std::vector<std::uint8_t>& excluded = {});

/// Exact gradient of the hard contact impulses with respect to mu. Exactly
/// zero (no solve) when no contact slides; throws GradientError when the
/// reduced matrix is singular.
ImpulseGradient nonsmooth_impulse_gradient(
    const ContactProblem& problem, const ContactSolution& solution,
    const std::vector<std::uint8_t>& excluded = {});

/// Smoothed gradient: the full 3-rows-per-contact system over all non-open
/// contacts, with the tangential rows carrying the Gamma/gamma relaxation
/// terms and the normal rows staying hard. The solution argument fixes the
/// evaluation point (the hard forward solution in the identification loop).
ImpulseGradient smoothed_impulse_gradient(
    const ContactProblem& problem, const ContactSolution& solution,
    double rho_t, double eps_den_rel = 1e-6,
    const std::vector<std::uint8_t>& excluded = {});

/// Central finite differences of the hard solver over mu; the oracle the
/// analytic nonsmooth path is validated against.
ImpulseGradient fd_impulse_gradient(const ContactProblem& problem,
                                    double h = 1e-5,
                                    const SolverSettings& settings = {});

/// Newton solve of the smoothed complementarity (\|v_t\| * (mu^2 lambda_n^2
/// - \|lambda_t\|^2) = rho_t per non-open contact, v_n = 0, friction
/// antiparallel to slip) warm-started from the hard solution. Validation
/// oracle only: finite differences of this map over mu are the ground truth
/// for smoothed_impulse_gradient.
ContactSolution smoothed_solution_oracle(const ContactProblem& problem,
                                         const ContactSolution& warm,
                                         double rho_t,
                                         double newton_tol = 1e-11,
                                         int max_iters = 100);

enum class RandOrder { Zeroth, First };

struct RandomizedGradient {
  double gradient = 0.0;
  int n_projected = 0;  // samples clipped back into [mu_min, mu_max]
};

/// Monte-Carlo smoothed gradient of a scalar loss. Zeroth order uses the
/// Gaussian score estimator (1/N) sum L(mu+eps_i) eps_i / sigma^2; first
/// order averages dloss at the perturbed points. Deterministic given seed;
/// per-sample seeds are derived from (seed, index).
RandomizedGradient randomized_gradient(
    const std::function<double(double)>& loss,
    const std::function<double(double)>& dloss, double mu, int n_samples,
    double sigma_rand, RandOrder order, std::uint64_t seed,
    double mu_min = 0.01, double mu_max = 1.0);

/// Chain rule to the next state: d upsilon/d mu = M^-1 J^T dlambda/dmu,
/// position tangent rows scale by dt. Returns [dq_tangent; dupsilon]
/// (2 nv rows).
Eigen::VectorXd state_gradient(const ImpulseGradient& grad,
                               const ModelEval& eval, double dt);

double condition_number(const Eigen::MatrixXd& A);

}  // namespace fricid
