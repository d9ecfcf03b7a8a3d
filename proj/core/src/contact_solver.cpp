#include "fricid/contact_solver.hpp"

#include <cmath>
#include <limits>

#include "fricid/errors.hpp"

namespace fricid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct OneContact {
  Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
  ContactState state = ContactState::Open;
  double theta = kNaN;
};

// Cone-boundary direction basis of the sliding parameterization.
Eigen::Vector3d cone_basis(double mu, double theta) {
  return {-mu * std::cos(theta), -mu * std::sin(theta), 1.0};
}

// Dissipation objective restricted to the cone boundary, as a function of
// the sliding angle. Infeasible angles (no positive normal impulse keeping
// the contact closed) evaluate to +inf.
struct BoundaryObjective {
  const Eigen::Matrix3d& D;
  const Eigen::LLT<Eigen::Matrix3d>& Dllt;
  const Eigen::Vector3d& sigma;
  double mu;

  bool eval(double theta, double& g) const {
    const Eigen::Vector3d E = cone_basis(mu, theta);
    const Eigen::Vector3d w = D * E;
    if (w.z() <= 1e-14) return false;
    const double ln = -sigma.z() / w.z();
    if (ln <= 0.0) return false;
    const Eigen::Vector3d v = sigma + w * ln;
    g = v.dot(Dllt.solve(v));
    return true;
  }

  bool grad(double theta, double& dg) const {
    const Eigen::Vector3d E = cone_basis(mu, theta);
    const Eigen::Vector3d w = D * E;
    if (w.z() <= 1e-14) return false;
    const double ln = -sigma.z() / w.z();
    if (ln <= 0.0) return false;
    const Eigen::Vector3d dE(mu * std::sin(theta), -mu * std::cos(theta), 0.0);
    const Eigen::Vector3d dw = D * dE;
    const double dln = sigma.z() * dw.z() / (w.z() * w.z());
    const Eigen::Vector3d v = sigma + w * ln;
    const Eigen::Vector3d dv = dw * ln + w * dln;
    dg = 2.0 * dv.dot(Dllt.solve(v));
    return true;
  }

  Eigen::Vector3d impulse(double theta) const {
    const Eigen::Vector3d E = cone_basis(mu, theta);
    const double ln = -sigma.z() / (D * E).z();
    return E * ln;
  }
};

double minimize_boundary_angle(const BoundaryObjective& f,
                               const SolverSettings& s) {
  // Coarse scan of the full circle, then refinement around the best sample.
  double best_theta = 0.0, best_g = kInf;
  const int n = s.coarse_samples;
  for (int i = 0; i < n; ++i) {
    const double theta = -M_PI + 2.0 * M_PI * i / n;
    double g;
    if (f.eval(theta, g) && g < best_g) {
      best_g = g;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best_g))
    throw SolverError("sliding contact has no feasible cone direction", 0, 0, 0);

  const double half = 2.0 * M_PI / n;
  double lo = best_theta - half, hi = best_theta + half;

  double glo, ghi;
  const bool have_grads = f.grad(lo, glo) && f.grad(hi, ghi);
  if (have_grads && glo < 0.0 && ghi > 0.0) {
    for (int i = 0; i < s.bisection_iters; ++i) {
      const double mid = 0.5 * (lo + hi);
      double gm;
      if (!f.grad(mid, gm)) break;
      (gm < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // Derivative does not bracket (flat or infeasible edge): golden section.
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  auto val = [&](double th) {
    double g;
    return f.eval(th, g) ? g : kInf;
  };
  double fc = val(c), fd = val(d);
  for (int i = 0; i < s.bisection_iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = val(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = val(d);
    }
  }
  return fc < fd ? c : d;
}

OneContact solve_one(const Eigen::Matrix3d& D, const Eigen::Vector3d& sigma,
                     double mu, const SolverSettings& s) {
  OneContact out;

  // Open: zero impulse leaves the contact separating.
  if (sigma.z() >= 0.0) {
    out.state = ContactState::Open;
    return out;
  }

  const Eigen::LLT<Eigen::Matrix3d> Dllt(D);
  if (Dllt.info() != Eigen::Success)
    throw SolverError("per-contact Delassus block not positive definite", 0, 0, 0);

  // Clamping: impulse zeroing the contact velocity, strictly inside the cone.
  const Eigen::Vector3d lam_c = -Dllt.solve(sigma);
  if (lam_c.z() > 0.0 &&
      lam_c.head<2>().norm() <= mu * lam_c.z() * (1.0 - s.clamp_margin)) {
    out.lambda = lam_c;
    out.state = ContactState::Clamping;
    return out;
  }

  // Sliding: impulse on the cone boundary, normal velocity zero.
  if (mu <= 0.0) {
    const double ln = -sigma.z() / D(2, 2);
    out.lambda = Eigen::Vector3d(0, 0, ln);
    const Eigen::Vector3d v = sigma + D * out.lambda;
    if (v.head<2>().norm() > 1e-12) {
      out.state = ContactState::Sliding;
      out.theta = std::atan2(v.y(), v.x());
    } else {
      out.state = ContactState::Clamping;
    }
    return out;
  }

  const BoundaryObjective f{D, Dllt, sigma, mu};
  const double theta = minimize_boundary_angle(f, s);
  out.lambda = f.impulse(theta);
  out.state = ContactState::Sliding;
  out.theta = theta;
  return out;
}

}  // namespace

const char* to_string(ContactState s) {
  switch (s) {
    case ContactState::Open: return "Open";
    case ContactState::Clamping: return "Clamping";
    case ContactState::Sliding: return "Sliding";
  }
  return "?";
}

ContactProblem assemble_problem(const ModelEval& eval,
                                const GeneralizedState& state,
                                const Eigen::VectorXd& tau, double dt,
                                double mu, const Eigen::VectorXd& f_ext) {
  if (!(dt > 0.0)) throw Error("assemble_problem requires dt > 0");
  if (mu < 0.0) throw Error("assemble_problem requires mu >= 0");
  const int nc = static_cast<int>(eval.contacts.size());
  const int nv = static_cast<int>(eval.M.rows());

  Eigen::VectorXd force = -eval.h;
  if (tau.size() > 0) {
    if (tau.size() != eval.B.cols()) throw Error("tau dimension mismatch");
    force += eval.B * tau;
  }
  if (f_ext.size() > 0) {
    if (f_ext.size() != nv) throw Error("f_ext dimension mismatch");
    force += f_ext;
  }
  const Eigen::VectorXd p_free = force * dt + eval.M * state.upsilon;

  ContactProblem prob;
  prob.mu = mu;
  prob.dt = dt;
  prob.n_contacts = nc;
  if (nc == 0) return prob;

  Eigen::MatrixXd J(3 * nc, nv);
  for (int k = 0; k < nc; ++k) J.middleRows<3>(3 * k) = eval.contacts[k].J;

  const Eigen::MatrixXd JMinv = J * eval.M_inv;
  prob.delassus = JMinv * J.transpose();
  prob.delassus = 0.5 * (prob.delassus + prob.delassus.transpose());
  prob.v_free = JMinv * p_free;
  prob.apparent_inertia.resize(nc);
  for (int k = 0; k < nc; ++k) {
    const Eigen::Matrix3d Dkk = prob.block(k, k);
    prob.apparent_inertia[k] =
        Dkk.llt().solve(Eigen::Matrix3d::Identity());
  }
  return prob;
}

ContactSolution solve_contacts(const ContactProblem& problem,
                               const SolverSettings& settings) {
  const int nc = problem.n_contacts;
  ContactSolution sol;
  sol.lambda = Eigen::VectorXd::Zero(3 * nc);
  sol.v_next = problem.v_free;
  sol.states.assign(nc, ContactState::Open);
  sol.theta = Eigen::VectorXd::Constant(nc, kNaN);
  if (nc == 0) return sol;

  double max_change = kInf;
  int sweep = 0;
  for (; sweep < settings.max_sweeps && max_change >= settings.tol; ++sweep) {
    max_change = 0.0;
    for (int k = 0; k < nc; ++k) {
      Eigen::Vector3d sigma = problem.v_free.segment<3>(3 * k);
      for (int j = 0; j < nc; ++j) {
        if (j == k) continue;
        sigma += problem.block(k, j) * sol.lambda.segment<3>(3 * j);
      }
      const OneContact r =
          solve_one(problem.block(k, k), sigma, problem.mu, settings);
      max_change = std::max(
          max_change,
          (r.lambda - sol.lambda.segment<3>(3 * k)).cwiseAbs().maxCoeff());
      sol.lambda.segment<3>(3 * k) = r.lambda;
      sol.states[k] = r.state;
      sol.theta(k) = r.theta;
    }
  }
  sol.sweeps = sweep;
  sol.impulse_residual = max_change;
  sol.v_next = problem.v_free + problem.delassus * sol.lambda;

  if (max_change >= settings.tol) {
    const auto res = complementarity_residuals(problem, sol);
    throw SolverError("contact solver did not converge", max_change,
                      std::max(res.first, res.second), sweep);
  }
  return sol;
}

std::pair<double, double> complementarity_residuals(
    const ContactProblem& problem, const ContactSolution& solution) {
  double rn = 0.0, rt = 0.0;
  for (int k = 0; k < problem.n_contacts; ++k) {
    const Eigen::Vector3d lam = solution.lambda_k(k);
    const Eigen::Vector3d v = solution.v_k(k);
    rn = std::max(rn, std::abs(std::min(lam.z(), v.z())));
    const double cone = problem.mu * problem.mu * lam.z() * lam.z() -
                        lam.head<2>().squaredNorm();
    rt = std::max(rt, std::abs(v.head<2>().norm() * cone));
  }
  return {rn, rt};
}

StepResult step_dynamics(const RobotModel& model, const GeneralizedState& state,
                         const Eigen::VectorXd& tau, double mu, double dt,
                         const Eigen::VectorXd& f_ext,
                         double activation_threshold,
                         const std::vector<std::uint8_t>* active_override,
                         const SolverSettings& settings) {
  StepResult out;
  out.eval = evaluate(model, state, activation_threshold, active_override);

  Eigen::VectorXd force = -out.eval.h;
  if (tau.size() > 0) force += out.eval.B * tau;
  if (f_ext.size() > 0) force += f_ext;

  Eigen::VectorXd impulse = force * dt;
  if (!out.eval.contacts.empty()) {
    out.problem = assemble_problem(out.eval, state, tau, dt, mu, f_ext);
    out.contacts = solve_contacts(out.problem, settings);
    for (std::size_t k = 0; k < out.eval.contacts.size(); ++k)
      impulse += out.eval.contacts[k].J.transpose() *
                 out.contacts.lambda.segment<3>(3 * k);
  }
  const Eigen::VectorXd upsilon_next =
      state.upsilon + out.eval.M_inv * impulse;
  out.state = integrate(state, upsilon_next, dt);
  return out;
}

}  // namespace fricid
