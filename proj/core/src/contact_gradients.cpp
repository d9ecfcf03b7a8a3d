#include "fricid/contact_gradients.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "fricid/errors.hpp"
#include "fricid/rng.hpp"

namespace fricid {

namespace {

Eigen::Vector3d cone_basis(double mu, double theta) {
  return {-mu * std::cos(theta), -mu * std::sin(theta), 1.0};
}

bool is_excluded(const std::vector<std::uint8_t>& excluded, int k) {
  return !excluded.empty() && excluded[static_cast<std::size_t>(k)] != 0;
}

// Active (non-open, non-excluded) contact indices of a solution.
std::vector<int> active_contacts(const ContactSolution& solution,
                                 const std::vector<std::uint8_t>& excluded) {
  std::vector<int> act;
  for (std::size_t k = 0; k < solution.states.size(); ++k)
    if (solution.states[k] != ContactState::Open &&
        !is_excluded(excluded, static_cast<int>(k)))
      act.push_back(static_cast<int>(k));
  return act;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& D, const std::vector<int>& act) {
  const int m = static_cast<int>(act.size());
  Eigen::MatrixXd S(3 * m, 3 * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      S.block<3, 3>(3 * i, 3 * j) = D.block<3, 3>(3 * act[i], 3 * act[j]);
  return S;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<int>& act) {
  Eigen::VectorXd s(3 * act.size());
  for (std::size_t i = 0; i < act.size(); ++i)
    s.segment<3>(3 * i) = v.segment<3>(3 * act[i]);
  return s;
}

}  // namespace

const char* to_string(GradientMethod m) {
  switch (m) {
    case GradientMethod::Nonsmooth: return "Nonsmooth";
    case GradientMethod::Smoothed: return "Smoothed";
    case GradientMethod::RandZeroth: return "RandZeroth";
    case GradientMethod::RandFirst: return "RandFirst";
    case GradientMethod::FiniteDiff: return "FiniteDiff";
  }
  return "?";
}

GradientMethod gradient_method_from_string(const std::string& s) {
  if (s == "nonsmooth") return GradientMethod::Nonsmooth;
  if (s == "smoothed") return GradientMethod::Smoothed;
  if (s == "rand0") return GradientMethod::RandZeroth;
  if (s == "rand1") return GradientMethod::RandFirst;
  if (s == "fd") return GradientMethod::FiniteDiff;
  throw Error("unknown gradient method: " + s);
}

double condition_number(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const double smin = svd.singularValues().minCoeff();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues().maxCoeff() / smin;
}

StackedContactSystem build_stacked_system(
    const ContactProblem& problem, const ContactSolution& solution,
    const std::vector<std::uint8_t>& excluded) {
  StackedContactSystem sys;
  for (std::size_t k = 0; k < solution.states.size(); ++k) {
    if (is_excluded(excluded, static_cast<int>(k))) continue;
    if (solution.states[k] == ContactState::Clamping)
      sys.clamping.push_back(static_cast<int>(k));
    else if (solution.states[k] == ContactState::Sliding)
      sys.sliding.push_back(static_cast<int>(k));
  }
  const int ncl = static_cast<int>(sys.clamping.size());
  const int nsl = static_cast<int>(sys.sliding.size());
  const int dim = 3 * ncl + nsl;

  sys.E.reserve(nsl);
  for (int i = 0; i < nsl; ++i)
    sys.E.push_back(cone_basis(problem.mu, solution.theta(sys.sliding[i])));

  sys.A = Eigen::MatrixXd::Zero(dim, dim);
  sys.dA_dmu = Eigen::MatrixXd::Zero(dim, dim);
  sys.b = Eigen::VectorXd::Zero(dim);
  sys.db_dmu = Eigen::VectorXd::Zero(dim);
  sys.lambda_contact = Eigen::VectorXd::Zero(dim);

  const Eigen::MatrixXd& D = problem.delassus;

  // Row selector: 3 rows per clamping contact, then the normal row of each
  // sliding contact. Column combiner: 3 columns per clamping contact, then
  // D(:, s) E_s per sliding contact (only E carries mu).
  auto fill = [&](Eigen::MatrixXd& A, bool use_dE) {
    for (int i = 0; i < ncl; ++i) {
      for (int j = 0; j < ncl; ++j)
        if (!use_dE)
          A.block<3, 3>(3 * i, 3 * j) =
              D.block<3, 3>(3 * sys.clamping[i], 3 * sys.clamping[j]);
      for (int j = 0; j < nsl; ++j) {
        const double th = solution.theta(sys.sliding[j]);
        const Eigen::Vector3d col =
            use_dE ? Eigen::Vector3d(-std::cos(th), -std::sin(th), 0.0)
                   : sys.E[j];
        A.block<3, 1>(3 * i, 3 * ncl + j) =
            D.block<3, 3>(3 * sys.clamping[i], 3 * sys.sliding[j]) * col;
      }
    }
    for (int i = 0; i < nsl; ++i) {
      const int row = 3 * sys.sliding[i] + 2;
      for (int j = 0; j < ncl; ++j)
        if (!use_dE)
          A.block<1, 3>(3 * ncl + i, 3 * j) =
              D.block<1, 3>(row, 3 * sys.clamping[j]);
      for (int j = 0; j < nsl; ++j) {
        const double th = solution.theta(sys.sliding[j]);
        const Eigen::Vector3d col =
            use_dE ? Eigen::Vector3d(-std::cos(th), -std::sin(th), 0.0)
                   : sys.E[j];
        A(3 * ncl + i, 3 * ncl + j) =
            D.block<1, 3>(row, 3 * sys.sliding[j]) * col;
      }
    }
  };
  fill(sys.A, false);
  fill(sys.dA_dmu, true);

  for (int i = 0; i < ncl; ++i) {
    sys.b.segment<3>(3 * i) = problem.v_free.segment<3>(3 * sys.clamping[i]);
    sys.lambda_contact.segment<3>(3 * i) =
        solution.lambda.segment<3>(3 * sys.clamping[i]);
  }
  for (int i = 0; i < nsl; ++i) {
    sys.b(3 * ncl + i) = problem.v_free(3 * sys.sliding[i] + 2);
    sys.lambda_contact(3 * ncl + i) = solution.lambda(3 * sys.sliding[i] + 2);
  }
  return sys;
}

ImpulseGradient nonsmooth_impulse_gradient(
    const ContactProblem& problem, const ContactSolution& solution,
    const std::vector<std::uint8_t>& excluded) {
  ImpulseGradient out;
  out.method = GradientMethod::Nonsmooth;
  out.dlambda_dmu = Eigen::VectorXd::Zero(3 * problem.n_contacts);

  const StackedContactSystem sys =
      build_stacked_system(problem, solution, excluded);
  // Only the sliding columns depend on mu; with no sliding contact the
  // gradient is exactly zero (Table-style non-informative case).
  if (sys.sliding.empty()) return out;

  out.diag.condition_number = condition_number(sys.A);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.A);
  // d lambda = A^-1 dA A^-1 b - A^-1 db, with lambda_contact = -A^-1 b.
  const Eigen::VectorXd rhs = -(sys.dA_dmu * sys.lambda_contact) - sys.db_dmu;
  const Eigen::VectorXd dcontact = lu.solve(rhs);
  if (!dcontact.allFinite())
    throw GradientError("singular reduced contact system",
                        out.diag.condition_number);

  const int ncl = static_cast<int>(sys.clamping.size());
  for (int i = 0; i < ncl; ++i)
    out.dlambda_dmu.segment<3>(3 * sys.clamping[i]) = dcontact.segment<3>(3 * i);
  for (std::size_t i = 0; i < sys.sliding.size(); ++i) {
    const int k = sys.sliding[i];
    const double th = solution.theta(k);
    const double ln = solution.lambda(3 * k + 2);
    const double dln = dcontact(3 * ncl + static_cast<int>(i));
    const Eigen::Vector3d dE(-std::cos(th), -std::sin(th), 0.0);
    out.dlambda_dmu.segment<3>(3 * k) = dE * ln + sys.E[i] * dln;
  }
  return out;
}

SmoothedGradientTerms build_smoothed_terms(
    const ContactProblem& problem, const ContactSolution& solution,
    double rho_t, double eps_den_rel,
    const std::vector<std::uint8_t>& excluded) {
  if (!(rho_t > 0.0)) throw Error("rho_t must be positive");
  SmoothedGradientTerms terms;
  terms.rho_t = rho_t;
  terms.active = active_contacts(solution, excluded);

  const double mu = problem.mu;
  for (int k : terms.active) {
    const Eigen::Vector3d lam = solution.lambda_k(k);
    const Eigen::Vector2d lam_t = lam.head<2>();
    const double lam_n = lam.z();
    const Eigen::Vector2d v_t = solution.v_k(k).head<2>();

    Eigen::Vector2d theta_dir = Eigen::Vector2d::Zero();
    bool smooth = true;
    if (mu * lam_n <= 0.0) {
      smooth = false;  // degenerate cone, exact terms vanish in the limit
    } else if (solution.states[static_cast<std::size_t>(k)] ==
               ContactState::Sliding) {
      theta_dir = v_t.normalized();
    } else if (lam_t.norm() > 0.0) {
      theta_dir = -lam_t.normalized();  // incipient slip opposes the impulse
    } else {
      smooth = false;  // direction undefined, drop the smoothed terms
    }

    terms.has_smoothing.push_back(smooth ? 1 : 0);
    terms.Theta.push_back(theta_dir);
    if (!smooth) {
      terms.rho_hat.push_back(0.0);
      terms.eps_den.push_back(0.0);
      terms.Gamma.push_back(Eigen::Matrix3d::Zero());
      terms.gamma_vec.push_back(Eigen::Vector3d::Zero());
      continue;
    }

    const double den = mu * mu * lam_n * lam_n - lam_t.squaredNorm();
    const double floor = eps_den_rel * (mu * lam_n) * (mu * lam_n);
    double den_eff = den;
    if (den < floor) {
      den_eff = floor;
      ++terms.denominator_clamps;
    }
    const double rho_hat = rho_t / (den_eff * den_eff);
    terms.rho_hat.push_back(rho_hat);
    terms.eps_den.push_back(floor);

    Eigen::RowVector3d u;
    u << -2.0 * lam_t.transpose(), 2.0 * mu * mu * lam_n;
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    G.topRows<2>() = theta_dir * rho_hat * u;
    terms.Gamma.push_back(G);
    Eigen::Vector3d g;
    g << theta_dir * rho_hat * 2.0 * mu * lam_n * lam_n, 0.0;
    terms.gamma_vec.push_back(g);
  }
  return terms;
}

ImpulseGradient smoothed_impulse_gradient(
    const ContactProblem& problem, const ContactSolution& solution,
    double rho_t, double eps_den_rel,
    const std::vector<std::uint8_t>& excluded) {
  ImpulseGradient out;
  out.method = GradientMethod::Smoothed;
  out.dlambda_dmu = Eigen::VectorXd::Zero(3 * problem.n_contacts);

  const SmoothedGradientTerms terms =
      build_smoothed_terms(problem, solution, rho_t, eps_den_rel, excluded);
  out.diag.denominator_clamps = terms.denominator_clamps;
  const std::vector<int>& act = terms.active;
  const int m = static_cast<int>(act.size());
  if (m == 0) return out;

  const Eigen::MatrixXd A = submatrix(problem.delassus, act);

  // The tangential row pair of each smoothed contact is rewritten in the
  // (Theta_perp, Theta) basis: the perp row has no rho_hat term, and the
  // parallel row can be divided by rho_hat when it is large. Identical
  // solution, but the floored-denominator (sliding) case stays well scaled.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(3 * m, 3 * m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3 * m);
  for (int i = 0; i < m; ++i) {
    const int k = act[i];
    const auto At = A.middleRows(3 * i, 2);  // tangential rows of contact i
    if (!terms.has_smoothing[i]) {
      S.middleRows(3 * i, 2) = At;
    } else {
      const Eigen::Vector2d Th = terms.Theta[i];
      const Eigen::Vector2d Tp(-Th.y(), Th.x());
      const double rho_hat = terms.rho_hat[i];
      const Eigen::Vector3d lam = solution.lambda_k(k);
      Eigen::RowVector3d u;
      u << -2.0 * lam.head<2>().transpose(),
          2.0 * problem.mu * problem.mu * lam.z();
      const double c = 2.0 * problem.mu * lam.z() * lam.z();

      S.row(3 * i) = Tp.transpose() * At;  // rhs 0
      if (rho_hat <= 1.0) {
        S.row(3 * i + 1) = Th.transpose() * At;
        S.block<1, 3>(3 * i + 1, 3 * i) += rho_hat * u;
        rhs(3 * i + 1) = -rho_hat * c;
      } else {
        S.row(3 * i + 1) = (Th.transpose() * At) / rho_hat;
        S.block<1, 3>(3 * i + 1, 3 * i) += u;
        rhs(3 * i + 1) = -c;
      }
    }
    S.row(3 * i + 2) = A.row(3 * i + 2);  // hard Signorini-active row, rhs 0
  }

  // Row equilibration before the LU solve.
  for (int r = 0; r < 3 * m; ++r) {
    const double s = S.row(r).cwiseAbs().maxCoeff();
    if (s > 0.0) {
      S.row(r) /= s;
      rhs(r) /= s;
    }
  }
  out.diag.condition_number = condition_number(S);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(S);
  const Eigen::VectorXd d = lu.solve(rhs);
  if (!d.allFinite())
    throw GradientError("singular smoothed contact system",
                        out.diag.condition_number);
  for (int i = 0; i < m; ++i)
    out.dlambda_dmu.segment<3>(3 * act[i]) = d.segment<3>(3 * i);
  return out;
}

ImpulseGradient fd_impulse_gradient(const ContactProblem& problem, double h,
                                    const SolverSettings& settings) {
  ContactProblem plus = problem;
  ContactProblem minus = problem;
  plus.mu = problem.mu + h;
  minus.mu = std::max(0.0, problem.mu - h);
  const double span = plus.mu - minus.mu;
  const ContactSolution sp = solve_contacts(plus, settings);
  const ContactSolution sm = solve_contacts(minus, settings);
  ImpulseGradient out;
  out.method = GradientMethod::FiniteDiff;
  out.dlambda_dmu = (sp.lambda - sm.lambda) / span;
  return out;
}

ContactSolution smoothed_solution_oracle(const ContactProblem& problem,
                                         const ContactSolution& warm,
                                         double rho_t, double newton_tol,
                                         int max_iters) {
  if (!(rho_t > 0.0)) throw OracleError("rho_t must be positive");
  const std::vector<int> act = active_contacts(warm, {});
  const int m = static_cast<int>(act.size());
  if (m == 0) throw OracleError("no closed contact to smooth");

  const Eigen::MatrixXd D = submatrix(problem.delassus, act);
  const Eigen::VectorXd vf = subvector(problem.v_free, act);
  const double mu = problem.mu;

  // Per contact: v_n = 0; \|v_t\| (mu^2 l_n^2 - \|l_t\|^2) = rho_t;
  // cross(l_t, v_t) = 0 (friction antiparallel to slip).
  auto residual = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd v = vf + D * x;
    Eigen::VectorXd F(3 * m);
    for (int i = 0; i < m; ++i) {
      const Eigen::Vector2d lt = x.segment<2>(3 * i);
      const double ln = x(3 * i + 2);
      const Eigen::Vector2d vt = v.segment<2>(3 * i);
      const double den = mu * mu * ln * ln - lt.squaredNorm();
      F(3 * i) = vt.norm() * den - rho_t;
      F(3 * i + 1) = lt.x() * vt.y() - lt.y() * vt.x();
      F(3 * i + 2) = v(3 * i + 2);
    }
    return F;
  };

  // Start strictly inside the cone with a nonzero slip direction.
  Eigen::VectorXd x = subvector(warm.lambda, act);
  for (int i = 0; i < m; ++i) x.segment<2>(3 * i) *= 0.8;

  Eigen::VectorXd F = residual(x);
  double fnorm = F.norm();
  for (int iter = 0; iter < max_iters; ++iter) {
    if (F.cwiseAbs().maxCoeff() < newton_tol) break;
    // Finite-difference Jacobian; the oracle stays independent of the
    // analytic gradient path it validates.
    Eigen::MatrixXd Jf(3 * m, 3 * m);
    for (int c = 0; c < 3 * m; ++c) {
      const double step = 1e-7 * std::max(1.0, std::abs(x(c)));
      Eigen::VectorXd xp = x;
      xp(c) += step;
      Jf.col(c) = (residual(xp) - F) / step;
    }
    const Eigen::VectorXd dx = Jf.partialPivLu().solve(-F);
    if (!dx.allFinite()) throw OracleError("oracle Newton step not finite");
    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      const Eigen::VectorXd xn = x + s * dx;
      const Eigen::VectorXd Fn = residual(xn);
      if (Fn.norm() < fnorm) {
        x = xn;
        F = Fn;
        fnorm = Fn.norm();
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) throw OracleError("oracle Newton stalled");
  }
  if (F.cwiseAbs().maxCoeff() >= newton_tol)
    throw OracleError("oracle Newton did not reach tolerance");

  ContactSolution out = warm;
  out.lambda = Eigen::VectorXd::Zero(3 * problem.n_contacts);
  for (int i = 0; i < m; ++i) {
    out.lambda.segment<3>(3 * act[i]) = x.segment<3>(3 * i);
    // Solutions must sit strictly inside the cone with dissipative slip.
    const Eigen::Vector2d lt = x.segment<2>(3 * i);
    const double ln = x(3 * i + 2);
    if (!(mu * mu * ln * ln - lt.squaredNorm() > 0.0))
      throw OracleError("oracle solution left the friction cone");
  }
  out.v_next = problem.v_free + problem.delassus * out.lambda;
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d vt = out.v_next.segment<2>(3 * act[i]);
    const Eigen::Vector2d lt = out.lambda.segment<2>(3 * act[i]);
    if (lt.dot(vt) > 1e-12) throw OracleError("oracle slip not dissipative");
    out.theta(act[i]) = std::atan2(vt.y(), vt.x());
  }
  return out;
}

RandomizedGradient randomized_gradient(
    const std::function<double(double)>& loss,
    const std::function<double(double)>& dloss, double mu, int n_samples,
    double sigma_rand, RandOrder order, std::uint64_t seed, double mu_min,
    double mu_max) {
  if (n_samples < 1) throw Error("randomized_gradient requires n_samples >= 1");
  if (!(sigma_rand > 0.0)) throw Error("sigma_rand must be positive");

  RandomizedGradient out;
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, sigma_rand);
    const double eps = normal(rng);
    double x = mu + eps;
    if (x < mu_min || x > mu_max) {
      x = std::clamp(x, mu_min, mu_max);
      ++out.n_projected;
    }
    if (order == RandOrder::Zeroth)
      acc += loss(x) * eps / (sigma_rand * sigma_rand);
    else
      acc += dloss(x);
  }
  out.gradient = acc / n_samples;
  return out;
}

Eigen::VectorXd state_gradient(const ImpulseGradient& grad,
                               const ModelEval& eval, double dt) {
  const int nv = static_cast<int>(eval.M.rows());
  Eigen::VectorXd gen = Eigen::VectorXd::Zero(nv);
  for (std::size_t k = 0; k < eval.contacts.size(); ++k)
    gen += eval.contacts[k].J.transpose() *
           grad.dlambda_dmu.segment<3>(3 * static_cast<int>(k));
  const Eigen::VectorXd dv = eval.M_inv * gen;
  Eigen::VectorXd out(2 * nv);
  out.head(nv) = dt * dv;
  out.tail(nv) = dv;
  return out;
}

}  // namespace fricid
