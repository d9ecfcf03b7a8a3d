#include <doctest.h>

#include <cstring>
#include <random>

#include "fricid/contact_solver.hpp"
#include "fricid/errors.hpp"
#include "fricid/model.hpp"

using namespace fricid;

namespace {

RobotModel default_box() {
  return build_box_model(1.0, {0.1, 0.1, 0.1},
                         box_inertia(1.0, {0.1, 0.1, 0.1}));
}

GeneralizedState resting_box_state(const RobotModel& m) {
  GeneralizedState s = m.make_state();
  s.q(2) = 0.1;
  return s;
}

// Point-mass single contact: diagonal Delassus, no coupling.
ContactProblem point_mass_problem(const Eigen::Vector3d& v_free, double mu,
                                  double mass = 1.0) {
  ContactProblem p;
  p.n_contacts = 1;
  p.mu = mu;
  p.dt = 0.01;
  p.delassus = Eigen::Matrix3d::Identity() / mass;
  p.v_free = v_free;
  p.apparent_inertia = {mass * Eigen::Matrix3d::Identity()};
  return p;
}

// Single active corner of the resting box: coupled 3x3 Delassus block.
ContactProblem coupled_problem(double mu, const Eigen::VectorXd& upsilon) {
  const RobotModel m = default_box();
  GeneralizedState s = resting_box_state(m);
  s.upsilon = upsilon;
  const std::vector<std::uint8_t> flags = {1, 0, 0, 0};
  const ModelEval ev = evaluate(m, s, 1e-4, &flags);
  return assemble_problem(ev, s, Eigen::VectorXd(), 0.01, mu);
}

// Exhaustive search over the feasible set (Signorini + cone): the zero
// impulse when it separates, plus a polar grid on the v_n = 0 branch.
double brute_force_min_objective(const ContactProblem& p, int n_angle = 100,
                                 int n_frac = 100) {
  REQUIRE(p.n_contacts == 1);
  const Eigen::Matrix3d D = p.delassus;
  const Eigen::Matrix3d Mk = p.apparent_inertia[0];
  const Eigen::Vector3d sigma = p.v_free;
  auto objective = [&](const Eigen::Vector3d& lam) {
    const Eigen::Vector3d v = sigma + D * lam;
    return v.dot(Mk * v);
  };
  double best = std::numeric_limits<double>::infinity();
  if (sigma.z() >= 0.0) best = objective(Eigen::Vector3d::Zero());
  for (int ia = 0; ia < n_angle; ++ia) {
    const double phi = -M_PI + 2.0 * M_PI * ia / n_angle;
    for (int is = 0; is <= n_frac; ++is) {
      const double frac = double(is) / n_frac;
      // lambda_t = frac * mu * lambda_n * (cos, sin); lambda_n from v_n = 0.
      const Eigen::Vector3d dir(frac * p.mu * std::cos(phi),
                                frac * p.mu * std::sin(phi), 1.0);
      const double denom = D.row(2).dot(dir);
      if (denom <= 1e-14) continue;
      const double ln = -sigma.z() / denom;
      if (ln < 0.0) continue;
      best = std::min(best, objective(dir * ln));
    }
  }
  return best;
}

double solver_objective(const ContactProblem& p, const ContactSolution& s) {
  const Eigen::Vector3d v = s.v_k(0);
  return v.dot(p.apparent_inertia[0] * v);
}

}  // namespace

TEST_CASE("assemble: gravity-only free velocity at a single corner") {
  const RobotModel m = default_box();
  const GeneralizedState s = resting_box_state(m);
  const std::vector<std::uint8_t> flags = {1, 0, 0, 0};
  const ModelEval ev = evaluate(m, s, 1e-4, &flags);
  const ContactProblem p = assemble_problem(ev, s, Eigen::VectorXd(), 0.01, 0.8);
  REQUIRE(p.n_contacts == 1);
  CHECK(std::abs(p.v_free(0)) < 1e-14);
  CHECK(std::abs(p.v_free(1)) < 1e-14);
  CHECK(p.v_free(2) == doctest::Approx(-9.81 * 0.01).epsilon(1e-12));
}

TEST_CASE("assemble: equilibrium gives zero free velocity") {
  RobotModel m = default_box();
  m.gravity.setZero();
  const GeneralizedState s = resting_box_state(m);
  const ModelEval ev = evaluate(m, s, 1e-4);
  const ContactProblem p = assemble_problem(ev, s, Eigen::VectorXd(), 0.01, 0.8);
  CHECK(p.v_free.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("assemble: four-corner Delassus is PSD with PD diagonal blocks") {
  const RobotModel m = default_box();
  const GeneralizedState s = resting_box_state(m);
  const ModelEval ev = evaluate(m, s, 1e-4);
  const ContactProblem p = assemble_problem(ev, s, Eigen::VectorXd(), 0.01, 0.8);
  REQUIRE(p.n_contacts == 4);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.delassus);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
  for (int k = 0; k < 4; ++k) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> bk(p.block(k, k));
    CHECK(bk.eigenvalues().minCoeff() > 0.0);
    CHECK(std::isfinite(bk.eigenvalues().maxCoeff() /
                        bk.eigenvalues().minCoeff()));
  }
}

TEST_CASE("resting box: all corners clamp, normal impulses carry the weight") {
  const RobotModel m = default_box();
  const GeneralizedState s = resting_box_state(m);
  const ModelEval ev = evaluate(m, s, 1e-4);
  const ContactProblem p = assemble_problem(ev, s, Eigen::VectorXd(), 0.01, 0.8);
  const ContactSolution sol = solve_contacts(p);
  double total_normal = 0.0;
  for (int k = 0; k < 4; ++k) {
    CHECK(sol.states[k] == ContactState::Clamping);
    total_normal += sol.lambda_k(k).z();
  }
  CHECK(total_normal == doctest::Approx(0.0981).epsilon(1e-9));
}

TEST_CASE("sliding point mass matches the closed form") {
  const ContactProblem p = point_mass_problem({1.0, 0.0, -0.0981}, 0.19);
  const ContactSolution sol = solve_contacts(p);
  REQUIRE(sol.states[0] == ContactState::Sliding);
  CHECK(sol.lambda_k(0).z() == doctest::Approx(0.0981).epsilon(1e-10));
  CHECK(sol.lambda_k(0).head<2>().norm() ==
        doctest::Approx(0.19 * 0.0981).epsilon(1e-9));
  // Friction opposes the slip direction.
  const Eigen::Vector2d vt = sol.v_k(0).head<2>();
  const Eigen::Vector2d lt = sol.lambda_k(0).head<2>();
  CHECK(vt.norm() > 0.9);
  CHECK(lt.dot(vt) < 0.0);
  CHECK(lt.normalized().dot(vt.normalized()) ==
        doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("mu = 0 leaves the tangential velocity unchanged") {
  const ContactProblem p = point_mass_problem({1.0, 0.0, -0.0981}, 0.0);
  const ContactSolution sol = solve_contacts(p);
  CHECK(sol.lambda_k(0).head<2>().norm() == 0.0);
  CHECK(sol.v_k(0).x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(sol.v_k(0).z()) < 1e-12);
}

TEST_CASE("single-contact solutions reach the brute-force minimum") {
  const double tol = 1e-6;
  SUBCASE("point mass, shallow slide") {
    const ContactProblem p = point_mass_problem({0.4, 0.2, -0.0981}, 0.4);
    const ContactSolution sol = solve_contacts(p);
    CHECK(solver_objective(p, sol) <= brute_force_min_objective(p) + tol);
  }
  SUBCASE("coupled corner, sliding") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
    u(0) = 0.8;
    u(4) = 0.3;
    const ContactProblem p = coupled_problem(0.3, u);
    const ContactSolution sol = solve_contacts(p);
    CHECK(solver_objective(p, sol) <= brute_force_min_objective(p) + tol);
  }
  SUBCASE("coupled corner, clamping") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
    u(0) = 0.01;
    const ContactProblem p = coupled_problem(0.9, u);
    const ContactSolution sol = solve_contacts(p);
    CHECK(solver_objective(p, sol) <= brute_force_min_objective(p) + tol);
  }
}

TEST_CASE("complementarity residuals vanish at solutions") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d vf(uni(rng), uni(rng), -std::abs(uni(rng)) - 0.01);
    const double mu = 0.05 + 0.9 * std::abs(uni(rng));
    const ContactProblem p = point_mass_problem(vf, mu);
    const ContactSolution sol = solve_contacts(p);
    const auto res = complementarity_residuals(p, sol);
    CHECK(res.first < 1e-8);
    CHECK(res.second < 1e-8);
    if (sol.states[0] == ContactState::Sliding)
      CHECK(sol.lambda_k(0).head<2>().dot(sol.v_k(0).head<2>()) <= 1e-14);
    CHECK(sol.lambda_k(0).z() >= 0.0);
    CHECK(sol.lambda_k(0).head<2>().norm() <=
          mu * sol.lambda_k(0).z() + 1e-10);
  }
}

TEST_CASE("solver is deterministic") {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
  u(0) = 0.5;
  u(3) = 0.2;
  const RobotModel m = default_box();
  GeneralizedState s = resting_box_state(m);
  s.upsilon = u;
  const ModelEval ev = evaluate(m, s, 1e-4);
  const ContactProblem p = assemble_problem(ev, s, Eigen::VectorXd(), 0.01, 0.3);
  const ContactSolution a = solve_contacts(p);
  const ContactSolution b = solve_contacts(p);
  CHECK(std::memcmp(a.lambda.data(), b.lambda.data(),
                    sizeof(double) * a.lambda.size()) == 0);
  CHECK(std::memcmp(a.v_next.data(), b.v_next.data(),
                    sizeof(double) * a.v_next.size()) == 0);
}

TEST_CASE("step: free flight is ballistic with no contact solve") {
  const RobotModel m = default_box();
  GeneralizedState s = m.make_state();
  s.q(2) = 2.0;
  const StepResult r = step_dynamics(m, s, Eigen::VectorXd(), 0.8, 0.01);
  CHECK(r.contacts.lambda.size() == 0);
  CHECK(r.state.upsilon(2) == doctest::Approx(-9.81 * 0.01).epsilon(1e-12));
}

TEST_CASE("step: resting box height drifts less than 1e-6 over 100 steps") {
  const RobotModel m = default_box();
  GeneralizedState s = resting_box_state(m);
  const double z0 = s.q(2);
  for (int i = 0; i < 100; ++i)
    s = step_dynamics(m, s, Eigen::VectorXd(), 0.8, 0.01).state;
  CHECK(std::abs(s.q(2) - z0) < 1e-6);
}

TEST_CASE("step: lateral push slides on low friction, sticks on high") {
  const RobotModel m = default_box();
  Eigen::VectorXd f_ext = Eigen::VectorXd::Zero(6);
  f_ext(0) = 4.0;  // above mu*m*g for mu=0.19, below for mu=1.0

  for (double mu : {0.19, 1.0}) {
    GeneralizedState s = resting_box_state(m);
    double prev_x = s.q(0);
    bool monotone = true;
    for (int i = 0; i < 100; ++i) {
      s = step_dynamics(m, s, Eigen::VectorXd(), mu, 0.01, f_ext).state;
      if (s.q(0) < prev_x - 1e-12) monotone = false;
      prev_x = s.q(0);
    }
    if (mu < 0.5) {
      CHECK(monotone);
      CHECK(s.q(0) > 0.01);
    } else {
      CHECK(std::abs(s.q(0)) < 1e-9);
    }
  }
}

TEST_CASE("invalid inputs are rejected") {
  const RobotModel m = default_box();
  const GeneralizedState s = resting_box_state(m);
  const ModelEval ev = evaluate(m, s, 1e-4);
  CHECK_THROWS_AS(assemble_problem(ev, s, Eigen::VectorXd(), 0.0, 0.8), Error);
  CHECK_THROWS_AS(assemble_problem(ev, s, Eigen::VectorXd(), 0.01, -0.1),
                  Error);
}
