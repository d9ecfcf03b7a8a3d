#include <doctest.h>

#include <random>

#include "fricid/model.hpp"
#include "fricid/so3.hpp"

using namespace fricid;

namespace {

RobotModel default_box() {
  return build_box_model(1.0, {0.1, 0.1, 0.1},
                         box_inertia(1.0, {0.1, 0.1, 0.1}));
}

GeneralizedState random_state(const RobotModel& model, std::mt19937_64& rng,
                              double vel_scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  GeneralizedState s = model.make_state();
  for (int i = 0; i < 3; ++i) s.q(i) = 0.3 * n(rng);
  Eigen::Vector4d quat(n(rng), n(rng), n(rng), n(rng));
  quat.normalize();
  s.q.segment<4>(3) = quat;
  for (int i = 7; i < s.q.size(); ++i) s.q(i) = 0.5 * n(rng);
  for (int i = 0; i < s.upsilon.size(); ++i) s.upsilon(i) = vel_scale * n(rng);
  return s;
}

// Body kinetic energy via direct velocity propagation down the monoped
// chain, written from scratch as an oracle for the mass matrix.
double monoped_kinetic_energy(const RobotModel& m, const GeneralizedState& s) {
  const double l1 = -m.links[1].joint_origin.z();
  const double l2 = -m.contact_points[0].offset.z();
  const Eigen::Matrix3d R0 = s.base_orientation().toRotationMatrix();
  const Eigen::Vector3d v = s.base_linear_velocity();
  const Eigen::Vector3d w = s.base_angular_velocity();
  const double th1 = s.q(7), th2 = s.q(8);
  const double thd1 = s.upsilon(6), thd2 = s.upsilon(7);

  double ke = 0.5 * m.base_mass * v.squaredNorm() +
              0.5 * w.dot(R0 * m.base_inertia * R0.transpose() * w);

  const Eigen::Vector3d a1 = R0 * Eigen::Vector3d::UnitY();
  const Eigen::Matrix3d R1 =
      R0 * Eigen::AngleAxisd(th1, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Vector3d w1 = w + a1 * thd1;
  const Eigen::Vector3d c1 = R1 * Eigen::Vector3d(0, 0, -0.5 * l1);
  const Eigen::Vector3d vc1 = v + w1.cross(c1);  // hip sits at the base origin
  ke += 0.5 * m.links[0].mass * vc1.squaredNorm() +
        0.5 * w1.dot(R1 * m.links[0].inertia_com * R1.transpose() * w1);

  const Eigen::Vector3d o2 = R1 * Eigen::Vector3d(0, 0, -l1);
  const Eigen::Vector3d vo2 = v + w1.cross(o2);
  const Eigen::Vector3d a2 = R1 * Eigen::Vector3d::UnitY();
  const Eigen::Matrix3d R2 =
      R1 * Eigen::AngleAxisd(th2, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Vector3d w2 = w1 + a2 * thd2;
  const Eigen::Vector3d rc2 = R2 * Eigen::Vector3d(0, 0, -0.5 * l2);
  const Eigen::Vector3d vc2 = vo2 + w2.cross(rc2);
  ke += 0.5 * m.links[1].mass * vc2.squaredNorm() +
        0.5 * w2.dot(R2 * m.links[1].inertia_com * R2.transpose() * w2);
  return ke;
}

double total_energy(const RobotModel& m, const GeneralizedState& s) {
  const ModelEval ev = evaluate(m, s, -1e300);  // no active contacts needed
  const double ke = 0.5 * s.upsilon.dot(ev.M * s.upsilon);
  // Potential energy from body COM heights.
  double pe = 0.0;
  if (m.name == "box") {
    pe = m.base_mass * 9.81 * s.base_position().z();
  } else {
    const double l1 = -m.links[1].joint_origin.z();
    const double l2 = -m.contact_points[0].offset.z();
    const Eigen::Matrix3d R0 = s.base_orientation().toRotationMatrix();
    const Eigen::Matrix3d R1 =
        R0 *
        Eigen::AngleAxisd(s.q(7), Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Matrix3d R2 =
        R1 *
        Eigen::AngleAxisd(s.q(8), Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Vector3d p = s.base_position();
    const Eigen::Vector3d c1 = p + R1 * Eigen::Vector3d(0, 0, -0.5 * l1);
    const Eigen::Vector3d o2 = p + R1 * Eigen::Vector3d(0, 0, -l1);
    const Eigen::Vector3d c2 = o2 + R2 * Eigen::Vector3d(0, 0, -0.5 * l2);
    pe = 9.81 * (m.base_mass * p.z() + m.links[0].mass * c1.z() +
                 m.links[1].mass * c2.z());
  }
  return ke + pe;
}

}  // namespace

TEST_CASE("box model constructor contract") {
  const RobotModel m = default_box();
  CHECK(m.nv() == 6);
  CHECK(m.nq() == 7);
  CHECK(m.na() == 0);
  CHECK(m.contact_points.size() == 4);

  CHECK_THROWS_AS(build_box_model(0.0, {0.1, 0.1, 0.1},
                                  box_inertia(1.0, {0.1, 0.1, 0.1})),
                  InvalidModelError);
  CHECK_THROWS_AS(build_box_model(1.0, {0.1, -0.1, 0.1},
                                  box_inertia(1.0, {0.1, 0.1, 0.1})),
                  InvalidModelError);
}

TEST_CASE("box resting on the ground has zero gaps") {
  const RobotModel m = default_box();
  GeneralizedState s = m.make_state();
  s.q(2) = 0.1;  // corners at z = 0
  const ModelEval ev = evaluate(m, s, 1e-4);
  REQUIRE(ev.contacts.size() == 4);
  for (const ContactEval& c : ev.contacts) CHECK(std::abs(c.gap) < 1e-12);
}

TEST_CASE("monoped model constructor contract") {
  const RobotModel m = build_monoped_model(2.5);
  CHECK(m.nq() == 9);
  CHECK(m.nv() == 8);
  CHECK(m.na() == 2);
  CHECK(m.contact_points.size() == 1);
  CHECK(m.input_matrix().rows() == 8);
  CHECK(m.input_matrix().cols() == 2);

  MonopedParams bad;
  bad.shank_length = 0.0;
  CHECK_THROWS_AS(build_monoped_model(2.5, bad), InvalidModelError);
}

TEST_CASE("monoped nominal stance puts the foot on the ground") {
  const RobotModel m = build_monoped_model(2.5);
  const GeneralizedState s = monoped_nominal_stance(m, 0.5);
  const Eigen::Vector3d foot = contact_point_position(m, s, 0);
  CHECK(std::abs(foot.z()) < 1e-9);
  const ModelEval ev = evaluate(m, s, 1e-4);
  REQUIRE(ev.contacts.size() == 1);
  CHECK(std::abs(ev.contacts[0].gap) < 1e-9);
}

TEST_CASE("floating box: no contacts, h is pure gravity") {
  const RobotModel m = default_box();
  GeneralizedState s = m.make_state();
  s.q(2) = 1.0;
  const ModelEval ev = evaluate(m, s, 1e-4);
  CHECK(ev.contacts.empty());
  Eigen::VectorXd g_gen = Eigen::VectorXd::Zero(6);
  g_gen.head<3>() = m.gravity;
  const Eigen::VectorXd expected = -(ev.M * g_gen);
  CHECK((ev.h - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("contact Jacobians match finite differences of point positions") {
  std::mt19937_64 rng(7);
  for (const char* which : {"box", "monoped"}) {
    const RobotModel m = std::string(which) == "box"
                             ? default_box()
                             : build_monoped_model(2.5);
    for (int trial = 0; trial < 5; ++trial) {
      const GeneralizedState s = random_state(m, rng);
      const ModelEval ev = evaluate(m, s, 1e300);  // activate everything
      const double h = 1e-6;
      const GeneralizedState sp = integrate(s, s.upsilon, h);
      const GeneralizedState sm = integrate(s, -s.upsilon, h);
      for (const ContactEval& c : ev.contacts) {
        const Eigen::Vector3d fd =
            (contact_point_position(m, sp, c.point_index) -
             contact_point_position(m, sm, c.point_index)) /
            (2.0 * h);
        const Eigen::Vector3d an = c.J * s.upsilon;
        const double scale = std::max(1.0, an.norm());
        CHECK((fd - an).norm() / scale < 1e-6);
      }
    }
  }
}

TEST_CASE("analytic point velocities agree with J*upsilon tightly") {
  // Independent velocity propagation for the monoped foot.
  const RobotModel m = build_monoped_model(2.5);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const GeneralizedState s = random_state(m, rng);
    const ModelEval ev = evaluate(m, s, 1e300);
    const double l1 = -m.links[1].joint_origin.z();
    const double l2 = -m.contact_points[0].offset.z();
    const Eigen::Matrix3d R0 = s.base_orientation().toRotationMatrix();
    const Eigen::Vector3d a1 = R0 * Eigen::Vector3d::UnitY();
    const Eigen::Matrix3d R1 =
        R0 *
        Eigen::AngleAxisd(s.q(7), Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Vector3d a2 = R1 * Eigen::Vector3d::UnitY();
    const Eigen::Matrix3d R2 =
        R1 *
        Eigen::AngleAxisd(s.q(8), Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Vector3d w = s.base_angular_velocity();
    const Eigen::Vector3d w1 = w + a1 * s.upsilon(6);
    const Eigen::Vector3d w2 = w1 + a2 * s.upsilon(7);
    const Eigen::Vector3d o2 = R1 * Eigen::Vector3d(0, 0, -l1);
    const Eigen::Vector3d foot = o2 + R2 * Eigen::Vector3d(0, 0, -l2);
    const Eigen::Vector3d v_foot = s.base_linear_velocity() + w1.cross(o2) +
                                   w2.cross(foot - o2);
    const Eigen::Vector3d via_J = ev.contacts[0].J * s.upsilon;
    CHECK((v_foot - via_J).norm() < 1e-8);
  }
}

TEST_CASE("mass matrix is symmetric and the energy identity holds") {
  std::mt19937_64 rng(3);
  const RobotModel m = build_monoped_model(2.5);
  for (int trial = 0; trial < 10; ++trial) {
    const GeneralizedState s = random_state(m, rng);
    const ModelEval ev = evaluate(m, s, 1e-4);
    CHECK((ev.M - ev.M.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ev.M);
    CHECK(es.eigenvalues().minCoeff() > 0.0);

    const double from_M = 0.5 * s.upsilon.dot(ev.M * s.upsilon);
    const double from_bodies = monoped_kinetic_energy(m, s);
    CHECK(std::abs(from_M - from_bodies) / std::max(1.0, from_bodies) < 1e-8);
  }
}

TEST_CASE("ballistic energy drift stays within 1% over one second") {
  std::mt19937_64 rng(5);
  for (const char* which : {"box", "monoped"}) {
    RobotModel m = std::string(which) == "box" ? default_box()
                                               : build_monoped_model(2.5);
    GeneralizedState s = random_state(m, rng, 0.5);
    s.q(2) += 50.0;  // far above the ground, no contact during the window
    const double e0 = total_energy(m, s);
    const double dt = 1e-3;
    for (int i = 0; i < 1000; ++i) {
      const ModelEval ev = evaluate(m, s, 1e-4);
      REQUIRE(ev.contacts.empty());
      const Eigen::VectorXd up =
          s.upsilon + ev.M_inv * ((-ev.h) * dt);
      s = integrate(s, up, dt);
    }
    const double e1 = total_energy(m, s);
    CHECK(std::abs(e1 - e0) / std::abs(e0) < 0.01);
  }
}

TEST_CASE("integrate covers the trivial cases") {
  const RobotModel m = default_box();
  GeneralizedState s = m.make_state();
  s.q(2) = 0.3;

  SUBCASE("zero velocity leaves q unchanged") {
    const GeneralizedState n = integrate(s, Eigen::VectorXd::Zero(6), 0.01);
    CHECK((n.q - s.q).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pure vertical velocity") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
    u(2) = 1.0;
    const GeneralizedState n = integrate(s, u, 0.01);
    CHECK(n.q(2) == doctest::Approx(0.31).epsilon(1e-12));
  }
  SUBCASE("yaw rotation by the exact exponential map") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
    u(5) = M_PI;
    const GeneralizedState n = integrate(s, u, 1.0);
    const Eigen::Matrix3d R = n.base_orientation().toRotationMatrix();
    const Eigen::Vector3d log = log_so3(R);
    CHECK((log - Eigen::Vector3d(0, 0, M_PI)).norm() < 1e-9);
  }
  SUBCASE("quaternion stays unit under long integration") {
    GeneralizedState cur = s;
    Eigen::VectorXd u = Eigen::VectorXd::Ones(6);
    for (int i = 0; i < 2000; ++i) cur = integrate(cur, u, 1e-3);
    CHECK(std::abs(cur.q.segment<4>(3).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("dimension contract nq = nv + 1") {
  for (const RobotModel& m : {default_box(), build_monoped_model(2.5)})
    CHECK(m.nq() == m.nv() + 1);
}
