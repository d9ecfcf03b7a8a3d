#include "fricid/model.hpp"

#include <Eigen/Eigenvalues>

#include "fricid/so3.hpp"

namespace fricid {

namespace {

// World-frame kinematics of every body at (q, upsilon), including the
// bias accelerations (accelerations with upsilon_dot = 0) needed for h.
struct BodyKin {
  Eigen::Matrix3d R;
  Eigen::Vector3d ref;    // base origin for body 0, joint anchor otherwise
  Eigen::Vector3d v_ref;  // velocity of the reference point
  Eigen::Vector3d a_ref;  // bias acceleration of the reference point
  Eigen::Vector3d omega;
  Eigen::Vector3d alpha;  // bias angular acceleration
  Eigen::Vector3d com;
  Eigen::Vector3d v_com;
  Eigen::Vector3d a_com;
  Eigen::Vector3d axis;  // world joint axis (links only)
  Eigen::Vector3d anchor;
  Eigen::Matrix3d I_world;
  double mass = 0.0;
};

std::vector<BodyKin> forward_kinematics(const RobotModel& model,
                                        const GeneralizedState& state) {
  const int nj = model.n_joints();
  std::vector<BodyKin> bodies(1 + nj);

  const Eigen::Vector3d p = state.base_position();
  const Eigen::Matrix3d R0 = state.base_orientation().toRotationMatrix();
  const Eigen::Vector3d v = state.base_linear_velocity();
  const Eigen::Vector3d w = state.base_angular_velocity();

  BodyKin& base = bodies[0];
  base.R = R0;
  base.ref = p;
  base.v_ref = v;
  base.a_ref = Eigen::Vector3d::Zero();
  base.omega = w;
  base.alpha = Eigen::Vector3d::Zero();
  base.com = p;  // base COM at the base origin
  base.v_com = v;
  base.a_com = Eigen::Vector3d::Zero();
  base.mass = model.base_mass;
  base.I_world = R0 * model.base_inertia * R0.transpose();

  for (int i = 0; i < nj; ++i) {
    const LinkSpec& link = model.links[i];
    const BodyKin& parent = bodies[i];
    BodyKin& b = bodies[i + 1];

    const double th = state.q(7 + i);
    const double thd = state.upsilon(6 + i);

    b.axis = parent.R * link.joint_axis;
    b.anchor = parent.ref + parent.R * link.joint_origin;

    const Eigen::Vector3d r = b.anchor - parent.ref;
    b.ref = b.anchor;
    b.v_ref = parent.v_ref + parent.omega.cross(r);
    b.a_ref = parent.a_ref + parent.alpha.cross(r) +
              parent.omega.cross(parent.omega.cross(r));

    b.omega = parent.omega + b.axis * thd;
    b.alpha = parent.alpha + parent.omega.cross(b.axis) * thd;

    b.R = parent.R *
          Eigen::AngleAxisd(th, link.joint_axis.normalized()).toRotationMatrix();

    const Eigen::Vector3d rc = b.R * link.com_offset;
    b.com = b.ref + rc;
    b.v_com = b.v_ref + b.omega.cross(rc);
    b.a_com = b.a_ref + b.alpha.cross(rc) + b.omega.cross(b.omega.cross(rc));

    b.mass = link.mass;
    b.I_world = b.R * link.inertia_com * b.R.transpose();
  }
  return bodies;
}

// Jacobian of the world velocity of point x attached to `body`.
Eigen::MatrixXd point_jacobian(const RobotModel& model,
                               const std::vector<BodyKin>& bodies, int body,
                               const Eigen::Vector3d& x) {
  const int nv = model.nv();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, nv);
  J.block<3, 3>(0, 0).setIdentity();
  J.block<3, 3>(0, 3) = -skew(x - bodies[0].ref);
  for (int j = 1; j <= body; ++j)
    J.col(6 + (j - 1)) = bodies[j].axis.cross(x - bodies[j].anchor);
  return J;
}

Eigen::MatrixXd body_angular_jacobian(const RobotModel& model,
                                      const std::vector<BodyKin>& bodies,
                                      int body) {
  const int nv = model.nv();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, nv);
  J.block<3, 3>(0, 3).setIdentity();
  for (int j = 1; j <= body; ++j) J.col(6 + (j - 1)) = bodies[j].axis;
  return J;
}

void require_spd(const Eigen::Matrix3d& I, const std::string& what) {
  if ((I - I.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw InvalidModelError(what + " inertia not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(I);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw InvalidModelError(what + " inertia not positive definite");
}

}  // namespace

int RobotModel::na() const {
  int n = 0;
  for (const LinkSpec& l : links)
    if (l.actuated) ++n;
  return n;
}

Eigen::MatrixXd RobotModel::input_matrix() const {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nv(), na());
  int col = 0;
  for (int j = 0; j < n_joints(); ++j)
    if (links[j].actuated) B(6 + j, col++) = 1.0;
  return B;
}

GeneralizedState RobotModel::make_state() const {
  GeneralizedState s;
  s.q = Eigen::VectorXd::Zero(nq());
  s.q(3) = 1.0;  // identity quaternion
  s.upsilon = Eigen::VectorXd::Zero(nv());
  return s;
}

Eigen::Matrix3d box_inertia(double mass, const Eigen::Vector3d& he) {
  const double x = he.x(), y = he.y(), z = he.z();
  return (mass / 3.0) *
         Eigen::Vector3d(y * y + z * z, x * x + z * z, x * x + y * y)
             .asDiagonal();
}

RobotModel build_box_model(double mass, const Eigen::Vector3d& half_extents,
                           const Eigen::Matrix3d& inertia) {
  if (!(mass > 0.0)) throw InvalidModelError("box mass must be positive");
  if (!(half_extents.minCoeff() > 0.0))
    throw InvalidModelError("box half extents must be positive");
  require_spd(inertia, "box");

  RobotModel m;
  m.name = "box";
  m.base_mass = mass;
  m.base_inertia = inertia;
  const double hx = half_extents.x(), hy = half_extents.y(),
               hz = half_extents.z();
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      m.contact_points.push_back({0, {sx * hx, sy * hy, -hz}});
  return m;
}

RobotModel build_monoped_model(double base_mass, const MonopedParams& p) {
  if (!(base_mass > 0.0 && p.thigh_mass > 0.0 && p.shank_mass > 0.0))
    throw InvalidModelError("monoped masses must be positive");
  if (!(p.thigh_length > 0.0 && p.shank_length > 0.0))
    throw InvalidModelError("monoped link lengths must be positive");

  RobotModel m;
  m.name = "monoped";
  m.base_mass = base_mass;
  m.base_inertia = 0.4 * base_mass * p.base_radius * p.base_radius *
                   Eigen::Matrix3d::Identity();

  auto rod = [&](double mass, double len) {
    const double r = p.rod_radius_ratio * len;
    const double it = mass * (len * len / 12.0 + r * r / 4.0);
    const double ia = 0.5 * mass * r * r;
    return Eigen::Vector3d(it, it, ia).asDiagonal().toDenseMatrix();
  };

  LinkSpec thigh;
  thigh.mass = p.thigh_mass;
  thigh.inertia_com = rod(p.thigh_mass, p.thigh_length);
  thigh.joint_origin = Eigen::Vector3d::Zero();  // hip at the base origin
  thigh.joint_axis = Eigen::Vector3d::UnitY();
  thigh.com_offset = Eigen::Vector3d(0, 0, -0.5 * p.thigh_length);
  m.links.push_back(thigh);

  LinkSpec shank;
  shank.mass = p.shank_mass;
  shank.inertia_com = rod(p.shank_mass, p.shank_length);
  shank.joint_origin = Eigen::Vector3d(0, 0, -p.thigh_length);
  shank.joint_axis = Eigen::Vector3d::UnitY();
  shank.com_offset = Eigen::Vector3d(0, 0, -0.5 * p.shank_length);
  m.links.push_back(shank);

  m.contact_points.push_back({2, {0, 0, -p.shank_length}});
  return m;
}

GeneralizedState monoped_nominal_stance(const RobotModel& model,
                                        double crouch) {
  if (model.n_joints() != 2 || model.contact_points.size() != 1)
    throw InvalidModelError("nominal stance requires the built-in monoped");
  const double l1 = -model.links[1].joint_origin.z();
  const double l2 = -model.contact_points[0].offset.z();

  GeneralizedState s = model.make_state();
  s.q(7) = crouch;
  s.q(8) = -2.0 * crouch;
  // Foot offset below the base from planar FK; theta2 = -2*theta1 keeps the
  // foot on the hip's vertical for equal link lengths.
  const double drop = l1 * std::cos(crouch) + l2 * std::cos(crouch);
  const double x_off = -l1 * std::sin(crouch) + l2 * std::sin(crouch);
  s.q(0) = -x_off;
  s.q(2) = drop;
  return s;
}

void validate_state(const RobotModel& model, const GeneralizedState& state) {
  if (state.q.size() != model.nq() || state.upsilon.size() != model.nv())
    throw Error("state dimensions do not match the model");
  const double n = state.q.segment<4>(3).norm();
  if (std::abs(n - 1.0) > 1e-9)
    throw Error("base quaternion is not unit norm");
}

Eigen::Vector3d contact_point_position(const RobotModel& model,
                                       const GeneralizedState& state,
                                       int point_index) {
  const auto bodies = forward_kinematics(model, state);
  const ContactPointSpec& cp = model.contact_points.at(point_index);
  return bodies[cp.body].ref + bodies[cp.body].R * cp.offset;
}

ModelEval evaluate(const RobotModel& model, const GeneralizedState& state,
                   double activation_threshold,
                   const std::vector<std::uint8_t>* active_override) {
  validate_state(model, state);
  const int nv = model.nv();
  const auto bodies = forward_kinematics(model, state);

  ModelEval ev;
  ev.M = Eigen::MatrixXd::Zero(nv, nv);
  ev.h = Eigen::VectorXd::Zero(nv);
  ev.B = model.input_matrix();

  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const BodyKin& b = bodies[i];
    const Eigen::MatrixXd Jv = point_jacobian(model, bodies, int(i), b.com);
    const Eigen::MatrixXd Jw = body_angular_jacobian(model, bodies, int(i));
    ev.M.noalias() += b.mass * Jv.transpose() * Jv;
    ev.M.noalias() += Jw.transpose() * b.I_world * Jw;
    ev.h.noalias() +=
        Jv.transpose() * (b.mass * (b.a_com - model.gravity)) +
        Jw.transpose() * (b.I_world * b.alpha + b.omega.cross(b.I_world * b.omega));
  }
  ev.M = 0.5 * (ev.M + ev.M.transpose());  // kill rounding asymmetry
  ev.M_inv = ev.M.llt().solve(Eigen::MatrixXd::Identity(nv, nv));

  const int np = static_cast<int>(model.contact_points.size());
  if (active_override && static_cast<int>(active_override->size()) != np)
    throw Error("contact flag override has wrong size");
  for (int k = 0; k < np; ++k) {
    const ContactPointSpec& cp = model.contact_points[k];
    const Eigen::Vector3d x =
        bodies[cp.body].ref + bodies[cp.body].R * cp.offset;
    const bool active = active_override ? ((*active_override)[k] != 0)
                                        : (x.z() < activation_threshold);
    if (!active) continue;
    ContactEval ce;
    ce.point_index = k;
    ce.position = x;
    ce.gap = x.z();
    ce.J = point_jacobian(model, bodies, cp.body, x);
    ev.contacts.push_back(std::move(ce));
  }
  return ev;
}

GeneralizedState integrate(const GeneralizedState& state,
                           const Eigen::VectorXd& upsilon_next, double dt) {
  if (!(dt > 0.0)) throw Error("integrate requires dt > 0");
  if (upsilon_next.size() != state.upsilon.size())
    throw Error("integrate velocity dimension mismatch");

  GeneralizedState next = state;
  next.upsilon = upsilon_next;
  next.q.head<3>() += upsilon_next.head<3>() * dt;

  const Eigen::Quaterniond q0 = state.base_orientation();
  Eigen::Quaterniond q1 = quat_exp(upsilon_next.segment<3>(3) * dt) * q0;
  q1.normalize();
  next.q(3) = q1.w();
  next.q(4) = q1.x();
  next.q(5) = q1.y();
  next.q(6) = q1.z();

  const int nj = static_cast<int>(state.q.size()) - 7;
  next.q.tail(nj) += upsilon_next.tail(nj) * dt;
  next.time = state.time + dt;
  return next;
}

}  // namespace fricid
