#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fricid/errors.hpp"

namespace fricid {

/// Configuration q = [base position, base quaternion (w,x,y,z), joint angles]
/// and generalized velocity upsilon = [base linear (world), base angular
/// (world), joint rates]. dim(q) = dim(upsilon) + 1.
struct GeneralizedState {
  Eigen::VectorXd q;
  Eigen::VectorXd upsilon;
  double time = 0.0;

  Eigen::Vector3d base_position() const { return q.head<3>(); }
  Eigen::Quaterniond base_orientation() const {
    return Eigen::Quaterniond(q(3), q(4), q(5), q(6));
  }
  Eigen::Vector3d base_linear_velocity() const { return upsilon.head<3>(); }
  Eigen::Vector3d base_angular_velocity() const {
    return upsilon.segment<3>(3);
  }
  Eigen::VectorXd joint_angles() const { return q.tail(q.size() - 7); }
  Eigen::VectorXd joint_rates() const {
    return upsilon.tail(upsilon.size() - 6);
  }
};

/// One revolute link in a serial chain hanging off the floating base.
/// The link frame has its origin at the joint anchor; joint_origin and
/// joint_axis are expressed in the parent frame.
struct LinkSpec {
  double mass = 0.0;
  Eigen::Matrix3d inertia_com = Eigen::Matrix3d::Zero();  // link frame, at COM
  Eigen::Vector3d joint_origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d joint_axis = Eigen::Vector3d::UnitY();
  Eigen::Vector3d com_offset = Eigen::Vector3d::Zero();  // link frame
  bool actuated = true;
};

/// Body-fixed point eligible for ground contact. body 0 is the base,
/// body i >= 1 is links[i-1].
struct ContactPointSpec {
  int body = 0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct RobotModel {
  std::string name;
  double base_mass = 0.0;
  Eigen::Matrix3d base_inertia = Eigen::Matrix3d::Zero();  // at base COM
  std::vector<LinkSpec> links;
  std::vector<ContactPointSpec> contact_points;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};

  int n_joints() const { return static_cast<int>(links.size()); }
  int nq() const { return 7 + n_joints(); }
  int nv() const { return 6 + n_joints(); }
  int na() const;
  /// Input map: generalized force = B * tau.
  Eigen::MatrixXd input_matrix() const;

  GeneralizedState make_state() const;
};

/// Per-contact kinematics at a state. Jacobian rows are ordered
/// tangential-x, tangential-y, normal (the ground frame is world-aligned,
/// normal = +z), so J maps upsilon to the world velocity of the point.
struct ContactEval {
  int point_index = 0;
  Eigen::MatrixXd J;  // 3 x nv
  double gap = 0.0;   // signed distance to the plane z = 0
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

/// All dynamics quantities the contact solver and gradients need.
/// h is in force units (Coriolis + centrifugal + gravity); the velocity
/// update multiplies it by dt.
struct ModelEval {
  Eigen::MatrixXd M;
  Eigen::MatrixXd M_inv;
  Eigen::VectorXd h;
  Eigen::MatrixXd B;
  std::vector<ContactEval> contacts;
};

struct MonopedParams {
  double thigh_mass = 0.3;
  double thigh_length = 0.25;
  double shank_mass = 0.2;
  double shank_length = 0.25;
  double base_radius = 0.1;        // base modelled as a solid sphere
  double rod_radius_ratio = 0.05;  // link radius as a fraction of its length
};

/// 6-DoF free rigid box with 4 bottom-corner contact points; unactuated.
RobotModel build_box_model(double mass, const Eigen::Vector3d& half_extents,
                           const Eigen::Matrix3d& inertia);

/// Solid-box inertia about the COM.
Eigen::Matrix3d box_inertia(double mass, const Eigen::Vector3d& half_extents);

/// Floating base with hip and knee revolute joints (both about +y, planar
/// arrangement) and a single point foot. nq = 9, nv = 8, na = 2.
RobotModel build_monoped_model(double base_mass,
                               const MonopedParams& params = {});

/// Crouched stance with the foot exactly on the ground plane: hip = crouch,
/// knee = -2*crouch, base height from forward kinematics.
GeneralizedState monoped_nominal_stance(const RobotModel& model,
                                        double crouch = 0.5);

/// Evaluates M, h, B and contact Jacobians/gaps. A contact point is active
/// when its gap is below activation_threshold, or when active_override is
/// given, exactly when its flag is set (estimator-style detection).
ModelEval evaluate(const RobotModel& model, const GeneralizedState& state,
                   double activation_threshold = 1e-4,
                   const std::vector<std::uint8_t>* active_override = nullptr);

/// Semi-implicit Euler position update: positions advance with
/// upsilon_next, the quaternion by the exponential map of omega*dt.
GeneralizedState integrate(const GeneralizedState& state,
                           const Eigen::VectorXd& upsilon_next, double dt);

/// World position of one contact point (forward kinematics only).
Eigen::Vector3d contact_point_position(const RobotModel& model,
                                       const GeneralizedState& state,
                                       int point_index);

void validate_state(const RobotModel& model, const GeneralizedState& state);

}  // namespace fricid
