#pragma once

#include <Eigen/Dense>
#include <cmath>

// Rotation helpers on SO(3). Rotation vectors are world-frame (left)
// increments unless noted; quaternions use Hamilton convention (w, x, y, z).

namespace fricid {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

/// Rodrigues formula, exact for all angles.
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& w) {
  const double th = w.norm();
  const Eigen::Matrix3d s = skew(w);
  if (th < 1e-8) {
    // sin(th)/th ~ 1 - th^2/6, (1-cos th)/th^2 ~ 1/2 - th^2/24
    return Eigen::Matrix3d::Identity() + (1.0 - th * th / 6.0) * s +
           (0.5 - th * th / 24.0) * s * s;
  }
  return Eigen::Matrix3d::Identity() + std::sin(th) / th * s +
         (1.0 - std::cos(th)) / (th * th) * s * s;
}

/// Inverse of exp_so3; returns the rotation vector with angle in [0, pi].
inline Eigen::Vector3d log_so3(const Eigen::Matrix3d& R) {
  const double tr = R.trace();
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const double th = std::acos(c);
  Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (th < 1e-8) return 0.5 * axis;  // axis already carries 2*sin(th)*u
  if (th > M_PI - 1e-6) {
    // Near pi the off-diagonal difference loses the axis; use the diagonal.
    Eigen::Vector3d u;
    int i = 0;
    R.diagonal().maxCoeff(&i);
    u = R.col(i) + Eigen::Vector3d::Unit(i);
    u.normalize();
    // Fix sign so that exp(th*u) ~ R.
    Eigen::Vector3d v = th * u;
    if ((exp_so3(v) - R).norm() > (exp_so3(-v) - R).norm()) v = -v;
    return v;
  }
  return th / (2.0 * std::sin(th)) * axis;
}

/// Left Jacobian of SO(3): Exp(w + dw) ~ Exp(Jl(w) dw) Exp(w).
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w) {
  const double th = w.norm();
  const Eigen::Matrix3d s = skew(w);
  if (th < 1e-8)
    return Eigen::Matrix3d::Identity() + 0.5 * s + s * s / 6.0;
  const double th2 = th * th;
  return Eigen::Matrix3d::Identity() + (1.0 - std::cos(th)) / th2 * s +
         (th - std::sin(th)) / (th2 * th) * s * s;
}

inline Eigen::Matrix3d so3_left_jacobian_inv(const Eigen::Vector3d& w) {
  const double th = w.norm();
  const Eigen::Matrix3d s = skew(w);
  if (th < 1e-8)
    return Eigen::Matrix3d::Identity() - 0.5 * s + s * s / 12.0;
  const double half = 0.5 * th;
  const double cot = 1.0 / std::tan(half);
  return Eigen::Matrix3d::Identity() - 0.5 * s +
         (1.0 - half * cot) / (th * th) * s * s;
}

/// Right Jacobian: Exp(w + dw) ~ Exp(w) Exp(Jr(w) dw); Jr(w) = Jl(-w).
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& w) {
  return so3_left_jacobian(-w);
}

/// Unit quaternion of the rotation vector w (world-frame increment).
inline Eigen::Quaterniond quat_exp(const Eigen::Vector3d& w) {
  const double th = w.norm();
  if (th < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * th;
  const Eigen::Vector3d axis = w / th;
  const double s = std::sin(half);
  return Eigen::Quaterniond(std::cos(half), s * axis.x(), s * axis.y(),
                            s * axis.z());
}

}  // namespace fricid
