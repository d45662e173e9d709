// Rigid-body geometry: points, SE(3) poses, tangent-space twists.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace pflo {

using Point3 = Eigen::Vector3d;

/// Rigid transform in SE(3), stored as unit quaternion + translation.
/// The quaternion is renormalized after every composition.
struct Pose {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 0.0};

  static Pose identity() { return Pose{}; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

/// se(3) tangent vector: rotational part omega (rad), translational part v (m).
/// Packed order in 6-vectors is [omega, v].
struct Twist {
  Eigen::Vector3d omega{0.0, 0.0, 0.0};
  Eigen::Vector3d v{0.0, 0.0, 0.0};

  static Twist zero() { return Twist{}; }

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> xi;
    xi << omega, v;
    return xi;
  }
  static Twist from_vector(const Eigen::Matrix<double, 6, 1>& xi) {
    return Twist{xi.head<3>(), xi.tail<3>()};
  }
  double norm() const { return vector().norm(); }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

inline Point3 transform_point(const Pose& t, const Point3& p) {
  return t.rotation * p + t.translation;
}

inline Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

inline Pose inverse(const Pose& t) {
  Pose out;
  out.rotation = t.rotation.conjugate();
  out.translation = -(out.rotation * t.translation);
  return out;
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

inline Twist scale_twist(const Twist& xi, double s) {
  return Twist{s * xi.omega, s * xi.v};
}

/// Closed-form exponential map with the standard V-matrix coupling rotation
/// and translation. Small angles use series expansions.
inline Pose se3_exp(const Twist& xi) {
  const double theta_sq = xi.omega.squaredNorm();
  const double theta = std::sqrt(theta_sq);

  double b;  // (1 - cos t) / t^2
  double c;  // (t - sin t) / t^3
  Eigen::Quaterniond q;
  if (theta < 1e-8) {
    b = 0.5 - theta_sq / 24.0;
    c = 1.0 / 6.0 - theta_sq / 120.0;
    // sin(t/2)/t ~ 1/2 - t^2/48
    const double k = 0.5 - theta_sq / 48.0;
    q = Eigen::Quaterniond(1.0 - theta_sq / 8.0, k * xi.omega.x(), k * xi.omega.y(), k * xi.omega.z());
  } else {
    b = (1.0 - std::cos(theta)) / theta_sq;
    c = (theta - std::sin(theta)) / (theta_sq * theta);
    const double k = std::sin(0.5 * theta) / theta;
    q = Eigen::Quaterniond(std::cos(0.5 * theta), k * xi.omega.x(), k * xi.omega.y(), k * xi.omega.z());
  }
  const Eigen::Matrix3d w = skew(xi.omega);
  const Eigen::Matrix3d v_mat = Eigen::Matrix3d::Identity() + b * w + c * (w * w);

  Pose out;
  out.rotation = q.normalized();
  out.translation = v_mat * xi.v;
  return out;
}

/// Principal-branch logarithm. Rejects rotations whose angle is within
/// 1e-9 of pi, where the branch is degenerate.
inline Twist se3_log(const Pose& t) {
  Eigen::Quaterniond q = t.rotation.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();

  const double vec_norm = q.vec().norm();
  const double theta = 2.0 * std::atan2(vec_norm, q.w());
  if (theta > M_PI - 1e-9) {
    throw std::domain_error("se3_log: rotation angle too close to pi");
  }

  Twist xi;
  if (vec_norm < 1e-12) {
    xi.omega = 2.0 * q.vec();
  } else {
    xi.omega = (theta / vec_norm) * q.vec();
  }

  const double theta_sq = theta * theta;
  double d;  // coefficient of W^2 in V^{-1}
  if (theta < 1e-6) {
    d = 1.0 / 12.0 + theta_sq / 720.0;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / theta_sq;
    d = (1.0 - a / (2.0 * b)) / theta_sq;
  }
  const Eigen::Matrix3d w = skew(xi.omega);
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * w + d * (w * w);
  xi.v = v_inv * t.translation;
  return xi;
}

}  // namespace pflo
