// Scan-to-map registration: correspondence models fitted from 5-point map
// neighborhoods, point-to-line / point-to-plane residuals with analytic
// Jacobians, and a damped Gauss-Newton solve over an SE(3) twist.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pflo/geometry.hpp"
#include "pflo/map.hpp"
#include "pflo/types.hpp"

namespace pflo {

struct LineModel {
  Point3 center{0.0, 0.0, 0.0};
  Eigen::Vector3d direction{0.0, 0.0, 1.0};  // unit
};

struct PlaneModel {
  Point3 center{0.0, 0.0, 0.0};
  Eigen::Vector3d normal{0.0, 0.0, 1.0};  // unit
};

struct Correspondence {
  FeaturePoint feature;  // de-skewed, sensor frame
  std::vector<std::uint64_t> neighbor_ids;
  std::variant<LineModel, PlaneModel> model;
  bool valid = false;
};

struct SolverConfig {
  int max_iterations = 10;
  double parameter_tolerance = 1e-6;  // on the twist-update norm
  double damping = 0.0;               // initial Levenberg lambda; 0 = pure Gauss-Newton
  double max_correspondence_distance = 1.0;
  double edge_eigen_ratio = 3.0;      // accept lines with lambda1 >= ratio * lambda2
  double plane_inlier_distance = 0.2; // every neighbor within this of the fitted plane
  double plane_flatness_ratio = 30.0; // accept planes with lambda2 >= ratio * lambda3
  double huber_delta = 0.5;
  int min_correspondences = 10;
};

struct DegenerateRegistration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// flip v so that (z, x, y) is lexicographically non-negative
inline Eigen::Vector3d canonical_sign(const Eigen::Vector3d& v) {
  if (v.z() < 0.0) return -v;
  if (v.z() == 0.0) {
    if (v.x() < 0.0) return -v;
    if (v.x() == 0.0 && v.y() < 0.0) return -v;
  }
  return v;
}

struct NeighborhoodFit {
  Point3 center;
  Eigen::Vector3d eigenvalues;  // ascending, as returned by the solver
  Eigen::Matrix3d eigenvectors;
};

inline NeighborhoodFit fit_covariance(std::span<const Point3> pts) {
  Point3 center = Point3::Zero();
  for (const auto& p : pts) center += p;
  center /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - center;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  return {center, solver.eigenvalues(), solver.eigenvectors()};
}

}  // namespace detail

/// Principal-direction line through 5 neighbors; rejected unless the scatter
/// is dominantly 1-D (lambda1 >= ratio * lambda2) or degenerate.
inline std::optional<LineModel> fit_line(std::span<const Point3> neighbors,
                                         double eigen_ratio = 3.0) {
  const auto fit = detail::fit_covariance(neighbors);
  const double l1 = fit.eigenvalues[2], l2 = fit.eigenvalues[1];
  if (l1 <= 0.0) return std::nullopt;
  if (l1 < eigen_ratio * l2) return std::nullopt;
  LineModel model;
  model.center = fit.center;
  model.direction = detail::canonical_sign(fit.eigenvectors.col(2).normalized());
  return model;
}

/// Least-squares plane through 5 neighbors; rejected when rank-deficient,
/// when the scatter is not dominantly flat (mixed-surface neighborhoods at
/// corners produce tilted fits), or when any neighbor lies farther than
/// `inlier_distance` from the plane.
inline std::optional<PlaneModel> fit_plane(std::span<const Point3> neighbors,
                                           double inlier_distance = 0.2,
                                           double flatness_ratio = 0.0) {
  const auto fit = detail::fit_covariance(neighbors);
  const double l1 = fit.eigenvalues[2], l2 = fit.eigenvalues[1], l3 = fit.eigenvalues[0];
  if (l1 <= 0.0 || l2 <= 1e-9 * l1) return std::nullopt;  // collinear or degenerate
  if (flatness_ratio > 0.0 && l2 < flatness_ratio * l3) return std::nullopt;
  PlaneModel model;
  model.center = fit.center;
  model.normal = detail::canonical_sign(fit.eigenvectors.col(0).normalized());
  for (const auto& p : neighbors) {
    if (std::abs((p - model.center).dot(model.normal)) > inlier_distance) return std::nullopt;
  }
  return model;
}

/// d_e = ||(T p - center) x direction||, the Euclidean point-to-line distance.
inline double edge_residual(const Point3& p, const LineModel& model, const Pose& t) {
  return (transform_point(t, p) - model.center).cross(model.direction).norm();
}

/// d_s = (T p - center) . normal, signed point-to-plane distance.
inline double surf_residual(const Point3& p, const PlaneModel& model, const Pose& t) {
  return (transform_point(t, p) - model.center).dot(model.normal);
}

// Jacobian rows use the left perturbation T <- exp(delta) * T with twist
// order [omega, v]; the transformed point q then varies as
// dq = -[q]x domega + dv.

inline Eigen::Matrix<double, 1, 6> edge_jacobian(const Point3& p, const LineModel& model,
                                                 const Pose& t) {
  const Point3 q = transform_point(t, p);
  const Eigen::Vector3d e = (q - model.center).cross(model.direction);
  const double norm = e.norm();
  Eigen::Matrix<double, 1, 6> row = Eigen::Matrix<double, 1, 6>::Zero();
  if (norm < 1e-12) return row;  // residual gradient undefined exactly on the line
  const Eigen::RowVector3d de_dq = (e / norm).transpose() * (-skew(model.direction));
  row.head<3>() = de_dq * (-skew(q));
  row.tail<3>() = de_dq;
  return row;
}

inline Eigen::Matrix<double, 1, 6> surf_jacobian(const Point3& p, const PlaneModel& model,
                                                 const Pose& t) {
  const Point3 q = transform_point(t, p);
  Eigen::Matrix<double, 1, 6> row;
  row.head<3>() = model.normal.transpose() * (-skew(q));
  row.tail<3>() = model.normal.transpose();
  return row;
}

inline double residual_of(const Correspondence& c, const Pose& t) {
  if (std::holds_alternative<LineModel>(c.model)) {
    return edge_residual(c.feature.position, std::get<LineModel>(c.model), t);
  }
  return surf_residual(c.feature.position, std::get<PlaneModel>(c.model), t);
}

inline Eigen::Matrix<double, 1, 6> jacobian_of(const Correspondence& c, const Pose& t) {
  if (std::holds_alternative<LineModel>(c.model)) {
    return edge_jacobian(c.feature.position, std::get<LineModel>(c.model), t);
  }
  return surf_jacobian(c.feature.position, std::get<PlaneModel>(c.model), t);
}

/// Builds rough-filtered correspondences between de-skewed features and the
/// map of the matching kind, at pose `t`. Output is aligned with the input
/// features; entries that fail the distance gates or model fit stay invalid.
/// The rough filter requires the whole 5-point neighborhood within the
/// correspondence distance, not just the nearest point.
inline std::vector<Correspondence> match_features(std::span<const FeaturePoint> features,
                                                  const LocalFeatureMap& map, FeatureKind kind,
                                                  const Pose& t, const SolverConfig& cfg) {
  std::vector<Correspondence> out(features.size());
  std::vector<Point3> neighbors;
  for (std::size_t i = 0; i < features.size(); ++i) {
    out[i].feature = features[i];
    const Point3 world = transform_point(t, features[i].position);
    auto ids = map.find_correspondence(world, kind, 5, cfg.max_correspondence_distance);
    if (ids.size() < 5) continue;
    neighbors.clear();
    for (std::uint64_t id : ids) neighbors.push_back(map.find(id)->position);
    if ((neighbors.back() - world).norm() > cfg.max_correspondence_distance) continue;
    if (kind == FeatureKind::edge) {
      auto line = fit_line(neighbors, cfg.edge_eigen_ratio);
      if (!line) continue;
      out[i].model = *line;
    } else {
      auto plane = fit_plane(neighbors, cfg.plane_inlier_distance, cfg.plane_flatness_ratio);
      if (!plane) continue;
      out[i].model = *plane;
    }
    out[i].neighbor_ids = std::move(ids);
    out[i].valid = true;
  }
  return out;
}

struct SolveResult {
  Pose pose;
  int iterations = 0;
  double final_cost = 0.0;
};

namespace detail {

inline double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? r * r : delta * (2.0 * a - delta);
}

inline double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

inline double total_cost(std::span<const Correspondence> corrs, const Pose& t, double delta) {
  double cost = 0.0;
  for (const auto& c : corrs) {
    if (c.valid) cost += huber_cost(residual_of(c, t), delta);
  }
  return cost;
}

}  // namespace detail

/// Minimizes the Huber-robustified sum of squared residuals over the pose,
/// by Gauss-Newton with Levenberg damping engaged on non-decreasing steps.
/// Requires at least cfg.min_correspondences valid correspondences.
inline SolveResult solve_pose(std::span<const Correspondence> correspondences, const Pose& initial,
                              const SolverConfig& cfg) {
  int valid = 0;
  for (const auto& c : correspondences) valid += c.valid ? 1 : 0;
  if (valid < cfg.min_correspondences) {
    throw DegenerateRegistration("solve_pose: insufficient valid correspondences");
  }

  SolveResult result;
  result.pose = initial;
  double cost = detail::total_cost(correspondences, result.pose, cfg.huber_delta);
  double lambda = cfg.damping;
  int failures = 0;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    ++result.iterations;
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : correspondences) {
      if (!c.valid) continue;
      const double r = residual_of(c, result.pose);
      const auto j = jacobian_of(c, result.pose);
      const double w = detail::huber_weight(r, cfg.huber_delta);
      h += w * j.transpose() * j;
      g += w * j.transpose() * r;
    }

    Eigen::Matrix<double, 6, 6> damped = h;
    damped.diagonal().array() += lambda;
    const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
    if (!delta.allFinite()) {
      lambda = std::max(1e-4, lambda * 10.0);
      if (++failures >= 3) {
        throw DegenerateRegistration("solve_pose: singular normal equations");
      }
      continue;
    }

    const Pose candidate = compose(se3_exp(Twist::from_vector(delta)), result.pose);
    const double new_cost = detail::total_cost(correspondences, candidate, cfg.huber_delta);
    if (new_cost <= cost + 1e-15) {
      result.pose = candidate;
      cost = new_cost;
      failures = 0;
      if (delta.norm() < cfg.parameter_tolerance) break;
    } else {
      lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
      ++failures;
      if (failures >= 3) break;  // stuck at a robust local plateau
    }
  }
  result.final_cost = cost;
  return result;
}

}  // namespace pflo
