// Constant-velocity motion prediction and intra-sweep de-skewing.
#pragma once

#include "pflo/geometry.hpp"
#include "pflo/types.hpp"

namespace pflo {

/// Pose of the previous frame plus the tangent of the last relative motion,
/// driving the constant-velocity model.
struct MotionState {
  Pose last_pose;
  Twist last_increment;
};

inline Pose predict_initial_pose(const MotionState& state) {
  return compose(state.last_pose, se3_exp(state.last_increment));
}

/// Re-expresses a point at the sweep-end timestamp. A point measured at
/// rel_time s under constant twist `increment` over the sweep satisfies
/// p_end = exp((s - 1) * increment) * p, so rel_time = 1 is left unchanged
/// and earlier points are advanced by the remaining fraction of motion.
inline Point3 deskew_position(const Point3& p, double rel_time, const Twist& increment) {
  const Pose remaining = se3_exp(scale_twist(increment, 1.0 - rel_time));
  return transform_point(inverse(remaining), p);
}

inline FeaturePoint deskew_point(const FeaturePoint& p, const Twist& increment) {
  FeaturePoint out = p;
  out.position = deskew_position(p.position, p.rel_time, increment);
  return out;
}

inline void deskew_features(std::vector<FeaturePoint>& features, const Twist& increment) {
  for (auto& f : features) f = deskew_point(f, increment);
}

}  // namespace pflo
