// Synthetic LiDAR sequences with exact ground truth: ray-cast scenes of
// planes, poles and moving boxes, plus injected one-frame transient returns.
// Per-point source labels feed the persistence classification oracle.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pflo/geometry.hpp"
#include "pflo/odometry.hpp"
#include "pflo/types.hpp"

namespace pflo {

enum class PointLabel : std::uint8_t { static_landmark = 0, moving_object = 1, transient_noise = 2 };

struct LabeledScan {
  Scan scan;
  std::vector<PointLabel> labels;  // parallel to scan.points
};

/// Finite rectangle: center, unit normal, and in-plane half extents along
/// the (derived) u/v axes.
struct PlaneRect {
  Point3 center{0.0, 0.0, 0.0};
  Eigen::Vector3d normal{0.0, 0.0, 1.0};
  Eigen::Vector3d u_axis{1.0, 0.0, 0.0};
  Eigen::Vector3d v_axis{0.0, 1.0, 0.0};
  double half_u = 1.0;
  double half_v = 1.0;

  /// In-plane frame convention: u is horizontal (z x normal) whenever the
  /// normal is not near-vertical, so walls take half_u along their length
  /// and half_v up; for horizontal planes u falls back to the x direction.
  static PlaneRect make(const Point3& center, const Eigen::Vector3d& normal, double half_u,
                        double half_v) {
    PlaneRect r;
    r.center = center;
    r.normal = normal.normalized();
    Eigen::Vector3d u = Eigen::Vector3d::UnitZ().cross(r.normal);
    if (u.norm() < 1e-6) {
      u = Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitX().dot(r.normal) * r.normal;
    }
    r.u_axis = u.normalized();
    r.v_axis = r.normal.cross(r.u_axis);
    r.half_u = half_u;
    r.half_v = half_v;
    return r;
  }
};

/// Vertical cylinder segment.
struct Pole {
  double x = 0.0, y = 0.0;
  double radius = 0.1;
  double z0 = 0.0, z1 = 1.0;
};

/// Axis-aligned box translating linearly, present on [appear, vanish).
/// A zero velocity makes it a static landmark (pillar, cabinet, parked
/// object) and labels its returns accordingly.
struct MovingBox {
  Point3 center{0.0, 0.0, 0.0};
  Eigen::Vector3d half_extent{0.5, 0.5, 0.5};
  Eigen::Vector3d velocity{0.0, 0.0, 0.0};  // meters per frame
  int appear = 0;
  int vanish = std::numeric_limits<int>::max();

  bool is_static() const { return velocity.squaredNorm() == 0.0; }
};

struct SensorModel {
  int ring_count = 16;
  double fov_min_deg = -15.0;
  double fov_max_deg = 5.0;
  int azimuth_steps = 480;
  double min_range = 1.0;
  double max_range = 60.0;
};

struct SceneSpec {
  std::vector<PlaneRect> planes;
  std::vector<Pole> poles;
  std::vector<MovingBox> boxes;
  SensorModel sensor;
  std::vector<Pose> trajectory;  // sweep-end pose per frame
  double noise_sigma = 0.0;
  double transient_fraction = 0.0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t frame) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (frame + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::optional<double> ray_plane(const Point3& o, const Eigen::Vector3d& d,
                                       const PlaneRect& rect) {
  const double denom = d.dot(rect.normal);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (rect.center - o).dot(rect.normal) / denom;
  if (t <= 0.0) return std::nullopt;
  const Point3 hit = o + t * d;
  const Eigen::Vector3d local = hit - rect.center;
  if (std::abs(local.dot(rect.u_axis)) > rect.half_u) return std::nullopt;
  if (std::abs(local.dot(rect.v_axis)) > rect.half_v) return std::nullopt;
  return t;
}

inline std::optional<double> ray_pole(const Point3& o, const Eigen::Vector3d& d, const Pole& pole) {
  const double ox = o.x() - pole.x, oy = o.y() - pole.y;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a < 1e-12) return std::nullopt;
  const double b = 2.0 * (ox * d.x() + oy * d.y());
  const double c = ox * ox + oy * oy - pole.radius * pole.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  if (t <= 0.0) return std::nullopt;
  const double z = o.z() + t * d.z();
  if (z < pole.z0 || z > pole.z1) return std::nullopt;
  return t;
}

inline std::optional<double> ray_box(const Point3& o, const Eigen::Vector3d& d,
                                     const Point3& center, const Eigen::Vector3d& half) {
  double t_enter = 0.0, t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = center[a] - half[a], hi = center[a] + half[a];
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo || o[a] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - o[a]) / d[a], t1 = (hi - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_enter <= 0.0) return std::nullopt;
  return t_enter;
}

}  // namespace detail

/// Ray-casts one frame of the scene. Ray origins follow the constant-twist
/// sweep from the previous trajectory pose to the frame's pose, so the
/// rendered distortion matches the constant-velocity de-skew model exactly.
/// Deterministic for fixed (spec, frame, seed).
inline LabeledScan render_scan(const SceneSpec& spec, int frame, std::uint64_t seed = 0) {
  if (frame < 0 || frame >= static_cast<int>(spec.trajectory.size())) {
    throw std::out_of_range("render_scan: frame outside trajectory");
  }
  const Pose end_pose = spec.trajectory[frame];
  const Pose begin_pose = frame == 0 ? end_pose : spec.trajectory[frame - 1];
  const Twist sweep = se3_log(compose(inverse(begin_pose), end_pose));

  std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(frame)));
  std::normal_distribution<double> range_noise(0.0, spec.noise_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto& sensor = spec.sensor;
  const double fov_min = sensor.fov_min_deg * M_PI / 180.0;
  const double fov_max = sensor.fov_max_deg * M_PI / 180.0;
  const double elev_step =
      sensor.ring_count > 1 ? (fov_max - fov_min) / (sensor.ring_count - 1) : 0.0;

  LabeledScan out;
  out.scan.frame_index = frame;
  out.scan.ring_count = sensor.ring_count;
  out.scan.points.reserve(static_cast<std::size_t>(sensor.ring_count) * sensor.azimuth_steps);

  std::vector<Pose> step_pose(sensor.azimuth_steps);
  for (int step = 0; step < sensor.azimuth_steps; ++step) {
    const double rel_time = static_cast<double>(step) / sensor.azimuth_steps;
    step_pose[step] = compose(begin_pose, se3_exp(scale_twist(sweep, rel_time)));
  }

  for (int ring = 0; ring < sensor.ring_count; ++ring) {
    const double elev = fov_min + ring * elev_step;
    for (int step = 0; step < sensor.azimuth_steps; ++step) {
      const double az = 2.0 * M_PI * step / sensor.azimuth_steps;
      const double rel_time = static_cast<double>(step) / sensor.azimuth_steps;
      const Pose& at = step_pose[step];

      const Eigen::Vector3d dir_sensor(std::cos(elev) * std::cos(az),
                                       std::cos(elev) * std::sin(az), std::sin(elev));
      const Eigen::Vector3d dir_world = at.rotation * dir_sensor;
      const Point3 origin = at.translation;

      double best = std::numeric_limits<double>::infinity();
      PointLabel label = PointLabel::static_landmark;
      for (const auto& plane : spec.planes) {
        if (auto t = detail::ray_plane(origin, dir_world, plane); t && *t < best) {
          best = *t;
          label = PointLabel::static_landmark;
        }
      }
      for (const auto& pole : spec.poles) {
        if (auto t = detail::ray_pole(origin, dir_world, pole); t && *t < best) {
          best = *t;
          label = PointLabel::static_landmark;
        }
      }
      for (const auto& box : spec.boxes) {
        if (frame < box.appear || frame >= box.vanish) continue;
        const Point3 center = box.center + static_cast<double>(frame) * box.velocity;
        if (auto t = detail::ray_box(origin, dir_world, center, box.half_extent); t && *t < best) {
          best = *t;
          label = box.is_static() ? PointLabel::static_landmark : PointLabel::moving_object;
        }
      }

      const bool hit = best >= sensor.min_range && best <= sensor.max_range;
      double range = best;
      if (hit && spec.noise_sigma > 0.0) range += range_noise(rng);

      if (spec.transient_fraction > 0.0 && unit(rng) < spec.transient_fraction) {
        const double hi = hit ? range : 0.8 * sensor.max_range;
        if (hi > sensor.min_range) {
          range = sensor.min_range + unit(rng) * (hi - sensor.min_range);
          label = PointLabel::transient_noise;
          out.scan.points.push_back({range * dir_sensor, 0.5f, ring, rel_time});
          out.labels.push_back(label);
        }
        continue;
      }

      if (!hit) continue;
      out.scan.points.push_back({range * dir_sensor, 0.5f, ring, rel_time});
      out.labels.push_back(label);
    }
  }
  return out;
}

/// Tallies of map points by source label and final fate.
struct ConfusionCounts {
  std::array<std::size_t, 3> kept{};     // indexed by PointLabel
  std::array<std::size_t, 3> deleted{};

  std::size_t kept_of(PointLabel l) const { return kept[static_cast<int>(l)]; }
  std::size_t deleted_of(PointLabel l) const { return deleted[static_cast<int>(l)]; }
  std::size_t total_of(PointLabel l) const { return kept_of(l) + deleted_of(l); }
};

/// Carries point labels through the pipeline by mapping the map ids assigned
/// at insertion back to the source points of the rendered scan. Lives beside
/// the pipeline; map types stay label-free.
class ProvenanceTracker {
 public:
  void record(const FrameResult& result, const LabeledScan& labeled) {
    auto note = [&](const std::vector<FeaturePoint>& feats, const std::vector<std::int64_t>& ids) {
      for (std::size_t i = 0; i < feats.size(); ++i) {
        if (ids[i] < 0 || feats[i].source_index < 0) continue;
        label_by_id_[static_cast<std::uint64_t>(ids[i])] =
            labeled.labels[feats[i].source_index];
      }
    };
    note(result.edges, result.edge_map_ids);
    note(result.surfaces, result.surface_map_ids);
  }

  /// Kept/deleted counts per label against a final map snapshot.
  ConfusionCounts confusion(const MapSnapshot& final_map) const {
    std::unordered_set<std::uint64_t> live;
    live.reserve(final_map.records.size());
    for (const auto& r : final_map.records) live.insert(r.id);
    ConfusionCounts counts;
    for (const auto& [id, label] : label_by_id_) {
      if (live.count(id)) {
        ++counts.kept[static_cast<int>(label)];
      } else {
        ++counts.deleted[static_cast<int>(label)];
      }
    }
    return counts;
  }

  std::size_t tracked() const { return label_by_id_.size(); }

 private:
  std::unordered_map<std::uint64_t, PointLabel> label_by_id_;
};

inline ConfusionCounts persistence_oracle(const ProvenanceTracker& tracker,
                                          const MapSnapshot& final_map) {
  return tracker.confusion(final_map);
}

}  // namespace pflo
