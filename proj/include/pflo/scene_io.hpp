// SceneSpec serialization: plain-text JSON scene files for the synthetic
// renderer, including a compact wall shorthand and trajectory generators.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "pflo/io.hpp"
#include "pflo/synth.hpp"

namespace pflo {

namespace detail {

inline Point3 vec3_of(const nlohmann::json& j) {
  return Point3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace detail

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec spec;

  if (j.contains("sensor")) {
    const auto& s = j["sensor"];
    spec.sensor.ring_count = s.value("rings", spec.sensor.ring_count);
    spec.sensor.fov_min_deg = s.value("fov_min_deg", spec.sensor.fov_min_deg);
    spec.sensor.fov_max_deg = s.value("fov_max_deg", spec.sensor.fov_max_deg);
    spec.sensor.azimuth_steps = s.value("azimuth_steps", spec.sensor.azimuth_steps);
    spec.sensor.min_range = s.value("min_range", spec.sensor.min_range);
    spec.sensor.max_range = s.value("max_range", spec.sensor.max_range);
  }
  spec.noise_sigma = j.value("noise_sigma", 0.0);
  spec.transient_fraction = j.value("transient_fraction", 0.0);

  for (const auto& p : j.value("planes", nlohmann::json::array())) {
    spec.planes.push_back(PlaneRect::make(detail::vec3_of(p.at("center")),
                                          detail::vec3_of(p.at("normal")),
                                          p.at("half_u").get<double>(),
                                          p.at("half_v").get<double>()));
  }
  for (const auto& w : j.value("walls", nlohmann::json::array())) {
    // vertical rectangle from a 2D segment and a height
    const double x0 = w.at("from").at(0).get<double>(), y0 = w.at("from").at(1).get<double>();
    const double x1 = w.at("to").at(0).get<double>(), y1 = w.at("to").at(1).get<double>();
    const double z0 = w.value("z0", 0.0);
    const double h = w.at("height").get<double>();
    const Eigen::Vector3d along(x1 - x0, y1 - y0, 0.0);
    const Eigen::Vector3d normal(-along.y(), along.x(), 0.0);
    spec.planes.push_back(PlaneRect::make(
        Point3(0.5 * (x0 + x1), 0.5 * (y0 + y1), z0 + 0.5 * h), normal.normalized(),
        0.5 * along.norm(), 0.5 * h));
  }
  for (const auto& p : j.value("poles", nlohmann::json::array())) {
    Pole pole;
    pole.x = p.at("x").get<double>();
    pole.y = p.at("y").get<double>();
    pole.radius = p.value("radius", 0.1);
    pole.z0 = p.value("z0", 0.0);
    pole.z1 = pole.z0 + p.at("height").get<double>();
    spec.poles.push_back(pole);
  }
  for (const auto& b : j.value("boxes", nlohmann::json::array())) {
    MovingBox box;
    box.center = detail::vec3_of(b.at("center"));
    box.half_extent = detail::vec3_of(b.at("half"));
    if (b.contains("velocity")) box.velocity = detail::vec3_of(b.at("velocity"));
    box.appear = b.value("appear", 0);
    if (b.contains("vanish")) box.vanish = b["vanish"].get<int>();
    spec.boxes.push_back(box);
  }

  const auto& traj = j.at("trajectory");
  if (traj.contains("poses")) {
    for (const auto& row : traj["poses"]) {
      std::array<double, 12> v{};
      for (int i = 0; i < 12; ++i) v[i] = row.at(i).get<double>();
      spec.trajectory.push_back(detail::pose_from_kitti_row(v));
    }
  } else {
    // generator: start position plus a constant per-frame twist
    const int frames = traj.at("frames").get<int>();
    Pose pose;
    if (traj.contains("start")) pose.translation = detail::vec3_of(traj["start"]);
    Twist step;
    if (traj.contains("step")) step.v = detail::vec3_of(traj["step"]);
    if (traj.contains("yaw_rate_deg")) {
      step.omega.z() = traj["yaw_rate_deg"].get<double>() * M_PI / 180.0;
    }
    for (int k = 0; k < frames; ++k) {
      spec.trajectory.push_back(pose);
      pose = compose(pose, se3_exp(step));
    }
  }
  return spec;
}

inline SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file: " + path);
  nlohmann::json j;
  try {
    in >> j;
    return scene_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid scene file " + path + ": " + e.what());
  }
}

}  // namespace pflo
