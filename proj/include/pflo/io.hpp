// KITTI-format ingestion (velodyne .bin scans, pose files, calibration),
// trajectory output, relative translational error evaluation, and map
// export as persistence-colored PLY.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pflo/map.hpp"
#include "pflo/odometry.hpp"
#include "pflo/types.hpp"

namespace pflo {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// HDL-64E elevation span used to infer ring indices by uniform binning.
struct RingModel {
  int ring_count = 64;
  double elev_min_deg = -24.8;
  double elev_max_deg = 2.0;
};

/// Reads packed little-endian float32 (x, y, z, intensity) quadruples.
/// Rings are inferred by elevation binning, rel_time by azimuth relative to
/// the first point; output points are regrouped by ring, ascending azimuth.
inline Scan load_kitti_scan(const std::string& path, int frame_index = 0,
                            const RingModel& rings = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scan file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    throw ParseError("malformed scan " + path + ": size " + std::to_string(bytes.size()) +
                     " not divisible by 16 (offset " + std::to_string(bytes.size() / 16 * 16) + ")");
  }
  const std::size_t n = bytes.size() / 16;
  const float* data = reinterpret_cast<const float*>(bytes.data());

  const double elev_min = rings.elev_min_deg * M_PI / 180.0;
  const double elev_max = rings.elev_max_deg * M_PI / 180.0;
  const double span = elev_max - elev_min;

  Scan scan;
  scan.frame_index = frame_index;
  scan.ring_count = rings.ring_count;
  scan.points.reserve(n);

  double start_azimuth = 0.0;
  bool have_start = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = data[4 * i], y = data[4 * i + 1], z = data[4 * i + 2];
    const double planar = std::sqrt(x * x + y * y);
    if (planar < 1e-9 && std::abs(z) < 1e-9) continue;
    const double azimuth = std::atan2(y, x);
    if (!have_start) {
      start_azimuth = azimuth;
      have_start = true;
    }
    const double elev = std::atan2(z, planar);
    int ring = span > 0.0 ? static_cast<int>((elev - elev_min) / span * rings.ring_count) : 0;
    ring = std::clamp(ring, 0, rings.ring_count - 1);
    double rel = std::fmod(azimuth - start_azimuth, 2.0 * M_PI);
    if (rel < 0.0) rel += 2.0 * M_PI;
    RawPoint p;
    p.position = Point3(x, y, z);
    p.intensity = data[4 * i + 3];
    p.ring = ring;
    p.rel_time = rel / (2.0 * M_PI);
    scan.points.push_back(p);
  }

  std::stable_sort(scan.points.begin(), scan.points.end(), [](const RawPoint& a, const RawPoint& b) {
    if (a.ring != b.ring) return a.ring < b.ring;
    return a.rel_time < b.rel_time;
  });
  return scan;
}

inline void write_kitti_scan(const Scan& scan, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open scan file for writing: " + path);
  for (const auto& p : scan.points) {
    const float quad[4] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                           static_cast<float>(p.position.z()), p.intensity};
    out.write(reinterpret_cast<const char*>(quad), sizeof(quad));
  }
}

namespace detail {

inline Pose pose_from_kitti_row(const std::array<double, 12>& v) {
  Eigen::Matrix3d r;
  r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  Pose p;
  p.rotation = Eigen::Quaterniond(r).normalized();
  p.translation = Eigen::Vector3d(v[3], v[7], v[11]);
  return p;
}

}  // namespace detail

/// Reads the `Tr:` camera-to-LiDAR extrinsic row of a KITTI calib.txt.
inline Pose load_kitti_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calib file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("Tr:", 0) != 0) continue;
    std::istringstream ss(line.substr(3));
    std::array<double, 12> v{};
    for (double& x : v) {
      if (!(ss >> x)) {
        throw ParseError("malformed Tr row in " + path + " at line " + std::to_string(line_no));
      }
    }
    return detail::pose_from_kitti_row(v);
  }
  throw ParseError("no Tr row found in " + path);
}

/// One 12-float row-major 3x4 pose per line. With a calibration `tr` the
/// camera-frame poses are re-expressed in the LiDAR frame as
/// Tr^-1 * P * Tr.
inline std::vector<Pose> load_kitti_poses(const std::string& path,
                                          const std::optional<Pose>& tr = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path);
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::array<double, 12> v{};
    for (double& x : v) {
      if (!(ss >> x)) {
        throw ParseError("malformed pose in " + path + " at line " + std::to_string(line_no));
      }
    }
    Pose p = detail::pose_from_kitti_row(v);
    if (tr) p = compose(compose(inverse(*tr), p), *tr);
    poses.push_back(p);
  }
  return poses;
}

inline void write_trajectory_kitti(const Trajectory& traj, const std::string& path,
                                   const std::optional<Pose>& tr = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trajectory file for writing: " + path);
  for (const auto& [frame, pose] : traj.poses) {
    Pose p = pose;
    if (tr) p = compose(compose(*tr, p), inverse(*tr));
    const Eigen::Matrix3d r = p.rotation.toRotationMatrix();
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  r(0, 0), r(0, 1), r(0, 2), p.translation.x(), r(1, 0), r(1, 1), r(1, 2),
                  p.translation.y(), r(2, 0), r(2, 1), r(2, 2), p.translation.z());
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Relative translational error, KITTI style

struct EvalReport {
  static constexpr std::array<double, 8> lengths{100.0, 200.0, 300.0, 400.0,
                                                 500.0, 600.0, 700.0, 800.0};
  std::array<std::optional<double>, 8> per_length_percent{};
  double overall_percent = 0.0;
  std::size_t sample_count = 0;
  std::size_t frame_count = 0;
  bool sufficient_length = false;
};

/// Average relative translational error over subsequences of ground-truth
/// path length 100..800 m, sampled every `stride` frames, in percent.
/// Trajectories shorter than 100 m yield an insufficient-length report.
inline EvalReport kitti_ate(const std::vector<Pose>& estimate, const std::vector<Pose>& truth,
                            int stride = 10) {
  if (estimate.size() != truth.size()) {
    throw std::invalid_argument("kitti_ate: trajectory lengths differ");
  }
  if (estimate.size() < 2) {
    throw std::invalid_argument("kitti_ate: need at least 2 poses");
  }
  const std::size_t n = truth.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    dist[i] = dist[i - 1] + (truth[i].translation - truth[i - 1].translation).norm();
  }

  EvalReport report;
  report.frame_count = n;
  std::array<double, 8> sums{};
  std::array<std::size_t, 8> counts{};
  double total = 0.0;
  std::size_t total_count = 0;

  for (std::size_t first = 0; first < n; first += stride) {
    for (std::size_t li = 0; li < EvalReport::lengths.size(); ++li) {
      const double len = EvalReport::lengths[li];
      // first frame at which the ground-truth path exceeds `len`
      std::size_t last = first;
      while (last < n && dist[last] - dist[first] < len) ++last;
      if (last >= n) break;
      const Pose delta_gt = compose(inverse(truth[first]), truth[last]);
      const Pose delta_est = compose(inverse(estimate[first]), estimate[last]);
      const Pose error = compose(inverse(delta_gt), delta_est);
      const double t_err = error.translation.norm() / len * 100.0;
      sums[li] += t_err;
      counts[li] += 1;
      total += t_err;
      total_count += 1;
    }
  }

  for (std::size_t li = 0; li < counts.size(); ++li) {
    if (counts[li] > 0) report.per_length_percent[li] = sums[li] / counts[li];
  }
  report.sample_count = total_count;
  report.sufficient_length = total_count > 0;
  report.overall_percent = total_count > 0 ? total / total_count : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Map export

/// ASCII PLY of a map snapshot, colored red (persistence 0) to green
/// (persistence at the gamma/(1-gamma) supremum); permanent points are full
/// green.
inline void export_map_ply(const MapSnapshot& snap, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open PLY file for writing: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << snap.records.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  const double sup = snap.gamma < 1.0 ? snap.gamma / (1.0 - snap.gamma) : 0.0;
  for (const auto& r : snap.records) {
    double t = 1.0;
    if (!r.permanent) {
      t = sup > 0.0 ? std::clamp(snap.pindex(r) / sup, 0.0, 1.0) : 0.0;
    }
    const int red = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    const int green = static_cast<int>(std::lround(255.0 * t));
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.8g %.8g %.8g %d %d 0\n", r.position.x(), r.position.y(),
                  r.position.z(), red, green);
    out << buf;
  }
}

}  // namespace pflo
