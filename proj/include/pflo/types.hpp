// Scan and feature containers shared across the pipeline.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pflo/geometry.hpp"

namespace pflo {

/// One return of a spinning LiDAR, in the sensor frame at measurement time.
struct RawPoint {
  Point3 position{0.0, 0.0, 0.0};
  float intensity = 0.0f;
  int ring = 0;
  double rel_time = 0.0;  // fraction of the sweep, in [0, 1]
};

/// One sweep: points grouped by ring, ascending azimuth within each ring.
struct Scan {
  int frame_index = 0;
  int ring_count = 0;
  std::vector<RawPoint> points;

  /// [begin, end) index ranges of the consecutive ring groups.
  std::vector<std::pair<int, int>> ring_ranges() const {
    std::vector<std::pair<int, int>> ranges;
    const int n = static_cast<int>(points.size());
    int begin = 0;
    for (int i = 1; i <= n; ++i) {
      if (i == n || points[i].ring != points[begin].ring) {
        ranges.emplace_back(begin, i);
        begin = i;
      }
    }
    return ranges;
  }
};

enum class FeatureKind { edge, surface };

struct FeaturePoint {
  Point3 position{0.0, 0.0, 0.0};  // sensor frame
  double rel_time = 0.0;
  FeatureKind kind = FeatureKind::edge;
  double pindex_estimate = 0.0;
  int source_index = -1;  // index into the originating scan, -1 if synthetic
};

struct FeatureSet {
  int frame_index = 0;
  std::vector<FeaturePoint> edges;
  std::vector<FeaturePoint> surfaces;
};

}  // namespace pflo
