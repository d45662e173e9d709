// Twin edge/surface local feature maps with per-point persistence scoring.
//
// Each map point carries an accumulator a updated once per frame as
//   a+ = gamma * a_prev + I,   I in {0, 1},
// where I records whether the point served in a valid correspondence that
// frame. The accumulator is stored pre-discount: the persistence index
// reported externally (exports, coloring) is the discounted value gamma * a.
// Survival thresholds are tested against a+ by default; the post-discount
// convention is selectable via FilterParams.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pflo/geometry.hpp"
#include "pflo/kdtree.hpp"
#include "pflo/types.hpp"

namespace pflo {

struct FilterParams {
  double gamma = 0.6;
  double theta_p = 1.5;       // persistence threshold
  double theta_max = 2.0;     // permanence threshold
  int kappa_new = 2;          // grace window in frames for fresh points
  double edge_voxel = 0.4;    // dedup voxel size, edge map
  double surface_voxel = 0.8; // dedup voxel size, surface map
  double crop_radius = 100.0; // local-map radius around the sensor
  bool filtering_enabled = true;       // false: insert-only baseline
  bool threshold_post_discount = false; // compare thresholds on gamma * a+ instead of a+
};

struct MapPoint {
  std::uint64_t id = 0;
  Point3 position{0.0, 0.0, 0.0};  // world frame
  double acc = 0.0;                // pre-discount accumulator a
  int birth_frame = 0;
  bool permanent = false;
  bool detected_this_frame = false;
};

/// One extracted feature together with the map ids of its valid final
/// correspondence (empty when the feature went unmatched).
struct MatchedFeature {
  Point3 position{0.0, 0.0, 0.0};  // sensor frame, de-skewed
  std::vector<std::uint64_t> neighbor_ids;
  int source_index = -1;
};

struct MapUpdateResult {
  int inserted = 0;
  int deleted = 0;
  // map id assigned per input feature, -1 when dropped by voxel dedup
  std::vector<std::int64_t> edge_ids;
  std::vector<std::int64_t> surface_ids;
};

struct MapSnapshot {
  struct Record {
    std::uint64_t id;
    Point3 position;
    FeatureKind kind;
    double acc;        // pre-discount accumulator
    bool permanent;
    int birth_frame;
  };
  std::vector<Record> records;
  double gamma = 0.6;

  /// Discounted persistence value of a record.
  double pindex(const Record& r) const { return gamma * r.acc; }
};

/// One recursion step of the pre-discount accumulator.
inline double pindex_step(double acc_prev, bool detected, double gamma) {
  return gamma * acc_prev + (detected ? 1.0 : 0.0);
}

/// Closed-form discounted detection sum over explicit detection frames:
/// sum over detections tau of gamma^(k + 1 - tau).
inline double pindex_closed_form(const std::vector<int>& detection_frames, int k, double gamma) {
  double sum = 0.0;
  for (int tau : detection_frames) {
    sum += std::pow(gamma, static_cast<double>(k + 1 - tau));
  }
  return sum;
}

/// Mean of the (post-increment) neighbor accumulators; 1.0 when a feature
/// has no valid neighbors, which is its own detection.
inline double estimate_new_feature_pindex(std::span<const double> neighbor_accs) {
  if (neighbor_accs.empty()) return 1.0;
  double sum = 0.0;
  for (double a : neighbor_accs) sum += a;
  return sum / static_cast<double>(neighbor_accs.size());
}

namespace detail {

// spatial hash with cell size = radius; any_within checks the 27-cell stencil
class ProximityGrid {
 public:
  explicit ProximityGrid(double radius) : radius_(radius), inv_cell_(1.0 / radius) {}

  void insert(const Point3& p) { cells_[key_of(p)].push_back(p); }

  bool any_within(const Point3& p) const {
    const auto c = coords_of(p);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(pack(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == cells_.end()) continue;
          for (const auto& q : it->second) {
            if ((q - p).norm() < radius_) return true;
          }
        }
    return false;
  }

 private:
  std::array<long, 3> coords_of(const Point3& p) const {
    return {static_cast<long>(std::floor(p.x() * inv_cell_)),
            static_cast<long>(std::floor(p.y() * inv_cell_)),
            static_cast<long>(std::floor(p.z() * inv_cell_))};
  }
  static std::uint64_t pack(long x, long y, long z) {
    const std::uint64_t m = (1ull << 21) - 1;
    return ((static_cast<std::uint64_t>(x) & m) << 42) |
           ((static_cast<std::uint64_t>(y) & m) << 21) |
           (static_cast<std::uint64_t>(z) & m);
  }
  std::uint64_t key_of(const Point3& p) const {
    const auto c = coords_of(p);
    return pack(c[0], c[1], c[2]);
  }

  double radius_;
  double inv_cell_;
  std::unordered_map<std::uint64_t, std::vector<Point3>> cells_;
};

}  // namespace detail

class LocalFeatureMap {
 public:
  explicit LocalFeatureMap(FilterParams params = {}) : params_(params) {}

  const FilterParams& params() const { return params_; }
  double gamma() const { return params_.gamma; }

  std::size_t edge_count() const { return edges_.points.size(); }
  std::size_t surface_count() const { return surfs_.points.size(); }
  std::pair<std::size_t, std::size_t> counts() const { return {edge_count(), surface_count()}; }

  const std::vector<MapPoint>& points(FeatureKind kind) const { return store(kind).points; }

  const MapPoint* find(std::uint64_t id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return nullptr;
    const auto& s = store(it->second.first);
    return &s.points[it->second.second];
  }

  /// Ids of the `count` nearest live map points of `kind` to a world-frame
  /// query; empty when the map is empty or the nearest point lies beyond
  /// `max_nearest_dist`. Ties break toward lower (older) ids.
  std::vector<std::uint64_t> find_correspondence(const Point3& world, FeatureKind kind, int count,
                                                 double max_nearest_dist) const {
    const auto& s = store(kind);
    std::vector<std::uint64_t> ids;
    if (s.index.empty()) return ids;
    const auto hits = s.index.knn(world, count);
    if (hits.empty() || hits.front().sq_dist > max_nearest_dist * max_nearest_dist) return ids;
    ids.reserve(hits.size());
    for (const auto& h : hits) ids.push_back(h.id);
    return ids;
  }

  /// Flags each listed point as detected this frame. Repeat ids are
  /// harmless: the per-frame increment is clamped to one.
  void record_detection(std::span<const std::uint64_t> ids, int /*frame*/) {
    for (std::uint64_t id : ids) {
      const auto it = by_id_.find(id);
      if (it == by_id_.end()) {
        throw std::logic_error("record_detection: stale map point id");
      }
      auto& s = mutable_store(it->second.first);
      s.points[it->second.second].detected_this_frame = true;
    }
  }

  /// Full per-frame map maintenance: accumulator updates, insertion of the
  /// frame's features with neighborhood-averaged initial scores, persistence
  /// filtering, cropping and index rebuild. `pose` is the frame's optimized
  /// pose; `frame` the current frame number.
  MapUpdateResult pfilter_update(std::span<const MatchedFeature> edge_features,
                                 std::span<const MatchedFeature> surface_features, const Pose& pose,
                                 int frame) {
    MapUpdateResult result;
    const bool bootstrap = !first_update_done_;
    result.edge_ids = update_kind(edges_, edge_features, pose, frame, params_.edge_voxel, bootstrap,
                                  result.inserted, result.deleted);
    result.surface_ids = update_kind(surfs_, surface_features, pose, frame, params_.surface_voxel,
                                     bootstrap, result.inserted, result.deleted);
    first_update_done_ = true;
    rebuild_lookup();
    return result;
  }

  MapSnapshot snapshot() const {
    MapSnapshot snap;
    snap.gamma = params_.gamma;
    snap.records.reserve(edges_.points.size() + surfs_.points.size());
    for (const auto& p : edges_.points) {
      snap.records.push_back({p.id, p.position, FeatureKind::edge, p.acc, p.permanent, p.birth_frame});
    }
    for (const auto& p : surfs_.points) {
      snap.records.push_back(
          {p.id, p.position, FeatureKind::surface, p.acc, p.permanent, p.birth_frame});
    }
    return snap;
  }

 private:
  struct KindStore {
    std::vector<MapPoint> points;
    KdTree3 index;
  };

  const KindStore& store(FeatureKind kind) const {
    return kind == FeatureKind::edge ? edges_ : surfs_;
  }
  KindStore& mutable_store(FeatureKind kind) { return kind == FeatureKind::edge ? edges_ : surfs_; }

  std::vector<std::int64_t> update_kind(KindStore& s, std::span<const MatchedFeature> features,
                                        const Pose& pose, int frame, double voxel, bool bootstrap,
                                        int& inserted, int& deleted) {
    // post-increment accumulators for pre-existing points
    std::unordered_map<std::uint64_t, std::size_t> local_idx;
    local_idx.reserve(s.points.size());
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      auto& p = s.points[i];
      p.acc = pindex_step(p.acc, p.detected_this_frame, params_.gamma);
      p.detected_this_frame = false;
      local_idx.emplace(p.id, i);
    }

    // insertion with voxel dedup; new points carry their estimate as a+
    detail::ProximityGrid grid(0.5 * voxel);
    for (const auto& p : s.points) grid.insert(p.position);

    std::vector<std::int64_t> assigned(features.size(), -1);
    std::vector<double> neighbor_accs;
    for (std::size_t i = 0; i < features.size(); ++i) {
      neighbor_accs.clear();
      for (std::uint64_t id : features[i].neighbor_ids) {
        const auto it = local_idx.find(id);
        if (it == local_idx.end()) {
          throw std::logic_error("pfilter_update: correspondence refers to a dead map point");
        }
        neighbor_accs.push_back(s.points[it->second].acc);
      }
      const Point3 world = transform_point(pose, features[i].position);
      if (grid.any_within(world)) continue;
      grid.insert(world);
      MapPoint mp;
      mp.id = next_id_++;
      mp.position = world;
      mp.acc = estimate_new_feature_pindex(neighbor_accs);
      mp.birth_frame = frame;
      s.points.push_back(mp);
      assigned[i] = static_cast<std::int64_t>(mp.id);
      ++inserted;
    }

    // persistence filtering on a+ (or its discounted value); fresh points
    // live through the kappa_new grace window, permanent ones never die
    std::vector<MapPoint> survivors;
    survivors.reserve(s.points.size());
    const std::size_t before = s.points.size();
    for (auto& p : s.points) {
      bool keep = true;
      if (params_.filtering_enabled && !bootstrap && !p.permanent) {
        const double tested = params_.threshold_post_discount ? params_.gamma * p.acc : p.acc;
        if (tested > params_.theta_p) {
          if (tested >= params_.theta_max) p.permanent = true;
        } else if (frame - p.birth_frame >= params_.kappa_new) {
          keep = false;
        }
      }
      if (keep && (p.position - pose.translation).norm() > params_.crop_radius) keep = false;
      if (keep) survivors.push_back(p);
    }
    s.points.swap(survivors);
    deleted += static_cast<int>(before - s.points.size());

    std::vector<KdTree3::Entry> entries;
    entries.reserve(s.points.size());
    for (const auto& p : s.points) entries.push_back({p.position, p.id});
    s.index = KdTree3(std::move(entries));
    return assigned;
  }

  void rebuild_lookup() {
    by_id_.clear();
    by_id_.reserve(edges_.points.size() + surfs_.points.size());
    for (std::size_t i = 0; i < edges_.points.size(); ++i) {
      by_id_.emplace(edges_.points[i].id, std::make_pair(FeatureKind::edge, i));
    }
    for (std::size_t i = 0; i < surfs_.points.size(); ++i) {
      by_id_.emplace(surfs_.points[i].id, std::make_pair(FeatureKind::surface, i));
    }
  }

  FilterParams params_;
  KindStore edges_, surfs_;
  std::unordered_map<std::uint64_t, std::pair<FeatureKind, std::size_t>> by_id_;
  std::uint64_t next_id_ = 0;
  bool first_update_done_ = false;
};

}  // namespace pflo
