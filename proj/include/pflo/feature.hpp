// Edge / surface feature extraction from a scan, by ring smoothness or by
// neighborhood covariance eigenvalues. Both methods share the per-sector
// caps so they yield comparable feature counts.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pflo/kdtree.hpp"
#include "pflo/types.hpp"

namespace pflo {

enum class ExtractionMethod { ring, eigen };

struct ExtractionConfig {
  ExtractionMethod method = ExtractionMethod::ring;
  int half_width = 5;                // smoothness window half-width
  double edge_threshold = 0.1;       // smoothness above -> edge candidate
  double surface_threshold = 0.01;   // smoothness below -> surface candidate
  int sectors = 6;                   // azimuth sectors per ring
  int max_edges_per_sector = 4;
  int max_surfaces_per_sector = 40;
  int eigen_neighbors = 10;          // m nearest neighbors for the eigen method
  double eigen_radius = 0.0;         // > 0: radius neighborhoods instead of m-NN
  double linearity_threshold = 0.7;
  double planarity_threshold = 0.6;
  double min_range = 2.0;
  double max_range = 80.0;
  // occlusion handling on rings: the far side of a range discontinuity is a
  // viewpoint-dependent shadow boundary, not a landmark
  double occlusion_range_jump = 0.5;   // meters, plus 2% of range
  double azimuth_gap_factor = 3.0;     // rel_time gap treated as a segment break
};

/// Ring smoothness c = ||sum_{j in S, j != i} (p_j - p_i)|| / (|S| * ||p_i||)
/// over the symmetric window of `half_width` neighbors on each side.
/// Zero exactly when the neighborhood is symmetric about p_i.
inline double compute_smoothness(const std::vector<RawPoint>& ring, int i, int half_width) {
  Eigen::Vector3d diff_sum = Eigen::Vector3d::Zero();
  for (int j = i - half_width; j <= i + half_width; ++j) {
    if (j == i) continue;
    diff_sum += ring[j].position - ring[i].position;
  }
  const double range = ring[i].position.norm();
  if (range <= 0.0) return 0.0;
  return diff_sum.norm() / (2.0 * half_width * range);
}

/// Eigenvalues of the covariance of `neighbors`, sorted descending and
/// clamped at zero. Requires at least 3 points.
inline Eigen::Vector3d local_covariance_eigenvalues(const std::vector<Point3>& neighbors) {
  if (neighbors.size() < 3) {
    throw std::invalid_argument("local_covariance_eigenvalues: need at least 3 points");
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : neighbors) mean += p;
  mean /= static_cast<double>(neighbors.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : neighbors) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(neighbors.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Eigen::Vector3d ev = solver.eigenvalues().reverse();  // descending
  return ev.cwiseMax(0.0);
}

namespace detail {

struct Candidate {
  int index;      // index into the scan's point list
  double score;   // smoothness / linearity / planarity depending on context
};

inline bool in_range(const RawPoint& p, const ExtractionConfig& cfg) {
  const double r = p.position.norm();
  return r >= cfg.min_range && r <= cfg.max_range;
}

inline FeaturePoint make_feature(const Scan& scan, int idx, FeatureKind kind) {
  FeaturePoint f;
  f.position = scan.points[idx].position;
  f.rel_time = scan.points[idx].rel_time;
  f.kind = kind;
  f.pindex_estimate = 0.0;
  f.source_index = idx;
  return f;
}

}  // namespace detail

inline FeatureSet extract_ring_features(const Scan& scan, const ExtractionConfig& cfg) {
  FeatureSet out;
  out.frame_index = scan.frame_index;
  const int hw = cfg.half_width;

  for (const auto& [ring_begin, ring_end] : scan.ring_ranges()) {
    const int n = ring_end - ring_begin;
    if (n < 2 * hw + 1) continue;

    // smoothness over the pickable interior of the ring
    std::vector<RawPoint> ring(scan.points.begin() + ring_begin, scan.points.begin() + ring_end);
    std::vector<double> smooth(n, 0.0);
    std::vector<bool> suppressed(n, false);
    for (int i = hw; i < n - hw; ++i) smooth[i] = compute_smoothness(ring, i, hw);

    // segment breaks (dropped returns) invalidate the windows crossing them;
    // occlusion boundaries invalidate the far (shadowed) side
    double median_step = 0.0;
    {
      std::vector<double> steps;
      steps.reserve(n - 1);
      for (int i = 1; i < n; ++i) steps.push_back(ring[i].rel_time - ring[i - 1].rel_time);
      if (!steps.empty()) {
        std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
        median_step = steps[steps.size() / 2];
      }
    }
    auto mark_span = [&](int from, int to) {
      for (int j = std::max(0, from); j <= std::min(n - 1, to); ++j) suppressed[j] = true;
    };
    for (int i = 1; i < n; ++i) {
      const double gap = ring[i].rel_time - ring[i - 1].rel_time;
      if (median_step > 0.0 && gap > cfg.azimuth_gap_factor * median_step) {
        // both sides of a dropout behave like ring boundaries
        mark_span(i - hw, i + hw - 1);
        continue;
      }
      const double r_prev = ring[i - 1].position.norm();
      const double r_here = ring[i].position.norm();
      const double jump = cfg.occlusion_range_jump + 0.02 * std::min(r_prev, r_here);
      if (r_here - r_prev > jump) {
        mark_span(i, i + hw);  // far side ahead; the near silhouette stays pickable
      } else if (r_prev - r_here > jump) {
        mark_span(i - 1 - hw, i - 1);
      }
    }

    const int pickable = n - 2 * hw;
    for (int s = 0; s < cfg.sectors; ++s) {
      const int sec_begin = hw + pickable * s / cfg.sectors;
      const int sec_end = hw + pickable * (s + 1) / cfg.sectors;
      std::vector<detail::Candidate> cands;
      cands.reserve(sec_end - sec_begin);
      for (int i = sec_begin; i < sec_end; ++i) {
        if (detail::in_range(ring[i], cfg)) cands.push_back({i, smooth[i]});
      }

      auto pick = [&](bool edges) {
        std::stable_sort(cands.begin(), cands.end(), [edges](const auto& a, const auto& b) {
          if (a.score != b.score) return edges ? a.score > b.score : a.score < b.score;
          return a.index < b.index;
        });
        int taken = 0;
        const int cap = edges ? cfg.max_edges_per_sector : cfg.max_surfaces_per_sector;
        for (const auto& c : cands) {
          if (taken >= cap) break;
          if (suppressed[c.index]) continue;
          if (edges ? c.score <= cfg.edge_threshold : c.score >= cfg.surface_threshold) break;
          auto& list = edges ? out.edges : out.surfaces;
          list.push_back(detail::make_feature(scan, ring_begin + c.index,
                                              edges ? FeatureKind::edge : FeatureKind::surface));
          ++taken;
          for (int j = std::max(0, c.index - hw); j <= std::min(n - 1, c.index + hw); ++j) {
            suppressed[j] = true;
          }
        }
      };
      pick(true);
      pick(false);
    }
  }
  return out;
}

inline FeatureSet extract_eigen_features(const Scan& scan, const ExtractionConfig& cfg) {
  FeatureSet out;
  out.frame_index = scan.frame_index;

  // range-gated candidates, indexed by position in the scan
  std::vector<KdTree3::Entry> entries;
  entries.reserve(scan.points.size());
  for (int i = 0; i < static_cast<int>(scan.points.size()); ++i) {
    if (detail::in_range(scan.points[i], cfg)) {
      entries.push_back({scan.points[i].position, static_cast<std::uint64_t>(i)});
    }
  }
  if (entries.empty()) return out;
  KdTree3 tree(std::move(entries));

  struct Scored {
    int index;
    double linearity;
    double planarity;
  };
  std::vector<Scored> scored;
  scored.reserve(tree.size());
  std::vector<Point3> neighborhood;
  for (int i = 0; i < static_cast<int>(scan.points.size()); ++i) {
    if (!detail::in_range(scan.points[i], cfg)) continue;
    const auto hits = cfg.eigen_radius > 0.0
                          ? tree.radius_search(scan.points[i].position, cfg.eigen_radius)
                          : tree.knn(scan.points[i].position, cfg.eigen_neighbors);
    if (static_cast<int>(hits.size()) < 3) continue;
    neighborhood.clear();
    for (const auto& h : hits) neighborhood.push_back(scan.points[h.id].position);
    const Eigen::Vector3d ev = local_covariance_eigenvalues(neighborhood);
    if (ev[0] <= 0.0) continue;  // all neighbors coincident
    scored.push_back({i, (ev[0] - ev[1]) / ev[0], (ev[1] - ev[2]) / ev[0]});
  }

  // Same ring/sector partition and caps as the ring method, ranked by the
  // classifying score. Edge classification takes precedence.
  const auto ranges = scan.ring_ranges();
  std::vector<long> sector_of(scan.points.size(), -1);
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    const int n = ranges[r].second - ranges[r].first;
    for (int idx = ranges[r].first; idx < ranges[r].second; ++idx) {
      const long s = std::min<long>(cfg.sectors - 1,
                                    static_cast<long>(idx - ranges[r].first) * cfg.sectors / n);
      sector_of[idx] = static_cast<long>(r) * cfg.sectors + s;
    }
  }

  const long sector_count = static_cast<long>(ranges.size()) * cfg.sectors;
  std::vector<std::vector<Scored>> edge_bins(sector_count), surf_bins(sector_count);
  for (const auto& s : scored) {
    const long sec = sector_of[s.index];
    if (sec < 0) continue;
    if (s.linearity > cfg.linearity_threshold) {
      edge_bins[sec].push_back(s);
    } else if (s.planarity > cfg.planarity_threshold) {
      surf_bins[sec].push_back(s);
    }
  }
  for (long sec = 0; sec < sector_count; ++sec) {
    auto& eb = edge_bins[sec];
    std::stable_sort(eb.begin(), eb.end(), [](const auto& a, const auto& b) {
      if (a.linearity != b.linearity) return a.linearity > b.linearity;
      return a.index < b.index;
    });
    for (int i = 0; i < std::min<int>(cfg.max_edges_per_sector, eb.size()); ++i) {
      out.edges.push_back(detail::make_feature(scan, eb[i].index, FeatureKind::edge));
    }
    auto& sb = surf_bins[sec];
    std::stable_sort(sb.begin(), sb.end(), [](const auto& a, const auto& b) {
      if (a.planarity != b.planarity) return a.planarity > b.planarity;
      return a.index < b.index;
    });
    for (int i = 0; i < std::min<int>(cfg.max_surfaces_per_sector, sb.size()); ++i) {
      out.surfaces.push_back(detail::make_feature(scan, sb[i].index, FeatureKind::surface));
    }
  }
  return out;
}

inline FeatureSet extract_features(const Scan& scan, const ExtractionConfig& cfg) {
  return cfg.method == ExtractionMethod::ring ? extract_ring_features(scan, cfg)
                                              : extract_eigen_features(scan, cfg);
}

}  // namespace pflo
