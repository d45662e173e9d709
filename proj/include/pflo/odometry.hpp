// Per-frame scan-to-map odometry pipeline: feature extraction, constant-
// velocity prediction and de-skew, two match/solve passes against the local
// feature maps, detection recording and the persistence-filter map update.
#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pflo/deskew.hpp"
#include "pflo/feature.hpp"
#include "pflo/map.hpp"
#include "pflo/registration.hpp"

namespace pflo {

struct PipelineConfig {
  ExtractionConfig extraction;
  SolverConfig solver;
  FilterParams filter;
  int registration_passes = 2;
};

struct FrameStats {
  int frame_index = 0;
  std::size_t map_point_count = 0;  // edge + surface, post-update
  std::size_t edge_map_count = 0;
  std::size_t surface_map_count = 0;
  int constraint_count = 0;  // valid correspondences in the final solve
  double elapsed_ms = 0.0;
  int solver_iterations = 0;
  int inserted = 0;
  int deleted = 0;
  bool degenerate = false;
};

struct Trajectory {
  std::vector<std::pair<int, Pose>> poses;  // (frame_index, world pose)
};

struct FrameResult {
  Pose pose;
  FrameStats stats;
  // de-skewed features used this frame with their assigned map ids
  // (-1: dropped by dedup), aligned index-wise
  std::vector<FeaturePoint> edges;
  std::vector<FeaturePoint> surfaces;
  std::vector<std::int64_t> edge_map_ids;
  std::vector<std::int64_t> surface_map_ids;
};

class OdometryPipeline {
 public:
  explicit OdometryPipeline(PipelineConfig cfg = {}) : cfg_(cfg), map_(cfg.filter) {}

  const LocalFeatureMap& map() const { return map_; }
  const Trajectory& trajectory() const { return trajectory_; }
  const std::vector<FrameStats>& stats() const { return stats_; }
  const PipelineConfig& config() const { return cfg_; }

  FrameResult process_frame(const Scan& scan) {
    if (!trajectory_.poses.empty() && scan.frame_index <= trajectory_.poses.back().first) {
      throw std::invalid_argument("process_frame: frame indices must be strictly increasing");
    }
    const auto t_start = std::chrono::steady_clock::now();

    FrameResult result;
    FeatureSet features = extract_features(scan, cfg_.extraction);
    deskew_features(features.edges, state_.last_increment);
    deskew_features(features.surfaces, state_.last_increment);

    const Pose predicted = predict_initial_pose(state_);
    Pose pose = predicted;
    std::vector<Correspondence> edge_corrs, surf_corrs;
    int constraints = 0;
    int iterations = 0;
    bool degenerate = false;

    if (!first_frame_) {
      for (int pass = 0; pass < cfg_.registration_passes; ++pass) {
        edge_corrs = match_features(features.edges, map_, FeatureKind::edge, pose, cfg_.solver);
        surf_corrs =
            match_features(features.surfaces, map_, FeatureKind::surface, pose, cfg_.solver);
        std::vector<Correspondence> all;
        all.reserve(edge_corrs.size() + surf_corrs.size());
        for (const auto& c : edge_corrs) {
          if (c.valid) all.push_back(c);
        }
        for (const auto& c : surf_corrs) {
          if (c.valid) all.push_back(c);
        }
        constraints = static_cast<int>(all.size());
        try {
          const SolveResult solved = solve_pose(all, pose, cfg_.solver);
          pose = solved.pose;
          iterations += solved.iterations;
        } catch (const DegenerateRegistration&) {
          degenerate = true;
          break;
        }
      }
      if (degenerate) pose = predicted;
    } else {
      pose = Pose::identity();
      first_frame_ = false;
    }

    // detections from the final valid correspondences, clamped per frame
    for (const auto* corrs : {&edge_corrs, &surf_corrs}) {
      for (const auto& c : *corrs) {
        if (c.valid) map_.record_detection(c.neighbor_ids, frame_number_);
      }
    }

    const auto matched = [](std::span<const FeaturePoint> feats,
                            std::span<const Correspondence> corrs) {
      std::vector<MatchedFeature> out(feats.size());
      for (std::size_t i = 0; i < feats.size(); ++i) {
        out[i].position = feats[i].position;
        out[i].source_index = feats[i].source_index;
        if (i < corrs.size() && corrs[i].valid) out[i].neighbor_ids = corrs[i].neighbor_ids;
      }
      return out;
    };
    const auto edge_matched = matched(features.edges, edge_corrs);
    const auto surf_matched = matched(features.surfaces, surf_corrs);
    const MapUpdateResult update = map_.pfilter_update(edge_matched, surf_matched, pose, frame_number_);

    trajectory_.poses.emplace_back(scan.frame_index, pose);
    state_.last_increment = se3_log(compose(inverse(state_.last_pose), pose));
    state_.last_pose = pose;
    ++frame_number_;

    const auto t_end = std::chrono::steady_clock::now();
    FrameStats stats;
    stats.frame_index = scan.frame_index;
    stats.edge_map_count = map_.edge_count();
    stats.surface_map_count = map_.surface_count();
    stats.map_point_count = stats.edge_map_count + stats.surface_map_count;
    stats.constraint_count = constraints;
    stats.elapsed_ms = std::chrono::duration<double, std::milli>(t_end - t_start).count();
    stats.solver_iterations = iterations;
    stats.inserted = update.inserted;
    stats.deleted = update.deleted;
    stats.degenerate = degenerate;
    stats_.push_back(stats);

    result.pose = pose;
    result.stats = stats;
    result.edges = std::move(features.edges);
    result.surfaces = std::move(features.surfaces);
    result.edge_map_ids = update.edge_ids;
    result.surface_map_ids = update.surface_ids;
    return result;
  }

 private:
  PipelineConfig cfg_;
  LocalFeatureMap map_;
  MotionState state_;
  Trajectory trajectory_;
  std::vector<FrameStats> stats_;
  int frame_number_ = 0;
  bool first_frame_ = true;
};

struct SequenceResult {
  Trajectory trajectory;
  std::vector<FrameStats> stats;
  MapSnapshot final_map;

  double mean_map_points() const { return mean([](const FrameStats& s) { return double(s.map_point_count); }); }
  double mean_constraints() const { return mean([](const FrameStats& s) { return double(s.constraint_count); }); }
  double mean_elapsed_ms() const { return mean([](const FrameStats& s) { return s.elapsed_ms; }); }

 private:
  template <typename F>
  double mean(F&& f) const {
    if (stats.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : stats) sum += f(s);
    return sum / static_cast<double>(stats.size());
  }
};

/// Drains a scan source (a callable yielding scans until nullopt) through a
/// fresh pipeline. Throws on an empty source.
inline SequenceResult run_sequence(const std::function<std::optional<Scan>()>& next,
                                   const PipelineConfig& cfg) {
  OdometryPipeline pipeline(cfg);
  std::size_t processed = 0;
  while (auto scan = next()) {
    pipeline.process_frame(*scan);
    ++processed;
  }
  if (processed == 0) {
    throw std::runtime_error("run_sequence: empty scan source");
  }
  return {pipeline.trajectory(), pipeline.stats(), pipeline.map().snapshot()};
}

}  // namespace pflo
