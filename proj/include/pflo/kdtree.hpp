// Exact k-nearest-neighbor search over 3D points with deterministic
// tie-breaking by point id.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace pflo {

class KdTree3 {
 public:
  struct Entry {
    Eigen::Vector3d position;
    std::uint64_t id;
  };
  struct Hit {
    std::uint64_t id;
    double sq_dist;
  };

  KdTree3() = default;

  explicit KdTree3(std::vector<Entry> entries) : entries_(std::move(entries)) {
    if (!entries_.empty()) {
      nodes_.reserve(entries_.size() / kLeafSize * 2 + 2);
      root_ = build(0, static_cast<int>(entries_.size()));
    }
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// k nearest entries to `query`, sorted by (squared distance, id).
  /// Equal distances rank lower ids first.
  std::vector<Hit> knn(const Eigen::Vector3d& query, int k) const {
    std::vector<Hit> heap;
    if (k <= 0 || entries_.empty()) return heap;
    heap.reserve(k);
    search(root_, query, k, heap);
    std::sort(heap.begin(), heap.end(), [](const Hit& a, const Hit& b) {
      return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.id < b.id);
    });
    return heap;
  }

  /// All entries within `radius` of `query`, sorted by (squared distance, id).
  std::vector<Hit> radius_search(const Eigen::Vector3d& query, double radius) const {
    std::vector<Hit> hits;
    if (entries_.empty() || radius < 0.0) return hits;
    radius_collect(root_, query, radius * radius, hits);
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.id < b.id);
    });
    return hits;
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    double split = 0.0;
    int axis = 0;
    int left = -1, right = -1;  // children, -1 for leaves
    int begin = 0, end = 0;     // entry range for leaves
  };

  // worse(a, b): a ranks behind b in the candidate heap
  static bool worse(const Hit& a, const Hit& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.id < b.id);
  }

  int build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Eigen::Vector3d lo = entries_[begin].position, hi = entries_[begin].position;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(entries_[i].position);
      hi = hi.cwiseMax(entries_[i].position);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(entries_.begin() + begin, entries_.begin() + mid, entries_.begin() + end,
                     [axis](const Entry& a, const Entry& b) {
                       return a.position[axis] < b.position[axis] ||
                              (a.position[axis] == b.position[axis] && a.id < b.id);
                     });
    node.axis = axis;
    node.split = entries_[mid].position[axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int node_idx, const Eigen::Vector3d& q, int k, std::vector<Hit>& heap) const {
    const Node& node = nodes_[node_idx];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Hit cand{entries_[i].id, (entries_[i].position - q).squaredNorm()};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), worse);
        } else if (worse(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), worse);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), worse);
        }
      }
      return;
    }
    const double dx = q[node.axis] - node.split;
    const int near = dx < 0.0 ? node.left : node.right;
    const int far = dx < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // visit the far side unless every candidate there is strictly worse
    if (static_cast<int>(heap.size()) < k || dx * dx <= heap.front().sq_dist) {
      search(far, q, k, heap);
    }
  }

  void radius_collect(int node_idx, const Eigen::Vector3d& q, double sq_radius,
                      std::vector<Hit>& hits) const {
    const Node& node = nodes_[node_idx];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const double d = (entries_[i].position - q).squaredNorm();
        if (d <= sq_radius) hits.push_back({entries_[i].id, d});
      }
      return;
    }
    const double dx = q[node.axis] - node.split;
    const int near = dx < 0.0 ? node.left : node.right;
    const int far = dx < 0.0 ? node.right : node.left;
    radius_collect(near, q, sq_radius, hits);
    if (dx * dx <= sq_radius) radius_collect(far, q, sq_radius, hits);
  }

  std::vector<Entry> entries_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace pflo
