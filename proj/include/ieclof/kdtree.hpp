#pragma once

// Exact k-nearest-neighbor search over a static point set. Neighborhoods are
// closed balls: every point tied at the k-th distance is returned.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

namespace ieclof {

// Euclidean distance. Every neighborhood computation in the library goes
// through this function so that ties compare exactly.
inline double euclidean(std::span<const double> p, std::span<const double> o) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double d = p[i] - o[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

struct Neighbor {
  std::size_t id;
  double dist;
};

class KdTree {
public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  KdTree() = default;

  // `coords` is row-major, `dim` values per point. The tree keeps its own copy.
  KdTree(std::span<const double> coords, std::size_t dim) : dim_(dim) {
    std::size_t n = dim ? coords.size() / dim : 0;
    ids_.resize(n);
    std::iota(ids_.begin(), ids_.end(), std::size_t{0});
    if (n) build(coords, 0, n);
    pts_.resize(coords.size());
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(coords.begin() + static_cast<std::ptrdiff_t>(ids_[i] * dim), dim,
                  pts_.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }

  // Distance to the k-th nearest point, not counting the point `exclude`.
  double kth_distance(std::span<const double> q, std::size_t k, std::size_t exclude = kNone) const {
    std::priority_queue<double> heap;
    if (!nodes_.empty()) kth_search(0, q, k, exclude, heap);
    return heap.top();
  }

  // All points within `radius` (inclusive) of q, excluding `exclude`, ordered by id.
  std::vector<Neighbor> within(std::span<const double> q, double radius, std::size_t exclude = kNone) const {
    std::vector<Neighbor> out;
    if (!nodes_.empty()) radius_search(0, q, radius, exclude, out);
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
    return out;
  }

  // Closed k-distance neighborhood of q. Requires at least k candidate points.
  std::vector<Neighbor> neighborhood(std::span<const double> q, std::size_t k, std::size_t exclude,
                                     double& k_distance) const {
    k_distance = kth_distance(q, k, exclude);
    return within(q, k_distance, exclude);
  }

private:
  static constexpr std::size_t kLeafSize = 16;
  // Split-plane bounds are padded so that rounding can only cause extra
  // visits, never a missed tie.
  static constexpr double kSlack = 1e-12;

  struct Node {
    std::size_t begin, end;
    std::size_t left = 0, right = 0;  // 0 marks a leaf (root is never a child)
    std::size_t axis = 0;
    double split = 0.0;
  };

  std::span<const double> at(std::size_t slot) const {
    return std::span<const double>(pts_).subspan(slot * dim_, dim_);
  }

  std::size_t build(std::span<const double> coords, std::size_t begin, std::size_t end) {
    std::size_t idx = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return idx;
    std::size_t axis = 0;
    double best = -1.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        double v = coords[ids_[i] * dim_ + d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best) {
        best = hi - lo;
        axis = d;
      }
    }
    std::size_t mid = begin + (end - begin) / 2;
    auto first = ids_.begin();
    std::nth_element(first + static_cast<std::ptrdiff_t>(begin), first + static_cast<std::ptrdiff_t>(mid),
                     first + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       double va = coords[a * dim_ + axis], vb = coords[b * dim_ + axis];
                       return va < vb || (va == vb && a < b);
                     });
    double split = coords[ids_[mid] * dim_ + axis];
    std::size_t l = build(coords, begin, mid);
    std::size_t r = build(coords, mid, end);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    nodes_[idx].axis = axis;
    nodes_[idx].split = split;
    return idx;
  }

  void kth_search(std::size_t ni, std::span<const double> q, std::size_t k, std::size_t exclude,
                  std::priority_queue<double>& heap) const {
    const Node& n = nodes_[ni];
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if (ids_[i] == exclude) continue;
        double d = euclidean(q, at(i));
        if (heap.size() < k) {
          heap.push(d);
        } else if (d < heap.top()) {
          heap.pop();
          heap.push(d);
        }
      }
      return;
    }
    double diff = q[n.axis] - n.split;
    std::size_t near = diff < 0 ? n.left : n.right;
    std::size_t far = diff < 0 ? n.right : n.left;
    kth_search(near, q, k, exclude, heap);
    if (heap.size() < k || std::abs(diff) <= heap.top() * (1.0 + kSlack)) kth_search(far, q, k, exclude, heap);
  }

  void radius_search(std::size_t ni, std::span<const double> q, double radius, std::size_t exclude,
                     std::vector<Neighbor>& out) const {
    const Node& n = nodes_[ni];
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if (ids_[i] == exclude) continue;
        double d = euclidean(q, at(i));
        if (d <= radius) out.push_back({ids_[i], d});
      }
      return;
    }
    double diff = q[n.axis] - n.split;
    std::size_t near = diff < 0 ? n.left : n.right;
    std::size_t far = diff < 0 ? n.right : n.left;
    radius_search(near, q, radius, exclude, out);
    if (std::abs(diff) <= radius * (1.0 + kSlack)) radius_search(far, q, radius, exclude, out);
  }

  std::size_t dim_ = 0;
  std::vector<std::size_t> ids_;  // slot -> original id
  std::vector<double> pts_;       // coordinates in slot order
  std::vector<Node> nodes_;
};

}  // namespace ieclof
