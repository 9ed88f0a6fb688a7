#pragma once

// Local Outlier Factor over Euclidean point sets.
//
// k-distance(p) is the distance to the k-th nearest other point. The
// neighborhood N_k(p) is the closed ball of that radius, so ties can make it
// larger than k. With reach(p,o) = max(k-distance(o), d(p,o)):
//
//   lrd(p) = |N_k(p)| / sum_{o in N_k(p)} reach(p,o)      (+inf when the sum is 0)
//   lof(p) = mean_{o in N_k(p)} lrd(o) / lrd(p)
//
// Infinite densities: a ratio inf/inf counts as 1 and finite/inf as 0, so a
// point among exact duplicates scores 1. A finite-density point next to an
// infinite-density one scores +inf.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ieclof/error.hpp"
#include "ieclof/kdtree.hpp"

namespace ieclof {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultThreshold = 1.5;
inline constexpr std::size_t kDefaultK = 20;

using PointView = std::span<const double>;

// Row-major point storage with a fixed dimension.
class Dataset {
public:
  Dataset() = default;
  explicit Dataset(std::size_t dim) : dim_(dim) {}
  Dataset(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    if (dim_ == 0 || coords_.size() % dim_ != 0) throw usage_error("coordinate count is not a multiple of dimension");
  }

  static Dataset from_values(std::span<const double> values) {
    return Dataset(1, std::vector<double>(values.begin(), values.end()));
  }

  void push_back(PointView p) {
    if (p.size() != dim_) throw usage_error("point dimension mismatch");
    coords_.insert(coords_.end(), p.begin(), p.end());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ ? coords_.size() / dim_ : 0; }
  PointView point(std::size_t i) const { return PointView(coords_).subspan(i * dim_, dim_); }
  std::span<const double> coords() const { return coords_; }

  bool all_finite() const {
    for (double c : coords_)
      if (!std::isfinite(c)) return false;
    return true;
  }

private:
  std::size_t dim_ = 1;
  std::vector<double> coords_;
};

inline double distance(PointView p, PointView o) {
  if (p.size() != o.size())
    throw usage_error("distance: dimension mismatch (" + std::to_string(p.size()) + " vs " +
                      std::to_string(o.size()) + ")");
  return euclidean(p, o);
}

struct KDistance {
  double radius = 0.0;
  std::vector<std::size_t> neighbors;  // ascending ids
};

// Direct evaluation for a single point by a linear scan.
inline KDistance k_distance(const Dataset& data, std::size_t p, std::size_t k) {
  if (k == 0) throw usage_error("k must be positive");
  if (data.size() < k + 1)
    throw data_error("dataset of " + std::to_string(data.size()) + " points is too small for k=" + std::to_string(k));
  std::vector<double> d;
  d.reserve(data.size() - 1);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (i != p) d.push_back(euclidean(data.point(p), data.point(i)));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
  KDistance out{d[k - 1], {}};
  for (std::size_t i = 0; i < data.size(); ++i)
    if (i != p && euclidean(data.point(p), data.point(i)) <= out.radius) out.neighbors.push_back(i);
  return out;
}

// k-distance neighborhoods of every point, in compressed row form.
struct NeighborhoodTable {
  std::size_t k = 0;
  std::vector<double> k_distance;
  std::vector<std::size_t> offsets;  // size n+1
  std::vector<std::size_t> ids;      // neighbor ids, ascending within a row
  std::vector<double> dists;         // d(p, o), parallel to ids
  std::vector<double> reach_dists;   // reach(p, o), parallel to ids

  std::span<const std::size_t> neighbors(std::size_t p) const {
    return std::span<const std::size_t>(ids).subspan(offsets[p], offsets[p + 1] - offsets[p]);
  }
  std::span<const double> reach(std::size_t p) const {
    return std::span<const double>(reach_dists).subspan(offsets[p], offsets[p + 1] - offsets[p]);
  }
};

inline double reach_dist(double d_po, double k_distance_o) { return std::max(k_distance_o, d_po); }

inline double reach_dist(std::size_t p, std::size_t o, const Dataset& data, const NeighborhoodTable& table) {
  return reach_dist(euclidean(data.point(p), data.point(o)), table.k_distance[o]);
}

namespace detail {

inline double lrd_from(std::span<const double> reach) {
  double sum = 0.0;
  for (double r : reach) sum += r;
  return sum > 0.0 ? static_cast<double>(reach.size()) / sum : kInf;
}

template <typename NeighborIds>
double lof_from(double own_lrd, const NeighborIds& neighbors, std::span<const double> lrd) {
  if (std::isinf(own_lrd)) {
    double sum = 0.0;
    for (auto o : neighbors) sum += std::isinf(lrd[o]) ? 1.0 : 0.0;
    return sum / static_cast<double>(std::size(neighbors));
  }
  double sum = 0.0;
  for (auto o : neighbors) {
    if (std::isinf(lrd[o])) return kInf;
    sum += lrd[o];
  }
  return sum / (static_cast<double>(std::size(neighbors)) * own_lrd);
}

}  // namespace detail

// Fitted model. Immutable after construction; scoring is const and may be
// shared between threads.
class LofModel {
public:
  LofModel() = default;

  std::size_t k() const { return table_.k; }
  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return points_.dim(); }
  const Dataset& points() const { return points_; }
  const NeighborhoodTable& table() const { return table_; }
  std::span<const double> k_distances() const { return table_.k_distance; }
  std::span<const double> lrd() const { return lrd_; }
  std::span<const double> lof() const { return lof_; }
  double threshold() const { return threshold_; }

  void set_threshold(double t) {
    if (!(t > 1.0)) throw usage_error("threshold must be greater than 1");
    threshold_ = t;
  }

  // Out-of-sample score of q against the training neighborhoods; the model is
  // not refit. Training points are all candidates, q itself is not one.
  double score(PointView q) const {
    if (q.size() != dim())
      throw usage_error("score: point has dimension " + std::to_string(q.size()) + ", model has " +
                        std::to_string(dim()));
    double kd = 0.0;
    auto nb = tree_.neighborhood(q, table_.k, KdTree::kNone, kd);
    std::vector<double> reach;
    std::vector<std::size_t> ids;
    reach.reserve(nb.size());
    ids.reserve(nb.size());
    for (const auto& n : nb) {
      reach.push_back(reach_dist(n.dist, table_.k_distance[n.id]));
      ids.push_back(n.id);
    }
    return detail::lof_from(detail::lrd_from(reach), ids, lrd_);
  }

  double score(double value) const { return score(PointView(&value, 1)); }

  friend LofModel fit(Dataset data, std::size_t k);

private:
  Dataset points_;
  NeighborhoodTable table_;
  std::vector<double> lrd_;
  std::vector<double> lof_;
  double threshold_ = kDefaultThreshold;
  KdTree tree_;
};

inline void check_fit_input(const Dataset& data, std::size_t k) {
  if (k == 0) throw usage_error("k must be positive");
  if (data.size() < k + 1)
    throw data_error("dataset of " + std::to_string(data.size()) + " points is too small for k=" + std::to_string(k));
  if (!data.all_finite()) throw data_error("dataset contains a non-finite coordinate");
}

inline LofModel fit(Dataset data, std::size_t k) {
  check_fit_input(data, k);
  LofModel m;
  m.points_ = std::move(data);
  m.tree_ = KdTree(m.points_.coords(), m.points_.dim());
  const std::size_t n = m.points_.size();
  auto& t = m.table_;
  t.k = k;
  t.k_distance.resize(n);
  t.offsets.assign(1, 0);
  for (std::size_t p = 0; p < n; ++p) {
    auto nb = m.tree_.neighborhood(m.points_.point(p), k, p, t.k_distance[p]);
    for (const auto& o : nb) {
      t.ids.push_back(o.id);
      t.dists.push_back(o.dist);
    }
    t.offsets.push_back(t.ids.size());
  }
  t.reach_dists.resize(t.ids.size());
  for (std::size_t i = 0; i < t.ids.size(); ++i) t.reach_dists[i] = reach_dist(t.dists[i], t.k_distance[t.ids[i]]);

  m.lrd_.resize(n);
  for (std::size_t p = 0; p < n; ++p) m.lrd_[p] = detail::lrd_from(t.reach(p));
  m.lof_.resize(n);
  for (std::size_t p = 0; p < n; ++p) m.lof_[p] = detail::lof_from(m.lrd_[p], t.neighbors(p), m.lrd_);
  return m;
}

inline LofModel fit(std::span<const double> values, std::size_t k) { return fit(Dataset::from_values(values), k); }

inline double score(const LofModel& model, PointView q) { return model.score(q); }

}  // namespace ieclof
