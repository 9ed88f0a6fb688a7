#pragma once

// Reference LOF: full distance matrix and literal evaluation of the
// definitions. Quadratic in memory and time; meant for cross-checking `fit`.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ieclof/error.hpp"
#include "ieclof/lof.hpp"

namespace ieclof {

inline constexpr std::size_t kBruteForceLimit = 10'000;

inline std::vector<double> brute_force_lof(const Dataset& data, std::size_t k) {
  check_fit_input(data, k);
  const std::size_t n = data.size();
  if (n > kBruteForceLimit) throw usage_error("brute_force_lof is limited to 10000 points");

  std::vector<double> d(n * n, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t o = 0; o < n; ++o) d[p * n + o] = euclidean(data.point(p), data.point(o));

  // k-distance: the k-th smallest entry of row p with the diagonal removed.
  std::vector<double> kdist(n);
  std::vector<double> row;
  for (std::size_t p = 0; p < n; ++p) {
    row.clear();
    for (std::size_t o = 0; o < n; ++o)
      if (o != p) row.push_back(d[p * n + o]);
    std::sort(row.begin(), row.end());
    kdist[p] = row[k - 1];
  }

  std::vector<std::vector<std::size_t>> hood(n);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t o = 0; o < n; ++o)
      if (o != p && d[p * n + o] <= kdist[p]) hood[p].push_back(o);

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> lrd(n);
  for (std::size_t p = 0; p < n; ++p) {
    double total = 0.0;
    for (auto o : hood[p]) total += std::max(kdist[o], d[p * n + o]);
    double mean = total / static_cast<double>(hood[p].size());
    lrd[p] = mean == 0.0 ? inf : 1.0 / mean;
  }

  std::vector<double> lof(n);
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (auto o : hood[p]) {
      double ratio;
      if (std::isinf(lrd[p])) ratio = std::isinf(lrd[o]) ? 1.0 : 0.0;
      else ratio = lrd[o] / lrd[p];
      acc += ratio;
    }
    lof[p] = acc / static_cast<double>(hood[p].size());
  }
  return lof;
}

}  // namespace ieclof
