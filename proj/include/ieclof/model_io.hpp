#pragma once

// Text serialization of trained model sets.
//
//   ieclof-model 1
//   policy <fixed|auto>
//   threshold <t>
//   windows <w>
//   window <id> k <k> dim <d> points <n>
//   <coord_1> ... <coord_d> <k_distance> <lrd> <lof>      (n lines)
//   ...
//
// Doubles use the shortest round-trip representation; infinities are "inf".
// Loading refits each window from its coordinates and rejects the file if
// the stored k-distances, densities or scores disagree with the refit.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ieclof/detector.hpp"
#include "ieclof/error.hpp"
#include "ieclof/lof.hpp"

namespace ieclof {

inline constexpr int kModelFormatVersion = 1;

inline void save_model(const ModelSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  auto num = [](double v) { return format_score(v); };
  out << "ieclof-model " << kModelFormatVersion << '\n'
      << "policy " << to_string(set.policy()) << '\n'
      << "threshold " << num(set.threshold()) << '\n'
      << "windows " << set.models().size() << '\n';
  for (std::size_t w = 0; w < set.models().size(); ++w) {
    const auto& m = set.models()[w];
    out << "window " << w << " k " << m.k() << " dim " << m.dim() << " points " << m.size() << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (double c : m.points().point(i)) out << num(c) << ' ';
      out << num(m.k_distances()[i]) << ' ' << num(m.lrd()[i]) << ' ' << num(m.lof()[i]) << '\n';
    }
  }
  out.flush();
  if (!out) throw io_error("write failed, " + path.string() + " may be incomplete");
}

namespace detail {

inline double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) throw data_error(where + ": bad number '" + tok + "'");
  return v;
}

inline bool same_value(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace detail

inline ModelSet load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) throw usage_error("no such file: " + path.string());
    throw io_error("cannot open " + path.string());
  }
  const std::string where = path.string();
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw data_error(where + ": expected '" + key + "'");
  };
  std::string tok;
  expect("ieclof-model");
  int version = 0;
  if (!(in >> version) || version != kModelFormatVersion)
    throw data_error(where + ": unsupported model format version");
  expect("policy");
  in >> tok;
  ThresholdPolicy policy;
  if (tok == "fixed") policy = ThresholdPolicy::fixed;
  else if (tok == "auto") policy = ThresholdPolicy::auto_quantile;
  else throw data_error(where + ": unknown threshold policy '" + tok + "'");
  expect("threshold");
  in >> tok;
  double threshold = detail::parse_double(tok, where);
  expect("windows");
  std::size_t n_windows = 0;
  if (!(in >> n_windows) || n_windows == 0) throw data_error(where + ": bad window count");

  std::vector<LofModel> models;
  for (std::size_t w = 0; w < n_windows; ++w) {
    std::size_t id = 0, k = 0, dim = 0, n = 0;
    expect("window");
    in >> id;
    expect("k");
    in >> k;
    expect("dim");
    in >> dim;
    expect("points");
    in >> n;
    if (!in || id != w || dim == 0) throw data_error(where + ": bad window header");
    std::vector<double> coords;
    std::vector<double> kd(n), lrd(n), lof(n);
    coords.reserve(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        if (!(in >> tok)) throw data_error(where + ": truncated model file");
        coords.push_back(detail::parse_double(tok, where));
      }
      for (auto* col : {&kd, &lrd, &lof}) {
        if (!(in >> tok)) throw data_error(where + ": truncated model file");
        (*col)[i] = detail::parse_double(tok, where);
      }
    }
    auto m = fit(Dataset(dim, std::move(coords)), k);
    for (std::size_t i = 0; i < n; ++i) {
      if (!detail::same_value(m.k_distances()[i], kd[i]) || !detail::same_value(m.lrd()[i], lrd[i]) ||
          !detail::same_value(m.lof()[i], lof[i]))
        throw data_error(where + ": stored values of window " + std::to_string(w) + " do not match its points");
    }
    models.push_back(std::move(m));
  }
  return ModelSet(std::move(models), threshold, policy);
}

}  // namespace ieclof
