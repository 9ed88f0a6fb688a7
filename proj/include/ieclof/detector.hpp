#pragma once

// Windowed LOF detection over inter-arrival-time series and the hold-out
// validation protocol (train on the leading part, score the rest).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ieclof/error.hpp"
#include "ieclof/features.hpp"
#include "ieclof/lof.hpp"

namespace ieclof {

inline constexpr std::size_t kDefaultWindowSize = 5000;
inline constexpr double kDefaultTrainFraction = 2.0 / 3.0;
inline constexpr double kAutoThresholdQuantile = 0.999;

enum class DetectMode { batch_per_window, train_then_score };
enum class ThresholdPolicy { fixed, auto_quantile };

inline const char* to_string(DetectMode m) {
  return m == DetectMode::batch_per_window ? "batch_per_window" : "train_then_score";
}
inline const char* to_string(ThresholdPolicy p) { return p == ThresholdPolicy::fixed ? "fixed" : "auto"; }

struct WindowConfig {
  std::size_t window_size = kDefaultWindowSize;
  std::size_t k = kDefaultK;
  double threshold = kDefaultThreshold;  // used when policy == fixed
  ThresholdPolicy policy = ThresholdPolicy::fixed;
  DetectMode mode = DetectMode::batch_per_window;
  double train_fraction = kDefaultTrainFraction;  // train_then_score only

  void validate() const {
    if (k == 0) throw usage_error("k must be positive");
    if (window_size <= k + 1)
      throw usage_error("window size " + std::to_string(window_size) + " must exceed k+1 = " + std::to_string(k + 1));
    if (policy == ThresholdPolicy::fixed && !(threshold > 1.0)) throw usage_error("threshold must be greater than 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw usage_error("train fraction must lie strictly between 0 and 1");
  }

  // key=value lines, one per field.
  std::vector<std::string> echo() const {
    std::vector<std::string> out{
        "window_size=" + std::to_string(window_size),
        "k=" + std::to_string(k),
        std::string("threshold_policy=") + to_string(policy),
        std::string("mode=") + to_string(mode),
    };
    if (policy == ThresholdPolicy::fixed) out.push_back("threshold=" + format_double(threshold));
    if (mode == DetectMode::train_then_score) out.push_back("train_fraction=" + format_double(train_fraction));
    return out;
  }

  static std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  }
};

// Half-open sample range [begin, end) processed as one block.
struct Window {
  std::size_t id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

// Tumbling windows of `window_size`. A trailing remainder shorter than k+2
// joins the previous window; a series shorter than one window is one window.
inline std::vector<Window> partition_windows(std::size_t n, std::size_t window_size, std::size_t k) {
  if (n < k + 2)
    throw data_error("series of " + std::to_string(n) + " samples is too short for k=" + std::to_string(k));
  std::vector<Window> out;
  std::size_t full = n / window_size;
  if (full == 0) return {{0, 0, n}};
  for (std::size_t w = 0; w < full; ++w) out.push_back({w, w * window_size, (w + 1) * window_size});
  std::size_t rem = n - full * window_size;
  if (rem >= k + 2) out.push_back({full, full * window_size, n});
  else out.back().end = n;
  return out;
}

// Nearest-rank quantile of the finite scores, floored just above 1.
inline double auto_threshold(std::span<const double> scores, double q = kAutoThresholdQuantile) {
  std::vector<double> v;
  for (double s : scores)
    if (std::isfinite(s)) v.push_back(s);
  double t = 1.0;
  if (!v.empty()) {
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    t = v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
  }
  return std::max(t, std::nextafter(1.0, 2.0));
}

// LOF of every sample of one window, fit on that window alone.
inline std::vector<double> score_window(const FeatureSeries& s, const Window& w, std::size_t k) {
  std::vector<double> values;
  values.reserve(w.size());
  for (std::size_t i = w.begin; i < w.end; ++i) values.push_back(s.samples[i].iat);
  auto model = fit(values, k);
  return {model.lof().begin(), model.lof().end()};
}

// Models learned from consecutive training windows. A sample is scored
// against every window model and keeps the smallest score, i.e. it is normal
// if any learned block explains it.
class ModelSet {
public:
  ModelSet() = default;
  ModelSet(std::vector<LofModel> models, double threshold, ThresholdPolicy policy)
      : models_(std::move(models)), threshold_(threshold), policy_(policy) {
    if (models_.empty()) throw usage_error("model set needs at least one window model");
    for (auto& m : models_) m.set_threshold(threshold_);
  }

  double score(double iat) const {
    double best = kInf;
    for (const auto& m : models_) best = std::min(best, m.score(iat));
    return best;
  }

  const std::vector<LofModel>& models() const { return models_; }
  double threshold() const { return threshold_; }
  ThresholdPolicy policy() const { return policy_; }
  std::size_t k() const { return models_.front().k(); }

private:
  std::vector<LofModel> models_;
  double threshold_ = kDefaultThreshold;
  ThresholdPolicy policy_ = ThresholdPolicy::fixed;
};

// Fits one model per training window and resolves the threshold policy.
inline ModelSet train(const FeatureSeries& s, const WindowConfig& cfg) {
  cfg.validate();
  auto windows = partition_windows(s.size(), cfg.window_size, cfg.k);
  std::vector<LofModel> models;
  std::vector<double> all_lof;
  for (const auto& w : windows) {
    std::vector<double> values;
    for (std::size_t i = w.begin; i < w.end; ++i) values.push_back(s.samples[i].iat);
    models.push_back(fit(values, cfg.k));
    all_lof.insert(all_lof.end(), models.back().lof().begin(), models.back().lof().end());
  }
  double t = cfg.policy == ThresholdPolicy::fixed ? cfg.threshold : auto_threshold(all_lof);
  return ModelSet(std::move(models), t, cfg.policy);
}

enum class Verdict { inlier, outlier };

inline const char* to_string(Verdict v) { return v == Verdict::outlier ? "outlier" : "inlier"; }

struct SampleVerdict {
  std::size_t index = 0;   // sample index within the series
  std::size_t window = 0;  // window id; test samples in train_then_score get the id after the last training window
  double score = 0.0;
  Verdict verdict = Verdict::inlier;
};

struct DetectionReport {
  WindowConfig config;
  double threshold = kDefaultThreshold;  // the value actually applied
  std::vector<SampleVerdict> entries;
  std::size_t windows = 0;
  std::vector<std::size_t> window_outliers;
  std::size_t outliers = 0;

  std::size_t total() const { return entries.size(); }

  // Verdicts and counts from scores, using strict score > threshold.
  void finalize() {
    outliers = 0;
    window_outliers.assign(windows, 0);
    for (auto& e : entries) {
      e.verdict = e.score > threshold ? Verdict::outlier : Verdict::inlier;
      if (e.verdict == Verdict::outlier) {
        ++outliers;
        ++window_outliers[e.window];
      }
    }
  }
};

// Scores every sample of `s` against a trained model set.
inline DetectionReport score_series(const FeatureSeries& s, const ModelSet& models, const WindowConfig& cfg) {
  DetectionReport r;
  r.config = cfg;
  r.threshold = models.threshold();
  r.windows = 1;
  r.entries.reserve(s.size());
  for (const auto& smp : s.samples) r.entries.push_back({smp.index, 0, models.score(smp.iat)});
  r.finalize();
  return r;
}

inline DetectionReport detect_windowed(const FeatureSeries& s, const WindowConfig& cfg) {
  cfg.validate();
  if (s.size() < cfg.k + 2)
    throw data_error("series of " + std::to_string(s.size()) + " samples is too short for k=" + std::to_string(cfg.k));
  DetectionReport r;
  r.config = cfg;
  r.entries.reserve(s.size());

  if (cfg.mode == DetectMode::batch_per_window) {
    auto windows = partition_windows(s.size(), cfg.window_size, cfg.k);
    std::vector<double> all;
    for (const auto& w : windows) {
      auto lof = score_window(s, w, cfg.k);
      for (std::size_t i = 0; i < lof.size(); ++i) r.entries.push_back({s.samples[w.begin + i].index, w.id, lof[i]});
      all.insert(all.end(), lof.begin(), lof.end());
    }
    r.windows = windows.size();
    r.threshold = cfg.policy == ThresholdPolicy::fixed ? cfg.threshold : auto_threshold(all);
    r.finalize();
    return r;
  }

  // train_then_score: training samples keep their in-window lof, the rest are
  // scored against the learned windows.
  auto split = split_series(s, cfg.train_fraction);
  auto windows = partition_windows(split.train.size(), cfg.window_size, cfg.k);
  auto models = train(split.train, cfg);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    auto lof = models.models()[w].lof();
    for (std::size_t i = 0; i < lof.size(); ++i)
      r.entries.push_back({s.samples[windows[w].begin + i].index, w, lof[i]});
  }
  for (const auto& smp : split.test.samples) r.entries.push_back({smp.index, windows.size(), models.score(smp.iat)});
  r.windows = windows.size() + 1;
  r.threshold = models.threshold();
  r.finalize();
  return r;
}

struct ValidationSummary {
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::size_t test_normal = 0;  // test samples not labeled attack
  std::size_t false_positives = 0;
  double threshold = kDefaultThreshold;
  // Present only for labeled input.
  std::optional<std::size_t> attack_samples;
  std::optional<std::size_t> detected;

  double fp_rate() const {
    return test_normal ? static_cast<double>(false_positives) / static_cast<double>(test_normal) : 0.0;
  }
  std::optional<double> detection_rate() const {
    if (!attack_samples || *attack_samples == 0) return std::nullopt;
    return static_cast<double>(*detected) / static_cast<double>(*attack_samples);
  }

  std::string to_text() const {
    std::ostringstream o;
    o << "train_samples=" << train_samples << '\n'
      << "test_samples=" << test_samples << '\n'
      << "threshold=" << WindowConfig::format_double(threshold) << '\n'
      << "false_positives=" << false_positives << '\n'
      << "fp_rate=" << WindowConfig::format_double(fp_rate()) << '\n';
    if (attack_samples) {
      o << "attack_samples=" << *attack_samples << '\n' << "detected=" << *detected << '\n';
      if (auto dr = detection_rate()) o << "detection_rate=" << WindowConfig::format_double(*dr) << '\n';
    }
    return o.str();
  }
};

// Hold-out validation. `scores`, when given, receives the test-sample scores.
inline ValidationSummary validate(const FeatureSeries& s, const WindowConfig& cfg,
                                  double train_fraction = kDefaultTrainFraction,
                                  std::vector<double>* scores = nullptr) {
  cfg.validate();
  auto split = split_series(s, train_fraction);
  auto models = train(split.train, cfg);
  ValidationSummary v;
  v.train_samples = split.train.size();
  v.test_samples = split.test.size();
  v.threshold = models.threshold();
  if (s.labeled()) {
    v.attack_samples = 0;
    v.detected = 0;
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    double sc = models.score(split.test.samples[i].iat);
    if (scores) scores->push_back(sc);
    bool flagged = sc > v.threshold;
    bool attack = s.labeled() && split.test.labels[i] == Label::attack;
    if (attack) {
      ++*v.attack_samples;
      if (flagged) ++*v.detected;
    } else {
      ++v.test_normal;
      if (flagged) ++v.false_positives;
    }
  }
  return v;
}

inline std::string format_score(double v) {
  if (std::isinf(v)) return "inf";
  return WindowConfig::format_double(v);
}

// Plot-ready CSV: sample_index,iat_seconds,score,verdict, in sample order.
// Entries are matched to samples by index.
inline void emit_plot_data(const DetectionReport& report, const FeatureSeries& s, const std::filesystem::path& path,
                           std::span<const std::string> metadata = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "sample_index,iat_seconds,score,verdict\n";
  std::vector<const SampleVerdict*> by_pos(s.size(), nullptr);
  std::size_t base = s.empty() ? 0 : s.samples.front().index;
  for (const auto& e : report.entries) {
    if (e.index < base || e.index - base >= s.size()) throw usage_error("report entry outside the series");
    by_pos[e.index - base] = &e;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!by_pos[i]) continue;
    const auto& e = *by_pos[i];
    out << e.index << ',' << WindowConfig::format_double(s.samples[i].iat) << ',' << format_score(e.score) << ','
        << to_string(e.verdict) << '\n';
  }
  out.flush();
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace ieclof
