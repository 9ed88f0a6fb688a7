#pragma once

// Per-conversation inter-arrival-time series.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <vector>

#include "ieclof/error.hpp"
#include "ieclof/types.hpp"

namespace ieclof {

struct IatSample {
  std::size_t index = 0;  // 1-based position within the series
  double iat = 0.0;       // seconds since the previous packet of the conversation
  Timestamp timestamp;    // arrival time of the later packet
};

// Inter-arrival times of one bidirectional conversation, both directions
// interleaved by time. `labels` is parallel to `samples` when the source
// records were labeled and empty otherwise; a sample takes the label of the
// packet whose arrival closes the interval.
struct FeatureSeries {
  Conversation conversation;
  std::vector<IatSample> samples;
  std::vector<Label> labels;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool labeled() const { return !labels.empty(); }

  std::vector<double> iats() const {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.iat);
    return v;
  }
};

namespace detail {

inline FeatureSeries difference(Conversation conv, std::vector<std::pair<Timestamp, Label>>& arrivals,
                                bool labeled) {
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  FeatureSeries fs;
  fs.conversation = conv;
  if (arrivals.size() < 2) return fs;
  fs.samples.reserve(arrivals.size() - 1);
  for (std::size_t i = 1; i < arrivals.size(); ++i) {
    fs.samples.push_back({i, arrivals[i].first - arrivals[i - 1].first, arrivals[i].first});
    if (labeled) fs.labels.push_back(arrivals[i].second);
  }
  return fs;
}

}  // namespace detail

// Groups records by conversation and differences consecutive arrivals.
// `labels` is either empty or parallel to `records`.
inline std::map<Conversation, FeatureSeries> extract_features(std::span<const PacketRecord> records,
                                                              std::span<const Label> labels = {}) {
  if (!labels.empty() && labels.size() != records.size())
    throw usage_error("extract_features: label count does not match record count");
  bool labeled = !labels.empty();
  std::map<Conversation, std::vector<std::pair<Timestamp, Label>>> groups;
  for (std::size_t i = 0; i < records.size(); ++i)
    groups[Conversation::of(records[i])].emplace_back(records[i].timestamp, labeled ? labels[i] : Label::normal);
  std::map<Conversation, FeatureSeries> out;
  for (auto& [conv, arrivals] : groups) out.emplace(conv, detail::difference(conv, arrivals, labeled));
  return out;
}

// One series over all records regardless of endpoints.
inline FeatureSeries extract_merged(std::span<const PacketRecord> records, std::span<const Label> labels = {}) {
  if (!labels.empty() && labels.size() != records.size())
    throw usage_error("extract_merged: label count does not match record count");
  std::vector<std::pair<Timestamp, Label>> arrivals;
  arrivals.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    arrivals.emplace_back(records[i].timestamp, labels.empty() ? Label::normal : labels[i]);
  return detail::difference(Conversation::merged(), arrivals, !labels.empty());
}

// Contiguous sub-range, renumbered from 1.
inline FeatureSeries slice(const FeatureSeries& s, std::size_t begin, std::size_t end) {
  FeatureSeries out;
  out.conversation = s.conversation;
  out.samples.assign(s.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     s.samples.begin() + static_cast<std::ptrdiff_t>(end));
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i].index = i + 1;
  if (s.labeled())
    out.labels.assign(s.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      s.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

struct SeriesSplit {
  FeatureSeries train;
  FeatureSeries test;
};

// Temporal split: the first floor(fraction * n) samples train, the rest test.
// Test samples keep their original indices.
inline SeriesSplit split_series(const FeatureSeries& s, double train_fraction = 2.0 / 3.0) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw usage_error("train fraction must lie strictly between 0 and 1");
  std::size_t n = s.size();
  if (n < 3) throw data_error("series of " + std::to_string(n) + " samples is too short to split");
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  SeriesSplit out{slice(s, 0, n_train), slice(s, n_train, n)};
  for (std::size_t i = 0; i < out.test.samples.size(); ++i) out.test.samples[i].index = n_train + i + 1;
  return out;
}

// Two-column export: index,iat_seconds.
inline void write_series_csv(const FeatureSeries& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << "index,iat_seconds\n";
  char buf[64];
  for (const auto& smp : s.samples) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, smp.iat);
    out << smp.index << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf)) << '\n';
  }
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace ieclof
