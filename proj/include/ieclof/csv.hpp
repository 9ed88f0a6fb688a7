#pragma once

// Record CSV dialect: header row, comma separated, LF line endings, no
// quoting. Lines starting with '#' carry metadata and are ignored on read.
//
//   timestamp,src_addr,dst_addr,src_port,dst_port,apci_type,asdu_type_id,asdu_length[,label]

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ieclof/error.hpp"
#include "ieclof/pcap.hpp"
#include "ieclof/types.hpp"

namespace ieclof {

inline constexpr std::array<std::string_view, 8> kRecordColumns{
    "timestamp", "src_addr", "dst_addr", "src_port", "dst_port", "apci_type", "asdu_type_id", "asdu_length"};

// Records plus per-record labels; `labels` is empty for unlabeled input.
struct RecordSet {
  std::vector<PacketRecord> records;
  std::vector<Label> labels;

  bool labeled() const { return !labels.empty(); }
};

// Capture-order timestamps may wobble slightly; anything further back than
// this is treated as a corrupt extract.
inline constexpr std::int64_t kCsvRegressionToleranceMicros = 1'000'000;

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s, T max) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty() || v > max) return std::nullopt;
  return static_cast<T>(v);
}

inline std::optional<PacketRecord> parse_row(const std::vector<std::string_view>& f,
                                             const std::array<std::size_t, 8>& col) {
  PacketRecord r;
  auto ts = Timestamp::parse(f[col[0]]);
  auto src = Ipv4::parse(f[col[1]]);
  auto dst = Ipv4::parse(f[col[2]]);
  auto sport = parse_uint<std::uint16_t>(f[col[3]], 65535);
  auto dport = parse_uint<std::uint16_t>(f[col[4]], 65535);
  auto type = apci_type_from(f[col[5]]);
  auto len = parse_uint<std::uint32_t>(f[col[7]], 0xffffffffu);
  if (!ts || !src || !dst || !sport || !dport || !type || !len) return std::nullopt;
  r.timestamp = *ts;
  r.src = {*src, *sport};
  r.dst = {*dst, *dport};
  r.apci_type = *type;
  if (!f[col[6]].empty()) {
    auto id = parse_uint<std::uint8_t>(f[col[6]], 255);
    if (!id) return std::nullopt;
    r.asdu_type_id = *id;
  }
  r.asdu_length = *len;
  if (!r.valid()) return std::nullopt;
  return r;
}

}  // namespace detail

// Reads a record CSV. Extra columns are ignored except `label`, which is
// picked up when present.
inline RecordSet parse_labeled_csv(const std::filesystem::path& path, IngestStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) throw usage_error("no such file: " + path.string());
    throw io_error("cannot open " + path.string());
  }
  IngestStats st;
  RecordSet out;
  std::string line;
  std::array<std::size_t, 8> col{};
  std::optional<std::size_t> label_col;
  std::size_t width = 0;
  bool have_header = false;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split_commas(line);
    if (!have_header) {
      for (std::size_t c = 0; c < kRecordColumns.size(); ++c) {
        auto it = std::find(fields.begin(), fields.end(), kRecordColumns[c]);
        if (it == fields.end())
          throw data_error(path.string() + ": missing required column '" + std::string(kRecordColumns[c]) + "'");
        col[c] = static_cast<std::size_t>(it - fields.begin());
      }
      auto it = std::find(fields.begin(), fields.end(), "label");
      if (it != fields.end()) label_col = static_cast<std::size_t>(it - fields.begin());
      width = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      ++st.skipped_rows;
      continue;
    }
    auto rec = detail::parse_row(fields, col);
    std::optional<Label> label;
    if (label_col) {
      auto l = fields[*label_col];
      if (l == "normal") label = Label::normal;
      else if (l == "attack") label = Label::attack;
    }
    if (!rec || (label_col && !label)) {
      ++st.skipped_rows;
      continue;
    }
    if (!out.records.empty()) {
      auto prev = out.records.back().timestamp.micros();
      if (rec->timestamp.micros() + kCsvRegressionToleranceMicros < prev)
        throw data_error(path.string() + ":" + std::to_string(line_no) + ": timestamp goes back more than 1 s");
      if (rec->timestamp.micros() < prev) ++st.timestamp_regressions;
    }
    out.records.push_back(*rec);
    if (label) out.labels.push_back(*label);
  }
  if (!have_header) throw data_error(path.string() + ": missing header row");
  if (stats) *stats = st;
  return out;
}

inline std::vector<PacketRecord> parse_csv(const std::filesystem::path& path, IngestStats* stats = nullptr) {
  return parse_labeled_csv(path, stats).records;
}

inline std::string csv_row(const PacketRecord& r) {
  std::string s = r.timestamp.to_string();
  s += ',';
  s += r.src.addr.to_string();
  s += ',';
  s += r.dst.addr.to_string();
  s += ',';
  s += std::to_string(r.src.port);
  s += ',';
  s += std::to_string(r.dst.port);
  s += ',';
  s += to_char(r.apci_type);
  s += ',';
  if (r.asdu_type_id) s += std::to_string(*r.asdu_type_id);
  s += ',';
  s += std::to_string(r.asdu_length);
  return s;
}

// Writes records (and labels, when given) in the dialect parse_csv reads.
// `metadata` lines are emitted first as '#' comments. Returns the row count.
inline std::size_t write_csv(std::span<const PacketRecord> records, const std::filesystem::path& path,
                             std::span<const Label> labels = {}, std::span<const std::string> metadata = {}) {
  if (!labels.empty() && labels.size() != records.size())
    throw usage_error("write_csv: label count does not match record count");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  for (const auto& m : metadata) out << "# " << m << '\n';
  for (std::size_t c = 0; c < kRecordColumns.size(); ++c) out << (c ? "," : "") << kRecordColumns[c];
  if (!labels.empty()) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << csv_row(records[i]);
    if (!labels.empty()) out << ',' << to_string(labels[i]);
    out << '\n';
  }
  out.flush();
  if (!out) throw io_error("write failed, " + path.string() + " may be incomplete");
  return records.size();
}

}  // namespace ieclof
