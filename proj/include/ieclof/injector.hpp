#pragma once

// Synthetic master/slave IEC 104 traffic and labeled attack emulation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ieclof/csv.hpp"
#include "ieclof/error.hpp"
#include "ieclof/pcap.hpp"
#include "ieclof/types.hpp"

namespace ieclof {

struct NormalPattern {
  double period = 1.0;          // seconds between consecutive packets
  double jitter_fraction = 0.0; // each gap is period * (1 + u), u ~ U[-jitter, +jitter]
  std::size_t count = 0;        // packets
  std::uint64_t seed = 0;
  Endpoint master{Ipv4{0xc0a80b01}, 49152};      // 192.168.11.1
  Endpoint slave{Ipv4{0xc0a80bf8}, kIec104Port};  // 192.168.11.248
  Timestamp start = Timestamp::from_seconds_micros(1544400000, 0);
};

// Interrogation command (type 100) and measured-value reply (type 13).
inline constexpr std::uint8_t kRequestType = 100;
inline constexpr std::uint8_t kReplyType = 13;
inline constexpr std::uint8_t kInjectedType = 45;  // single command
inline constexpr std::uint32_t kRequestAsduLen = 10;
inline constexpr std::uint32_t kReplyAsduLen = 14;

// Deterministic for a fixed seed. Directions alternate master -> slave -> master.
inline std::vector<PacketRecord> generate_normal(const NormalPattern& p) {
  if (!(p.period > 0.0) || !std::isfinite(p.period)) throw usage_error("period must be positive");
  if (!(p.jitter_fraction >= 0.0 && p.jitter_fraction < 1.0)) throw usage_error("jitter must lie in [0, 1)");
  if (p.count < 2) throw usage_error("count must be at least 2");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> jitter(-p.jitter_fraction, p.jitter_fraction);
  std::vector<PacketRecord> out;
  out.reserve(p.count);
  std::int64_t t = p.start.micros();
  const double period_us = p.period * 1e6;
  for (std::size_t i = 0; i < p.count; ++i) {
    if (i > 0) {
      double u = p.jitter_fraction > 0.0 ? jitter(rng) : 0.0;
      t += std::max<std::int64_t>(0, std::llround(period_us * (1.0 + u)));
    }
    bool request = i % 2 == 0;
    out.push_back(PacketRecord{Timestamp{t}, request ? p.master : p.slave, request ? p.slave : p.master,
                               ApciType::I, request ? kRequestType : kReplyType,
                               request ? kRequestAsduLen : kReplyAsduLen});
  }
  return out;
}

enum class AttackKind { flood, delay, injection, outage };

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::flood: return "flood";
    case AttackKind::delay: return "delay";
    case AttackKind::injection: return "injection";
    case AttackKind::outage: return "outage";
  }
  return "?";
}

inline std::optional<AttackKind> attack_kind_from(std::string_view s) {
  if (s == "flood") return AttackKind::flood;
  if (s == "delay") return AttackKind::delay;
  if (s == "injection") return AttackKind::injection;
  if (s == "outage") return AttackKind::outage;
  return std::nullopt;
}

// Positions are record indices. Interval j is the gap between record j-1 and
// record j, so the first usable position is 1.
//
//   flood      each interval j in [start, start+duration) receives
//              round(magnitude) extra packets at random times inside it
//   delay      record j in the range arrives magnitude seconds later relative
//              to its predecessor; the shift accumulates and carries over to
//              every later record
//   injection  one foreign command per interval, magnitude seconds after
//              record j-1 (capped at record j)
//   outage     records arriving within magnitude seconds after record
//              start-1 are dropped; `duration` is not used
struct AttackScenario {
  AttackKind kind = AttackKind::flood;
  std::size_t start = 1;
  std::size_t duration = 1;
  double magnitude = 1.0;
  std::uint64_t seed = 0;

  std::vector<std::string> echo() const {
    return {std::string("attack_kind=") + to_string(kind), "attack_start=" + std::to_string(start),
            "attack_duration=" + std::to_string(duration), "attack_magnitude=" + std::to_string(magnitude),
            "attack_seed=" + std::to_string(seed)};
  }
};

inline void check_scenario(const AttackScenario& s, std::size_t n) {
  if (s.duration < 1) throw usage_error("scenario duration must be at least 1");
  if (!(s.magnitude > 0.0) || !std::isfinite(s.magnitude)) throw usage_error("scenario magnitude must be positive");
  if (s.start < 1) throw usage_error("scenario start must be at least 1");
  std::size_t last = s.kind == AttackKind::outage ? s.start + 1 : s.start + s.duration;
  if (last > n)
    throw usage_error("scenario range [" + std::to_string(s.start) + ", " + std::to_string(last) +
                      ") exceeds the " + std::to_string(n) + "-record stream");
  if (s.kind == AttackKind::flood && std::llround(s.magnitude) < 1)
    throw usage_error("flood magnitude must round to at least one packet");
}

// Applies one scenario. Unlabeled input is treated as all normal.
inline RecordSet inject(const RecordSet& in, const AttackScenario& s) {
  const auto& rec = in.records;
  const std::size_t n = rec.size();
  check_scenario(s, n);
  auto label_of = [&](std::size_t i) { return in.labeled() ? in.labels[i] : Label::normal; };
  RecordSet out;
  out.records.reserve(n);
  out.labels.reserve(n);
  auto push = [&](const PacketRecord& r, Label l) {
    out.records.push_back(r);
    out.labels.push_back(l);
  };
  const std::int64_t mag_us = std::llround(s.magnitude * 1e6);

  switch (s.kind) {
    case AttackKind::flood: {
      std::mt19937_64 rng(s.seed);
      const auto extra = static_cast<std::size_t>(std::llround(s.magnitude));
      for (std::size_t j = 0; j < n; ++j) {
        if (j >= s.start && j < s.start + s.duration) {
          std::int64_t lo = rec[j - 1].timestamp.micros();
          std::int64_t hi = rec[j].timestamp.micros();
          std::uniform_int_distribution<std::int64_t> when(lo, hi);
          std::vector<std::int64_t> times(extra);
          for (auto& t : times) t = when(rng);
          std::sort(times.begin(), times.end());
          for (auto t : times) {
            PacketRecord r = rec[j - 1];
            r.timestamp = Timestamp{t};
            push(r, Label::attack);
          }
        }
        push(rec[j], label_of(j));
      }
      break;
    }
    case AttackKind::delay: {
      std::int64_t shift = 0;
      for (std::size_t j = 0; j < n; ++j) {
        bool hit = j >= s.start && j < s.start + s.duration;
        if (hit) shift += mag_us;
        PacketRecord r = rec[j];
        r.timestamp = Timestamp{r.timestamp.micros() + shift};
        push(r, hit ? Label::attack : label_of(j));
      }
      break;
    }
    case AttackKind::injection: {
      for (std::size_t j = 0; j < n; ++j) {
        if (j >= s.start && j < s.start + s.duration) {
          PacketRecord r = rec[j - 1];
          r.timestamp = Timestamp{std::min(rec[j - 1].timestamp.micros() + mag_us, rec[j].timestamp.micros())};
          r.apci_type = ApciType::I;
          r.asdu_type_id = kInjectedType;
          r.asdu_length = kRequestAsduLen;
          push(r, Label::attack);
        }
        push(rec[j], label_of(j));
      }
      break;
    }
    case AttackKind::outage: {
      std::int64_t until = rec[s.start - 1].timestamp.micros() + mag_us;
      std::size_t j = 0;
      for (; j < s.start; ++j) push(rec[j], label_of(j));
      while (j < n && rec[j].timestamp.micros() < until) ++j;
      if (j == n) throw usage_error("outage runs past the end of the stream");
      push(rec[j], Label::attack);
      for (++j; j < n; ++j) push(rec[j], label_of(j));
      break;
    }
  }
  return out;
}

inline RecordSet inject(const std::vector<PacketRecord>& records, const AttackScenario& s) {
  return inject(RecordSet{records, {}}, s);
}

}  // namespace ieclof
