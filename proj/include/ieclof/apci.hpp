#pragma once

// IEC 104 transport framing: splitting a TCP byte stream into APCI units and
// reassembling one direction of a TCP connection from captured segments.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ieclof/types.hpp"

namespace ieclof {

inline constexpr std::uint8_t kApciStart = 0x68;
inline constexpr std::size_t kApciHeaderLen = 6;  // start, length, 4 control octets
inline constexpr std::size_t kControlLen = 4;
inline constexpr std::size_t kMaxApduLen = 253;   // value of the length octet

struct ApciUnit {
  ApciType type = ApciType::I;
  std::optional<std::uint8_t> asdu_type_id;
  std::uint32_t asdu_length = 0;
};

// Incremental APCI splitter for one direction of a stream. Bytes may arrive
// in arbitrary chunks; units are reported as soon as they are complete.
class ApciStream {
public:
  template <typename Sink>
  void feed(std::span<const std::uint8_t> bytes, Sink&& sink) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
    std::size_t pos = 0;
    while (pos < buf_.size()) {
      if (buf_[pos] != kApciStart) {
        pos = resync(pos);
        continue;
      }
      if (buf_.size() - pos < 2) break;
      std::size_t len = buf_[pos + 1];
      if (len < kControlLen || len > kMaxApduLen) {
        pos = resync(pos + 1);
        continue;
      }
      if (buf_.size() - pos < 2 + len) break;
      auto unit = decode(std::span(buf_).subspan(pos, 2 + len));
      if (!unit) {
        pos = resync(pos + 1);
        continue;
      }
      sink(*unit);
      pos += 2 + len;
    }
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos));
  }

  // Drops any partially buffered unit, e.g. after a sequence gap.
  void reset() { buf_.clear(); }

  std::size_t parse_errors() const { return parse_errors_; }
  std::size_t buffered() const { return buf_.size(); }

  // Decodes one complete frame (start octet through the last ASDU octet).
  static std::optional<ApciUnit> decode(std::span<const std::uint8_t> frame) {
    if (frame.size() < kApciHeaderLen || frame[0] != kApciStart) return std::nullopt;
    std::size_t len = frame[1];
    if (frame.size() != 2 + len) return std::nullopt;
    std::uint8_t cf1 = frame[2];
    ApciUnit u;
    if ((cf1 & 0x01) == 0) {
      if (len <= kControlLen) return std::nullopt;
      u.type = ApciType::I;
      u.asdu_type_id = frame[kApciHeaderLen];
      u.asdu_length = static_cast<std::uint32_t>(len - kControlLen);
    } else {
      if (len != kControlLen) return std::nullopt;
      u.type = (cf1 & 0x03) == 0x01 ? ApciType::S : ApciType::U;
    }
    return u;
  }

private:
  // Skips to the next start octet at or after `from`; counts one error.
  std::size_t resync(std::size_t from) {
    ++parse_errors_;
    auto it = std::find(buf_.begin() + static_cast<std::ptrdiff_t>(from), buf_.end(), kApciStart);
    return static_cast<std::size_t>(it - buf_.begin());
  }

  std::vector<std::uint8_t> buf_;
  std::size_t parse_errors_ = 0;
};

// Encodes a record back into wire bytes. Sequence numbers in the control
// field are arbitrary; the ASDU body after the type id is zero filled.
inline std::vector<std::uint8_t> encode_apci(const PacketRecord& r, std::uint16_t send_seq = 0,
                                             std::uint16_t recv_seq = 0) {
  std::vector<std::uint8_t> out{kApciStart, 0, 0, 0, 0, 0};
  switch (r.apci_type) {
    case ApciType::I: {
      std::uint32_t asdu_len = std::max<std::uint32_t>(r.asdu_length, 1);
      asdu_len = std::min<std::uint32_t>(asdu_len, kMaxApduLen - kControlLen);
      out[1] = static_cast<std::uint8_t>(kControlLen + asdu_len);
      out[2] = static_cast<std::uint8_t>((send_seq << 1) & 0xfe);
      out[3] = static_cast<std::uint8_t>(send_seq >> 7);
      out[4] = static_cast<std::uint8_t>((recv_seq << 1) & 0xfe);
      out[5] = static_cast<std::uint8_t>(recv_seq >> 7);
      out.push_back(r.asdu_type_id.value_or(0));
      out.resize(kApciHeaderLen + asdu_len, 0);
      break;
    }
    case ApciType::S:
      out[1] = kControlLen;
      out[2] = 0x01;
      out[4] = static_cast<std::uint8_t>((recv_seq << 1) & 0xfe);
      out[5] = static_cast<std::uint8_t>(recv_seq >> 7);
      break;
    case ApciType::U:
      out[1] = kControlLen;
      out[2] = 0x43;  // TESTFR act
      break;
  }
  return out;
}

// Per-direction TCP reassembly in capture order with a bounded reorder
// buffer. Retransmissions are dropped; overlaps are trimmed.
class TcpDirection {
public:
  static constexpr std::size_t kReorderLimit = 64;

  struct Counters {
    std::size_t retransmissions = 0;
    std::size_t reordered = 0;
    std::size_t gaps_skipped = 0;
  };

  // `deliver` receives contiguous stream bytes in order.
  template <typename Deliver>
  void segment(std::uint32_t seq, bool syn, std::span<const std::uint8_t> payload, Deliver&& deliver) {
    if (syn) {
      initialized_ = true;
      next_seq_ = seq + 1;
      pending_.clear();
      return;
    }
    if (payload.empty()) return;
    if (!initialized_) {
      initialized_ = true;
      next_seq_ = seq;
    }
    std::int32_t ahead = static_cast<std::int32_t>(seq - next_seq_);
    if (ahead > 0) {
      if (pending_.size() >= kReorderLimit) {
        // Give up on the missing bytes and continue from the oldest held segment.
        ++counters_.gaps_skipped;
        gap_ = true;
        auto oldest = std::min_element(pending_.begin(), pending_.end(), [&](const auto& a, const auto& b) {
          return static_cast<std::int32_t>(a.seq - next_seq_) < static_cast<std::int32_t>(b.seq - next_seq_);
        });
        next_seq_ = oldest->seq;
        drain(deliver);
        segment(seq, false, payload, deliver);
        return;
      }
      for (const auto& p : pending_) {
        if (p.seq == seq && p.bytes.size() == payload.size()) {
          ++counters_.retransmissions;
          return;
        }
      }
      ++counters_.reordered;
      pending_.push_back({seq, {payload.begin(), payload.end()}});
      return;
    }
    std::size_t skip = static_cast<std::size_t>(-static_cast<std::int64_t>(ahead));
    if (skip >= payload.size()) {
      ++counters_.retransmissions;
      return;
    }
    emit(payload.subspan(skip), deliver);
    drain(deliver);
  }

  // True once since the last call if bytes were lost; callers drop partial units.
  bool take_gap() { return std::exchange(gap_, false); }

  const Counters& counters() const { return counters_; }

private:
  struct Pending {
    std::uint32_t seq;
    std::vector<std::uint8_t> bytes;
  };

  template <typename Deliver>
  void emit(std::span<const std::uint8_t> bytes, Deliver& deliver) {
    next_seq_ += static_cast<std::uint32_t>(bytes.size());
    deliver(bytes, take_gap());
  }

  template <typename Deliver>
  void drain(Deliver& deliver) {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (auto it = pending_.begin(); it != pending_.end(); ++it) {
        std::int32_t ahead = static_cast<std::int32_t>(it->seq - next_seq_);
        if (ahead > 0) continue;
        std::size_t skip = static_cast<std::size_t>(-static_cast<std::int64_t>(ahead));
        Pending p = std::move(*it);
        pending_.erase(it);
        if (skip < p.bytes.size()) emit(std::span<const std::uint8_t>(p.bytes).subspan(skip), deliver);
        progressed = true;
        break;
      }
    }
  }

  bool initialized_ = false;
  bool gap_ = false;
  std::uint32_t next_seq_ = 0;
  std::vector<Pending> pending_;
  Counters counters_;
};

}  // namespace ieclof
