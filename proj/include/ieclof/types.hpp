#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>

namespace ieclof {

// Capture time in whole microseconds since the Unix epoch.
class Timestamp {
public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t micros) : micros_(micros) {}

  static constexpr Timestamp from_seconds_micros(std::int64_t sec, std::int64_t usec) {
    return Timestamp{sec * 1'000'000 + usec};
  }

  constexpr std::int64_t micros() const { return micros_; }
  constexpr double seconds() const { return static_cast<double>(micros_) / 1e6; }

  // Difference in seconds.
  friend constexpr double operator-(Timestamp a, Timestamp b) {
    return static_cast<double>(a.micros_ - b.micros_) / 1e6;
  }
  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;

  // Decimal seconds with exactly six fractional digits, e.g. "1544400000.000250".
  std::string to_string() const {
    std::int64_t sec = micros_ / 1'000'000;
    std::int64_t frac = micros_ % 1'000'000;
    std::string f = std::to_string(frac);
    return std::to_string(sec) + "." + std::string(6 - f.size(), '0') + f;
  }

  // Parses decimal seconds without going through floating point. Digits past
  // the sixth fractional place are truncated.
  static std::optional<Timestamp> parse(std::string_view s) {
    if (s.empty()) return std::nullopt;
    auto dot = s.find('.');
    std::string_view whole = s.substr(0, dot);
    std::int64_t sec = 0;
    if (whole.empty()) return std::nullopt;
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), sec);
    if (ec != std::errc{} || p != whole.data() + whole.size() || sec < 0) return std::nullopt;
    std::int64_t usec = 0;
    if (dot != std::string_view::npos) {
      std::string_view frac = s.substr(dot + 1);
      int digits = 0;
      for (char c : frac) {
        if (c < '0' || c > '9') return std::nullopt;
        if (digits < 6) {
          usec = usec * 10 + (c - '0');
          ++digits;
        }
      }
      for (; digits < 6; ++digits) usec *= 10;
    }
    return from_seconds_micros(sec, usec);
  }

private:
  std::int64_t micros_ = 0;
};

// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(Ipv4, Ipv4) = default;

  std::string to_string() const {
    return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xff) + "." +
           std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
  }

  static std::optional<Ipv4> parse(std::string_view s) {
    std::uint32_t out = 0;
    const char* p = s.data();
    const char* end = s.data() + s.size();
    for (int i = 0; i < 4; ++i) {
      unsigned octet = 0;
      auto [next, ec] = std::from_chars(p, end, octet);
      if (ec != std::errc{} || octet > 255 || next == p) return std::nullopt;
      out = (out << 8) | octet;
      p = next;
      if (i < 3) {
        if (p == end || *p != '.') return std::nullopt;
        ++p;
      }
    }
    if (p != end) return std::nullopt;
    return Ipv4{out};
  }
};

struct Endpoint {
  Ipv4 addr;
  std::uint16_t port = 0;

  friend constexpr auto operator<=>(const Endpoint&, const Endpoint&) = default;

  std::string to_string() const { return addr.to_string() + ":" + std::to_string(port); }
};

// APCI frame format, from the low bits of the first control octet.
enum class ApciType : std::uint8_t { I, S, U };

inline char to_char(ApciType t) {
  switch (t) {
    case ApciType::I: return 'I';
    case ApciType::S: return 'S';
    case ApciType::U: return 'U';
  }
  return '?';
}

inline std::optional<ApciType> apci_type_from(std::string_view s) {
  if (s == "I") return ApciType::I;
  if (s == "S") return ApciType::S;
  if (s == "U") return ApciType::U;
  return std::nullopt;
}

// One IEC 104 application unit (APCI plus optional ASDU) as seen on the wire.
struct PacketRecord {
  Timestamp timestamp;
  Endpoint src;
  Endpoint dst;
  ApciType apci_type = ApciType::I;
  std::optional<std::uint8_t> asdu_type_id;  // present iff apci_type == I
  std::uint32_t asdu_length = 0;             // 0 for S and U frames

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;

  bool valid() const {
    if (timestamp.micros() < 0) return false;
    if (apci_type == ApciType::I) return asdu_type_id.has_value();
    return !asdu_type_id.has_value() && asdu_length == 0;
  }
};

enum class Label : std::uint8_t { normal, attack };

inline const char* to_string(Label l) { return l == Label::attack ? "attack" : "normal"; }

// Bidirectional channel key. Endpoints are stored smaller first, so the key
// does not depend on packet direction.
class Conversation {
public:
  Conversation() = default;
  Conversation(Endpoint x, Endpoint y) : a_(std::min(x, y)), b_(std::max(x, y)) {}

  static Conversation of(const PacketRecord& r) { return {r.src, r.dst}; }

  // Pseudo-conversation used when all traffic is merged into one series.
  static Conversation merged() { return {}; }
  bool is_merged() const { return a_ == Endpoint{} && b_ == Endpoint{}; }

  const Endpoint& endpoint_a() const { return a_; }
  const Endpoint& endpoint_b() const { return b_; }

  friend auto operator<=>(const Conversation&, const Conversation&) = default;

  std::string to_string() const {
    if (is_merged()) return "all";
    return a_.to_string() + "<->" + b_.to_string();
  }

private:
  Endpoint a_;
  Endpoint b_;
};

}  // namespace ieclof
