#pragma once

// Classic libpcap file reading (both byte orders, micro- and nanosecond
// timestamps) and extraction of IEC 104 records from Ethernet/IPv4/TCP.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ieclof/apci.hpp"
#include "ieclof/error.hpp"
#include "ieclof/types.hpp"

namespace ieclof {

inline constexpr std::uint16_t kIec104Port = 2404;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;

struct PcapPacket {
  Timestamp timestamp;
  std::uint32_t orig_len = 0;
  std::vector<std::uint8_t> data;  // captured bytes
};

class PcapReader {
public:
  explicit PcapReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) {
      if (!std::filesystem::exists(path)) throw usage_error("no such file: " + path.string());
      throw io_error("cannot open " + path.string());
    }
    std::array<std::uint8_t, 24> hdr{};
    if (!in_.read(reinterpret_cast<char*>(hdr.data()), hdr.size()))
      throw data_error(path.string() + ": truncated pcap global header");
    std::uint32_t magic = le32(hdr.data());
    switch (magic) {
      case 0xa1b2c3d4: swapped_ = false; nanos_ = false; break;
      case 0xd4c3b2a1: swapped_ = true; nanos_ = false; break;
      case 0xa1b23c4d: swapped_ = false; nanos_ = true; break;
      case 0x4d3cb2a1: swapped_ = true; nanos_ = true; break;
      default: throw data_error(path.string() + ": not a pcap file (bad magic)");
    }
    snaplen_ = u32(hdr.data() + 16);
    link_type_ = u32(hdr.data() + 20);
  }

  std::uint32_t link_type() const { return link_type_; }
  bool nanosecond() const { return nanos_; }

  // Returns false at end of file. A record whose body runs past the end of
  // the file counts as truncated and ends the read.
  bool next(PcapPacket& pkt) {
    std::array<std::uint8_t, 16> rh{};
    in_.read(reinterpret_cast<char*>(rh.data()), rh.size());
    if (in_.gcount() == 0) return false;
    if (in_.gcount() != static_cast<std::streamsize>(rh.size())) {
      ++truncated_;
      return false;
    }
    std::uint32_t sec = u32(rh.data());
    std::uint32_t frac = u32(rh.data() + 4);
    std::uint32_t incl = u32(rh.data() + 8);
    pkt.orig_len = u32(rh.data() + 12);
    if (incl > (1u << 26)) {
      ++truncated_;
      return false;
    }
    std::int64_t usec = nanos_ ? frac / 1000 : frac;
    pkt.timestamp = Timestamp::from_seconds_micros(sec, usec);
    pkt.data.resize(incl);
    in_.read(reinterpret_cast<char*>(pkt.data.data()), incl);
    if (in_.gcount() != static_cast<std::streamsize>(incl)) {
      ++truncated_;
      return false;
    }
    return true;
  }

  std::size_t truncated() const { return truncated_; }

private:
  static std::uint32_t le32(const std::uint8_t* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::uint32_t u32(const std::uint8_t* p) const {
    std::uint32_t v = le32(p);
    return swapped_ ? __builtin_bswap32(v) : v;
  }

  std::ifstream in_;
  bool swapped_ = false;
  bool nanos_ = false;
  std::uint32_t snaplen_ = 0;
  std::uint32_t link_type_ = 0;
  std::size_t truncated_ = 0;
};

struct IngestStats {
  std::size_t packets = 0;          // pcap records read
  std::size_t tcp_segments = 0;     // on the selected port
  std::size_t truncated = 0;        // skipped: capture shorter than headers claim
  std::size_t parse_errors = 0;     // APCI resynchronizations
  std::size_t retransmissions = 0;  // duplicate segments dropped
  std::size_t reordered = 0;        // segments held in the reorder buffer
  std::size_t gaps_skipped = 0;     // reorder buffer overflows
  std::size_t timestamp_regressions = 0;
  std::size_t skipped_rows = 0;     // CSV rows rejected

  std::size_t warnings() const {
    return truncated + parse_errors + gaps_skipped + timestamp_regressions + skipped_rows;
  }
};

struct PcapOptions {
  std::uint16_t port = kIec104Port;
  bool i_frames_only = false;
};

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
inline std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (p[1] << 16) | (p[2] << 8) | p[3];
}

struct TcpSegment {
  Endpoint src;
  Endpoint dst;
  std::uint32_t seq = 0;
  bool syn = false;
  std::span<const std::uint8_t> payload;
};

enum class Decode { ok, skip, truncated };

// Ethernet (optionally 802.1Q tagged) / IPv4 / TCP.
inline Decode decode_tcp(std::span<const std::uint8_t> frame, TcpSegment& seg) {
  std::size_t off = 12;
  if (frame.size() < off + 2) return Decode::truncated;
  std::uint16_t ethertype = be16(&frame[off]);
  off += 2;
  while (ethertype == 0x8100 || ethertype == 0x88a8) {
    if (frame.size() < off + 4) return Decode::truncated;
    ethertype = be16(&frame[off + 2]);
    off += 4;
  }
  if (ethertype != 0x0800) return Decode::skip;
  if (frame.size() < off + 20) return Decode::truncated;
  const std::uint8_t* ip = &frame[off];
  if ((ip[0] >> 4) != 4) return Decode::skip;
  std::size_t ihl = (ip[0] & 0x0f) * 4u;
  std::size_t total = be16(ip + 2);
  if (ihl < 20 || total < ihl) return Decode::skip;
  if (ip[9] != 6) return Decode::skip;
  if ((be16(ip + 6) & 0x3fff) != 0) return Decode::skip;  // fragments
  if (frame.size() < off + total) return Decode::truncated;
  const std::uint8_t* tcp = ip + ihl;
  std::size_t tcp_len = total - ihl;
  if (tcp_len < 20) return Decode::truncated;
  std::size_t doff = (tcp[12] >> 4) * 4u;
  if (doff < 20 || doff > tcp_len) return Decode::truncated;
  seg.src = {Ipv4{be32(ip + 12)}, be16(tcp)};
  seg.dst = {Ipv4{be32(ip + 16)}, be16(tcp + 2)};
  seg.seq = be32(tcp + 4);
  seg.syn = (tcp[13] & 0x02) != 0;
  seg.payload = std::span<const std::uint8_t>(tcp + doff, tcp_len - doff);
  return Decode::ok;
}

}  // namespace detail

// Streams IEC 104 records out of a capture. `sink` is called with each
// PacketRecord in capture order.
template <typename Sink>
IngestStats for_each_pcap_record(const std::filesystem::path& path, const PcapOptions& opt, Sink&& sink) {
  PcapReader reader(path);
  if (reader.link_type() != kLinkTypeEthernet)
    throw data_error(path.string() + ": unsupported link type " + std::to_string(reader.link_type()));

  struct Direction {
    TcpDirection tcp;
    ApciStream apci;
  };
  std::map<std::pair<Endpoint, Endpoint>, Direction> flows;
  IngestStats st;
  Timestamp last{};
  bool have_last = false;

  PcapPacket pkt;
  while (reader.next(pkt)) {
    ++st.packets;
    detail::TcpSegment seg;
    auto res = detail::decode_tcp(pkt.data, seg);
    if (res == detail::Decode::truncated) {
      ++st.truncated;
      continue;
    }
    if (res == detail::Decode::skip) continue;
    if (seg.src.port != opt.port && seg.dst.port != opt.port) continue;
    ++st.tcp_segments;

    Timestamp ts = pkt.timestamp;
    if (have_last && ts < last) {
      ++st.timestamp_regressions;
      ts = last;
    }
    last = ts;
    have_last = true;

    auto& dir = flows[{seg.src, seg.dst}];
    dir.tcp.segment(seg.seq, seg.syn, seg.payload, [&](std::span<const std::uint8_t> bytes, bool gap) {
      if (gap) dir.apci.reset();
      dir.apci.feed(bytes, [&](const ApciUnit& u) {
        if (opt.i_frames_only && u.type != ApciType::I) return;
        sink(PacketRecord{ts, seg.src, seg.dst, u.type, u.asdu_type_id, u.asdu_length});
      });
    });
  }
  st.truncated += reader.truncated();
  for (const auto& [key, dir] : flows) {
    st.parse_errors += dir.apci.parse_errors();
    st.retransmissions += dir.tcp.counters().retransmissions;
    st.reordered += dir.tcp.counters().reordered;
    st.gaps_skipped += dir.tcp.counters().gaps_skipped;
  }
  return st;
}

inline std::vector<PacketRecord> parse_pcap(const std::filesystem::path& path, const PcapOptions& opt = {},
                                            IngestStats* stats = nullptr) {
  std::vector<PacketRecord> out;
  auto st = for_each_pcap_record(path, opt, [&](PacketRecord r) { out.push_back(std::move(r)); });
  if (stats) *stats = st;
  return out;
}

}  // namespace ieclof
