#pragma once

// Writes classic pcap captures of IEC 104 traffic. Used to build fixtures and
// by the `generate --format pcap` subcommand.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "ieclof/apci.hpp"
#include "ieclof/error.hpp"
#include "ieclof/types.hpp"

namespace ieclof {

class PcapWriter {
public:
  enum class Flavor { micro_le, micro_be, nano_le, nano_be };

  explicit PcapWriter(const std::filesystem::path& path, Flavor flavor = Flavor::micro_le)
      : out_(path, std::ios::binary | std::ios::trunc), flavor_(flavor) {
    if (!out_) throw io_error("cannot write " + path.string());
    bool nano = flavor == Flavor::nano_le || flavor == Flavor::nano_be;
    put32(nano ? 0xa1b23c4d : 0xa1b2c3d4);
    put16(2);
    put16(4);
    put32(0);
    put32(0);
    put32(262144);
    put32(1);  // Ethernet
  }

  // Writes one raw frame. `orig_len` defaults to the frame size.
  void frame(Timestamp ts, std::span<const std::uint8_t> bytes, std::uint32_t orig_len = 0) {
    bool nano = flavor_ == Flavor::nano_le || flavor_ == Flavor::nano_be;
    put32(static_cast<std::uint32_t>(ts.micros() / 1'000'000));
    auto usec = static_cast<std::uint32_t>(ts.micros() % 1'000'000);
    put32(nano ? usec * 1000 + 999 : usec);  // sub-microsecond digits must be dropped on read
    put32(static_cast<std::uint32_t>(bytes.size()));
    put32(orig_len ? orig_len : static_cast<std::uint32_t>(bytes.size()));
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  // Ethernet/IPv4/TCP frame around `payload`.
  void tcp(Timestamp ts, Endpoint src, Endpoint dst, std::uint32_t seq, std::span<const std::uint8_t> payload,
           bool syn = false) {
    frame(ts, build_tcp_frame(src, dst, seq, payload, syn));
  }

  void flush() {
    out_.flush();
    if (!out_) throw io_error("pcap write failed");
  }

  static std::vector<std::uint8_t> build_tcp_frame(Endpoint src, Endpoint dst, std::uint32_t seq,
                                                   std::span<const std::uint8_t> payload, bool syn = false) {
    std::vector<std::uint8_t> f;
    f.reserve(54 + payload.size());
    auto b16 = [&](std::uint32_t v) {
      f.push_back(static_cast<std::uint8_t>(v >> 8));
      f.push_back(static_cast<std::uint8_t>(v));
    };
    auto b32 = [&](std::uint32_t v) {
      b16(v >> 16);
      b16(v & 0xffff);
    };
    // Ethernet
    for (int i = 0; i < 6; ++i) f.push_back(0x02);
    for (int i = 0; i < 6; ++i) f.push_back(0x04);
    b16(0x0800);
    // IPv4
    f.push_back(0x45);
    f.push_back(0);
    b16(static_cast<std::uint32_t>(20 + 20 + payload.size()));
    b16(0);
    b16(0x4000);  // DF
    f.push_back(64);
    f.push_back(6);
    b16(0);
    b32(src.addr.value);
    b32(dst.addr.value);
    // TCP
    b16(src.port);
    b16(dst.port);
    b32(seq);
    b32(0);
    f.push_back(0x50);
    f.push_back(syn ? 0x02 : 0x18);  // SYN or PSH|ACK
    b16(65535);
    b16(0);
    b16(0);
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
  }

private:
  bool big_endian() const { return flavor_ == Flavor::micro_be || flavor_ == Flavor::nano_be; }

  void put16(std::uint16_t v) {
    std::uint8_t b[2];
    if (big_endian()) {
      b[0] = static_cast<std::uint8_t>(v >> 8);
      b[1] = static_cast<std::uint8_t>(v);
    } else {
      b[0] = static_cast<std::uint8_t>(v);
      b[1] = static_cast<std::uint8_t>(v >> 8);
    }
    out_.write(reinterpret_cast<const char*>(b), 2);
  }
  void put32(std::uint32_t v) {
    if (big_endian()) {
      put16(static_cast<std::uint16_t>(v >> 16));
      put16(static_cast<std::uint16_t>(v));
    } else {
      put16(static_cast<std::uint16_t>(v));
      put16(static_cast<std::uint16_t>(v >> 16));
    }
  }

  std::ofstream out_;
  Flavor flavor_;
};

// Serializes a record stream as IEC 104 over TCP: one segment per record,
// with per-direction sequence numbers and I-frame counters.
class Iec104Capture {
public:
  explicit Iec104Capture(const std::filesystem::path& path, PcapWriter::Flavor flavor = PcapWriter::Flavor::micro_le)
      : writer_(path, flavor) {}

  void write(const PacketRecord& r) { write_batch(std::span(&r, 1)); }

  // All records go into a single TCP segment stamped with the first record's time.
  void write_batch(std::span<const PacketRecord> recs) {
    if (recs.empty()) return;
    std::vector<std::uint8_t> payload;
    auto& st = state(recs.front().src, recs.front().dst);
    for (const auto& r : recs) {
      auto bytes = encode_apci(r, st.send_count, 0);
      if (r.apci_type == ApciType::I) ++st.send_count;
      payload.insert(payload.end(), bytes.begin(), bytes.end());
    }
    writer_.tcp(recs.front().timestamp, recs.front().src, recs.front().dst, st.seq, payload);
    st.seq += static_cast<std::uint32_t>(payload.size());
  }

  void flush() { writer_.flush(); }

private:
  struct DirState {
    std::uint32_t seq = 1000;
    std::uint16_t send_count = 0;
  };
  DirState& state(Endpoint s, Endpoint d) { return dirs_[{s, d}]; }

  PcapWriter writer_;
  std::map<std::pair<Endpoint, Endpoint>, DirState> dirs_;
};

}  // namespace ieclof
