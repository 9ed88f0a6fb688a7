#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ieclof/apci.hpp"
#include "ieclof/csv.hpp"
#include "ieclof/pcap.hpp"
#include "ieclof/pcap_writer.hpp"
#include "test_util.hpp"

using namespace ieclof;
using ieclof::test::scratch_dir;

namespace {

const Endpoint kMaster{Ipv4{0x0a000001}, 50000};
const Endpoint kSlave{Ipv4{0x0a000002}, kIec104Port};
const Timestamp kT0 = Timestamp::from_seconds_micros(1544400000, 123456);

PacketRecord iframe(Timestamp t, Endpoint s, Endpoint d, std::uint8_t type, std::uint32_t len) {
  return {t, s, d, ApciType::I, type, len};
}

std::vector<PacketRecord> random_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<PacketRecord> out;
  std::int64_t t = kT0.micros();
  std::uniform_int_distribution<int> kind(0, 5), type(1, 127), len(1, 120), gap(0, 3'000'000);
  for (std::size_t i = 0; i < n; ++i) {
    t += gap(rng);
    bool fwd = kind(rng) % 2 == 0;
    Endpoint s = fwd ? kMaster : kSlave, d = fwd ? kSlave : kMaster;
    int k = kind(rng);
    if (k == 0) out.push_back({Timestamp{t}, s, d, ApciType::S, std::nullopt, 0});
    else if (k == 1) out.push_back({Timestamp{t}, s, d, ApciType::U, std::nullopt, 0});
    else out.push_back(iframe(Timestamp{t}, s, d, static_cast<std::uint8_t>(type(rng)), static_cast<std::uint32_t>(len(rng))));
  }
  return out;
}

void write_raw_segment(const std::filesystem::path& p, std::vector<std::uint8_t> payload) {
  PcapWriter w(p);
  w.tcp(kT0, kMaster, kSlave, 1, payload);
  w.flush();
}

}  // namespace

TEST(Types, ConversationKeyIsSymmetric) {
  EXPECT_EQ(Conversation(kMaster, kSlave), Conversation(kSlave, kMaster));
  EXPECT_EQ(Conversation(kMaster, kSlave).endpoint_a(), std::min(kMaster, kSlave));
  EXPECT_NE(Conversation(kMaster, kSlave), Conversation(kMaster, Endpoint{Ipv4{0x0a000003}, 2404}));
}

TEST(Types, TimestampText) {
  EXPECT_EQ(kT0.to_string(), "1544400000.123456");
  EXPECT_EQ(Timestamp::parse("1544400000.123456"), kT0);
  EXPECT_EQ(Timestamp::parse("12.5")->micros(), 12'500'000);
  EXPECT_EQ(Timestamp::parse("12")->micros(), 12'000'000);
  EXPECT_EQ(Timestamp::parse("1.1234569")->micros(), 1'123'456);
  EXPECT_FALSE(Timestamp::parse("-1.0"));
  EXPECT_FALSE(Timestamp::parse("1.x"));
  EXPECT_EQ(Ipv4::parse("192.168.11.248")->to_string(), "192.168.11.248");
  EXPECT_FALSE(Ipv4::parse("256.1.1.1"));
  EXPECT_FALSE(Ipv4::parse("1.2.3"));
}

TEST(Apci, DecodeFrameTypes) {
  std::vector<std::uint8_t> s{0x68, 0x04, 0x01, 0x00, 0x02, 0x00};
  auto u = ApciStream::decode(s);
  ASSERT_TRUE(u);
  EXPECT_EQ(u->type, ApciType::S);
  EXPECT_FALSE(u->asdu_type_id);
  std::vector<std::uint8_t> testfr{0x68, 0x04, 0x43, 0x00, 0x00, 0x00};
  EXPECT_EQ(ApciStream::decode(testfr)->type, ApciType::U);
  auto i = encode_apci(iframe(kT0, kMaster, kSlave, 36, 15));
  auto ui = ApciStream::decode(i);
  ASSERT_TRUE(ui);
  EXPECT_EQ(ui->type, ApciType::I);
  EXPECT_EQ(ui->asdu_type_id, 36);
  EXPECT_EQ(ui->asdu_length, 15u);
}

TEST(Apci, ResyncsAfterGarbage) {
  ApciStream st;
  std::vector<ApciUnit> got;
  std::vector<std::uint8_t> bytes{0x00, 0x13, 0x68, 0x04, 0x01, 0x00, 0x02, 0x00,  // garbage, S
                                  0x68, 0x02, 0x68, 0x04, 0x43, 0x00, 0x00, 0x00}; // bad length, U
  st.feed(bytes, [&](const ApciUnit& u) { got.push_back(u); });
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].type, ApciType::S);
  EXPECT_EQ(got[1].type, ApciType::U);
  EXPECT_EQ(st.parse_errors(), 2u);
}

TEST(Apci, SupervisoryWithWrongLengthIsAParseError) {
  ApciStream st;
  std::size_t n = 0;
  std::vector<std::uint8_t> bytes{0x68, 0x05, 0x01, 0x00, 0x02, 0x00, 0x00, 0x68, 0x04, 0x01, 0x00, 0x02, 0x00};
  st.feed(bytes, [&](const ApciUnit&) { ++n; });
  EXPECT_EQ(n, 1u);
  EXPECT_GE(st.parse_errors(), 1u);
}

TEST(ParsePcap, SingleSupervisoryFrame) {
  auto dir = scratch_dir();
  write_raw_segment(dir / "s.pcap", {0x68, 0x04, 0x01, 0x00, 0x02, 0x00});
  auto recs = parse_pcap(dir / "s.pcap");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].apci_type, ApciType::S);
  EXPECT_EQ(recs[0].asdu_length, 0u);
  EXPECT_FALSE(recs[0].asdu_type_id);
  EXPECT_EQ(recs[0].timestamp, kT0);
  EXPECT_EQ(recs[0].src, kMaster);
  EXPECT_EQ(recs[0].dst, kSlave);
}

TEST(ParsePcap, BackToBackIFramesShareTimestamp) {
  auto dir = scratch_dir();
  auto a = encode_apci(iframe(kT0, kMaster, kSlave, 100, 10));
  auto b = encode_apci(iframe(kT0, kMaster, kSlave, 45, 10), 1);
  a.insert(a.end(), b.begin(), b.end());
  write_raw_segment(dir / "ii.pcap", a);
  auto recs = parse_pcap(dir / "ii.pcap");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].timestamp, recs[1].timestamp);
  EXPECT_EQ(recs[0].asdu_type_id, 100);
  EXPECT_EQ(recs[1].asdu_type_id, 45);
}

TEST(ParsePcap, AllMagicVariantsAgree) {
  auto dir = scratch_dir();
  std::mt19937_64 rng(1);
  auto recs = random_records(rng, 50);
  using F = PcapWriter::Flavor;
  for (auto f : {F::micro_le, F::micro_be, F::nano_le, F::nano_be}) {
    auto path = dir / ("f" + std::to_string(static_cast<int>(f)) + ".pcap");
    {
      Iec104Capture cap(path, f);
      for (const auto& r : recs) cap.write(r);
      cap.flush();
    }
    auto got = parse_pcap(path);
    ASSERT_EQ(got.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(got[i], recs[i]) << i;
  }
}

TEST(ParsePcap, ErrorsOnBadFiles) {
  auto dir = scratch_dir();
  {
    std::ofstream(dir / "bad.pcap", std::ios::binary) << "this is not a capture file at all";
  }
  try {
    parse_pcap(dir / "bad.pcap");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
  {
    std::ofstream(dir / "short.pcap", std::ios::binary) << "\xd4\xc3";
  }
  EXPECT_THROW(parse_pcap(dir / "short.pcap"), Error);
  try {
    parse_pcap(dir / "missing.pcap");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
}

TEST(ParsePcap, TruncatedPacketsAreCountedAndSkipped) {
  auto dir = scratch_dir();
  auto path = dir / "t.pcap";
  {
    PcapWriter w(path);
    auto ok = encode_apci(iframe(kT0, kMaster, kSlave, 100, 10));
    w.tcp(kT0, kMaster, kSlave, 1, ok);
    auto frame = PcapWriter::build_tcp_frame(kMaster, kSlave, 1 + static_cast<std::uint32_t>(ok.size()), ok);
    frame.resize(40);  // snapped inside the TCP header
    w.frame(kT0, frame, 80);
    w.tcp(kT0, kMaster, kSlave, 1 + static_cast<std::uint32_t>(ok.size()), ok);
    w.flush();
  }
  {
    // Final record header promising more bytes than the file holds.
    std::ofstream f(path, std::ios::binary | std::ios::app);
    std::uint32_t hdr[4] = {1544400001, 0, 500, 500};
    f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    f << "short";
  }
  IngestStats st;
  auto recs = parse_pcap(path, {}, &st);
  EXPECT_EQ(recs.size(), 2u);
  EXPECT_EQ(st.truncated, 2u);
}

TEST(ParsePcap, RetransmissionsAreDeduplicated) {
  auto dir = scratch_dir();
  auto path = dir / "r.pcap";
  auto a = encode_apci(iframe(kT0, kMaster, kSlave, 100, 10));
  {
    PcapWriter w(path);
    w.tcp(kT0, kMaster, kSlave, 1, a);
    w.tcp(Timestamp{kT0.micros() + 200'000}, kMaster, kSlave, 1, a);
    w.tcp(Timestamp{kT0.micros() + 300'000}, kMaster, kSlave, 1 + static_cast<std::uint32_t>(a.size()), a);
    w.flush();
  }
  IngestStats st;
  auto recs = parse_pcap(path, {}, &st);
  EXPECT_EQ(recs.size(), 2u);
  EXPECT_EQ(st.retransmissions, 1u);
}

TEST(ParsePcap, OutOfOrderSegmentsAreReassembled) {
  auto dir = scratch_dir();
  auto path = dir / "o.pcap";
  auto a = encode_apci(iframe(kT0, kMaster, kSlave, 1, 10));
  auto b = encode_apci(iframe(kT0, kMaster, kSlave, 2, 10));
  auto c = encode_apci(iframe(kT0, kMaster, kSlave, 3, 10));
  auto sz = static_cast<std::uint32_t>(a.size());
  {
    PcapWriter w(path);
    w.tcp(kT0, kMaster, kSlave, 100, a);
    w.tcp(Timestamp{kT0.micros() + 2}, kMaster, kSlave, 100 + 2 * sz, c);
    w.tcp(Timestamp{kT0.micros() + 3}, kMaster, kSlave, 100 + sz, b);
    w.flush();
  }
  IngestStats st;
  auto recs = parse_pcap(path, {}, &st);
  ASSERT_EQ(recs.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(recs[i].asdu_type_id, i + 1);
  EXPECT_EQ(recs[2].timestamp.micros(), kT0.micros() + 3);
  EXPECT_EQ(st.reordered, 1u);
}

TEST(ParsePcap, ReorderOverflowSkipsTheGap) {
  auto dir = scratch_dir();
  auto path = dir / "gap.pcap";
  auto unit = encode_apci(iframe(kT0, kMaster, kSlave, 9, 10));
  auto sz = static_cast<std::uint32_t>(unit.size());
  {
    PcapWriter w(path);
    w.tcp(kT0, kMaster, kSlave, 0, unit);
    // Segment at seq sz is never captured; 65 later segments follow.
    for (std::uint32_t i = 2; i < 2 + TcpDirection::kReorderLimit + 1; ++i)
      w.tcp(Timestamp{kT0.micros() + i}, kMaster, kSlave, i * sz, unit);
    w.flush();
  }
  IngestStats st;
  auto recs = parse_pcap(path, {}, &st);
  EXPECT_EQ(st.gaps_skipped, 1u);
  EXPECT_EQ(recs.size(), 1u + TcpDirection::kReorderLimit + 1);
}

TEST(ParsePcap, PortFilterAndIFrameFilter) {
  auto dir = scratch_dir();
  auto path = dir / "p.pcap";
  Endpoint other_slave{Ipv4{0x0a000009}, 2405};
  {
    Iec104Capture cap(path);
    cap.write(iframe(kT0, kMaster, kSlave, 100, 10));
    cap.write({Timestamp{kT0.micros() + 1}, kSlave, kMaster, ApciType::S, std::nullopt, 0});
    cap.write(iframe(Timestamp{kT0.micros() + 2}, kMaster, other_slave, 100, 10));
    cap.flush();
  }
  EXPECT_EQ(parse_pcap(path).size(), 2u);
  EXPECT_EQ(parse_pcap(path, {.port = 2405}).size(), 1u);
  EXPECT_EQ(parse_pcap(path, {.port = kIec104Port, .i_frames_only = true}).size(), 1u);
}

TEST(ParseCsv, HeaderOnlyIsEmpty) {
  auto dir = scratch_dir();
  EXPECT_EQ(write_csv({}, dir / "e.csv"), 0u);
  IngestStats st;
  auto recs = parse_csv(dir / "e.csv", &st);
  EXPECT_TRUE(recs.empty());
  EXPECT_EQ(st.warnings(), 0u);
  std::ifstream in(dir / "e.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "timestamp,src_addr,dst_addr,src_port,dst_port,apci_type,asdu_type_id,asdu_length\n");
}

TEST(ParseCsv, InvalidRowsAreSkippedWithWarning) {
  auto dir = scratch_dir();
  std::ofstream(dir / "w.csv") << "timestamp,src_addr,dst_addr,src_port,dst_port,apci_type,asdu_type_id,asdu_length\n"
                                  "1.0,10.0.0.1,10.0.0.2,50000,2404,I,,10\n"
                                  "2.0,10.0.0.1,10.0.0.2,50000,2404,I,100,10\n"
                                  "3.0,10.0.0.1,10.0.0.2,50000,2404,S,7,0\n"
                                  "4.0,10.0.0.1,10.0.0.2,99999,2404,U,,0\n"
                                  "5.0,10.0.0.1,10.0.0.2,50000,2404,U,,0\n";
  IngestStats st;
  auto recs = parse_csv(dir / "w.csv", &st);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(st.skipped_rows, 3u);
  EXPECT_EQ(recs[1].apci_type, ApciType::U);
}

TEST(ParseCsv, MissingColumnIsFatal) {
  auto dir = scratch_dir();
  std::ofstream(dir / "m.csv") << "timestamp,src_addr,dst_addr,src_port,dst_port,apci_type,asdu_length\n";
  try {
    parse_csv(dir / "m.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("asdu_type_id"), std::string::npos);
  }
}

TEST(ParseCsv, TimestampRegression) {
  auto dir = scratch_dir();
  const char* hdr = "timestamp,src_addr,dst_addr,src_port,dst_port,apci_type,asdu_type_id,asdu_length\n";
  std::ofstream(dir / "ok.csv") << hdr << "10.5,10.0.0.1,10.0.0.2,1,2404,S,,0\n"
                                   "10.0,10.0.0.1,10.0.0.2,1,2404,S,,0\n";
  IngestStats st;
  EXPECT_EQ(parse_csv(dir / "ok.csv", &st).size(), 2u);
  EXPECT_EQ(st.timestamp_regressions, 1u);
  std::ofstream(dir / "bad.csv") << hdr << "12.0,10.0.0.1,10.0.0.2,1,2404,S,,0\n"
                                    "10.0,10.0.0.1,10.0.0.2,1,2404,S,,0\n";
  EXPECT_THROW(parse_csv(dir / "bad.csv"), Error);
}

TEST(ParseCsv, ReorderedColumnsMetadataAndLabels) {
  auto dir = scratch_dir();
  std::ofstream(dir / "l.csv") << "# seed=4\n"
                                  "label,asdu_length,asdu_type_id,apci_type,dst_port,src_port,dst_addr,src_addr,timestamp,x\n"
                                  "attack,10,45,I,2404,50000,10.0.0.2,10.0.0.1,1.000001,zz\n"
                                  "normal,0,,S,50000,2404,10.0.0.1,10.0.0.2,2.5,zz\n";
  auto set = parse_labeled_csv(dir / "l.csv");
  ASSERT_EQ(set.records.size(), 2u);
  EXPECT_EQ(set.labels, (std::vector<Label>{Label::attack, Label::normal}));
  EXPECT_EQ(set.records[0].timestamp.micros(), 1'000'001);
  EXPECT_EQ(set.records[0].src, kMaster);
  EXPECT_EQ(set.records[1].src, kSlave);
}

TEST(WriteCsv, RoundTripProperty) {
  auto dir = scratch_dir();
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto recs = random_records(rng, static_cast<std::size_t>(trial) * 37);
    std::vector<Label> labels;
    for (std::size_t i = 0; i < recs.size(); ++i) labels.push_back(i % 7 == 0 ? Label::attack : Label::normal);
    EXPECT_EQ(write_csv(recs, dir / "rt.csv", labels), recs.size());
    auto back = parse_labeled_csv(dir / "rt.csv");
    EXPECT_EQ(back.records, recs);
    if (!recs.empty()) {
      EXPECT_EQ(back.labels, labels);
    }
  }
}

TEST(WriteCsv, SyntheticFixtureRowCount) {
  auto dir = scratch_dir();
  std::mt19937_64 rng(8);
  auto recs = random_records(rng, 1000);
  EXPECT_EQ(write_csv(recs, dir / "f.csv"), 1000u);
  EXPECT_EQ(parse_csv(dir / "f.csv").size(), 1000u);
}

TEST(WriteCsv, UnwritablePathFails) {
  auto dir = scratch_dir();
  EXPECT_THROW(write_csv({}, dir / "no" / "such" / "dir.csv"), Error);
}

TEST(RoundTrip, PcapToCsvToRecords) {
  auto dir = scratch_dir();
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto recs = random_records(rng, 200);
    {
      Iec104Capture cap(dir / "g.pcap");
      for (const auto& r : recs) cap.write(r);
      cap.flush();
    }
    auto parsed = parse_pcap(dir / "g.pcap");
    write_csv(parsed, dir / "g.csv");
    EXPECT_EQ(parse_csv(dir / "g.csv"), parsed);
    EXPECT_EQ(parsed, recs);
  }
}

// Any segmentation of the same byte stream yields the same units.
TEST(Reassembly, BoundaryInvariance) {
  auto dir = scratch_dir();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto recs = random_records(rng, 40);
    std::vector<std::uint8_t> stream;
    for (auto& r : recs) {
      r.timestamp = kT0;
      r.src = kMaster;
      r.dst = kSlave;
      auto b = encode_apci(r);
      stream.insert(stream.end(), b.begin(), b.end());
    }
    auto path = dir / "seg.pcap";
    {
      PcapWriter w(path);
      std::uniform_int_distribution<std::size_t> cut(1, 40);
      std::size_t off = 0;
      while (off < stream.size()) {
        std::size_t len = std::min(cut(rng), stream.size() - off);
        w.tcp(kT0, kMaster, kSlave, 5000 + static_cast<std::uint32_t>(off),
              std::span<const std::uint8_t>(stream).subspan(off, len));
        off += len;
      }
      w.flush();
    }
    IngestStats st;
    EXPECT_EQ(parse_pcap(path, {}, &st), recs);
    EXPECT_EQ(st.parse_errors, 0u);
  }
}
