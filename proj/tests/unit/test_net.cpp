#include <random>

#include "atlas/net/gsmtap.hpp"
#include "atlas/net/pcap.hpp"
#include "atlas/net/vif.hpp"
#include "atlas/util/error.hpp"
#include "doctest.h"

using namespace atlas;
using namespace atlas::net;

namespace {

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Internal;
}

WallTime at(std::int64_t us) { return WallTime{std::chrono::microseconds{us}}; }

ApduLogRecord rec(Direction d, Bytes raw, WallTime wall) {
  ApduLogRecord r;
  r.circuit_id = "c1";
  r.imsi = "232030000000001";
  r.direction = d;
  r.raw = std::move(raw);
  r.wall = wall;
  return r;
}

}  // namespace

TEST_CASE("empty GSMTAP pcap is the 24-byte global header") {
  Bytes f = write_gsmtap_pcap({});
  REQUIRE(f.size() == 24);
  CHECK(to_hex(f) == "d4c3b2a1020004000000000000000000ffff000001000000");
  CHECK(read_pcap(f).packets.empty());
  CHECK(read_pcap(f).linktype == 1);
}

TEST_CASE("single-record GSMTAP pcap golden bytes") {
  Bytes f = write_gsmtap_pcap({rec(Direction::ToSim, {0xA0, 0xA4, 0x00, 0x00, 0x02}, at(1'700'000'000'250'000))});
  CHECK(f.size() == 24 + 16 + (14 + 20 + 8 + 16 + 5));
  // Built independently with struct packing and an RFC 1071 checksum.
  CHECK(to_hex(f) ==
        "d4c3b2a1020004000000000000000000ffff00000100000000f1536590d003003f0000003f00000002000000000202"
        "00000000010800450000310000000040117cba7f0000017f00000112791279001d00000204040000000000000000"
        "0000000000a0a4000002");

  // Hand dissection at fixed offsets.
  const std::size_t eth = 24 + 16, ip = eth + 14, udp = ip + 20, gt = udp + 8;
  CHECK(get_u16be(&f[eth + 12]) == 0x0800);
  CHECK(f[ip + 9] == 17);
  CHECK(get_u16be(&f[udp + 2]) == 4729);
  CHECK(f[gt] == 0x02);
  CHECK(f[gt + 1] == 0x04);
  CHECK(f[gt + 2] == 0x04);
  for (std::size_t i = 3; i < 16; ++i) CHECK(f[gt + i] == 0);
}

TEST_CASE("timestamps and read-back") {
  std::vector<ApduLogRecord> in = {rec(Direction::ToSim, {0xA0, 0xF2, 0, 0, 0x16}, at(5'000'000)),
                                   rec(Direction::FromSim, {0x90, 0x00}, at(6'000'000))};
  Bytes f = write_gsmtap_pcap(in);
  PcapFile p = read_pcap(f);
  REQUIRE(p.packets.size() == 2);
  CHECK(p.packets[1].ts - p.packets[0].ts == std::chrono::seconds{1});
  auto back = read_gsmtap_pcap(f);
  REQUIRE(back.size() == 2);
  CHECK(back[0].raw == in[0].raw);
  CHECK(back[1].direction == Direction::FromSim);
  CHECK(back[1].wall == in[1].wall);
  CHECK(write_gsmtap_pcap(in) == f);
  Bytes cut(f.begin(), f.end() - 1);
  CHECK(code_of([&] { read_pcap(cut); }) == Errc::Truncated);
  Bytes bad = f;
  bad[0] = 0;
  CHECK(code_of([&] { read_pcap(bad); }) == Errc::ParseError);
}

TEST_CASE("jsonl round trip") {
  std::vector<ApduLogRecord> in = {rec(Direction::ToSim, {1, 2}, at(10)), rec(Direction::FromSim, {0x90, 0}, at(20))};
  in[1].mono = Nanos{12345};
  std::string text = write_jsonl(in);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(read_jsonl(text) == in);
}

TEST_CASE("frame build/parse for v4 and v6") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    PacketMeta m{i % 2 ? "2001:db8::1" : "10.0.0.1", i % 2 ? "2001:db8::53" : "100.64.0.1",
                 static_cast<std::uint16_t>(rng()), static_cast<std::uint16_t>(rng()),
                 i % 3 ? L4::Udp : L4::Tcp};
    Bytes payload(rng() % 1500);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    ParsedFrame f = parse_frame(build_frame(m, payload));
    CHECK(f.meta.src == m.src);
    CHECK(f.meta.dst == m.dst);
    CHECK(f.meta.sport == m.sport);
    CHECK(f.meta.dport == m.dport);
    CHECK(f.payload == payload);
  }
}

TEST_CASE("virtual interface attribution") {
  FakeClock clock;
  VirtualInterface vif("scn0", clock, 100);
  std::size_t sunk = 0;
  vif.set_sink([&](const CapturedPacket& p) { sunk += p.payload.size(); });
  auto flow = vif.open_flow("dns-internal", {"10.0.0.2", "10.0.0.1", 40000, 53, L4::Udp});
  flow.send(Bytes(250, 0x11));
  CHECK(vif.capture().size() == 3);
  CHECK(sunk == 250);
  CHECK(flow.bytes_sent() == 250);
  CHECK_NOTHROW(vif.verify_isolation());
  CHECK(read_pcap(vif.capture_pcap()).packets.size() == 3);

  vif.inject_unattributed({"10.0.0.2", "192.0.2.1", 123, 123, L4::Udp}, Bytes(48));
  CHECK(vif.unattributed() == 1);
  CHECK(code_of([&] { vif.verify_isolation(); }) == Errc::IsolationBreach);
}
