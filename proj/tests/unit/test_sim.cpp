#include <bitset>
#include <random>

#include "atlas/analytics/bcd.hpp"
#include "atlas/analytics/tlv.hpp"
#include "atlas/sim/backend.hpp"
#include "atlas/util/error.hpp"
#include "doctest.h"

using namespace atlas;
using namespace atlas::sim;

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

// Independent nibble-swap: digit pairs "ab" become byte 0xba, odd tail gets F.
Bytes reference_swap(const std::string& d) {
  Bytes out;
  for (std::size_t i = 0; i < d.size(); i += 2) {
    int lo = d[i] - '0';
    int hi = i + 1 < d.size() ? d[i + 1] - '0' : 0xF;
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

Apdu select(std::uint16_t fid) { return Apdu{0xA0, 0xA4, 0x00, 0x00, {std::uint8_t(fid >> 8), std::uint8_t(fid)}, {}}; }
Apdu read(std::uint16_t le) { return Apdu{0xA0, 0xB0, 0x00, 0x00, {}, le}; }

SimProfile example_profile() {
  Bytes ki(16, 0x11);
  return SimProfile::make("232033021142570", "89430300002133303509", ki, "AT");
}

}  // namespace

TEST_CASE("profile invariants and JSON round trip") {
  SimProfile p = example_profile();
  p.msisdn = "+436641234567";
  p.proactive_script.push_back(ProactiveEvent::after_n(3, Bytes{1, 2, 3}));
  p.proactive_script.push_back(ProactiveEvent{ProactiveEvent::Trigger::OnAuthenticate, 0,
                                              ProactiveEvent::Kind::NoOp, {}});
  CHECK_NOTHROW(p.validate());
  CHECK(profile_from_json(to_json(p)) == p);

  SimProfile bad = p;
  bad.iccid.back() = bad.iccid.back() == '0' ? '1' : '0';
  CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidProfile);
  bad = p;
  bad.files[paths::kEfImsi][2] ^= 0x10;
  CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidProfile);
  bad = p;
  bad.ki.pop_back();
  CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidProfile);
  bad = p;
  bad.files["3F00/XYZ"] = {1};
  CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidProfile);
  CHECK(code_of([] { profile_from_json(nlohmann::json::parse(R"({"imsi":"1"})")); }) == Errc::InvalidProfile);
}

TEST_CASE("SELECT and READ BINARY over EF_ICCID") {
  SimulatedSim sim(example_profile());
  CHECK(sim.exchange(select(0x3F00)).sw() == 0x9000);
  CHECK(sim.exchange(select(0x2FE2)).sw() == 0x9000);
  ResponseApdu r = sim.exchange(read(10));
  CHECK(r.sw() == 0x9000);
  CHECK(r.data == reference_swap("89430300002133303509"));
  CHECK(r.data.front() == 0x98);
  CHECK(r.data[1] == 0x34);
  CHECK(analytics::decode_bcd_swapped(r.data) == "89430300002133303509");

  CHECK(sim.exchange(select(0x7F99)).sw() == 0x6A82);
  CHECK(sim.exchange(read(11)).sw() == 0x6700);
  CHECK(sim.exchange(Apdu{0xA0, 0x77, 0, 0, {}, {}}).sw() == 0x6D00);
}

TEST_CASE("DF navigation, GET RESPONSE, STATUS and UPDATE BINARY") {
  SimulatedSim sim(example_profile());
  CHECK(sim.exchange(select(0x7F20)).sw() == 0x9000);
  CHECK(sim.exchange(select(0x6F07)).sw() == 0x9000);
  ResponseApdu info = sim.exchange(Apdu{0xA0, 0xC0, 0, 0, {}, 15});
  REQUIRE(info.data.size() == 15);
  CHECK(get_u16be(info.data.data() + 2) == 9);
  CHECK(get_u16be(info.data.data() + 4) == 0x6F07);
  ResponseApdu imsi = sim.exchange(read(9));
  CHECK(analytics::decode_ef_imsi(imsi.data) == "232033021142570");
  // Sibling EF in the same DF.
  CHECK(sim.exchange(select(0x6F7E)).sw() == 0x9000);
  CHECK(sim.exchange(Apdu{0xA0, 0xD6, 0, 0, {1, 2, 3, 4}, {}}).sw() == 0x9000);
  CHECK(sim.exchange(read(4)).data == Bytes{1, 2, 3, 4});
  CHECK(sim.exchange(select(0x6F07)).sw() == 0x9000);
  CHECK(sim.exchange(Apdu{0xA0, 0xD6, 0, 0, {1}, {}}).sw() == 0x6982);
  ResponseApdu st = sim.exchange(Apdu{0xA0, 0xF2, 0, 0, {}, 15});
  CHECK(get_u16be(st.data.data() + 4) == 0x7F20);
  sim.reset();
  CHECK(sim.exchange(read(1)).sw() == 0x6986);
}

TEST_CASE("proactive SMS is signaled until fetched exactly once") {
  SimProfile p = example_profile();
  Bytes payload = {0x40, 0x0A, 0x81, 0x01, 0xFF};
  p.proactive_script.push_back(ProactiveEvent::after_n(3, payload));
  SimulatedSim sim(p);
  const Bytes cmd = analytics::build_proactive_sms(payload);
  CHECK(sim.exchange(select(0x3F00)).sw() == 0x9000);
  CHECK(sim.exchange(select(0x2FE2)).sw() == 0x9000);
  ResponseApdu third = sim.exchange(read(10));
  CHECK(third.sw1 == 0x91);
  CHECK(third.sw2 == cmd.size());
  CHECK(third.data.size() == 10);
  CHECK(sim.exchange(select(0x3F00)).sw1 == 0x91);
  // Error statuses are not masked.
  CHECK(sim.exchange(select(0x7F99)).sw() == 0x6A82);
  ResponseApdu f = sim.exchange(Apdu{0xA0, 0x12, 0, 0, {}, static_cast<std::uint16_t>(cmd.size())});
  CHECK(f.sw() == 0x9000);
  CHECK(f.data == cmd);
  CHECK(analytics::extract_proactive_sms(analytics::parse_tlv(f.data)) == payload);
  CHECK(sim.exchange(select(0x3F00)).sw() == 0x9000);
  CHECK(sim.exchange(Apdu{0xA0, 0x12, 0, 0, {}, 16}).sw() == 0x6985);
}

TEST_CASE("OnAuthenticate event and AUTHENTICATE response") {
  SimProfile p = example_profile();
  p.proactive_script.push_back(ProactiveEvent::on_authenticate(Bytes{0xAB}));
  SimulatedSim sim(p);
  Bytes rand(16, 0x5A);
  CHECK(sim.exchange(select(0x7F20)).sw() == 0x9000);
  ResponseApdu r = sim.exchange(Apdu{0xA0, 0x88, 0, 0, rand, {}});
  CHECK(r.sw1 == 0x91);
  AuthResult want = authenticate_stub(p.ki, rand);
  REQUIRE(r.data.size() == 24);
  CHECK(Bytes(r.data.begin(), r.data.begin() + 8) == want.res);
  CHECK(Bytes(r.data.begin() + 8, r.data.end()) == want.session_key);
  CHECK(sim.exchange(Apdu{0xA0, 0x88, 0, 0, Bytes(15), {}}).sw() == 0x6700);
}

TEST_CASE("authenticate_stub") {
  AuthResult z = authenticate_stub(Bytes(16, 0), Bytes(16, 0));
  // Frozen from an independent HMAC-SHA256 computation.
  CHECK(to_hex(z.res) == "0155e62c59ebb2fc");
  CHECK(to_hex(z.session_key) == "c1329319310c2987b29662f4c1cb1450");
  CHECK(authenticate_stub(Bytes(16, 0), Bytes(16, 0)).res == z.res);
  CHECK(code_of([] { authenticate_stub(Bytes(16), Bytes(15)); }) == Errc::LengthError);
  CHECK(code_of([] { authenticate_stub(Bytes(17), Bytes(16)); }) == Errc::LengthError);

  // Avalanche: a single flipped input bit changes about half the output bits.
  std::mt19937_64 rng(9);
  double total = 0;
  int trials = 0;
  for (int t = 0; t < 64; ++t) {
    Bytes ki(16), rand(16);
    for (auto& b : ki) b = static_cast<std::uint8_t>(rng());
    for (auto& b : rand) b = static_cast<std::uint8_t>(rng());
    AuthResult base = authenticate_stub(ki, rand);
    for (int bit = 0; bit < 256; bit += 5) {
      Bytes k2 = ki, r2 = rand;
      if (bit < 128) k2[bit / 8] ^= static_cast<std::uint8_t>(1 << (bit % 8));
      else r2[(bit - 128) / 8] ^= static_cast<std::uint8_t>(1 << (bit % 8));
      AuthResult o = authenticate_stub(k2, r2);
      REQUIRE(o.res != base.res);
      REQUIRE(o.session_key != base.session_key);
      int diff = 0;
      for (int i = 0; i < 8; ++i) diff += static_cast<int>(std::bitset<8>(o.res[i] ^ base.res[i]).count());
      total += diff;
      ++trials;
    }
  }
  double mean = total / trials;
  CHECK(mean > 30.0);
  CHECK(mean < 34.0);
}

TEST_CASE("trace replay") {
  auto inner = std::make_shared<SimulatedSim>(example_profile());
  RecordingSim rec(inner);
  std::vector<Apdu> script = {select(0x3F00), select(0x2FE2), read(10), select(0x7F20),
                              select(0x6F07), read(9),       Apdu{0xA0, 0xF2, 0, 0, {}, 15}};
  for (const auto& a : script) rec.exchange(a);
  TraceReplaySim replay(rec.trace(), inner->atr());
  for (std::size_t i = 0; i < script.size(); ++i) CHECK(replay.exchange(script[i]) == rec.trace()[i].response);
  CHECK(replay.divergences() == 0);
  CHECK(code_of([&] { replay.exchange(select(0x3F00)); }) == Errc::TraceExhausted);

  TraceReplaySim out_of_order(rec.trace());
  // Matching is by header and Lc, so a READ where a SELECT is expected diverges.
  CHECK(out_of_order.exchange(read(10)).sw() == 0x6F00);
  CHECK(out_of_order.divergences() == 1);
  CHECK(code_of([] { TraceReplaySim({}); }) == Errc::PreconditionFailed);

  std::vector<Bytes> raw;
  for (const auto& e : rec.trace()) {
    raw.push_back(e.command.to_tpdu());
    raw.push_back(e.response.encode());
  }
  auto parsed = trace_from_raw_pairs(raw);
  REQUIRE(parsed.size() == rec.trace().size());
  CHECK(parsed[2].response == rec.trace()[2].response);
}

TEST_CASE("EF_ICCID round trip over generated profiles") {
  for (std::uint32_t i = 0; i < 500; ++i) {
    SimProfile p = make_test_profile("23203", i * 7919, "AT");
    REQUIRE_NOTHROW(p.validate());
    SimulatedSim sim(p);
    sim.exchange(select(0x2FE2));
    ResponseApdu r = sim.exchange(read(10));
    REQUIRE(analytics::decode_bcd_swapped(r.data) == p.iccid);
  }
}

TEST_CASE("backend totality under random APDUs") {
  SimProfile p = example_profile();
  p.proactive_script.push_back(ProactiveEvent::after_n(100, Bytes(200, 0x42)));
  SimulatedSim sim(p);
  std::mt19937_64 rng(77);
  const std::uint8_t ins_pool[] = {0xA4, 0xB0, 0xD6, 0xF2, 0xC0, 0x88, 0x12, 0x00, 0xFF};
  for (int i = 0; i < 10000; ++i) {
    Apdu a;
    a.cla = rng() % 4 ? 0xA0 : static_cast<std::uint8_t>(rng());
    a.ins = rng() % 3 ? ins_pool[rng() % std::size(ins_pool)] : static_cast<std::uint8_t>(rng());
    a.p1 = rng() % 2 ? 0 : static_cast<std::uint8_t>(rng());
    a.p2 = rng() % 2 ? 0 : static_cast<std::uint8_t>(rng());
    if (rng() % 2) {
      a.data.resize(1 + rng() % 20);
      for (auto& b : a.data) b = static_cast<std::uint8_t>(rng() % 3 ? 0x3F + (rng() % 0x40) : rng());
    }
    if (rng() % 2) a.le = static_cast<std::uint16_t>(1 + rng() % 256);
    ResponseApdu r;
    REQUIRE_NOTHROW(r = sim.exchange(a));
    REQUIRE(r.encode().size() >= 2);
  }
}
