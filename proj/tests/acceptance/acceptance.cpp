// Runs the acceptance criteria and prints one PASS/FAIL line each.
// Usage: acceptance [n ...]   (no arguments runs all ten)

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "atlas/analytics/bcd.hpp"
#include "atlas/analytics/scan.hpp"
#include "atlas/iso7816/atr.hpp"
#include "atlas/iso7816/pps.hpp"
#include "atlas/iso7816/timing.hpp"
#include "atlas/metering/billing.hpp"
#include "atlas/metering/billing_api.hpp"
#include "atlas/metering/encoding.hpp"
#include "atlas/metering/ipclass.hpp"
#include "atlas/metering/scenario.hpp"
#include "atlas/mgmt/broker.hpp"
#include "atlas/net/gsmtap.hpp"
#include "atlas/net/pcap.hpp"
#include "atlas/probe/measurement.hpp"
#include "atlas/probe/modem.hpp"
#include "atlas/provider/provider.hpp"
#include "atlas/sim/profile.hpp"
#include "atlas/tone/tone.hpp"
#include "atlas/tunnel/client.hpp"
#include "atlas/tunnel/frame.hpp"
#include "test_support.hpp"

using namespace atlas;
using namespace std::chrono_literals;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void need(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

template <class F>
std::optional<Errc> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("atlas_accept_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kToken = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";

// Provider with one SIM, a billing desk on a fake clock and an operator in
// `visited`; the tunnel is attached on construction.
struct Desk {
  Desk(const std::string& scenario_file, const std::string& plmn, const std::string& home, const std::string& visited)
      : billing(billing_clock), core(billing), svc(make_config(), system_clock()) {
    profile = sim::make_test_profile(plmn, 7, home);
    svc.register_sim(profile);
    svc.issue_token(profile.imsi, kToken);
    svc.start();
    billing.provision(profile.imsi, metering::load_scenario(test::config_path("scenarios/" + scenario_file)),
                      "key-7", profile.ki);
    op = std::make_unique<probe::SimulatedOperator>(core, core, visited);
    tc = std::make_unique<tunnel::TunnelClient>(net::Endpoint{"127.0.0.1", svc.tunnel_port()}, system_clock());
    tc->attach(profile.imsi, from_hex(kToken), "probe-accept");
  }
  ~Desk() {
    tc->detach();
    svc.stop();
  }
  static provider::ProviderConfig make_config() {
    provider::ProviderConfig c;
    c.tunnel = {"127.0.0.1", 0};
    c.admin_enabled = false;
    return c;
  }

  FakeClock billing_clock;
  metering::BillingSimulator billing;
  metering::LocalBilling core;
  provider::ProviderService svc;
  sim::SimProfile profile;
  std::unique_ptr<probe::SimulatedOperator> op;
  std::unique_ptr<tunnel::TunnelClient> tc;
};

probe::ModemConfig modem_config(std::size_t init, bool wtx = true) {
  probe::ModemConfig c;
  c.init_apdu_count = init;
  c.wtx_enabled = wtx;
  return c;
}

// ---- 1 ------------------------------------------------------------------

std::string latency() {
  const auto t0 = std::chrono::steady_clock::now();
  probe::AttachReport rep;
  {
    Desk d("p-ro-1.json", "22601", "RO", "AT");
    d.svc.inject_latency(1000ms);
    probe::ModemSim modem(modem_config(50), system_clock());
    rep = modem.init_and_attach(*d.tc, *d.op);
    need(modem.state() == probe::ModemState::Attached, "modem not attached");
  }
  const double wall = seconds_since(t0);
  need(rep.init_apdus == 50, "init budget not spent");
  need(rep.timeouts == 0, std::to_string(rep.timeouts) + " timeouts");
  need(rep.min_nulls_per_exchange >= 1, "an exchange without a NULL");
  need(wall <= 120.0, "runtime " + std::to_string(wall) + " s");

  Desk d("p-ro-1.json", "22601", "RO", "AT");
  d.svc.inject_latency(1000ms);
  probe::ModemSim off(modem_config(2, false), system_clock());
  auto e = code_of([&] { off.init_and_attach(*d.tc, *d.op); });
  need(e == Errc::WaitingTimeExpired, "WTX-off control did not expire");

  std::ostringstream os;
  os << rep.apdus_used << " exchanges, min " << rep.min_nulls_per_exchange << " NULLs each, " << rep.wall_ms
     << " ms attach; WTX off -> WaitingTimeExpired";
  return os.str();
}

// ---- 2 ------------------------------------------------------------------

std::string exclusivity() {
  const Bytes token = from_hex(kToken);
  provider::ProviderConfig pc = Desk::make_config();
  pc.max_concurrent_sims = 32;
  provider::ProviderService svc(pc, system_clock());
  std::vector<std::string> imsis;
  for (std::uint32_t i = 1; i <= 33; ++i) {
    auto p = sim::make_test_profile("23203", i, "AT");
    svc.register_sim(p);
    svc.issue_token(p.imsi, kToken);
    imsis.push_back(p.imsi);
  }
  svc.start();
  const net::Endpoint ep{"127.0.0.1", svc.tunnel_port()};
  auto wait_idle = [&] {
    for (int i = 0; i < 2000 && svc.registry().active_circuits() > 0; ++i) std::this_thread::sleep_for(1ms);
  };

  // Randomized race: 2..6 clients per round on one SIM.
  std::mt19937_64 rng(7);
  for (int round = 0; round < 100; ++round) {
    const std::string& imsi = imsis[rng() % 4];
    const int n = 2 + static_cast<int>(rng() % 5);
    std::vector<std::unique_ptr<tunnel::TunnelClient>> cs;
    for (int i = 0; i < n; ++i) cs.push_back(std::make_unique<tunnel::TunnelClient>(ep, system_clock()));
    std::vector<std::future<bool>> fs;
    for (auto& c : cs) {
      fs.push_back(std::async(std::launch::async, [&, c = c.get()] {
        try {
          c->attach(imsi, token);
          return true;
        } catch (const Error& e) {
          need(e.code() == Errc::SimBusy, "unexpected " + std::string(to_string(e.code())));
          return false;
        }
      }));
    }
    int granted = 0;
    for (auto& f : fs) granted += f.get();
    need(granted == 1, "round " + std::to_string(round) + " granted " + std::to_string(granted));
    need(svc.registry().active_circuits() == 1, "two Active circuits");
    cs.clear();
    wait_idle();
  }

  // Capacity: exactly 32.
  std::vector<std::unique_ptr<tunnel::TunnelClient>> held;
  for (int i = 0; i < 32; ++i) {
    held.push_back(std::make_unique<tunnel::TunnelClient>(ep, system_clock()));
    held.back()->attach(imsis[i], token);
  }
  need(svc.registry().active_circuits() == 32, "32 circuits not active");
  tunnel::TunnelClient extra(ep, system_clock());
  need(code_of([&] { extra.attach(imsis[32], token); }) == Errc::Capacity, "33rd attach not refused");
  held.clear();
  svc.stop();

  // Broker fuzz: 1000 operations, validator must stay silent.
  FakeClock clock;
  mgmt::NullTokenPusher pusher;
  mgmt::Broker broker(mgmt::MgmtConfig{}, clock, pusher);
  const std::vector<std::pair<std::string, std::string>> probes = {
      {"a1", "AT"}, {"a2", "AT"}, {"d1", "DE"}, {"h1", "HR"}, {"s1", "SI"}};
  for (const auto& [id, cc] : probes) broker.register_probe(id, cc);
  Json sims = Json::array();
  for (int i = 1; i <= 4; ++i) {
    sims.push_back({{"imsi", std::to_string(i)}, {"iccid", "89" + std::to_string(i)}, {"home_country", "RO"},
                    {"label", "s"}, {"online", true}});
  }
  broker.update_inventory("prov", "127.0.0.1:1", "", sims);
  std::mt19937_64 frng(11);
  std::size_t opened = 0;
  for (int op = 0; op < 1000; ++op) {
    const auto& probe = probes[frng() % probes.size()].first;
    const std::string imsi = std::to_string(1 + frng() % 4);
    switch (frng() % 4) {
      case 0:
      case 1:
        try {
          broker.allocate_circuit(imsi, probe);
          ++opened;
        } catch (const Error&) {
        }
        break;
      case 2: {
        std::vector<std::string> open;
        for (auto& [id, c] : broker.state()["circuits"].items()) {
          if (c["closed_us"].is_null()) open.push_back(id);
        }
        if (!open.empty()) broker.close_circuit(open[frng() % open.size()]);
        break;
      }
      case 3:
        clock.advance(std::chrono::seconds{frng() % 900});
        for (const auto& p : probes) {
          if (frng() % 8) broker.heartbeat(p.first);
        }
        broker.reap_stale();
        break;
    }
  }
  auto v = mgmt::validate_event_log(broker.event_history(), 1800s);
  need(v.empty(), std::to_string(v.size()) + " violations, first " + (v.empty() ? "" : v[0].kind));

  return "100 races one winner each; 32 active, 33rd Capacity; fuzz " + std::to_string(opened) +
         " opens, 0 violations";
}

// ---- 3 ------------------------------------------------------------------

std::uint8_t xor_all(const Bytes& b) {
  std::uint8_t x = 0;
  for (auto v : b) x ^= v;
  return x;
}

iso7816::Atr random_atr(std::mt19937_64& rng) {
  std::optional<std::uint8_t> ta1;
  if (rng() % 2) ta1 = static_cast<std::uint8_t>(rng());
  Bytes hist(rng() % 16);
  for (auto& b : hist) b = static_cast<std::uint8_t>(rng());
  std::vector<int> protos;
  const int np = static_cast<int>(rng() % 3);
  for (int i = 0; i < np; ++i) protos.push_back(rng() % 3 == 0 ? 1 : (rng() % 5 == 0 ? 14 : 0));
  return iso7816::make_atr(ta1, hist, protos);
}

std::string protocol() {
  using namespace iso7816;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    Atr a = random_atr(rng);
    Bytes raw = build_atr(a);
    need(parse_atr(raw) == a && build_atr(parse_atr(raw)) == raw, "ATR round trip");
    if (a.tck) need(xor_all(Bytes(raw.begin() + 1, raw.end())) == 0, "ATR TCK");
  }

  int valid = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto fi = static_cast<std::uint8_t>(rng() % 16), di = static_cast<std::uint8_t>(rng() % 16);
    const int proto = static_cast<int>(rng() % 2);
    if (!fi_from_index(fi) || !di_from_index(di)) {
      need(code_of([&] { build_pps(fi, di, proto); }) == Errc::InvalidIndex, "invalid index accepted");
      continue;
    }
    PpsFrame f = build_pps(fi, di, proto);
    Bytes raw = f.encode();
    need(xor_all(raw) == 0 && parse_pps(raw) == f, "PPS round trip");
    ++valid;
  }
  need(build_pps(9, 6).encode() == Bytes{0xFF, 0x10, 0x96, 0x79}, "PPS golden");

  const std::uint8_t kinds[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15};
  for (int i = 0; i < 10000; ++i) {
    tunnel::Frame f{static_cast<tunnel::FrameKind>(kinds[rng() % std::size(kinds)]), static_cast<std::uint32_t>(rng()),
                    {}};
    f.payload.resize(rng() % 300);
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    Bytes raw = tunnel::encode_frame(f);
    need(raw.size() == 9 + f.payload.size() && tunnel::decode_frame(raw) == f, "frame round trip");
  }

  // +3.98 % and -5.0 % off a 3.842 MHz nominal, limits 4.1 / 4.5 %.
  need(clock_within_tolerance(3'842'000, 3'995'000, 4.1, 4.5), "+3.98% rejected");
  need(!clock_within_tolerance(3'842'000, 3'650'000, 4.1, 4.5), "-5.0% accepted");

  return "10000 ATR, 10000 PPS (" + std::to_string(valid) + " valid), 10000 frames; FF 10 96 79; +3.98% ok, -5.0% refused";
}

// ---- 4 ------------------------------------------------------------------

void oracle_walk(const std::vector<int>& cls, std::size_t i, std::uint64_t unit, std::uint64_t sum, std::set<int>& cur,
                 std::vector<std::pair<std::uint64_t, std::set<int>>>& out, std::uint64_t billed, std::uint64_t rounding) {
  if (i == cls.size()) {
    const std::uint64_t expected = (sum / rounding + (sum % rounding ? 1 : 0)) * rounding;
    out.emplace_back(expected >= billed ? expected - billed : billed - expected, cur);
    return;
  }
  oracle_walk(cls, i + 1, unit, sum, cur, out, billed, rounding);
  cur.insert(cls[i]);
  oracle_walk(cls, i + 1, unit, sum + (unit << cls[i]), cur, out, billed, rounding);
  cur.erase(cls[i]);
}

// Unique subset, or the error a decoder must raise.
std::pair<std::optional<std::set<int>>, Errc> oracle_decode(std::uint64_t billed, const metering::TrafficClassPlan& plan,
                                                            std::uint64_t rounding) {
  std::vector<int> cls(plan.classes.begin(), plan.classes.end());
  std::vector<std::pair<std::uint64_t, std::set<int>>> all;
  std::set<int> cur;
  oracle_walk(cls, 0, plan.unit_bytes, 0, cur, all, billed, rounding);
  std::uint64_t best = UINT64_MAX;
  for (auto& [r, s] : all) best = std::min(best, r);
  int count = 0;
  std::set<int> winner;
  for (auto& [r, s] : all) {
    if (r == best) {
      ++count;
      winner = s;
    }
  }
  if (best >= rounding) return {std::nullopt, Errc::Undecodable};
  if (count > 1) return {std::nullopt, Errc::Ambiguous};
  return {winner, Errc::Internal};
}

std::string metering_encoding() {
  using namespace metering;
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t unit = kMiB;
  TrafficClassPlan all{{0, 1, 2, 3, 4, 5, 6, 7}, unit};
  int identities = 0;
  for (std::uint64_t rounding : {std::uint64_t{1}, std::uint64_t{1000}, unit / 4, unit / 2}) {
    BillingScenario s;
    s.name = "accept";
    s.home_country = "AT";
    s.rounding_bytes = rounding;
    for (int mask = 0; mask < 256; ++mask) {
      TrafficClassPlan sub{{}, unit};
      for (int c = 0; c < 8; ++c) {
        if (mask & (1 << c)) sub.classes.insert(c);
      }
      std::vector<FlowRecord> flows;
      for (const auto& t : encode_classes(sub)) {
        FlowRecord f;
        f.src = "10.1.2.3";
        f.dst = "203.0.113.7";
        f.sport = 40000;
        f.dport = 443;
        f.proto = "tcp";
        f.bytes_up = t.bytes;
        flows.push_back(f);
      }
      auto r = billing_simulate(s, flows, Context::Domestic, 0);
      need(decode_billed(static_cast<std::int64_t>(r.billed_bytes), all, rounding) == sub.classes,
           "subset " + std::to_string(mask) + " at rounding " + std::to_string(rounding));
      ++identities;
    }
  }

  std::mt19937_64 rng(20240501);
  int agree = 0, ambiguous = 0;
  for (int i = 0; i < 1000; ++i) {
    TrafficClassPlan plan{{}, 1 + rng() % 4096};
    const int k = 1 + static_cast<int>(rng() % 6);
    while (static_cast<int>(plan.classes.size()) < k) plan.classes.insert(static_cast<int>(rng() % 10));
    const std::uint64_t rounding = 1 + rng() % (2 * plan.unit_bytes);
    const std::uint64_t billed = rng() % (plan.total() + 2 * plan.unit_bytes);
    auto [unique, err] = oracle_decode(billed, plan, rounding);
    if (unique) {
      need(decode_billed(static_cast<std::int64_t>(billed), plan, rounding) == *unique, "oracle disagreement");
    } else {
      need(code_of([&] { decode_billed(static_cast<std::int64_t>(billed), plan, rounding); }) == err,
           "oracle error disagreement");
      ambiguous += err == Errc::Ambiguous;
    }
    ++agree;
  }

  // Constructed collisions: billed exactly between two subset totals.
  TrafficClassPlan p01{{0, 1}, kMiB};
  need(code_of([&] { decode_billed(kMiB + kMiB / 2, p01, kMiB); }) == Errc::Ambiguous, "collision not flagged");
  // Rounding coarser than the unit: {0} and {1} both bill as 2 MiB.
  need(code_of([&] { decode_billed(2 * kMiB, p01, 2 * kMiB); }) == Errc::Ambiguous, "coarse rounding not flagged");

  const double wall = seconds_since(t0);
  need(wall < 10.0, "runtime " + std::to_string(wall) + " s");
  std::ostringstream os;
  os << identities << " subset identities, " << agree << "/1000 oracle agreement (" << ambiguous
     << " ambiguous), collisions flagged, " << wall << " s";
  return os.str();
}

// ---- 5 ------------------------------------------------------------------

struct Row {
  const char* label;
  const char* file;
  const char* plmn;
  const char* home;
  const char* visited;
  const char* job;
  std::vector<std::pair<std::string, Json>> expect;
};

std::string showcase() {
  const std::vector<Row> rows = {
      {"P-RO-1 domestic", "p-ro-1.json", "22601", "RO", "RO", "dns_metering",
       {{"internal_dns", "free"}, {"verdict", "external-only-billed"}}},
      {"P-RO-1 roaming", "p-ro-1.json", "22601", "RO", "AT", "dns_metering",
       {{"internal_dns", "billed"}, {"verdict", "all-billed"}}},
      {"P-SI-1 domestic", "p-si-1.json", "29340", "SI", "SI", "dns_metering", {{"verdict", "external-only-billed"}}},
      {"P-SI-1 roaming", "p-si-1.json", "29340", "SI", "AT", "dns_metering", {{"verdict", "all-billed"}}},
      {"P-AT-1 roaming", "p-at-1.json", "23201", "AT", "DE", "dns_metering",
       {{"verdict", "external-only-billed"}, {"dns_server_class", "PrivateRfc1918"}}},
      {"P-AT-1 domestic", "p-at-1.json", "23201", "AT", "AT", "zero_rating_freeride",
       {{"zero_rated_domestic", "yes"}, {"spoof_http", "free"}, {"spoof_sni", "free"}}},
      {"P-AT-2 domestic", "p-at-2.json", "23203", "AT", "AT", "zero_rating_freeride",
       {{"zero_rated_domestic", "yes"}, {"spoof_http", "billed"}, {"spoof_sni", "billed"}}},
      {"P-AT-2 roaming", "p-at-2.json", "23203", "AT", "DE", "zero_rating_freeride", {{"zero_rated_roaming", "yes"}}},
      {"P-HR-1 domestic", "p-hr-1.json", "21910", "HR", "HR", "zero_rating_freeride",
       {{"zero_rated_domestic", "yes"}, {"spoof_http", "free"}, {"spoof_sni", "free"}}},
      {"P-HR-1 roaming", "p-hr-1.json", "21910", "HR", "AT", "zero_rating_freeride", {{"zero_rated_roaming", "no"}}},
  };
  const auto dir = scratch("showcase");
  int n = 0;
  for (const auto& row : rows) {
    Desk d(row.file, row.plmn, row.home, row.visited);
    probe::ModemSim modem(modem_config(5), system_clock());
    modem.init_and_attach(*d.tc, *d.op);
    probe::MeasurementContext ctx{system_clock(), modem, *d.op, d.core, "key-7", dir.string(), {}, &d.billing_clock};
    probe::MeasurementJob job;
    job.job_id = "row" + std::to_string(n++);
    job.scenario = row.job;
    job.imsi = d.profile.imsi;
    job.probe_id = "probe-accept";
    auto r = probe::run_measurement(job, ctx);
    need(r.status == probe::JobStatus::Done, std::string(row.label) + ": job not done");
    for (const auto& [k, v] : row.expect) {
      need(r.summary.value(k, Json()) == v,
           std::string(row.label) + ": " + k + " = " + r.summary.value(k, Json()).dump() + ", want " + v.dump());
    }
    need(fs::exists(r.artifacts.at("report.json")), std::string(row.label) + ": no verdict JSON");
  }
  return std::to_string(rows.size()) + " verdict rows matched through modem, tunnel, billing and settle";
}

// ---- 6 ------------------------------------------------------------------

metering::IpClass reference_class(const metering::IpAddress& a) {
  using metering::IpClass;
  struct Net {
    std::array<std::uint8_t, 16> base;
    int prefix;
    IpClass cls;
  };
  auto v4 = [](std::uint8_t a, std::uint8_t b, int p, IpClass c) { return Net{{a, b}, p, c}; };
  static const Net v4t[] = {v4(100, 64, 10, IpClass::CgnatShared),   v4(10, 0, 8, IpClass::PrivateRfc1918),
                            v4(172, 16, 12, IpClass::PrivateRfc1918), v4(192, 168, 16, IpClass::PrivateRfc1918),
                            v4(0, 0, 8, IpClass::OtherReserved),      v4(127, 0, 8, IpClass::OtherReserved),
                            v4(169, 254, 16, IpClass::OtherReserved), v4(224, 0, 4, IpClass::OtherReserved),
                            v4(240, 0, 4, IpClass::OtherReserved)};
  static const Net v6t[] = {Net{{0xfc}, 7, IpClass::OtherReserved}, Net{{0xfe, 0x80}, 10, IpClass::OtherReserved},
                            Net{{0xff}, 8, IpClass::OtherReserved}};
  auto match = [](const std::uint8_t* addr, const Net& n) {
    for (int bit = 0; bit < n.prefix; ++bit) {
      const int m = 0x80 >> (bit % 8);
      if ((addr[bit / 8] & m) != (n.base[bit / 8] & m)) return false;
    }
    return true;
  };
  std::array<std::uint8_t, 16> b{};
  std::copy(a.bytes.begin(), a.bytes.end(), b.begin());
  if (!a.v6) {
    for (const auto& n : v4t) {
      if (match(b.data(), n)) return n.cls;
    }
    return IpClass::PublicV4;
  }
  const bool zero15 = std::all_of(b.begin(), b.begin() + 15, [](auto x) { return x == 0; });
  if (zero15 && (b[15] == 0 || b[15] == 1)) return IpClass::OtherReserved;
  for (const auto& n : v6t) {
    if (match(b.data(), n)) return n.cls;
  }
  return IpClass::PublicV6;
}

std::string ip_classification() {
  using metering::classify_ip;
  using metering::IpClass;
  need(classify_ip("100.64.0.0") == IpClass::CgnatShared, "100.64.0.0");
  need(classify_ip("100.127.255.255") == IpClass::CgnatShared, "100.127.255.255");
  need(classify_ip("100.128.0.0") == IpClass::PublicV4, "100.128.0.0");
  need(classify_ip("100.63.255.255") == IpClass::PublicV4, "100.63.255.255");
  need(classify_ip("10.0.0.0") == IpClass::PrivateRfc1918 && classify_ip("10.255.255.255") == IpClass::PrivateRfc1918,
       "10/8 edges");
  need(classify_ip("11.0.0.0") == IpClass::PublicV4 && classify_ip("9.255.255.255") == IpClass::PublicV4,
       "outside 10/8");

  std::mt19937_64 rng(99);
  const char* hot[] = {"100.64.0.0/10", "10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "fc00::/7", "fe80::/10"};
  for (int i = 0; i < 10000; ++i) {
    metering::IpAddress a;
    a.v6 = rng() % 3 == 0;
    for (auto& b : a.bytes) b = static_cast<std::uint8_t>(rng());
    if (!a.v6) std::fill(a.bytes.begin() + 4, a.bytes.end(), 0);
    if (rng() % 2) {
      auto c = metering::Cidr::parse(hot[rng() % 6]);
      if (c.base.v6 == a.v6) a = c.host(rng());
    }
    need(classify_ip(a.str()) == reference_class(a), "disagreement at " + a.str());
  }
  return "boundaries exact, 10000/10000 agree with the prefix table";
}

// ---- 7 ------------------------------------------------------------------

std::string tone_fingerprint() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& db = tone::preset_fingerprints();
  need(db.size() == 19, "preset count");
  int ok40 = 0, ok20 = 0, trials = 0;
  double worst_hz = 0;
  for (const auto& fp : db) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      ++trials;
      for (double noise : {-40.0, -20.0}) {
        tone::SynthOptions o;
        o.seed = seed;
        o.noise_dbfs = noise;
        o.offset_s = 0.1 * static_cast<double>(seed);
        auto f = tone::extract_features(tone::synthesize_ringback(fp, 20.0, o));
        auto ranked = tone::match_fingerprint(f, db);
        const auto& top = tone::find_fingerprint(db, ranked[0].label);
        // Single-tone (EU cadence) and dual-tone (NA) families must never mix.
        need(top.freqs_hz.size() == fp.freqs_hz.size(), fp.operator_label + " matched " + top.operator_label);
        const bool hit = ranked[0].label == fp.operator_label;
        (noise < -30 ? ok40 : ok20) += hit;
        if (noise < -30) {
          need(f.freqs_hz.size() == fp.freqs_hz.size(), fp.operator_label + " tone count");
          for (std::size_t i = 0; i < f.freqs_hz.size(); ++i) {
            worst_hz = std::max(worst_hz, std::abs(f.freqs_hz[i] - fp.freqs_hz[i]));
          }
        }
      }
    }
  }
  const double wall = seconds_since(t0);
  std::ostringstream os;
  os << ok40 << "/" << trials << " at -40 dBFS, " << ok20 << "/" << trials << " at -20 dBFS, worst freq error "
     << worst_hz << " Hz, " << wall << " s";
  need(ok40 == trials, os.str());
  need(ok20 * 100 >= 95 * trials, os.str());
  need(worst_hz <= 2.0, os.str());
  need(wall < 60.0, os.str());
  return os.str();
}

// ---- 8 ------------------------------------------------------------------

std::string apdu_analytics() {
  using namespace analytics;
  Bytes blob = test::read_hex_fixture("binary_sms_p_at_2.hex");
  need(blob.size() == 122, "fixture size");
  auto hits = scan_identifiers(blob, default_mcc_list());
  auto imsi = std::find_if(hits.begin(), hits.end(), [](const IdentifierHit& h) {
    return h.kind == IdentifierKind::Imsi && h.digits.rfind("232", 0) == 0;
  });
  auto iccid = std::find_if(hits.begin(), hits.end(), [](const IdentifierHit& h) {
    return h.kind == IdentifierKind::Iccid && h.digits.rfind("89", 0) == 0;
  });
  need(imsi != hits.end(), "no IMSI starting 232");
  need(iccid != hits.end(), "no ICCID starting 89");
  need(imsi->byte_offset == 113 && imsi->digits == "232033021142570", "IMSI golden");
  need(iccid->byte_offset == 85 && iccid->digits == "89430300002133303509", "ICCID golden");

  std::mt19937_64 rng(2024);
  std::vector<std::string> mccs(default_mcc_list().begin(), default_mcc_list().end());
  auto digits = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('0' + rng() % 10);
    return s;
  };
  int found = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Bytes b(64 + rng() % 128);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    const bool plant_imsi = trial % 2 == 0;
    std::string id;
    Bytes enc;
    if (plant_imsi) {
      id = mccs[rng() % mccs.size()] + digits(12);
      enc = encode_ef_imsi(id);
    } else {
      std::string body = "89" + digits(16 + rng() % 2);
      id = body + luhn_check_digit(body);
      enc = encode_ef_iccid(id);
    }
    const std::size_t off = rng() % (b.size() - enc.size());
    std::copy(enc.begin(), enc.end(), b.begin() + off);
    auto h = scan_identifiers(b, default_mcc_list());
    const auto kind = plant_imsi ? IdentifierKind::Imsi : IdentifierKind::Iccid;
    found += std::any_of(h.begin(), h.end(), [&](const IdentifierHit& x) {
      return x.kind == kind && x.digits == id && x.byte_offset == off;
    });
  }
  need(found == 1000, "planted recall " + std::to_string(found) + "/1000");
  return "IMSI 232033021142570 at +113, ICCID 89430300002133303509 at +85; planted recall 1000/1000";
}

// ---- 9 ------------------------------------------------------------------

std::string gsmtap() {
  Bytes empty = net::write_gsmtap_pcap({});
  need(empty.size() == 24, "empty file is " + std::to_string(empty.size()) + " bytes");
  need(to_hex(empty) == "d4c3b2a1020004000000000000000000ffff000001000000", "empty header bytes");

  net::ApduLogRecord r;
  r.circuit_id = "c1";
  r.imsi = "232030000000001";
  r.direction = net::Direction::ToSim;
  r.raw = {0xA0, 0xA4, 0x00, 0x00, 0x02};
  r.wall = WallTime{std::chrono::microseconds{1'700'000'000'250'000}};
  Bytes one = net::write_gsmtap_pcap({r});
  // global + record header + Ethernet + IPv4 + UDP + GSMTAP + payload
  need(one.size() == 24 + 16 + 14 + 20 + 8 + 16 + r.raw.size(), "size formula");
  need(to_hex(one) ==
           "d4c3b2a1020004000000000000000000ffff00000100000000f1536590d003003f0000003f00000002000000000202"
           "00000000010800450000310000000040117cba7f0000017f00000112791279001d00000204040000000000000000"
           "0000000000a0a4000002",
       "single-record golden");
  return "empty 24 bytes; single record " + std::to_string(one.size()) + " bytes, golden match";
}

// ---- 10 -----------------------------------------------------------------

std::string management() {
  const auto dir = scratch("mgmt");
  auto sim = [](const std::string& imsi, const std::string& home) {
    return Json{{"imsi", imsi}, {"iccid", "89" + imsi}, {"home_country", home}, {"label", imsi}, {"online", true}};
  };
  mgmt::MgmtConfig cfg;
  cfg.data_dir = dir.string();
  mgmt::NullTokenPusher pusher;
  std::string expected;
  std::uint64_t ops = 0;
  {
    FakeClock clock;
    mgmt::Broker b(cfg, clock, pusher);
    b.register_probe("vie-1", "AT");
    b.register_probe("vie-2", "AT");
    b.register_probe("ber-1", "DE");
    b.update_inventory("prov-a", "127.0.0.1:7816", "", Json::array({sim("1", "RO"), sim("2", "RO"), sim("3", "RO")}));
    auto a = b.allocate_circuit("1", "vie-1");
    clock.advance(10s);
    b.heartbeat("vie-1");
    b.heartbeat("vie-2");
    b.heartbeat("ber-1");
    b.close_circuit(a.circuit_id, "done");
    auto c = b.allocate_circuit("2", "ber-1");
    probe::MeasurementJob job;
    job.scenario = "ip_config";
    job.imsi = "3";
    job.probe_id = "vie-2";
    auto j1 = b.submit_job(job);
    b.next_job("vie-2");
    probe::MeasurementResult done;
    done.status = probe::JobStatus::Done;
    b.job_result(j1, done);
    b.close_circuit(c.circuit_id);
    b.request_restart("ber-1");
    b.heartbeat("ber-1");
    job.imsi = "1";
    job.probe_id = "vie-1";
    job.scenario = "dns_metering";
    b.submit_job(job);
    b.update_inventory("prov-b", "127.0.0.1:7817", "", Json::array({sim("4", "HR")}));
    ops = b.last_seq();
    expected = b.state_dump();
  }
  need(ops >= 20, "only " + std::to_string(ops) + " events");
  {
    FakeClock clock;
    mgmt::Broker b(cfg, clock, pusher);
    auto rep = b.recover();
    need(rep.corrupt.empty(), "corrupt lines on replay");
    need(b.state_dump() == expected, "replayed state differs");
  }

  // Cooldown property over generated schedules, against a direct model.
  int schedules = 0, refusals = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 rng(seed);
    FakeClock clock;
    mgmt::Broker b(mgmt::MgmtConfig{}, clock, pusher);
    const std::vector<std::pair<std::string, std::string>> probes = {{"p-at", "AT"}, {"p-de", "DE"}, {"p-hr", "HR"}};
    for (const auto& [id, cc] : probes) b.register_probe(id, cc);
    b.update_inventory("prov", "127.0.0.1:1", "", Json::array({sim("1", "RO"), sim("2", "RO")}));
    struct Last {
      std::string country;
      std::int64_t closed_s = 0;
    };
    std::map<std::string, Last> last;
    std::map<std::string, std::pair<std::string, std::string>> open;  // circuit -> imsi, country
    std::int64_t now_s = 0;
    for (int step = 0; step < 60; ++step) {
      switch (rng() % 3) {
        case 0: {
          const auto& [probe, country] = probes[rng() % probes.size()];
          const std::string imsi = std::to_string(1 + rng() % 2);
          std::optional<std::int64_t> predicted;
          auto it = last.find(imsi);
          if (it != last.end() && it->second.country != country && now_s - it->second.closed_s < 1800) {
            predicted = 1800 - (now_s - it->second.closed_s);
          }
          try {
            auto a = b.allocate_circuit(imsi, probe);
            need(!predicted, "seed " + std::to_string(seed) + ": allocation inside the cooldown");
            open[a.circuit_id] = {imsi, country};
          } catch (const Error& e) {
            if (e.code() == Errc::CooldownActive) {
              ++refusals;
              need(predicted && e.retry_after_s() && *e.retry_after_s() == *predicted,
                   "seed " + std::to_string(seed) + ": unexpected cooldown or retry_after");
            } else {
              need(e.code() == Errc::SimBusy || e.code() == Errc::ProbeBusy,
                   "unexpected " + std::string(to_string(e.code())));
            }
          }
          break;
        }
        case 1:
          if (!open.empty()) {
            auto it = std::next(open.begin(), static_cast<long>(rng() % open.size()));
            b.close_circuit(it->first);
            last[it->second.first] = {it->second.second, now_s};
            open.erase(it);
          }
          break;
        case 2: {
          const std::int64_t dt = static_cast<std::int64_t>(rng() % 1200);
          clock.advance(std::chrono::seconds{dt});
          now_s += dt;
          for (const auto& p : probes) b.heartbeat(p.first);
          break;
        }
      }
    }
    auto v = mgmt::validate_event_log(b.event_history(), 1800s);
    need(v.empty(), "seed " + std::to_string(seed) + ": validator " + (v.empty() ? "" : v[0].kind));
    ++schedules;
  }
  need(refusals > 0, "no schedule exercised the cooldown");
  return std::to_string(ops) + "-event replay identical; cooldown held on " + std::to_string(schedules) +
         " schedules (" + std::to_string(refusals) + " refusals with exact retry_after); no dashboard involved";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<std::string()>>> criteria = {
      {"latency robustness", latency},       {"circuit exclusivity", exclusivity},
      {"protocol correctness", protocol},    {"metering encoding", metering_encoding},
      {"showcase reproduction", showcase},   {"IP classification", ip_classification},
      {"tone fingerprinting", tone_fingerprint}, {"APDU analytics", apdu_analytics},
      {"GSMTAP pcap", gsmtap},               {"management durability", management},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      detail = criteria[i].second();
      ok = true;
    } catch (const std::exception& e) {
      detail = e.what();
    }
    failures += !ok;
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", n, ok ? "PASS" : "FAIL", criteria[i].first, detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
