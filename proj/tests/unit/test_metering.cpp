#include <boost/asio/ip/address.hpp>
#include <boost/asio/ip/network_v4.hpp>
#include <boost/asio/ip/network_v6.hpp>
#include <random>

#include "atlas/metering/billing.hpp"
#include "atlas/metering/billing_api.hpp"
#include "atlas/metering/encoding.hpp"
#include "atlas/metering/ipclass.hpp"
#include "atlas/metering/scenario.hpp"
#include "atlas/metering/traffic.hpp"
#include "atlas/util/error.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace atlas;
using namespace atlas::metering;

namespace {

// Independent brute force: recurse over include/exclude per class and keep
// every subset whose rounded total is within one rounding step.
struct OracleOutcome {
  std::optional<std::set<int>> unique;
  std::optional<Errc> error;
};

void oracle_walk(const std::vector<int>& cls, std::size_t i, std::uint64_t unit, std::set<int>& cur,
                 std::uint64_t sum, std::vector<std::pair<std::uint64_t, std::set<int>>>& out, std::uint64_t billed,
                 std::uint64_t rounding) {
  if (i == cls.size()) {
    std::uint64_t units = sum / rounding + (sum % rounding ? 1 : 0);
    std::uint64_t expected = units * rounding;
    std::uint64_t residual = expected >= billed ? expected - billed : billed - expected;
    out.emplace_back(residual, cur);
    return;
  }
  oracle_walk(cls, i + 1, unit, cur, sum, out, billed, rounding);
  cur.insert(cls[i]);
  oracle_walk(cls, i + 1, unit, cur, sum + (unit << cls[i]), out, billed, rounding);
  cur.erase(cls[i]);
}

OracleOutcome oracle_decode(std::uint64_t billed, const TrafficClassPlan& plan, std::uint64_t rounding) {
  std::vector<int> cls(plan.classes.begin(), plan.classes.end());
  std::vector<std::pair<std::uint64_t, std::set<int>>> all;
  std::set<int> cur;
  oracle_walk(cls, 0, plan.unit_bytes, cur, 0, all, billed, rounding);
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
  return {winner, std::nullopt};
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Internal;
}

FlowRecord flow_to(const std::string& dst, std::uint64_t bytes) {
  FlowRecord f;
  f.src = "10.1.2.3";
  f.dst = dst;
  f.sport = 40000;
  f.dport = 443;
  f.proto = "tcp";
  f.bytes_up = bytes;
  return f;
}

BillingScenario basic_scenario() {
  BillingScenario s;
  s.name = "test";
  s.home_country = "AT";
  return s;
}

// Table-driven reference built on boost::asio networks.
IpClass reference_class(const std::string& text) {
  using namespace boost::asio::ip;
  struct Row {
    const char* net;
    IpClass cls;
  };
  static const Row v4[] = {{"100.64.0.0/10", IpClass::CgnatShared},   {"10.0.0.0/8", IpClass::PrivateRfc1918},
                           {"172.16.0.0/12", IpClass::PrivateRfc1918}, {"192.168.0.0/16", IpClass::PrivateRfc1918},
                           {"0.0.0.0/8", IpClass::OtherReserved},      {"127.0.0.0/8", IpClass::OtherReserved},
                           {"169.254.0.0/16", IpClass::OtherReserved}, {"224.0.0.0/4", IpClass::OtherReserved},
                           {"240.0.0.0/4", IpClass::OtherReserved}};
  static const Row v6[] = {{"::/128", IpClass::OtherReserved},    {"::1/128", IpClass::OtherReserved},
                           {"fc00::/7", IpClass::OtherReserved},  {"fe80::/10", IpClass::OtherReserved},
                           {"ff00::/8", IpClass::OtherReserved}};
  auto addr = make_address(text);
  if (addr.is_v6() && addr.to_v6().is_v4_mapped()) addr = make_address_v4(v4_mapped, addr.to_v6());
  if (addr.is_v4()) {
    for (const auto& r : v4) {
      auto n = make_network_v4(r.net);
      if (make_network_v4(addr.to_v4(), n.prefix_length()).canonical() == n) return r.cls;
    }
    return IpClass::PublicV4;
  }
  for (const auto& r : v6) {
    auto n = make_network_v6(r.net);
    if (make_network_v6(addr.to_v6(), n.prefix_length()).canonical() == n) return r.cls;
  }
  return IpClass::PublicV6;
}

}  // namespace

TEST_CASE("decode: worked examples") {
  TrafficClassPlan plan{{0, 2}, kMiB};
  CHECK(decode_billed(5 * kMiB, plan, 1) == std::set<int>{0, 2});
  CHECK(decode_billed(5 * kMiB + 37 * 1024, plan, 100 * 1024) == std::set<int>{0, 2});
  auto o = oracle_decode(5 * kMiB + 37 * 1024, plan, 100 * 1024);
  REQUIRE(o.unique);
  CHECK(*o.unique == std::set<int>{0, 2});

  TrafficClassPlan p01{{0, 1}, kMiB};
  CHECK(code_of([&] { decode_billed(kMiB + kMiB / 2, p01, kMiB); }) == Errc::Ambiguous);
  CHECK(oracle_decode(kMiB + kMiB / 2, p01, kMiB).error == Errc::Ambiguous);
  CHECK(code_of([&] { decode_billed(-1, p01, 1); }) == Errc::NegativeBilled);
  CHECK(code_of([&] { decode_billed(100 * kMiB, p01, 1); }) == Errc::Undecodable);
  CHECK(code_of([&] { decode_billed(0, TrafficClassPlan{{21}, kMiB}, 1); }) == Errc::ValidationError);
  CHECK(decode_billed(0, p01, 1).empty());
}

TEST_CASE("encode: volumes are powers of two") {
  TrafficClassPlan plan{{0, 3, 5}, 1000};
  auto t = encode_classes(plan);
  REQUIRE(t.size() == 3);
  CHECK(t[0].bytes == 1000);
  CHECK(t[1].bytes == 8000);
  CHECK(t[2].bytes == 32000);
  CHECK(plan.total() == 41000);
}

TEST_CASE("encode -> bill -> decode is the identity on all 256 subsets") {
  const std::uint64_t unit = kMiB;
  TrafficClassPlan all{{0, 1, 2, 3, 4, 5, 6, 7}, unit};
  for (std::uint64_t rounding : {std::uint64_t{1}, std::uint64_t{1000}, unit / 4, unit / 2}) {
    BillingScenario s = basic_scenario();
    s.rounding_bytes = rounding;
    for (int mask = 0; mask < 256; ++mask) {
      TrafficClassPlan sub{{}, unit};
      for (int c = 0; c < 8; ++c) {
        if (mask & (1 << c)) sub.classes.insert(c);
      }
      std::vector<FlowRecord> flows;
      for (const auto& t : encode_classes(sub)) flows.push_back(flow_to("203.0.113.7", t.bytes));
      auto r = billing_simulate(s, flows, Context::Domestic, 0);
      REQUIRE(decode_billed(static_cast<std::int64_t>(r.billed_bytes), all, rounding) == sub.classes);
    }
  }
}

TEST_CASE("decode agrees with the brute-force oracle on random probes") {
  std::mt19937_64 rng(20240501);
  int ambiguous = 0, undecodable = 0;
  for (int i = 0; i < 1000; ++i) {
    TrafficClassPlan plan{{}, 1 + rng() % 4096};
    const int k = 1 + static_cast<int>(rng() % 6);
    while (static_cast<int>(plan.classes.size()) < k) plan.classes.insert(static_cast<int>(rng() % 10));
    const std::uint64_t rounding = 1 + rng() % (2 * plan.unit_bytes);
    const std::uint64_t billed = rng() % (plan.total() + 2 * plan.unit_bytes);
    auto o = oracle_decode(billed, plan, rounding);
    if (o.unique) {
      CHECK(decode_billed(static_cast<std::int64_t>(billed), plan, rounding) == *o.unique);
    } else {
      CHECK(code_of([&] { decode_billed(static_cast<std::int64_t>(billed), plan, rounding); }) == *o.error);
      ambiguous += *o.error == Errc::Ambiguous;
      undecodable += *o.error == Errc::Undecodable;
    }
  }
  // The sample must exercise every outcome.
  CHECK(ambiguous > 0);
  CHECK(undecodable > 0);
}

TEST_CASE("billing: classifier examples") {
  FlowRecord f = flow_to("198.18.7.7", 4 * kMiB);
  f.sni = "app.snapchat.com";

  BillingScenario sni = basic_scenario();
  sni.classifier = {Classifier::BySni};
  sni.zero_rated_names = {"app.snapchat.com"};
  CHECK(billing_simulate(sni, {f}, Context::Domestic, 0).billed_bytes == 0);

  BillingScenario ip = basic_scenario();
  ip.classifier = {Classifier::ByIpAllowlist};
  ip.zero_rated_ips = {Cidr::parse("192.0.2.0/24")};
  CHECK(billing_simulate(ip, {f}, Context::Domestic, 0).billed_bytes == 4 * kMiB);
  CHECK(billing_simulate(ip, {flow_to("192.0.2.80", 4 * kMiB)}, Context::Domestic, 0).billed_bytes == 0);

  BillingScenario dns = basic_scenario();
  dns.internal_dns_billed_domestic = false;
  dns.internal_dns_billed_roaming = true;
  FlowRecord q = flow_to("192.0.2.53", kMiB);
  q.dport = 53;
  q.proto = "udp";
  q.internal_dns = true;
  CHECK(billing_simulate(dns, {q}, Context::Domestic, 0).billed_bytes == 0);
  CHECK(billing_simulate(dns, {q}, Context::Roaming, 0).billed_bytes == kMiB);

  // No roaming zero-rating: the same SNI flow is billed abroad.
  sni.zero_rating_roaming = false;
  CHECK(billing_simulate(sni, {f}, Context::Roaming, 0).billed_bytes == 4 * kMiB);
  // Host header alone does not fool an SNI-only classifier.
  FlowRecord h = flow_to("198.18.7.7", kMiB);
  h.host = "app.snapchat.com";
  CHECK(billing_simulate(sni, {h}, Context::Domestic, 0).billed_bytes == kMiB);
}

TEST_CASE("billing: conservation over random batches") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 300; ++round) {
    BillingScenario s = basic_scenario();
    s.rounding_bytes = 1 + rng() % 100000;
    s.classifier = {Classifier::ByHostHeader, Classifier::ByIpAllowlist};
    s.zero_rated_names = {"zr.example"};
    s.zero_rated_ips = {Cidr::parse("192.0.2.0/24")};
    std::vector<FlowRecord> flows;
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      FlowRecord f = flow_to(rng() % 3 == 0 ? "192.0.2.9" : "203.0.113.9", rng() % 5'000'000);
      f.bytes_down = rng() % 1000;
      if (rng() % 4 == 0) f.host = "zr.example";
      flows.push_back(f);
    }
    const std::int64_t before = 1'000'000'000;
    auto r = billing_simulate(s, flows, Context::Domestic, before);
    std::uint64_t sum = 0, raw = 0;
    for (const auto& c : r.cdrs) {
      sum += c.billed_bytes;
      if (c.zero_rated) CHECK(c.billed_bytes == 0);
      if (!c.zero_rated) raw += c.flow.bytes_up + c.flow.bytes_down;
    }
    CHECK(static_cast<std::uint64_t>(before - r.quota_after) == sum);
    CHECK(sum == round_up(raw, s.rounding_bytes));
    CHECK(sum % s.rounding_bytes == 0);
  }
}

TEST_CASE("billing simulator: no quota change before the CDR delay") {
  FakeClock clock;
  BillingSimulator sim(clock);
  BillingScenario s = basic_scenario();
  s.cdr_delay = std::chrono::minutes{7};
  s.quota_bytes = 1024 * kMiB;
  s.rounding_bytes = 1024;
  sim.provision("232010000000001", s, "k");
  CHECK(sim.quota("232010000000001", "k").remaining_bytes == static_cast<std::int64_t>(1024 * kMiB));
  CHECK(code_of([&] { sim.quota("232010000000001", "wrong"); }) == Errc::AuthRejected);
  CHECK(code_of([&] { sim.quota("999", "k"); }) == Errc::UnknownImsi);

  auto receipt = sim.post_flows("232010000000001", Context::Domestic, {flow_to("203.0.113.1", 5 * kMiB)});
  CHECK(receipt.billed_bytes == 5 * kMiB);
  CHECK(receipt.posted_at == clock.now() + s.cdr_delay);
  for (int i = 0; i < 7 * 60 - 1; ++i) {
    clock.advance(std::chrono::seconds{1});
    REQUIRE(sim.quota("232010000000001", "k").remaining_bytes == static_cast<std::int64_t>(1024 * kMiB));
    REQUIRE(sim.cdrs("232010000000001").empty());
  }
  clock.advance(std::chrono::seconds{1});
  CHECK(sim.quota("232010000000001", "k").remaining_bytes == static_cast<std::int64_t>(1019 * kMiB));
  REQUIRE(sim.cdrs("232010000000001").size() == 1);
  CHECK(sim.cdrs("232010000000001")[0].posted_at >= sim.cdrs("232010000000001")[0].ended_at + s.cdr_delay);
}

TEST_CASE("check_quota: settle blocks until the CDR posts") {
  FakeClock clock;
  BillingSimulator sim(clock);
  LocalBilling local(sim);
  BillingScenario s = basic_scenario();
  s.cdr_delay = std::chrono::minutes{5};
  s.quota_bytes = 1024 * kMiB;
  sim.provision("1", s, "k");
  CHECK(check_quota(local, {"1", "k"}, clock).remaining_bytes == static_cast<std::int64_t>(1024 * kMiB));
  sim.post_flows("1", Context::Domestic, {flow_to("203.0.113.1", 5 * kMiB)});
  clock.advance(std::chrono::minutes{1});
  // Without settling the read is still stale.
  CHECK(check_quota(local, {"1", "k"}, clock).remaining_bytes == static_cast<std::int64_t>(1024 * kMiB));
  const Nanos t0 = clock.now();
  auto q = check_quota(local, {"1", "k"}, clock, SettleOptions{true});
  CHECK(q.remaining_bytes == static_cast<std::int64_t>(1019 * kMiB));
  CHECK(clock.now() - t0 >= std::chrono::minutes{4});
}

TEST_CASE("classify_ip: examples and boundaries") {
  CHECK(classify_ip("100.64.3.7") == IpClass::CgnatShared);
  CHECK(classify_ip("10.1.2.3") == IpClass::PrivateRfc1918);
  CHECK(classify_ip("203.0.113.5") == IpClass::PublicV4);
  CHECK(classify_ip("100.64.0.0") == IpClass::CgnatShared);
  CHECK(classify_ip("100.127.255.255") == IpClass::CgnatShared);
  CHECK(classify_ip("100.128.0.0") == IpClass::PublicV4);
  CHECK(classify_ip("100.63.255.255") == IpClass::PublicV4);
  CHECK(classify_ip("172.31.255.255") == IpClass::PrivateRfc1918);
  CHECK(classify_ip("172.32.0.0") == IpClass::PublicV4);
  CHECK(classify_ip("fd00::1") == IpClass::OtherReserved);
  CHECK(classify_ip("fe80::1") == IpClass::OtherReserved);
  CHECK(classify_ip("2a02:8388::1") == IpClass::PublicV6);
  CHECK(classify_ip("::ffff:100.64.0.1") == IpClass::CgnatShared);
  CHECK(code_of([] { classify_ip("100.64.0"); }) == Errc::ParseError);
  CHECK(code_of([] { classify_ip("::g"); }) == Errc::ParseError);
}

TEST_CASE("classify_ip agrees with the reference on 10,000 random addresses") {
  std::mt19937_64 rng(99);
  // Bias half the samples towards interesting prefixes.
  const char* hot[] = {"100.64.0.0/10", "10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "fc00::/7", "fe80::/10"};
  for (int i = 0; i < 10000; ++i) {
    IpAddress a;
    a.v6 = rng() % 3 == 0;
    for (auto& b : a.bytes) b = static_cast<std::uint8_t>(rng());
    if (!a.v6) std::fill(a.bytes.begin() + 4, a.bytes.end(), 0);
    if (rng() % 2) {
      Cidr c = Cidr::parse(hot[rng() % 6]);
      if (c.base.v6 == a.v6) {
        IpAddress h = c.host(rng());
        a = h;
      }
    }
    const std::string s = a.str();
    REQUIRE_MESSAGE(classify_ip(s) == reference_class(s), s);
  }
}

TEST_CASE("cidr parse and contains") {
  Cidr c = Cidr::parse("100.64.1.2/10");
  CHECK(c.str() == "100.64.0.0/10");
  CHECK(c.contains("100.127.0.1"));
  CHECK_FALSE(c.contains("100.128.0.1"));
  CHECK_FALSE(c.contains("::1"));
  CHECK(Cidr::parse("2001:db8::/32").contains("2001:db8:ffff::1"));
  CHECK(Cidr::parse("10.0.0.0/8").host(258).str() == "10.0.1.2");
  CHECK(code_of([] { Cidr::parse("10.0.0.0/33"); }) == Errc::ParseError);
}

TEST_CASE("traffic builders are exact and parse back") {
  std::mt19937_64 rng(3);
  for (std::size_t size : {std::size_t{128}, std::size_t{300}, std::size_t{512}}) {
    Bytes q = build_dns_query("abcd.example.com", 7, size);
    CHECK(q.size() == size);
    CHECK(parse_dns_qname(q) == std::optional<std::string>("abcd.example.com"));
  }
  Bytes h = build_http_request("app.snapchat.com", 5000);
  CHECK(h.size() == 5000);
  CHECK(parse_http_host(h) == std::optional<std::string>("app.snapchat.com"));
  Bytes t = build_client_hello("app.snapchat.com", rng);
  CHECK(parse_tls_sni(t) == std::optional<std::string>("app.snapchat.com"));
  CHECK_FALSE(parse_tls_sni(h));
  CHECK_FALSE(parse_http_host(t));

  FakeClock clock;
  net::VirtualInterface vif("t0", clock);
  for (std::uint64_t n : {std::uint64_t{128}, std::uint64_t{641}, std::uint64_t{kMiB}, std::uint64_t{12345}}) {
    auto a = vif.open_flow("dns", {"10.0.0.2", "192.0.2.53", 40000, 53, net::L4::Udp});
    send_dns_volume(a, n, rng);
    CHECK(a.bytes_sent() == n);
    auto b = vif.open_flow("http", {"10.0.0.2", "203.0.113.80", 40001, 80, net::L4::Tcp});
    send_http_volume(b, "x.example", n);
    CHECK(b.bytes_sent() == n);
  }
  auto c = vif.open_flow("tls", {"10.0.0.2", "203.0.113.80", 40002, 443, net::L4::Tcp});
  send_tls_volume(c, "app.snapchat.com", 3 * kMiB + 17, rng);
  CHECK(c.bytes_sent() == 3 * kMiB + 17);
  vif.verify_isolation();
}

TEST_CASE("scenario JSON round trip and validation") {
  auto s = load_scenario(test::config_path("scenarios/p-at-2.json"));
  CHECK(s.name == "P-AT-2");
  CHECK(s.classifier == std::set<Classifier>{Classifier::ByIpAllowlist});
  auto back = scenario_from_json(to_json(s));
  CHECK(to_json(back) == to_json(s));

  Json bad = to_json(s);
  bad["zero_rated_ips"] = Json::array();
  CHECK(code_of([&] { scenario_from_json(bad); }) == Errc::ValidationError);
  bad = to_json(s);
  bad["rounding_bytes"] = 0;
  CHECK(code_of([&] { scenario_from_json(bad); }) == Errc::ValidationError);
  bad = to_json(s);
  bad["classifier"] = "ByMagic";
  CHECK(code_of([&] { scenario_from_json(bad); }) == Errc::ValidationError);
  bad = to_json(s);
  bad["network"]["v6_pool"] = "10.0.0.0/8";
  CHECK(code_of([&] { scenario_from_json(bad); }) == Errc::ValidationError);
}

TEST_CASE("lab: DNS metering reproduces the roaming discrepancy") {
  auto ro = load_scenario(test::config_path("scenarios/p-ro-1.json"));
  auto d = run_lab("dns_metering", ro, Context::Domestic);
  auto r = run_lab("dns_metering", ro, Context::Roaming);
  CHECK(d["verdict"] == "external-only-billed");
  CHECK(r["verdict"] == "all-billed");
  CHECK(d["internal_dns"] == "free");
  CHECK(r["internal_dns"] == "billed");
  CHECK(d["dns_server_class"] == "PublicV4");

  auto si = load_scenario(test::config_path("scenarios/p-si-1.json"));
  CHECK(run_lab("dns_metering", si, Context::Domestic)["verdict"] == "external-only-billed");
  CHECK(run_lab("dns_metering", si, Context::Roaming)["verdict"] == "all-billed");

  auto at1 = load_scenario(test::config_path("scenarios/p-at-1.json"));
  auto a = run_lab("dns_metering", at1, Context::Roaming);
  CHECK(a["verdict"] == "external-only-billed");
  CHECK(a["dns_server_class"] == "PrivateRfc1918");
}

TEST_CASE("lab: free-riding verdicts") {
  auto at1 = run_lab("zero_rating", load_scenario(test::config_path("scenarios/p-at-1.json")), Context::Domestic);
  CHECK(at1["zero_rated_domestic"] == "yes");
  CHECK(at1["spoof_http"] == "free");
  CHECK(at1["spoof_sni"] == "free");

  auto at2s = load_scenario(test::config_path("scenarios/p-at-2.json"));
  auto at2 = run_lab("zero_rating", at2s, Context::Domestic);
  CHECK(at2["zero_rated_domestic"] == "yes");
  CHECK(at2["spoof_http"] == "billed");
  CHECK(at2["spoof_sni"] == "billed");
  CHECK(run_lab("zero_rating", at2s, Context::Roaming)["zero_rated_roaming"] == "yes");

  auto hr1s = load_scenario(test::config_path("scenarios/p-hr-1.json"));
  auto hr1d = run_lab("zero_rating", hr1s, Context::Domestic);
  CHECK(hr1d["zero_rated_domestic"] == "yes");
  CHECK(hr1d["spoof_http"] == "free");
  CHECK(hr1d["spoof_sni"] == "free");
  CHECK(run_lab("zero_rating", hr1s, Context::Roaming)["zero_rated_roaming"] == "no");

  auto hr2 = run_lab("zero_rating", load_scenario(test::config_path("scenarios/p-hr-2.json")), Context::Domestic);
  CHECK(hr2["spoof_http"] == "billed");
  CHECK(hr2["spoof_sni"] == "free");
}

TEST_CASE("lab: a classifier that zero-rates everything fails the control") {
  BillingScenario s = basic_scenario();
  s.classifier = {Classifier::ByIpAllowlist};
  s.zero_rated_ips = {Cidr::parse("0.0.0.0/0")};
  CHECK(code_of([&] { run_lab("zero_rating", s, Context::Domestic); }) == Errc::ScenarioFailure);
}

TEST_CASE("lab: IP configuration") {
  auto at2 = run_lab("ip_config", load_scenario(test::config_path("scenarios/p-at-2.json")), Context::Domestic);
  CHECK(at2["class"] == "PublicV6");
  CHECK(at2["incoming"] == "open");
  CHECK(at2["v4"]["incoming"] == "blocked");
  CHECK(at2["cgnat"] == true);
  CHECK(at2["roaming_mode"] == "HomeRouted");

  auto at1 = run_lab("ip_config", load_scenario(test::config_path("scenarios/p-at-1.json")), Context::Roaming);
  CHECK(at1["class"] == "PublicV6");
  CHECK(at1["incoming"] == "blocked");
  CHECK(at1["roaming_mode"] == "HomeRouted");

  auto si1 = run_lab("ip_config", load_scenario(test::config_path("scenarios/p-si-1.json")), Context::Domestic);
  CHECK(si1["class"] == "CgnatShared");
  CHECK(si1["v6"].is_null());

  BillingScenario lbo = basic_scenario();
  lbo.roaming_mode = RoamingMode::LocalBreakout;
  lbo.network.v4_pools = {Cidr::parse("10.0.0.0/9")};
  lbo.network.visited_v4_pools = {Cidr::parse("10.200.0.0/16")};
  CHECK(run_lab("ip_config", lbo, Context::Roaming)["roaming_mode"] == "LocalBreakout");
  CHECK(run_lab("ip_config", lbo, Context::Domestic)["roaming_mode"] == "HomeRouted");
}

TEST_CASE("billing HTTP API") {
  FakeClock clock;
  BillingSimulator sim(clock);
  BillingServer server(sim);
  auto port = server.start({"127.0.0.1", 0});
  BillingClient client("127.0.0.1:" + std::to_string(port));
  BillingScenario s = basic_scenario();
  s.cdr_delay = std::chrono::seconds{60};
  client.provision("7", s, "secret");
  CHECK(client.read_quota("7", "secret").remaining_bytes == static_cast<std::int64_t>(s.quota_bytes));
  CHECK(code_of([&] { client.read_quota("7", "nope"); }) == Errc::AuthRejected);
  CHECK(code_of([&] { client.read_quota("8", "secret"); }) == Errc::UnknownImsi);
  auto r = client.post_flows("7", Context::Roaming, {flow_to("203.0.113.1", 1000)});
  CHECK(r.billed_bytes == 1000);
  CHECK(client.cdrs("7").empty());
  CHECK(client.cdrs("7", true).size() == 1);
  clock.advance(std::chrono::seconds{60});
  auto cdrs = client.cdrs("7");
  REQUIRE(cdrs.size() == 1);
  CHECK(cdrs[0]["billed_bytes"] == 1000);
  CHECK(client.read_quota("7", "secret").remaining_bytes == static_cast<std::int64_t>(s.quota_bytes) - 1000);
  server.stop();
  CHECK(code_of([&] { client.read_quota("7", "secret"); }) == Errc::EndpointUnreachable);
}
