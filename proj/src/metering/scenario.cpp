#include "atlas/metering/scenario.hpp"

#include <random>

#include "atlas/metering/traffic.hpp"
#include "atlas/util/error.hpp"

namespace atlas::metering {

ScenarioParams params_from_map(const std::map<std::string, std::string>& kv, ScenarioParams p) {
  auto num = [&](const std::string& k, std::uint64_t& out) {
    auto it = kv.find(k);
    if (it == kv.end()) return;
    try {
      out = std::stoull(it->second);
    } catch (const std::exception&) {
      throw Error(Errc::ValidationError, "parameter " + k + " is not a number");
    }
  };
  auto str = [&](const std::string& k, std::string& out) {
    if (auto it = kv.find(k); it != kv.end()) out = it->second;
  };
  num("unit_bytes", p.unit_bytes);
  num("seed", p.seed);
  str("external_dns", p.external_dns);
  str("zr_host", p.zr_host);
  str("zr_ip", p.zr_ip);
  str("own_server", p.own_server);
  str("own_host", p.own_host);
  std::uint64_t settle_s = 0;
  num("settle_interval_s", settle_s);
  if (settle_s) p.settle.interval = std::chrono::seconds{settle_s};
  return p;
}

namespace {

std::uint16_t ephemeral(std::mt19937_64& rng) { return static_cast<std::uint16_t>(40000 + rng() % 20000); }

std::int64_t settled_quota(ScenarioEnv& env) {
  try {
    return check_quota(env.quota, env.credentials, env.clock, env.params.settle).remaining_bytes;
  } catch (const Error& e) {
    if (e.code() == Errc::AuthRejected || e.code() == Errc::EndpointUnreachable) throw;
    throw Error(Errc::ScenarioFailure, std::string("quota check failed: ") + e.what());
  }
}

std::set<int> decode(std::int64_t billed, const TrafficClassPlan& plan) {
  // The operator's rounding is unknown to us; any granularity up to half a
  // unit decodes uniquely against this bound.
  try {
    return decode_billed(billed, plan, std::max<std::uint64_t>(1, plan.unit_bytes / 2));
  } catch (const Error& e) {
    throw Error(Errc::ScenarioFailure, "cannot attribute " + std::to_string(billed) + " billed bytes: " + e.what());
  }
}

Json classes_json(const std::set<int>& s) { return Json(std::vector<int>(s.begin(), s.end())); }

const char* billed_word(bool b) { return b ? "billed" : "free"; }

}  // namespace

Json run_dns_metering(ScenarioEnv& env) {
  std::mt19937_64 rng(env.params.seed);
  const auto& att = env.attachment;
  constexpr int kInternal = 0;
  constexpr int kExternal = 1;
  TrafficClassPlan plan{{kInternal, kExternal}, env.params.unit_bytes};

  const std::int64_t before = settled_quota(env);
  auto internal = env.vif.open_flow("dns_metering/internal",
                                    {att.v4, att.dns_v4, ephemeral(rng), 53, net::L4::Udp});
  send_dns_volume(internal, plan.volume(kInternal), rng);
  auto external = env.vif.open_flow("dns_metering/external",
                                    {att.v4, env.params.external_dns, ephemeral(rng), 53, net::L4::Udp});
  send_dns_volume(external, plan.volume(kExternal), rng);
  env.end_window();
  const std::int64_t after = settled_quota(env);

  const auto billed = decode(before - after, plan);
  const bool internal_billed = billed.count(kInternal) > 0;
  const bool external_billed = billed.count(kExternal) > 0;
  std::string verdict = internal_billed && external_billed ? "all-billed"
                        : external_billed                  ? "external-only-billed"
                        : internal_billed                  ? "internal-only-billed"
                                                           : "none-billed";
  return {{"scenario", "dns_metering"},
          {"context", to_string(att.context)},
          {"verdict", verdict},
          {"internal_dns", billed_word(internal_billed)},
          {"external_dns", billed_word(external_billed)},
          {"dns_server", att.dns_v4},
          {"dns_server_class", to_string(classify_ip(att.dns_v4))},
          {"quota_before", before},
          {"quota_after", after},
          {"billed_bytes", before - after},
          {"decoded_classes", classes_json(billed)},
          {"plan", {{"unit_bytes", plan.unit_bytes}, {"internal_class", kInternal}, {"external_class", kExternal}}}};
}

Json run_zero_rating(ScenarioEnv& env) {
  std::mt19937_64 rng(env.params.seed);
  const auto& att = env.attachment;
  const auto& p = env.params;
  constexpr int kLegit = 0;      // the real service, TLS
  constexpr int kSpoofHttp = 1;  // our server, plain HTTP with the service's Host
  constexpr int kSpoofSni = 2;   // our server, TLS with the service's SNI
  constexpr int kControl = 3;    // our server under our own name: must be billed
  TrafficClassPlan plan{{kLegit, kSpoofHttp, kSpoofSni, kControl}, p.unit_bytes};

  const std::int64_t before = settled_quota(env);
  auto legit = env.vif.open_flow("zero_rating/legit", {att.v4, p.zr_ip, ephemeral(rng), 443, net::L4::Tcp});
  send_tls_volume(legit, p.zr_host, plan.volume(kLegit), rng);
  auto http = env.vif.open_flow("zero_rating/spoof_http", {att.v4, p.own_server, ephemeral(rng), 80, net::L4::Tcp});
  send_http_volume(http, p.zr_host, plan.volume(kSpoofHttp));
  auto sni = env.vif.open_flow("zero_rating/spoof_sni", {att.v4, p.own_server, ephemeral(rng), 443, net::L4::Tcp});
  send_tls_volume(sni, p.zr_host, plan.volume(kSpoofSni), rng);
  auto control = env.vif.open_flow("zero_rating/control", {att.v4, p.own_server, ephemeral(rng), 80, net::L4::Tcp});
  send_http_volume(control, p.own_host, plan.volume(kControl));
  env.end_window();
  const std::int64_t after = settled_quota(env);

  const auto billed = decode(before - after, plan);
  if (!billed.count(kControl)) {
    throw Error(Errc::ScenarioFailure, "control traffic was not billed; quota readings are not trustworthy");
  }
  const bool legit_free = !billed.count(kLegit);
  Json r{{"scenario", "zero_rating"},
         {"context", to_string(att.context)},
         {"zero_rated_service", p.zr_host},
         {"spoof_http", billed.count(kSpoofHttp) ? "billed" : "free"},
         {"spoof_sni", billed.count(kSpoofSni) ? "billed" : "free"},
         {"quota_before", before},
         {"quota_after", after},
         {"billed_bytes", before - after},
         {"decoded_classes", classes_json(billed)},
         {"plan",
          {{"unit_bytes", plan.unit_bytes},
           {"legit_class", kLegit},
           {"spoof_http_class", kSpoofHttp},
           {"spoof_sni_class", kSpoofSni},
           {"control_class", kControl}}}};
  r[std::string("zero_rated_") + to_string(att.context)] = legit_free ? "yes" : "no";
  return r;
}

Json run_ip_config(ScenarioEnv& env) {
  const auto& att = env.attachment;
  const auto& p = env.params;
  std::mt19937_64 rng(p.seed);

  auto probe_family = [&](const std::string& addr, const std::string& vantage) {
    struct Probe {
      std::uint16_t port;
      net::L4 proto;
    };
    // Echo stands in for ping; the rest is a small port scan.
    const Probe probes[] = {{7, net::L4::Udp}, {22, net::L4::Tcp}, {80, net::L4::Tcp}, {443, net::L4::Tcp},
                            {8080, net::L4::Tcp}};
    int delivered = 0;
    Json ports = Json::array();
    for (const auto& pr : probes) {
      net::PacketMeta m{vantage, addr, ephemeral(rng), pr.port, pr.proto};
      if (!env.admits_inbound(m)) continue;
      auto flow = env.vif.open_flow("ip_config/inbound", m);
      const Bytes payload(16, 0x55);
      flow.send(payload);
      ++delivered;
      ports.push_back(pr.port);
    }
    IpClass cls = classify_ip(addr);
    return Json{{"address", addr},
                {"class", to_string(cls)},
                {"incoming", delivered > 0 ? "open" : "blocked"},
                {"reachable_ports", ports}};
  };

  Json v4 = probe_family(att.v4, p.vantage_v4);
  Json v6 = att.v6 ? probe_family(*att.v6, p.vantage_v6) : Json(nullptr);

  bool home = false;
  const IpAddress a4 = IpAddress::parse(att.v4);
  for (const auto& pool : p.home_pools) home = home || pool.contains(a4);
  const Json& primary = v6.is_null() ? v4 : v6;
  IpClass c4 = classify_ip(a4);
  return {{"scenario", "ip_config"},
          {"context", to_string(att.context)},
          {"v4", v4},
          {"v6", v6},
          {"cgnat", c4 == IpClass::CgnatShared || c4 == IpClass::PrivateRfc1918},
          {"roaming_mode", home ? "HomeRouted" : "LocalBreakout"},
          {"class", primary["class"]},
          {"incoming", primary["incoming"]}};
}

Json run_scenario(const std::string& name, ScenarioEnv& env) {
  if (name == "dns_metering") return run_dns_metering(env);
  if (name == "zero_rating" || name == "zero_rating_freeride") return run_zero_rating(env);
  if (name == "ip_config") return run_ip_config(env);
  throw Error(Errc::ValidationError, "unknown scenario '" + name + "'");
}

Json run_lab(const std::string& name, const BillingScenario& scenario, Context ctx, ScenarioParams params) {
  FakeClock clock;
  BillingSimulator billing(clock);
  LocalBilling local(billing);
  const std::string imsi = "001010000000001";
  const std::string key = "lab";
  billing.provision(imsi, scenario, key);
  SimulatedNetwork network(scenario, local, params.seed);
  std::string home = scenario.home_country.empty() ? "XX" : scenario.home_country;
  Attachment att = network.attach(imsi, ctx == Context::Domestic ? home : (home == "ZZ" ? "ZY" : "ZZ"));
  net::VirtualInterface vif("lab0", clock);
  vif.set_sink([&](const net::CapturedPacket& p) { network.observe(p); });
  if (params.home_pools.empty()) params.home_pools = scenario.network.v4_pools;
  ScenarioEnv env{clock,
                  vif,
                  att,
                  local,
                  {imsi, key},
                  [&] { network.flush(); },
                  [&](const net::PacketMeta& m) { return network.admits_inbound(m); },
                  params};
  Json report = run_scenario(name, env);
  vif.verify_isolation();
  report["provider"] = scenario.name;
  report["capture_packets"] = vif.emitted();
  return report;
}

}  // namespace atlas::metering
