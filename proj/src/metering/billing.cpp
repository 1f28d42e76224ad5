#include "atlas/metering/billing.hpp"

#include <algorithm>
#include <fstream>
#include <utility>

#include "atlas/metering/encoding.hpp"
#include "atlas/sim/backend.hpp"
#include "atlas/util/error.hpp"

namespace atlas::metering {

const char* to_string(Classifier c) {
  switch (c) {
    case Classifier::ByHostHeader:
      return "ByHostHeader";
    case Classifier::BySni:
      return "BySni";
    case Classifier::ByIpAllowlist:
      return "ByIpAllowlist";
  }
  return "?";
}

const char* to_string(RoamingMode m) { return m == RoamingMode::HomeRouted ? "HomeRouted" : "LocalBreakout"; }

const char* to_string(Context c) { return c == Context::Domestic ? "domestic" : "roaming"; }

Context context_from_string(const std::string& s) {
  if (s == "domestic") return Context::Domestic;
  if (s == "roaming") return Context::Roaming;
  throw Error(Errc::ValidationError, "context must be domestic or roaming, got '" + s + "'");
}

namespace {

Classifier classifier_from_string(const std::string& s) {
  if (s == "ByHostHeader") return Classifier::ByHostHeader;
  if (s == "BySni") return Classifier::BySni;
  if (s == "ByIpAllowlist") return Classifier::ByIpAllowlist;
  throw Error(Errc::ValidationError, "unknown classifier '" + s + "'");
}

RoamingMode roaming_mode_from_string(const std::string& s) {
  if (s == "HomeRouted") return RoamingMode::HomeRouted;
  if (s == "LocalBreakout") return RoamingMode::LocalBreakout;
  throw Error(Errc::ValidationError, "unknown roaming_mode '" + s + "'");
}

std::vector<Cidr> cidrs_from(const Json& j) {
  std::vector<Cidr> out;
  for (const auto& c : j) out.push_back(Cidr::parse(c.get<std::string>()));
  return out;
}

Json cidrs_to(const std::vector<Cidr>& v) {
  Json a = Json::array();
  for (const auto& c : v) a.push_back(c.str());
  return a;
}

std::int64_t ns_count(Nanos d) { return d.count(); }

}  // namespace

void BillingScenario::validate() const {
  if (name.empty()) throw Error(Errc::ValidationError, "scenario needs a name");
  if (rounding_bytes < 1) throw Error(Errc::ValidationError, "rounding_bytes must be at least 1");
  if (cdr_delay.count() < 0) throw Error(Errc::ValidationError, "cdr_delay must not be negative");
  const bool by_name = classifier.count(Classifier::ByHostHeader) || classifier.count(Classifier::BySni);
  const bool by_ip = classifier.count(Classifier::ByIpAllowlist) > 0;
  if (by_name != !zero_rated_names.empty()) {
    throw Error(Errc::ValidationError, "zero_rated_names go with a ByHostHeader or BySni classifier");
  }
  if (by_ip != !zero_rated_ips.empty()) {
    throw Error(Errc::ValidationError, "zero_rated_ips go with the ByIpAllowlist classifier");
  }
  if (network.v4_pools.empty()) throw Error(Errc::ValidationError, "network.v4_pools is empty");
  for (const auto& p : network.v4_pools) {
    if (p.base.v6) throw Error(Errc::ValidationError, "network.v4_pools holds " + p.str());
  }
  if (network.v6_pool && !network.v6_pool->base.v6) throw Error(Errc::ValidationError, "network.v6_pool is not IPv6");
  if (roaming_mode == RoamingMode::LocalBreakout && network.visited_v4_pools.empty()) {
    throw Error(Errc::ValidationError, "local breakout needs network.visited_v4_pools");
  }
  IpAddress::parse(network.dns_v4);
}

Json to_json(const BillingScenario& s) {
  Json cls = Json::array();
  for (auto c : s.classifier) cls.push_back(to_string(c));
  Json net{{"v4_pools", cidrs_to(s.network.v4_pools)},
           {"visited_v4_pools", cidrs_to(s.network.visited_v4_pools)},
           {"v6_pool", s.network.v6_pool ? Json(s.network.v6_pool->str()) : Json(nullptr)},
           {"v4_incoming_open", s.network.v4_incoming_open},
           {"v6_incoming_open", s.network.v6_incoming_open},
           {"dns_v4", s.network.dns_v4}};
  return {{"name", s.name},
          {"home_country", s.home_country},
          {"classifier", cls},
          {"zero_rated_names", s.zero_rated_names},
          {"zero_rated_ips", cidrs_to(s.zero_rated_ips)},
          {"zero_rating_roaming", s.zero_rating_roaming},
          {"internal_dns_billed_domestic", s.internal_dns_billed_domestic},
          {"internal_dns_billed_roaming", s.internal_dns_billed_roaming},
          {"rounding_bytes", s.rounding_bytes},
          {"cdr_delay_s", std::chrono::duration<double>(s.cdr_delay).count()},
          {"roaming_mode", to_string(s.roaming_mode)},
          {"quota_bytes", s.quota_bytes},
          {"network", net}};
}

BillingScenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::ValidationError, "scenario must be a JSON object");
  BillingScenario s;
  try {
    s.name = j.at("name").get<std::string>();
    s.home_country = j.value("home_country", "");
    if (j.contains("classifier")) {
      const auto& c = j.at("classifier");
      if (c.is_string()) {
        s.classifier.insert(classifier_from_string(c.get<std::string>()));
      } else {
        for (const auto& x : c) s.classifier.insert(classifier_from_string(x.get<std::string>()));
      }
    }
    if (j.contains("zero_rated_names")) s.zero_rated_names = j.at("zero_rated_names").get<std::set<std::string>>();
    if (j.contains("zero_rated_ips")) s.zero_rated_ips = cidrs_from(j.at("zero_rated_ips"));
    s.zero_rating_roaming = j.value("zero_rating_roaming", true);
    s.internal_dns_billed_domestic = j.value("internal_dns_billed_domestic", false);
    s.internal_dns_billed_roaming = j.value("internal_dns_billed_roaming", false);
    s.rounding_bytes = j.value("rounding_bytes", std::uint64_t{1});
    s.cdr_delay = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(j.value("cdr_delay_s", 0.0)));
    s.roaming_mode = roaming_mode_from_string(j.value("roaming_mode", "HomeRouted"));
    s.quota_bytes = j.value("quota_bytes", s.quota_bytes);
    if (j.contains("network")) {
      const auto& n = j.at("network");
      if (n.contains("v4_pools")) s.network.v4_pools = cidrs_from(n.at("v4_pools"));
      if (n.contains("visited_v4_pools")) s.network.visited_v4_pools = cidrs_from(n.at("visited_v4_pools"));
      if (n.contains("v6_pool") && !n.at("v6_pool").is_null()) {
        s.network.v6_pool = Cidr::parse(n.at("v6_pool").get<std::string>());
      }
      s.network.v4_incoming_open = n.value("v4_incoming_open", false);
      s.network.v6_incoming_open = n.value("v6_incoming_open", false);
      s.network.dns_v4 = n.value("dns_v4", s.network.dns_v4);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ParseError) throw Error(Errc::ValidationError, "scenario: " + e.detail());
    throw;
  }
  s.validate();
  return s;
}

BillingScenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ValidationError, "cannot open scenario " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ValidationError, path + " is not valid JSON");
  return scenario_from_json(j);
}

Json to_json(const FlowRecord& f) {
  Json j{{"src", f.src},           {"dst", f.dst},           {"sport", f.sport},
         {"dport", f.dport},       {"proto", f.proto},       {"bytes_up", f.bytes_up},
         {"bytes_down", f.bytes_down}, {"internal_dns", f.internal_dns}};
  if (f.host) j["host"] = *f.host;
  if (f.sni) j["sni"] = *f.sni;
  return j;
}

FlowRecord flow_from_json(const Json& j) {
  FlowRecord f;
  try {
    f.src = j.at("src").get<std::string>();
    f.dst = j.at("dst").get<std::string>();
    f.sport = j.value("sport", std::uint16_t{0});
    f.dport = j.value("dport", std::uint16_t{0});
    f.proto = j.value("proto", "udp");
    if (j.contains("host") && !j.at("host").is_null()) f.host = j.at("host").get<std::string>();
    if (j.contains("sni") && !j.at("sni").is_null()) f.sni = j.at("sni").get<std::string>();
    f.bytes_up = j.value("bytes_up", std::uint64_t{0});
    f.bytes_down = j.value("bytes_down", std::uint64_t{0});
    f.internal_dns = j.value("internal_dns", false);
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("flow: ") + e.what());
  }
  return f;
}

Json to_json(const Cdr& c) {
  return {{"id", c.id},
          {"batch", c.batch},
          {"imsi", c.imsi},
          {"flow", to_json(c.flow)},
          {"zero_rated", c.zero_rated},
          {"billed_bytes", c.billed_bytes},
          {"ended_at_ns", ns_count(c.ended_at)},
          {"posted_at_ns", ns_count(c.posted_at)}};
}

bool is_zero_rated(const BillingScenario& s, const FlowRecord& f, Context ctx) {
  if (f.internal_dns) {
    return !(ctx == Context::Roaming ? s.internal_dns_billed_roaming : s.internal_dns_billed_domestic);
  }
  if (ctx == Context::Roaming && !s.zero_rating_roaming) return false;
  if (s.classifier.count(Classifier::ByHostHeader) && f.host && s.zero_rated_names.count(*f.host)) return true;
  if (s.classifier.count(Classifier::BySni) && f.sni && s.zero_rated_names.count(*f.sni)) return true;
  if (s.classifier.count(Classifier::ByIpAllowlist)) {
    IpAddress dst;
    try {
      dst = IpAddress::parse(f.dst);
    } catch (const Error&) {
      return false;
    }
    for (const auto& c : s.zero_rated_ips) {
      if (c.contains(dst)) return true;
    }
  }
  return false;
}

BillResult billing_simulate(const BillingScenario& s, const std::vector<FlowRecord>& flows, Context ctx,
                            std::int64_t quota_before, Nanos ended_at) {
  BillResult r;
  std::optional<std::size_t> last_billed;
  for (const auto& f : flows) {
    Cdr c;
    c.flow = f;
    c.zero_rated = is_zero_rated(s, f, ctx);
    c.ended_at = ended_at;
    c.posted_at = ended_at + s.cdr_delay;
    if (!c.zero_rated) {
      c.billed_bytes = f.bytes_up + f.bytes_down;
      r.raw_bytes += c.billed_bytes;
      last_billed = r.cdrs.size();
    }
    r.cdrs.push_back(std::move(c));
  }
  r.billed_bytes = round_up(r.raw_bytes, s.rounding_bytes);
  if (last_billed) r.cdrs[*last_billed].billed_bytes += r.billed_bytes - r.raw_bytes;
  r.quota_after = quota_before - static_cast<std::int64_t>(r.billed_bytes);
  return r;
}

Json to_json(const QuotaSnapshot& q) {
  return {{"remaining_bytes", q.remaining_bytes},
          {"plan", q.plan},
          {"as_of_us", std::chrono::duration_cast<std::chrono::microseconds>(q.as_of.time_since_epoch()).count()}};
}

QuotaSnapshot quota_from_json(const Json& j) {
  QuotaSnapshot q;
  try {
    q.remaining_bytes = j.at("remaining_bytes").get<std::int64_t>();
    q.plan = j.value("plan", "");
    q.as_of = WallTime{std::chrono::microseconds{j.value("as_of_us", std::int64_t{0})}};
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("quota: ") + e.what());
  }
  return q;
}

BillingSimulator::BillingSimulator(Clock& clock) : clock_(clock) {}

void BillingSimulator::provision(const std::string& imsi, BillingScenario scenario, std::string api_key, Bytes ki) {
  scenario.validate();
  if (!ki.empty() && ki.size() != 16) throw Error(Errc::ValidationError, "ki must be 16 bytes");
  std::lock_guard lock(mu_);
  accounts_[imsi] = Account{std::move(scenario), std::move(api_key), {}, std::move(ki), {}};
}

Bytes BillingSimulator::auth_challenge(const std::string& imsi) {
  std::lock_guard lock(mu_);
  Account& a = account(imsi);
  if (a.ki.empty()) throw Error(Errc::AuthFailure, "no key on file for " + imsi);
  Bytes rand(16);
  for (auto& b : rand) b = static_cast<std::uint8_t>(rng_());
  a.open_challenges.push_back(rand);
  return rand;
}

void BillingSimulator::auth_verify(const std::string& imsi, ByteView rand, ByteView res) {
  std::lock_guard lock(mu_);
  Account& a = account(imsi);
  Bytes r(rand.begin(), rand.end());
  auto it = std::find(a.open_challenges.begin(), a.open_challenges.end(), r);
  if (it == a.open_challenges.end()) throw Error(Errc::AuthFailure, "RAND was not issued for " + imsi);
  a.open_challenges.erase(it);
  Bytes expected = sim::authenticate_stub(a.ki, r).res;
  if (!std::equal(expected.begin(), expected.end(), res.begin(), res.end())) {
    throw Error(Errc::AuthFailure, "RES mismatch for " + imsi);
  }
}

bool BillingSimulator::has_account(const std::string& imsi) const {
  std::lock_guard lock(mu_);
  return accounts_.count(imsi) > 0;
}

std::vector<std::string> BillingSimulator::accounts() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [imsi, a] : accounts_) out.push_back(imsi);
  return out;
}

const BillingSimulator::Account& BillingSimulator::account(const std::string& imsi) const {
  auto it = accounts_.find(imsi);
  if (it == accounts_.end()) throw Error(Errc::UnknownImsi, "no billing account for " + imsi);
  return it->second;
}

BillingSimulator::Account& BillingSimulator::account(const std::string& imsi) {
  return const_cast<Account&>(std::as_const(*this).account(imsi));
}

BillingScenario BillingSimulator::scenario(const std::string& imsi) const {
  std::lock_guard lock(mu_);
  return account(imsi).scenario;
}

BatchReceipt BillingSimulator::post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows) {
  std::lock_guard lock(mu_);
  auto& acc = account(imsi);
  const Nanos now = clock_.now();
  auto r = billing_simulate(acc.scenario, flows, ctx, 0, now);
  BatchReceipt receipt{next_batch_++, r.billed_bytes, now + acc.scenario.cdr_delay};
  for (auto& c : r.cdrs) {
    c.id = next_cdr_++;
    c.batch = receipt.batch;
    c.imsi = imsi;
    acc.cdrs.push_back(std::move(c));
  }
  return receipt;
}

QuotaSnapshot BillingSimulator::quota(const std::string& imsi, const std::string& api_key) const {
  std::lock_guard lock(mu_);
  const auto& acc = account(imsi);
  if (api_key != acc.api_key) throw Error(Errc::AuthRejected, "bad credentials for " + imsi);
  const Nanos now = clock_.now();
  std::int64_t used = 0;
  for (const auto& c : acc.cdrs) {
    if (c.posted_at <= now) used += static_cast<std::int64_t>(c.billed_bytes);
  }
  return {static_cast<std::int64_t>(acc.scenario.quota_bytes) - used, acc.scenario.name, clock_.wall()};
}

std::vector<Cdr> BillingSimulator::cdrs(const std::string& imsi, bool include_pending) const {
  std::lock_guard lock(mu_);
  const auto& acc = account(imsi);
  const Nanos now = clock_.now();
  std::vector<Cdr> out;
  for (const auto& c : acc.cdrs) {
    if (include_pending || c.posted_at <= now) out.push_back(c);
  }
  return out;
}

}  // namespace atlas::metering
