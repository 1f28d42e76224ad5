#include "atlas/metering/network.hpp"

#include "atlas/metering/traffic.hpp"
#include "atlas/util/error.hpp"

namespace atlas::metering {

Json to_json(const Attachment& a) {
  return {{"imsi", a.imsi},
          {"visited_country", a.visited_country},
          {"context", to_string(a.context)},
          {"v4", a.v4},
          {"v6", a.v6 ? Json(*a.v6) : Json(nullptr)},
          {"dns_v4", a.dns_v4}};
}

SimulatedNetwork::SimulatedNetwork(BillingScenario scenario, FlowPoster& billing, std::uint64_t seed)
    : scenario_(std::move(scenario)), billing_(billing), rng_(seed) {
  scenario_.validate();
}

Attachment SimulatedNetwork::attach(const std::string& imsi, const std::string& visited_country) {
  std::lock_guard lock(mu_);
  Attachment a;
  a.imsi = imsi;
  a.visited_country = visited_country;
  const bool roaming =
      !visited_country.empty() && !scenario_.home_country.empty() && visited_country != scenario_.home_country;
  a.context = roaming ? Context::Roaming : Context::Domestic;
  const bool breakout = roaming && scenario_.roaming_mode == RoamingMode::LocalBreakout;
  const auto& pools = breakout ? scenario_.network.visited_v4_pools : scenario_.network.v4_pools;
  const Cidr& pool = pools[rng_() % pools.size()];
  // Skip the network and broadcast addresses of small pools.
  const int host_bits = 32 - pool.prefix;
  std::uint64_t span = host_bits >= 63 ? ~0ull : (1ull << host_bits);
  a.v4 = pool.host(span > 2 ? 1 + rng_() % (span - 2) : 0).str();
  if (scenario_.network.v6_pool && !breakout) a.v6 = scenario_.network.v6_pool->host(rng_() | 1).str();
  a.dns_v4 = scenario_.network.dns_v4;
  att_ = a;
  flows_.clear();
  order_.clear();
  return a;
}

void SimulatedNetwork::detach() {
  std::lock_guard lock(mu_);
  att_.reset();
}

std::optional<Attachment> SimulatedNetwork::attachment() const {
  std::lock_guard lock(mu_);
  return att_;
}

void SimulatedNetwork::observe(const net::CapturedPacket& p) {
  std::lock_guard lock(mu_);
  if (!att_) return;
  // Downlink (towards the device) is not metered here.
  if (p.meta.dst == att_->v4 || (att_->v6 && p.meta.dst == *att_->v6)) return;
  const char* proto = p.meta.proto == net::L4::Tcp ? "tcp" : "udp";
  std::string key = p.tag + "|" + p.meta.src + "|" + p.meta.dst + "|" + std::to_string(p.meta.sport) + "|" +
                    std::to_string(p.meta.dport) + "|" + proto;
  auto it = flows_.find(key);
  if (it == flows_.end()) {
    FlowRecord f;
    f.src = p.meta.src;
    f.dst = p.meta.dst;
    f.sport = p.meta.sport;
    f.dport = p.meta.dport;
    f.proto = proto;
    f.internal_dns = p.meta.dport == 53 && p.meta.dst == att_->dns_v4;
    if (p.meta.proto == net::L4::Tcp) {
      f.host = parse_http_host(p.payload);
      if (!f.host) f.sni = parse_tls_sni(p.payload);
    }
    it = flows_.emplace(key, std::move(f)).first;
    order_.push_back(key);
  }
  it->second.bytes_up += p.payload.size();
}

std::optional<BatchReceipt> SimulatedNetwork::flush() {
  std::vector<FlowRecord> batch;
  std::string imsi;
  Context ctx;
  {
    std::lock_guard lock(mu_);
    if (!att_) throw Error(Errc::PreconditionFailed, "network flush without an attached device");
    for (const auto& k : order_) batch.push_back(flows_.at(k));
    flows_.clear();
    order_.clear();
    imsi = att_->imsi;
    ctx = att_->context;
  }
  if (batch.empty()) return std::nullopt;
  return billing_.post_flows(imsi, ctx, batch);
}

bool SimulatedNetwork::admits_inbound(const net::PacketMeta& m) const {
  std::lock_guard lock(mu_);
  if (!att_) return false;
  if (m.dst == att_->v4) {
    // Shared and private space is not routable from outside.
    IpClass c = classify_ip(att_->v4);
    if (c == IpClass::CgnatShared || c == IpClass::PrivateRfc1918) return false;
    return scenario_.network.v4_incoming_open;
  }
  if (att_->v6 && m.dst == *att_->v6) return scenario_.network.v6_incoming_open;
  return false;
}

}  // namespace atlas::metering
