#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "atlas/metering/billing.hpp"
#include "atlas/metering/billing_api.hpp"
#include "atlas/net/vif.hpp"

namespace atlas::metering {

// What the device learns when it attaches.
struct Attachment {
  std::string imsi;
  std::string visited_country;
  Context context = Context::Domestic;
  std::string v4;
  std::optional<std::string> v6;
  std::string dns_v4;
};

Json to_json(const Attachment& a);

// The operator side of a measurement: hands out addresses, watches uplink
// traffic (flow key, Host header, SNI) and reports each CDR window to
// billing as one batch.
class SimulatedNetwork {
 public:
  SimulatedNetwork(BillingScenario scenario, FlowPoster& billing, std::uint64_t seed = 1);

  const BillingScenario& scenario() const { return scenario_; }
  // Domestic when `visited_country` equals the scenario's home country
  // (or either is empty).
  Attachment attach(const std::string& imsi, const std::string& visited_country);
  void detach();
  std::optional<Attachment> attachment() const;

  // Install as the device interface's sink.
  void observe(const net::CapturedPacket& p);
  // Ends the current CDR window. Returns nullopt if no flow was seen.
  std::optional<BatchReceipt> flush();
  // Whether an unsolicited packet from outside reaches the device.
  bool admits_inbound(const net::PacketMeta& m) const;

 private:
  BillingScenario scenario_;
  FlowPoster& billing_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::optional<Attachment> att_;
  std::map<std::string, FlowRecord> flows_;
  std::vector<std::string> order_;
};

}  // namespace atlas::metering
