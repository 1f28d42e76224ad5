#pragma once

#include <functional>
#include <string>
#include <vector>

#include "atlas/metering/billing_api.hpp"
#include "atlas/metering/encoding.hpp"
#include "atlas/metering/network.hpp"
#include "atlas/net/vif.hpp"

namespace atlas::metering {

inline const std::vector<std::string> kScenarioNames = {"dns_metering", "zero_rating", "ip_config"};

struct ScenarioParams {
  std::uint64_t unit_bytes = kMiB;
  std::string external_dns = "198.51.100.53";  // resolver we operate ourselves
  std::string zr_host = "app.snapchat.com";     // the zero-rated service
  std::string zr_ip = "192.0.2.80";
  std::string own_server = "203.0.113.80";  // our measurement server
  std::string own_host = "probe.measurement.example";
  std::string vantage_v4 = "203.0.113.10";  // outside scanner
  std::string vantage_v6 = "2001:db8::10";
  std::vector<Cidr> home_pools;  // home operator's published address space
  SettleOptions settle{true};
  std::uint64_t seed = 1;
};

// Recognized keys: unit_bytes, external_dns, zr_host, zr_ip, own_server,
// own_host, seed, settle_interval_s. Unknown keys are ignored.
ScenarioParams params_from_map(const std::map<std::string, std::string>& kv, ScenarioParams base = {});

struct ScenarioEnv {
  Clock& clock;
  net::VirtualInterface& vif;
  Attachment attachment;
  QuotaReader& quota;
  QuotaCredentials credentials;
  std::function<void()> end_window;                           // closes a CDR window
  std::function<bool(const net::PacketMeta&)> admits_inbound;  // outside -> device
  ScenarioParams params;
};

// Each returns a report JSON for the attachment's context.
// Errors: ScenarioFailure (with the underlying cause in the message).
Json run_dns_metering(ScenarioEnv& env);
Json run_zero_rating(ScenarioEnv& env);
Json run_ip_config(ScenarioEnv& env);
Json run_scenario(const std::string& name, ScenarioEnv& env);

// Self-contained run on a fake clock: billing simulator, simulated network
// and interface all in-process. The report gains "capture_packets" and the
// interface's isolation is verified.
Json run_lab(const std::string& name, const BillingScenario& scenario, Context ctx, ScenarioParams params = {});

}  // namespace atlas::metering
