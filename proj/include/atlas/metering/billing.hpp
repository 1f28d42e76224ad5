#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "atlas/metering/ipclass.hpp"
#include "atlas/util/bytes.hpp"
#include "atlas/util/clock.hpp"
#include "json.hpp"

namespace atlas::metering {

using Json = nlohmann::json;

enum class Classifier { ByHostHeader, BySni, ByIpAllowlist };
enum class RoamingMode { HomeRouted, LocalBreakout };
enum class Context { Domestic, Roaming };

const char* to_string(Classifier c);
const char* to_string(RoamingMode m);
const char* to_string(Context c);
Context context_from_string(const std::string& s);  // throws ValidationError

// Address plan of the simulated operator.
struct NetworkConfig {
  std::vector<Cidr> v4_pools{Cidr::parse("10.0.0.0/8")};  // home operator, handed out under CGNAT
  std::vector<Cidr> visited_v4_pools{Cidr::parse("10.200.0.0/16")};  // used for local breakout
  std::optional<Cidr> v6_pool;
  bool v4_incoming_open = false;
  bool v6_incoming_open = false;
  std::string dns_v4 = "10.0.0.53";
};

struct BillingScenario {
  std::string name;
  std::string home_country;
  std::set<Classifier> classifier;
  std::set<std::string> zero_rated_names;
  std::vector<Cidr> zero_rated_ips;
  bool zero_rating_roaming = true;
  bool internal_dns_billed_domestic = false;
  bool internal_dns_billed_roaming = false;
  std::uint64_t rounding_bytes = 1;
  Nanos cdr_delay{0};
  RoamingMode roaming_mode = RoamingMode::HomeRouted;
  std::uint64_t quota_bytes = 1024 * 1024 * 1024ull;
  NetworkConfig network;

  // Throws Error(ValidationError).
  void validate() const;
};

Json to_json(const BillingScenario& s);
BillingScenario scenario_from_json(const Json& j);  // validates
BillingScenario load_scenario(const std::string& path);

// One flow as seen by the operator's gateway.
struct FlowRecord {
  std::string src;
  std::string dst;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::string proto = "udp";
  std::optional<std::string> host;
  std::optional<std::string> sni;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  bool internal_dns = false;  // addressed to the resolver handed out at attach
};

Json to_json(const FlowRecord& f);
FlowRecord flow_from_json(const Json& j);

struct Cdr {
  std::uint64_t id = 0;
  std::uint64_t batch = 0;
  std::string imsi;
  FlowRecord flow;
  bool zero_rated = false;
  std::uint64_t billed_bytes = 0;  // the batch round-up surplus sits on its last billed CDR
  Nanos ended_at{0};
  Nanos posted_at{0};
};

Json to_json(const Cdr& c);

bool is_zero_rated(const BillingScenario& s, const FlowRecord& f, Context ctx);

struct BillResult {
  std::uint64_t raw_bytes = 0;     // non-zero-rated bytes before rounding
  std::uint64_t billed_bytes = 0;  // after rounding
  std::int64_t quota_after = 0;
  std::vector<Cdr> cdrs;
};

// One posting batch: classify, sum, round up once, spread over CDRs.
BillResult billing_simulate(const BillingScenario& s, const std::vector<FlowRecord>& flows, Context ctx,
                            std::int64_t quota_before, Nanos ended_at = Nanos{0});

struct QuotaSnapshot {
  std::int64_t remaining_bytes = 0;
  std::string plan;
  WallTime as_of{};
};

Json to_json(const QuotaSnapshot& q);
QuotaSnapshot quota_from_json(const Json& j);

struct BatchReceipt {
  std::uint64_t batch = 0;
  std::uint64_t billed_bytes = 0;
  Nanos posted_at{0};
};

// Per-subscriber operator billing. CDRs become visible (and charge the
// quota) only once the clock passes their posted_at.
class BillingSimulator {
 public:
  explicit BillingSimulator(Clock& clock);

  // Creates or replaces the subscriber's account. `ki` is the operator's
  // copy of the SIM key; without one the subscriber cannot authenticate.
  void provision(const std::string& imsi, BillingScenario scenario, std::string api_key, Bytes ki = {});
  bool has_account(const std::string& imsi) const;
  std::vector<std::string> accounts() const;
  BillingScenario scenario(const std::string& imsi) const;

  // Errors: UnknownImsi.
  BatchReceipt post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows);
  // Errors: UnknownImsi, AuthRejected.
  QuotaSnapshot quota(const std::string& imsi, const std::string& api_key) const;
  std::vector<Cdr> cdrs(const std::string& imsi, bool include_pending = false) const;

  // Network authentication: a fresh 16-byte RAND, then the SIM's RES is
  // checked against the operator's ki. A challenge is single-use.
  // Errors: UnknownImsi; AuthFailure (no ki on file, unknown RAND, wrong RES).
  Bytes auth_challenge(const std::string& imsi);
  void auth_verify(const std::string& imsi, ByteView rand, ByteView res);

 private:
  struct Account {
    BillingScenario scenario;
    std::string api_key;
    std::vector<Cdr> cdrs;
    Bytes ki;
    std::vector<Bytes> open_challenges;
  };
  const Account& account(const std::string& imsi) const;
  Account& account(const std::string& imsi);

  Clock& clock_;
  mutable std::mutex mu_;
  std::map<std::string, Account> accounts_;
  std::uint64_t next_cdr_ = 1;
  std::uint64_t next_batch_ = 1;
  std::mt19937_64 rng_{0x5eed};
};

}  // namespace atlas::metering
