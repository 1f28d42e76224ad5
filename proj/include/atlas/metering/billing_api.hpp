#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "atlas/metering/billing.hpp"
#include "atlas/util/error.hpp"
#include "atlas/util/http.hpp"

namespace atlas::metering {

inline constexpr std::uint16_t kBillingPort = 7900;

// The two seams between a measurement and the operator's billing: the
// gateway reports flows, the subscriber reads its quota.
class FlowPoster {
 public:
  virtual ~FlowPoster() = default;
  virtual BatchReceipt post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows) = 0;
};

class QuotaReader {
 public:
  virtual ~QuotaReader() = default;
  virtual QuotaSnapshot read_quota(const std::string& imsi, const std::string& api_key) = 0;
};

// Subscriber management on the operator side: authentication and the
// tariff a subscriber is on.
class OperatorCore {
 public:
  virtual ~OperatorCore() = default;
  virtual Bytes auth_challenge(const std::string& imsi) = 0;
  virtual void auth_verify(const std::string& imsi, ByteView rand, ByteView res) = 0;
  virtual BillingScenario subscriber_scenario(const std::string& imsi) = 0;
};

// In-process adapter.
class LocalBilling final : public FlowPoster, public QuotaReader, public OperatorCore {
 public:
  explicit LocalBilling(BillingSimulator& sim) : sim_(sim) {}
  BatchReceipt post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows) override {
    return sim_.post_flows(imsi, ctx, flows);
  }
  QuotaSnapshot read_quota(const std::string& imsi, const std::string& api_key) override {
    return sim_.quota(imsi, api_key);
  }
  Bytes auth_challenge(const std::string& imsi) override { return sim_.auth_challenge(imsi); }
  void auth_verify(const std::string& imsi, ByteView rand, ByteView res) override { sim_.auth_verify(imsi, rand, res); }
  BillingScenario subscriber_scenario(const std::string& imsi) override {
    if (!sim_.has_account(imsi)) throw Error(Errc::UnknownImsi, "no account for " + imsi);
    return sim_.scenario(imsi);
  }

 private:
  BillingSimulator& sim_;
};

// HTTP front of a BillingSimulator:
//   GET  /quota?imsi=...        Authorization: Bearer <api_key>
//   POST /flows                 {imsi, context, flows:[...]}
//   GET  /cdrs?imsi=...[&pending=1]
//   POST /accounts              {imsi, api_key, scenario, ki?}
//   GET  /accounts
//   GET  /subscribers/{imsi}/scenario
//   POST /auth/challenge        {imsi} -> {rand}
//   POST /auth/verify           {imsi, rand, res}
class BillingServer {
 public:
  explicit BillingServer(BillingSimulator& sim);
  std::uint16_t start(const net::Endpoint& ep);
  void stop() { http_.stop(); }
  std::uint16_t port() const { return http_.port(); }

 private:
  BillingSimulator& sim_;
  http::Server http_;
};

class BillingClient final : public FlowPoster, public QuotaReader, public OperatorCore {
 public:
  explicit BillingClient(const std::string& base_url);

  BatchReceipt post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows) override;
  QuotaSnapshot read_quota(const std::string& imsi, const std::string& api_key) override;
  std::vector<Json> cdrs(const std::string& imsi, bool include_pending = false);
  void provision(const std::string& imsi, const BillingScenario& scenario, const std::string& api_key,
                 const Bytes& ki = {});
  Bytes auth_challenge(const std::string& imsi) override;
  void auth_verify(const std::string& imsi, ByteView rand, ByteView res) override;
  BillingScenario subscriber_scenario(const std::string& imsi) override;

 private:
  std::mutex mu_;
  http::Client client_;
};

struct QuotaCredentials {
  std::string imsi;
  std::string api_key;
};

struct SettleOptions {
  bool settle = false;
  Nanos interval = std::chrono::minutes{30};  // longer than any configured CDR delay
  Nanos max_wait = std::chrono::hours{24};
};

// Reads the quota; with settle, keeps re-reading every `interval` until two
// consecutive reads agree. Errors: EndpointUnreachable, AuthRejected,
// Timeout (no agreement within max_wait).
QuotaSnapshot check_quota(QuotaReader& reader, const QuotaCredentials& creds, Clock& clock,
                          const SettleOptions& opts = {});

}  // namespace atlas::metering
