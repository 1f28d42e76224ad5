#include "atlas/metering/billing_api.hpp"

#include "atlas/util/error.hpp"

namespace atlas::metering {

namespace {

std::string bearer(const httplib::Request& req) {
  std::string h = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (h.rfind(prefix, 0) != 0) return {};
  return h.substr(prefix.size());
}

std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) throw Error(Errc::ValidationError, "missing query parameter " + name);
  return req.get_param_value(name);
}

}  // namespace

BillingServer::BillingServer(BillingSimulator& sim) : sim_(sim) {
  auto& s = http_.raw();
  s.Get("/quota", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
          std::string key = bearer(req);
          if (key.empty()) throw Error(Errc::AuthRejected, "missing bearer credentials");
          http::reply(res, to_json(sim_.quota(required_param(req, "imsi"), key)));
        }));
  s.Post("/flows", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           std::vector<FlowRecord> flows;
           for (const auto& f : body.at("flows")) flows.push_back(flow_from_json(f));
           auto r = sim_.post_flows(body.at("imsi").get<std::string>(),
                                    context_from_string(body.at("context").get<std::string>()), flows);
           http::reply(res, {{"batch", r.batch}, {"billed_bytes", r.billed_bytes}, {"posted_at_ns", r.posted_at.count()}});
         }));
  s.Get("/cdrs", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
          bool pending = req.has_param("pending") && req.get_param_value("pending") == "1";
          Json arr = Json::array();
          for (const auto& c : sim_.cdrs(required_param(req, "imsi"), pending)) arr.push_back(to_json(c));
          http::reply(res, {{"cdrs", arr}});
        }));
  s.Post("/accounts", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           std::string imsi = body.at("imsi").get<std::string>();
           sim_.provision(imsi, scenario_from_json(body.at("scenario")), body.value("api_key", std::string{}),
                          from_hex(body.value("ki", std::string{})));
           http::reply(res, {{"imsi", imsi}}, 201);
         }));
  s.Get("/accounts", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          Json arr = Json::array();
          for (const auto& imsi : sim_.accounts()) arr.push_back({{"imsi", imsi}, {"plan", sim_.scenario(imsi).name}});
          http::reply(res, {{"accounts", arr}});
        }));
  s.Get(R"(/subscribers/(\d+)/scenario)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
          std::string imsi = req.matches[1];
          if (!sim_.has_account(imsi)) throw Error(Errc::UnknownImsi, "no account for " + imsi);
          http::reply(res, {{"scenario", to_json(sim_.scenario(imsi))}});
        }));
  s.Post("/auth/challenge", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           http::reply(res, {{"rand", to_hex(sim_.auth_challenge(body.at("imsi").get<std::string>()))}});
         }));
  s.Post("/auth/verify", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           sim_.auth_verify(body.at("imsi").get<std::string>(), from_hex(body.at("rand").get<std::string>()),
                            from_hex(body.at("res").get<std::string>()));
           http::reply(res, Json::object());
         }));
}

std::uint16_t BillingServer::start(const net::Endpoint& ep) { return http_.start(ep); }

BillingClient::BillingClient(const std::string& base_url) : client_(base_url) {}

BatchReceipt BillingClient::post_flows(const std::string& imsi, Context ctx, const std::vector<FlowRecord>& flows) {
  Json arr = Json::array();
  for (const auto& f : flows) arr.push_back(to_json(f));
  std::lock_guard lock(mu_);
  auto j = client_.post("/flows", {{"imsi", imsi}, {"context", to_string(ctx)}, {"flows", arr}});
  return {j.at("batch").get<std::uint64_t>(), j.at("billed_bytes").get<std::uint64_t>(),
          Nanos{j.at("posted_at_ns").get<std::int64_t>()}};
}

QuotaSnapshot BillingClient::read_quota(const std::string& imsi, const std::string& api_key) {
  std::lock_guard lock(mu_);
  return quota_from_json(client_.get("/quota?imsi=" + imsi, {{"Authorization", "Bearer " + api_key}}));
}

std::vector<Json> BillingClient::cdrs(const std::string& imsi, bool include_pending) {
  std::lock_guard lock(mu_);
  auto j = client_.get("/cdrs?imsi=" + imsi + (include_pending ? "&pending=1" : ""));
  return j.at("cdrs").get<std::vector<Json>>();
}

void BillingClient::provision(const std::string& imsi, const BillingScenario& scenario, const std::string& api_key,
                              const Bytes& ki) {
  std::lock_guard lock(mu_);
  Json body{{"imsi", imsi}, {"api_key", api_key}, {"scenario", to_json(scenario)}};
  if (!ki.empty()) body["ki"] = to_hex(ki);
  client_.post("/accounts", body);
}

Bytes BillingClient::auth_challenge(const std::string& imsi) {
  std::lock_guard lock(mu_);
  return from_hex(client_.post("/auth/challenge", {{"imsi", imsi}}).at("rand").get<std::string>());
}

void BillingClient::auth_verify(const std::string& imsi, ByteView rand, ByteView res) {
  std::lock_guard lock(mu_);
  client_.post("/auth/verify", {{"imsi", imsi}, {"rand", to_hex(rand)}, {"res", to_hex(res)}});
}

BillingScenario BillingClient::subscriber_scenario(const std::string& imsi) {
  std::lock_guard lock(mu_);
  return scenario_from_json(client_.get("/subscribers/" + imsi + "/scenario").at("scenario"));
}

QuotaSnapshot check_quota(QuotaReader& reader, const QuotaCredentials& creds, Clock& clock, const SettleOptions& opts) {
  QuotaSnapshot prev = reader.read_quota(creds.imsi, creds.api_key);
  if (!opts.settle) return prev;
  const Nanos deadline = clock.now() + opts.max_wait;
  while (clock.now() < deadline) {
    clock.sleep_for(opts.interval);
    QuotaSnapshot cur = reader.read_quota(creds.imsi, creds.api_key);
    if (cur.remaining_bytes == prev.remaining_bytes) return cur;
    prev = cur;
  }
  throw Error(Errc::Timeout, "quota for " + creds.imsi + " did not settle");
}

}  // namespace atlas::metering
