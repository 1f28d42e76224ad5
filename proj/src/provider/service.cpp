#include <filesystem>

#include "atlas/provider/provider.hpp"
#include "atlas/util/http.hpp"
#include "atlas/util/uuid.hpp"

namespace atlas::provider {

using tunnel::Frame;
using tunnel::FrameKind;
using Json = nlohmann::json;
namespace fs = std::filesystem;

struct ProviderService::Connection {
  explicit Connection(net::Socket s) : conn(std::move(s)) {}
  tunnel::FrameConnection conn;
  std::mutex mu;
  bool active = false;
  std::string circuit_id;
  std::string imsi;
  std::string probe_id;
  SimRegistry::Entry entry;
  std::atomic<bool> done{false};
};

struct ProviderService::AdminServer {
  http::Server server;
};

ProviderService::ProviderService(ProviderConfig config, Clock& clock)
    : config_(std::move(config)), clock_(clock), rng_(config_.seed) {}

ProviderService::~ProviderService() { stop(); }

void ProviderService::start() {
  listener_ = std::make_unique<net::Listener>(config_.tunnel);
  tunnel_port_ = listener_->port();
  if (config_.admin_enabled) {
    admin_ = std::make_unique<AdminServer>();
    setup_admin();
    admin_port_ = admin_->server.start(config_.admin);
  }
  if (!config_.data_dir.empty()) reload();
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  if (!config_.management_url.empty()) push_status();
}

void ProviderService::stop() {
  if (!running_.exchange(false)) return;
  listener_->close();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::shared_ptr<Connection>> conns;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    conns = connections_;
    workers.swap(workers_);
  }
  for (auto& c : conns) c->conn.shutdown();
  for (auto& t : workers) t.join();
  if (admin_) admin_->server.stop();
}

std::string ProviderService::tunnel_address() const {
  if (!config_.advertised_address.empty()) return config_.advertised_address;
  std::string host = config_.tunnel.host == "0.0.0.0" ? "127.0.0.1" : config_.tunnel.host;
  return host + ":" + std::to_string(tunnel_port_);
}

void ProviderService::accept_loop() {
  while (running_) {
    auto sock = listener_->accept();
    if (!sock) break;
    auto c = std::make_shared<Connection>(std::move(*sock));
    std::lock_guard lock(mu_);
    // Reap finished connections.
    for (std::size_t i = 0; i < connections_.size();) {
      if (connections_[i]->done) {
        connections_.erase(connections_.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
    connections_.push_back(c);
    workers_.emplace_back([this, c] { serve_connection(c); });
  }
}

void ProviderService::serve_connection(std::shared_ptr<Connection> c) {
  try {
    while (auto f = c->conn.receive()) {
      switch (f->kind) {
        case FrameKind::Hello: {
          Json j = tunnel::parse_json_payload(*f);
          if (j.value("proto", 0) != tunnel::kProtoVersion) {
            c->conn.send(tunnel::error_frame(f->seq, Errc::ProtocolViolation, "unsupported proto"));
            throw Error(Errc::ProtocolViolation, "proto mismatch");
          }
          break;
        }
        case FrameKind::Attach:
          handle_attach(*c, *f);
          break;
        case FrameKind::ApduReq:
          handle_apdu(*c, *f);
          break;
        case FrameKind::Reset: {
          std::lock_guard lock(c->mu);
          if (!c->active) {
            c->conn.send(tunnel::error_frame(f->seq, Errc::Detached, "no active circuit"));
            break;
          }
          Bytes atr;
          {
            std::lock_guard io(*c->entry.io_mu);
            c->entry.backend->reset();
            atr = c->entry.backend->atr();
          }
          c->conn.send(Frame{FrameKind::Atr, f->seq, atr});
          break;
        }
        case FrameKind::Ping:
          c->conn.send(Frame{FrameKind::Pong, f->seq, {}});
          break;
        case FrameKind::Detach:
          release(*c);
          c->conn.shutdown();
          break;
        default:
          c->conn.send(tunnel::error_frame(f->seq, Errc::ProtocolViolation,
                                           std::string("unexpected ") + tunnel::to_string(f->kind)));
      }
    }
  } catch (const Error&) {
  }
  release(*c);
  c->conn.shutdown();
  c->done = true;
}

void ProviderService::handle_attach(Connection& c, const Frame& f) {
  std::lock_guard clock(c.mu);
  if (c.active) {
    c.conn.send(tunnel::error_frame(f.seq, Errc::ProtocolViolation, "connection already carries a circuit"));
    return;
  }
  try {
    Json j = tunnel::parse_json_payload(f);
    const std::string imsi = j.value("imsi", std::string{});
    const std::string token = j.value("token", std::string{});
    if (!registry_.contains(imsi)) throw Error(Errc::UnknownImsi, "imsi " + imsi + " not registered");
    std::string circuit_id;
    double roll;
    {
      std::lock_guard lock(mu_);
      auto t = tokens_.find(imsi);
      if (config_.require_tokens && (t == tokens_.end() || t->second.first != token || token.empty())) {
        throw Error(Errc::BadToken, "token not issued for imsi " + imsi);
      }
      if (t != tokens_.end() && !t->second.second.empty()) circuit_id = t->second.second;
      roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    }
    if (circuit_id.empty()) circuit_id = make_uuid();
    SimRegistry::Entry e = registry_.claim(imsi, circuit_id, config_.max_concurrent_sims, roll);
    Bytes atr;
    {
      std::lock_guard io(*e.io_mu);
      e.backend->reset();
      atr = e.backend->atr();
    }
    c.active = true;
    c.circuit_id = circuit_id;
    c.imsi = imsi;
    c.probe_id = j.value("probe_id", std::string{});
    c.entry = e;
    {
      std::lock_guard lock(mu_);
      circuits_[circuit_id] = CircuitInfo{circuit_id, imsi, c.probe_id, true};
      logs_[circuit_id];
    }
    c.conn.send(Frame{FrameKind::Granted, f.seq, tunnel::json_payload({{"circuit_id", circuit_id}, {"atr", to_hex(atr)}})});
  } catch (const Error& e) {
    Frame ef = tunnel::error_frame(f.seq, e.code(), e.detail());
    c.conn.send(ef);
  }
}

void ProviderService::log_pair(const std::string& circuit_id, const std::string& imsi, Bytes to_sim, Nanos t_in,
                               WallTime w_in, Bytes from_sim) {
  net::ApduLogRecord in{circuit_id, imsi, net::Direction::ToSim, std::move(to_sim), t_in, w_in};
  net::ApduLogRecord out{circuit_id, imsi, net::Direction::FromSim, std::move(from_sim), clock_.now(), clock_.wall()};
  std::lock_guard lock(mu_);
  auto& log = logs_[circuit_id];
  log.push_back(std::move(in));
  log.push_back(std::move(out));
}

void ProviderService::handle_apdu(Connection& c, const Frame& f) {
  std::string circuit_id, imsi;
  SimRegistry::Entry entry;
  {
    std::lock_guard lock(c.mu);
    if (!c.active) {
      c.conn.send(tunnel::error_frame(f.seq, Errc::Detached, "no active circuit"));
      return;
    }
    circuit_id = c.circuit_id;
    imsi = c.imsi;
    entry = c.entry;
  }
  const Nanos t_in = clock_.now();
  const WallTime w_in = clock_.wall();
  iso7816::Apdu apdu;
  iso7816::ResponseApdu resp;
  try {
    apdu = iso7816::Apdu::decode(f.payload);
    std::lock_guard io(*entry.io_mu);
    resp = entry.backend->exchange(apdu);
  } catch (const Error& e) {
    c.conn.send(tunnel::error_frame(f.seq, e.code(), e.detail()));
    return;
  }
  const Nanos delay{latency_ns_.load()};
  if (delay.count() > 0) clock_.sleep_for(delay);
  if (silent_) return;
  log_pair(circuit_id, imsi, apdu.to_tpdu(), t_in, w_in, resp.encode());
  c.conn.send(Frame{FrameKind::ApduResp, f.seq, resp.encode()});
}

void ProviderService::release(Connection& c) {
  std::lock_guard lock(c.mu);
  if (!c.active) return;
  registry_.release(c.imsi, c.circuit_id);
  c.active = false;
  std::lock_guard g(mu_);
  auto it = circuits_.find(c.circuit_id);
  if (it != circuits_.end()) it->second.active = false;
}

std::string ProviderService::register_sim(const sim::SimProfile& profile) {
  std::string imsi = registry_.register_sim(profile);
  if (running_ && !config_.management_url.empty()) push_status();
  return imsi;
}

void ProviderService::unregister_sim(const std::string& imsi) {
  registry_.unregister_sim(imsi);
  if (running_ && !config_.management_url.empty()) push_status();
}

void ProviderService::issue_token(const std::string& imsi, const std::string& token_hex, const std::string& circuit_id,
                                  const std::string& probe_id) {
  (void)probe_id;
  std::lock_guard lock(mu_);
  tokens_[imsi] = {token_hex, circuit_id};
}

void ProviderService::revoke_token(const std::string& imsi) {
  std::lock_guard lock(mu_);
  tokens_.erase(imsi);
}

void ProviderService::inject_latency(Nanos d) {
  if (d.count() < 0) throw Error(Errc::ValidationError, "latency must be >= 0");
  latency_ns_ = d.count();
}

Nanos ProviderService::latency() const { return Nanos{latency_ns_.load()}; }

void ProviderService::set_silent(bool silent) { silent_ = silent; }

std::vector<net::ApduLogRecord> ProviderService::apdu_log(const std::string& circuit_id) const {
  std::lock_guard lock(mu_);
  auto it = logs_.find(circuit_id);
  if (it == logs_.end()) throw Error(Errc::UnknownCircuit, "no circuit " + circuit_id);
  return it->second;
}

Bytes ProviderService::export_apdu_log(const std::string& circuit_id, const std::string& format) const {
  auto log = apdu_log(circuit_id);
  if (format == "jsonl") {
    std::string s = net::write_jsonl(log);
    return Bytes(s.begin(), s.end());
  }
  if (format == "gsmtap" || format == "gsmtap_pcap" || format == "pcap") return net::write_gsmtap_pcap(log);
  throw Error(Errc::ValidationError, "format must be jsonl or gsmtap");
}

std::vector<CircuitInfo> ProviderService::circuits() const {
  std::lock_guard lock(mu_);
  std::vector<CircuitInfo> out;
  for (const auto& [id, c] : circuits_) out.push_back(c);
  return out;
}

void ProviderService::kick(const std::string& circuit_id) {
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    if (!circuits_.count(circuit_id)) throw Error(Errc::UnknownCircuit, "no circuit " + circuit_id);
    conns = connections_;
  }
  for (auto& c : conns) {
    bool match;
    {
      std::lock_guard lock(c->mu);
      match = c->active && c->circuit_id == circuit_id;
    }
    if (match) {
      try {
        c->conn.send(Frame{FrameKind::Detach, 0, {}});
      } catch (const Error&) {
      }
      release(*c);
      c->conn.shutdown();
    }
  }
}

Json ProviderService::reload() {
  Json report{{"added", Json::array()}, {"removed", Json::array()}, {"errors", Json::array()}};
  if (config_.data_dir.empty()) return report;
  std::set<std::string> on_disk;
  std::error_code ec;
  for (const auto& de : fs::directory_iterator(config_.data_dir, ec)) {
    if (de.path().extension() == ".json") on_disk.insert(de.path().string());
  }
  std::set<std::string> known = registry_.files();
  for (const auto& file : on_disk) {
    if (known.count(file)) continue;
    try {
      report["added"].push_back(registry_.register_sim(sim::load_profile(file), file));
    } catch (const Error& e) {
      report["errors"].push_back({{"file", file}, {"error", e.what()}});
    }
  }
  for (const auto& file : known) {
    if (on_disk.count(file)) continue;
    auto imsi = registry_.imsi_for_file(file);
    if (!imsi) continue;
    try {
      registry_.unregister_sim(*imsi);
      report["removed"].push_back(*imsi);
    } catch (const Error& e) {
      report["errors"].push_back({{"file", file}, {"error", e.what()}});
    }
  }
  if (running_ && !config_.management_url.empty()) push_status();
  return report;
}

bool ProviderService::push_status() {
  if (config_.management_url.empty()) return false;
  Json sims = Json::array();
  for (const auto& s : registry_.list()) sims.push_back(to_json(s));
  try {
    http::Client client(config_.management_url, std::chrono::seconds{3});
    client.post("/providers/" + config_.provider_id + "/sims",
                {{"provider_id", config_.provider_id},
                 {"address", tunnel_address()},
                 {"admin", "127.0.0.1:" + std::to_string(admin_port_)},
                 {"sims", sims}});
    return true;
  } catch (const Error&) {
    return false;
  }
}

void ProviderService::setup_admin() {
  auto& s = admin_->server.raw();
  s.Get("/sims", http::guarded([this](const httplib::Request&, httplib::Response& res) {
    Json sims = Json::array();
    for (const auto& st : registry_.list()) sims.push_back(to_json(st));
    http::reply(res, {{"sims", sims}, {"active_circuits", registry_.active_circuits()}});
  }));
  s.Post("/sims", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    sim::SimProfile p = sim::profile_from_json(http::parse_body(req));
    http::reply(res, {{"imsi", register_sim(p)}}, 201);
  }));
  s.Delete(R"(/sims/(\d+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    unregister_sim(req.matches[1]);
    http::reply(res, Json::object());
  }));
  s.Get("/circuits", http::guarded([this](const httplib::Request&, httplib::Response& res) {
    Json out = Json::array();
    for (const auto& c : circuits()) {
      out.push_back({{"circuit_id", c.circuit_id}, {"imsi", c.imsi}, {"probe_id", c.probe_id}, {"active", c.active}});
    }
    http::reply(res, {{"circuits", out}});
  }));
  s.Get(R"(/circuits/([^/]+)/log)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string format = req.has_param("format") ? req.get_param_value("format") : "jsonl";
    Bytes body = export_apdu_log(req.matches[1], format);
    res.set_content(std::string(body.begin(), body.end()),
                    format == "jsonl" ? "application/x-ndjson" : "application/vnd.tcpdump.pcap");
  }));
  s.Delete(R"(/circuits/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    kick(req.matches[1]);
    http::reply(res, Json::object());
  }));
  s.Post("/tokens", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    Json j = http::parse_body(req);
    issue_token(j.at("imsi").get<std::string>(), j.at("token").get<std::string>(), j.value("circuit_id", ""),
                j.value("probe_id", ""));
    http::reply(res, Json::object());
  }));
  s.Delete(R"(/tokens/(\d+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    revoke_token(req.matches[1]);
    http::reply(res, Json::object());
  }));
  s.Post("/reload", http::guarded([this](const httplib::Request&, httplib::Response& res) {
    http::reply(res, reload());
  }));
  s.Post("/faults", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
    Json j = http::parse_body(req);
    if (j.contains("latency_ms")) inject_latency(std::chrono::milliseconds{j["latency_ms"].get<std::int64_t>()});
    if (j.contains("silent")) set_silent(j["silent"].get<bool>());
    if (j.contains("flaky")) {
      for (const auto& [imsi, p] : j["flaky"].items()) registry_.set_flaky(imsi, p.get<double>());
    }
    http::reply(res, {{"latency_ms", to_ms(latency())}, {"silent", silent_.load()}});
  }));
}

}  // namespace atlas::provider
