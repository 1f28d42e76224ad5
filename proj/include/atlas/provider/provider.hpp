#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "atlas/net/gsmtap.hpp"
#include "atlas/sim/backend.hpp"
#include "atlas/tunnel/frame.hpp"
#include "atlas/util/clock.hpp"
#include "atlas/util/socket.hpp"
#include "json.hpp"

namespace atlas::provider {

struct SimMetadata {
  std::string iccid;
  std::string home_country;
  std::string label;
  bool online = true;
};

struct SimStatus {
  std::string imsi;
  SimMetadata meta;
  std::optional<std::string> circuit_id;
};

nlohmann::json to_json(const SimStatus& s);

class SimRegistry {
 public:
  struct Entry {
    std::shared_ptr<sim::SimBackend> backend;
    SimMetadata meta;
    std::optional<std::string> circuit_id;
    double flaky_p = 0.0;  // probability an attach fails with ReaderFault
    std::string source_file;
    std::shared_ptr<std::mutex> io_mu = std::make_shared<std::mutex>();
  };

  // Errors: InvalidProfile, DuplicateImsi.
  std::string register_sim(const sim::SimProfile& profile, const std::string& source_file = "");
  std::string register_backend(const std::string& imsi, std::shared_ptr<sim::SimBackend> backend, SimMetadata meta);
  // Errors: UnknownImsi, SimBusy.
  void unregister_sim(const std::string& imsi);
  void set_flaky(const std::string& imsi, double p);

  std::vector<SimStatus> list() const;
  std::size_t size() const;
  std::size_t active_circuits() const;

  // Claims the SIM for a circuit after the guards pass. Errors in guard
  // order: UnknownImsi, SimBusy, Capacity, ReaderFault.
  Entry claim(const std::string& imsi, const std::string& circuit_id, std::size_t max_active, double roll);
  void release(const std::string& imsi, const std::string& circuit_id);
  bool contains(const std::string& imsi) const;
  std::set<std::string> files() const;
  // imsi registered from `file`, if any.
  std::optional<std::string> imsi_for_file(const std::string& file) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> entries_;
  std::size_t active_ = 0;
};

struct ProviderConfig {
  std::string provider_id = "provider-1";
  net::Endpoint tunnel{"127.0.0.1", tunnel::kDefaultPort};
  net::Endpoint admin{"127.0.0.1", 7817};
  bool admin_enabled = true;
  std::size_t max_concurrent_sims = 32;
  // Without token enforcement any token is honored (standalone desk use).
  bool require_tokens = true;
  std::string management_url;  // empty: no status push
  std::string data_dir;        // directory of SimProfile JSON files
  // Address advertised to management; defaults to the bound tunnel port.
  std::string advertised_address;
  std::uint64_t seed = 1;
};

struct CircuitInfo {
  std::string circuit_id;
  std::string imsi;
  std::string probe_id;
  bool active = false;
};

// Tunnel server plus admin HTTP API over a SimRegistry.
class ProviderService {
 public:
  ProviderService(ProviderConfig config, Clock& clock);
  ~ProviderService();
  ProviderService(const ProviderService&) = delete;
  ProviderService& operator=(const ProviderService&) = delete;

  // Binds both ports (Error BindFailure) and loads data_dir.
  void start();
  void stop();

  SimRegistry& registry() { return registry_; }
  std::uint16_t tunnel_port() const { return tunnel_port_; }
  std::uint16_t admin_port() const { return admin_port_; }
  std::string tunnel_address() const;

  std::string register_sim(const sim::SimProfile& profile);
  void unregister_sim(const std::string& imsi);

  // Token presented by the probe holding circuit `circuit_id` on `imsi`.
  void issue_token(const std::string& imsi, const std::string& token_hex, const std::string& circuit_id = "",
                   const std::string& probe_id = "");
  void revoke_token(const std::string& imsi);

  // Fault injection.
  void inject_latency(Nanos per_response_delay);
  Nanos latency() const;
  // When set, APDU requests get no response at all.
  void set_silent(bool silent);

  // Errors: UnknownCircuit.
  std::vector<net::ApduLogRecord> apdu_log(const std::string& circuit_id) const;
  Bytes export_apdu_log(const std::string& circuit_id, const std::string& format) const;
  std::vector<CircuitInfo> circuits() const;
  // Disconnects the circuit's tunnel connection.
  void kick(const std::string& circuit_id);

  // Re-reads data_dir: registers new files, drops removed (uncircuited) ones.
  nlohmann::json reload();
  // Sends the SIM inventory to management; false when unreachable.
  bool push_status();

 private:
  struct Connection;
  void accept_loop();
  void serve_connection(std::shared_ptr<Connection> c);
  void handle_attach(Connection& c, const tunnel::Frame& f);
  void handle_apdu(Connection& c, const tunnel::Frame& f);
  void release(Connection& c);
  void setup_admin();
  void log_pair(const std::string& circuit_id, const std::string& imsi, Bytes to_sim, Nanos t_in, WallTime w_in,
                Bytes from_sim);

  ProviderConfig config_;
  Clock& clock_;
  SimRegistry registry_;
  std::unique_ptr<net::Listener> listener_;
  std::thread accept_thread_;
  struct AdminServer;
  std::unique_ptr<AdminServer> admin_;
  std::uint16_t tunnel_port_ = 0;
  std::uint16_t admin_port_ = 0;

  mutable std::mutex mu_;
  std::map<std::string, std::pair<std::string, std::string>> tokens_;  // imsi -> (token hex, circuit id)
  std::map<std::string, std::vector<net::ApduLogRecord>> logs_;
  std::map<std::string, CircuitInfo> circuits_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> workers_;
  std::mt19937_64 rng_;
  std::atomic<std::int64_t> latency_ns_{0};
  std::atomic<bool> silent_{false};
  std::atomic<bool> running_{false};
};

}  // namespace atlas::provider
