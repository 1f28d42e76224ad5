#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "atlas/probe/measurement.hpp"
#include "atlas/util/clock.hpp"
#include "json.hpp"

namespace atlas::mgmt {

using Json = nlohmann::json;

struct MgmtConfig {
  Nanos min_gap = std::chrono::seconds{1800};  // country-switch cooldown per SIM
  Nanos heartbeat_interval = std::chrono::seconds{15};
  std::size_t snapshot_every = 1000;
  std::string data_dir;  // empty: in memory only
};

enum class ProbeStatus { Online, Stale, Offline };
const char* to_string(ProbeStatus s);

// Online below 2 intervals of silence, Stale below 3, then Offline.
ProbeStatus probe_status_at(Nanos silence, Nanos interval);

// Delivers circuit tokens to the provider that hosts the SIM.
class TokenPusher {
 public:
  virtual ~TokenPusher() = default;
  // Errors: EndpointUnreachable or the provider's error.
  virtual void push(const std::string& provider_admin, const std::string& imsi, const std::string& token_hex,
                    const std::string& circuit_id, const std::string& probe_id) = 0;
  virtual void revoke(const std::string& provider_admin, const std::string& imsi) = 0;
};

class NullTokenPusher final : public TokenPusher {
 public:
  void push(const std::string&, const std::string&, const std::string&, const std::string&,
            const std::string&) override {}
  void revoke(const std::string&, const std::string&) override {}
};

class HttpTokenPusher final : public TokenPusher {
 public:
  void push(const std::string& provider_admin, const std::string& imsi, const std::string& token_hex,
            const std::string& circuit_id, const std::string& probe_id) override;
  void revoke(const std::string& provider_admin, const std::string& imsi) override;
};

struct Allocation {
  std::string circuit_id;
  std::string token_hex;
  std::string provider_id;
  std::string provider_address;  // tunnel host:port
};

Json to_json(const Allocation& a);

struct CorruptLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct RecoveryReport {
  std::uint64_t snapshot_seq = 0;
  std::size_t replayed = 0;
  std::vector<CorruptLine> corrupt;
};

Json to_json(const RecoveryReport& r);

// JSON-lines event file plus the latest snapshot.
class EventStore {
 public:
  explicit EventStore(std::string dir);
  bool persistent() const { return !dir_.empty(); }
  std::string events_path() const;
  std::string snapshot_path() const;

  struct Loaded {
    std::optional<Json> snapshot;  // {"seq", "state"}
    std::vector<std::pair<std::size_t, Json>> events;  // (line, event) in file order
    std::vector<CorruptLine> corrupt;
  };
  Loaded load();
  void append(const Json& event);
  void write_snapshot(std::uint64_t seq, const Json& state);

 private:
  std::string dir_;
  std::mutex mu_;
  std::unique_ptr<std::ofstream> out_;
  bool need_newline_ = false;
};

// Single owner of management state. Every mutation is an event: it is
// applied with the same code used for replay and appended to the store.
class Broker {
 public:
  Broker(MgmtConfig config, Clock& clock, TokenPusher& pusher);

  const MgmtConfig& config() const { return config_; }

  // Loads snapshot and events from data_dir. Corrupt lines are skipped and
  // listed in the report.
  RecoveryReport recover();

  Json register_probe(const std::string& probe_id, const std::string& country);
  // Errors: UnknownProbe. The ack carries "restart" when one was requested.
  Json heartbeat(const std::string& probe_id, const Json& status = Json::object());
  void request_restart(const std::string& probe_id);
  ProbeStatus probe_status(const std::string& probe_id) const;
  Json probes() const;

  // Provider inventory push. SIMs missing from the list go offline.
  void update_inventory(const std::string& provider_id, const std::string& address, const std::string& admin,
                        const Json& sims);
  Json sims() const;
  Json providers() const;

  // Errors: UnknownSim, UnknownProbe, ProbeOffline, SimBusy, ProbeBusy,
  // CooldownActive (retry_after in seconds), EndpointUnreachable (token push).
  Allocation allocate_circuit(const std::string& imsi, const std::string& probe_id);
  // Errors: UnknownCircuit. Closing a closed circuit is a no-op.
  void close_circuit(const std::string& circuit_id, const std::string& reason = "released");
  Json circuits() const;
  // Closes circuits of Offline probes ("stale") and fails their jobs.
  std::vector<std::string> reap_stale();

  // Errors: ValidationError, UnknownSim, UnknownProbe. A job for a probe
  // that is not Online is recorded and immediately Failed (ProbeOffline).
  std::string submit_job(probe::MeasurementJob job);
  Json job(const std::string& job_id) const;  // Errors: UnknownJob
  Json jobs() const;
  // Next runnable job for the probe with its circuit, or null. Jobs whose
  // SIM is busy or cooling down stay Pending.
  Json next_job(const std::string& probe_id);
  // Errors: UnknownJob, ValidationError (not Running).
  void job_result(const std::string& job_id, const probe::MeasurementResult& result);

  // Canonical state; two brokers with equal state dump identically.
  Json state() const;
  std::string state_dump() const { return state().dump(); }
  std::uint64_t last_seq() const;
  std::vector<Json> event_history() const;

  using Listener = std::function<void(const Json&)>;
  std::uint64_t subscribe(Listener l);
  void unsubscribe(std::uint64_t id);

 private:
  std::int64_t now_us() const;
  void commit(Json ev);
  void apply(const Json& ev);
  void check_probe(const std::string& probe_id) const;
  ProbeStatus status_locked(const std::string& probe_id) const;
  // Guards and event for a new circuit; the caller pushes the token.
  Allocation open_circuit_locked(const std::string& imsi, const std::string& probe_id, Json& ev);
  void after_open(const Allocation& a, const std::string& imsi, const std::string& probe_id);
  std::string admin_of(const std::string& provider_id) const;

  MgmtConfig config_;
  Clock& clock_;
  TokenPusher& pusher_;
  EventStore store_;
  mutable std::recursive_mutex mu_;
  Json state_;
  std::vector<Json> history_;
  std::uint64_t seq_ = 0;
  std::uint64_t since_snapshot_ = 0;
  std::map<std::uint64_t, Listener> listeners_;
  std::uint64_t next_listener_ = 1;
};

struct Violation {
  std::uint64_t seq = 0;
  std::string kind;  // imsi_double_open, probe_double_open, cooldown, unknown_circuit, seq_order
  std::string detail;
};

// Scans an event sequence for exclusivity and cooldown violations.
std::vector<Violation> validate_event_log(const std::vector<Json>& events, Nanos min_gap);

}  // namespace atlas::mgmt
