#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "atlas/iso7816/apdu.hpp"
#include "atlas/iso7816/t0.hpp"
#include "atlas/iso7816/timing.hpp"
#include "atlas/metering/billing_api.hpp"
#include "atlas/metering/network.hpp"
#include "atlas/net/gsmtap.hpp"
#include "atlas/tunnel/client.hpp"
#include "atlas/util/clock.hpp"

namespace atlas::probe {

using iso7816::Apdu;
using iso7816::ResponseApdu;
using Json = nlohmann::json;

// One direction of the modem <-> card line. Reads block until a byte
// arrives or the channel is closed.
class ByteChannel final : public iso7816::ByteSource, public iso7816::ByteSink {
 public:
  std::optional<std::uint8_t> read() override;
  // Real-time bound; nullopt on timeout or close.
  std::optional<std::uint8_t> read_for(std::chrono::microseconds timeout);
  void write(std::uint8_t b) override;
  void close();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> q_;
  bool closed_ = false;
};

// The visited network as the probe sees it: authentication against the
// home operator and a gateway that meters traffic into home billing.
class SimulatedOperator {
 public:
  SimulatedOperator(metering::OperatorCore& core, metering::FlowPoster& billing, std::string country,
                    std::uint64_t seed = 1);

  const std::string& country() const { return country_; }
  // Errors: UnknownImsi, AuthFailure.
  Bytes challenge(const std::string& imsi);
  // Verifies RES, then attaches the device. Errors: AuthFailure.
  metering::Attachment complete_attach(const std::string& imsi, ByteView rand, ByteView res);
  void detach();
  bool attached() const { return network_ != nullptr; }
  // Errors: PreconditionFailed when nothing is attached.
  metering::SimulatedNetwork& network();

 private:
  metering::OperatorCore& core_;
  metering::FlowPoster& billing_;
  std::string country_;
  std::uint64_t seed_;
  std::unique_ptr<metering::SimulatedNetwork> network_;
};

enum class ModemState { Off, SimReady, Attached };
const char* to_string(ModemState s);

struct ModemConfig {
  std::size_t init_apdu_count = 50;
  std::chrono::milliseconds wtx_interval{250};
  bool wtx_enabled = true;
  // Interface clock and factors in force on the card line (no PPS).
  iso7816::ClockParams clock{4.0e6, 372, 1};
  int wi = 10;
};

struct ExchangeStat {
  std::uint8_t ins = 0;
  bool relayed = false;
  std::size_t nulls = 0;
};

struct AttachReport {
  std::size_t apdus_used = 0;  // exchanges relayed over the circuit
  std::size_t init_apdus = 0;
  std::size_t auth_exchanges = 0;
  std::size_t tpdus = 0;  // commands on the card line, GET RESPONSE included
  std::int64_t wall_ms = 0;
  std::size_t wtx_nulls_observed = 0;
  std::size_t min_nulls_per_exchange = 0;  // over relayed exchanges
  std::size_t timeouts = 0;
  std::vector<ExchangeStat> exchanges;
};

Json to_json(const AttachReport& r);

// Terminal side of the SIM interface plus the attach procedure. The card
// is the tunnelled SIM behind a local T=0 card session that masks relay
// latency with NULL procedure bytes.
class ModemSim {
 public:
  ModemSim(ModemConfig config, Clock& clock);
  ~ModemSim();
  ModemSim(const ModemSim&) = delete;
  ModemSim& operator=(const ModemSim&) = delete;

  ModemState state() const { return state_; }
  const Bytes& last_atr() const { return last_atr_; }
  const ModemConfig& config() const { return config_; }
  std::chrono::microseconds work_waiting_time() const { return config_.clock.work_waiting_time(config_.wi); }

  // Reset, init_apdu_count init commands over the standard files, then
  // RUN GSM ALGORITHM with the operator's RAND and registration.
  // Errors: PreconditionFailed (circuit not Active), CircuitLost, Timeout,
  // WaitingTimeExpired, AuthFailure.
  AttachReport init_and_attach(tunnel::TunnelClient& circuit, SimulatedOperator& op);

  // One application-level command; 61xx and 6Cxx are followed up.
  // Errors: PreconditionFailed (Off), WaitingTimeExpired, ProtocolViolation,
  // CircuitLost, Timeout.
  ResponseApdu transmit(const Apdu& apdu);

  const std::optional<metering::Attachment>& attachment() const { return attachment_; }
  std::string imsi() const { return imsi_; }
  // Relayed exchanges, both directions, in line order.
  std::vector<net::ApduLogRecord> apdu_log() const;
  // Quota by USSD against the operator's self-service (stub).
  std::string ussd(const std::string& code, metering::QuotaReader& quota, const std::string& api_key);
  void power_off();

 private:
  class Bridge;
  ResponseApdu tpdu(const Apdu& apdu, ExchangeStat& stat);
  ResponseApdu command(const Apdu& apdu, std::vector<ExchangeStat>* stats);
  std::uint8_t read_line();

  ModemConfig config_;
  Clock& clock_;
  ModemState state_ = ModemState::Off;
  Bytes last_atr_;
  std::string imsi_;
  std::optional<metering::Attachment> attachment_;
  std::unique_ptr<Bridge> bridge_;
  SimulatedOperator* operator_ = nullptr;
};


}  // namespace atlas::probe
