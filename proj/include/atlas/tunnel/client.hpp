#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "atlas/iso7816/apdu.hpp"
#include "atlas/tunnel/frame.hpp"
#include "atlas/util/clock.hpp"

namespace atlas::tunnel {

using iso7816::Apdu;
using iso7816::ResponseApdu;

enum class CircuitState { Attaching, Active, Detached };

const char* to_string(CircuitState s);

struct CircuitSession {
  std::string circuit_id;
  std::string imsi;
  CircuitState state = CircuitState::Attaching;
  Bytes token;
  Bytes atr;
};

struct TunnelConfig {
  Nanos relay_deadline = std::chrono::seconds{30};
  Nanos keepalive_idle = std::chrono::seconds{10};
  int max_missed_pongs = 2;
  std::chrono::milliseconds connect_timeout{5000};
};

// Probe-side end of a circuit. One circuit per TCP connection; relay()
// calls are serialized so responses come back in request order.
class TunnelClient {
 public:
  // Optional local answer for an APDU (static-file caching). Unset by default.
  using CacheHook = std::function<std::optional<ResponseApdu>(const Apdu&)>;

  TunnelClient(net::Endpoint provider, Clock& clock, TunnelConfig config = {});
  ~TunnelClient();
  TunnelClient(const TunnelClient&) = delete;
  TunnelClient& operator=(const TunnelClient&) = delete;

  // Errors: EndpointUnreachable, SimBusy, UnknownImsi, BadToken,
  // CooldownActive, Capacity (as reported by the provider), Timeout.
  CircuitSession attach(const std::string& imsi, ByteView token, const std::string& probe_id = "");

  // Errors: Detached, Timeout.
  ResponseApdu relay(const Apdu& apdu);
  // Card reset; returns the ATR.
  Bytes reset();
  void detach();

  CircuitState state() const;
  CircuitSession session() const;
  std::size_t pings_sent() const;
  void set_cache_hook(CacheHook hook) { cache_ = std::move(hook); }

 private:
  Frame request(FrameKind kind, Bytes payload);
  void reader_loop();
  void keepalive_loop();
  void mark_detached(const std::string& why);
  // Allocates the next seq and writes the frame as one step so seqs leave
  // in increasing order.
  std::uint32_t send_next(FrameKind kind, Bytes payload, bool await_reply);

  net::Endpoint endpoint_;
  Clock& clock_;
  TunnelConfig config_;
  std::unique_ptr<FrameConnection> conn_;
  std::thread reader_;
  std::thread keepalive_;
  CacheHook cache_;

  std::mutex relay_mu_;  // one request in flight
  std::mutex send_mu_;   // taken before mu_
  mutable std::mutex mu_;
  std::condition_variable cv_;
  CircuitSession session_;
  std::uint32_t next_seq_ = 1;
  std::map<std::uint32_t, Frame> mailbox_;
  std::uint32_t awaiting_ = 0;
  Nanos last_rx_{0};
  Nanos last_ping_{0};
  int outstanding_pings_ = 0;
  std::size_t pings_sent_ = 0;
  bool stop_ = false;
  std::string detach_reason_;
};

}  // namespace atlas::tunnel
