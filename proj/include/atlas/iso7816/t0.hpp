#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <vector>

#include "atlas/iso7816/apdu.hpp"
#include "atlas/iso7816/pps.hpp"
#include "atlas/util/bytes.hpp"

namespace atlas::iso7816 {

inline constexpr std::uint8_t kNullByte = 0x60;

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Blocks for the next byte; nullopt when the stream has ended.
  virtual std::optional<std::uint8_t> read() = 0;
};

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write(std::uint8_t b) = 0;
};

// Produces the card's answer for one command. The future may complete long
// after the call returns; the session masks the delay with NULL bytes.
using ApduHandler = std::function<std::future<ResponseApdu>(const Apdu&)>;

enum class T0State { AwaitHeader, SendProcedure, TransferData, SendStatus, Idle };

const char* to_string(T0State s);

struct T0Config {
  std::chrono::milliseconds wtx_interval{250};
  bool wtx_enabled = true;
  // Highest TA1 (Fi/Di indices) the card accepts in a PPS request.
  std::uint8_t max_ta1 = 0x96;
};

// Card side of the T=0 protocol: consumes terminal bytes, emits procedure
// bytes, data and status words. Single-owner; not thread-safe.
class T0CardSession {
 public:
  explicit T0CardSession(T0Config config = {});

  T0State state() const { return state_; }
  const std::vector<T0State>& history() const { return history_; }
  const std::optional<Apdu>& pending() const { return pending_; }
  const T0Config& config() const { return config_; }
  std::size_t nulls_emitted() const { return nulls_; }
  std::size_t commands() const { return commands_; }
  std::size_t handler_failures() const { return handler_failures_; }
  const std::optional<PpsFrame>& negotiated_pps() const { return pps_; }

  // Returns to AwaitHeader after a card reset; PPS is accepted again.
  void reset();

  // Serves one command (or one PPS exchange). Returns false when the
  // inbound stream ends cleanly before a header byte.
  // Errors: ProtocolViolation (stream ends inside a header or data phase).
  bool step(ByteSource& in, ByteSink& out, const ApduHandler& handler);
  void run(ByteSource& in, ByteSink& out, const ApduHandler& handler);

 private:
  void enter(T0State s);
  ResponseApdu await_response(const Apdu& apdu, const ApduHandler& handler, ByteSink& out);
  void serve_pps(ByteSource& in, ByteSink& out);

  T0Config config_;
  T0State state_ = T0State::AwaitHeader;
  std::vector<T0State> history_;
  std::optional<Apdu> pending_;
  std::optional<ResponseApdu> stashed_;  // data held for GET RESPONSE
  std::optional<PpsFrame> pps_;
  bool pps_allowed_ = true;
  std::size_t nulls_ = 0;
  std::size_t commands_ = 0;
  std::size_t handler_failures_ = 0;
};

struct T0Transcript {
  Bytes card_tx;  // bytes sent by the card
  Bytes line;     // both directions in line order
};

// Drives `session` over a complete inbound byte stream.
// Precondition: session in AwaitHeader (Error(PreconditionFailed)).
T0Transcript t0_card_drive(T0CardSession& session, ByteView inbound, const ApduHandler& handler);

// Handler that answers synchronously.
ApduHandler immediate_handler(std::function<ResponseApdu(const Apdu&)> fn);

}  // namespace atlas::iso7816
