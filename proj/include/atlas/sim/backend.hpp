#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "atlas/iso7816/apdu.hpp"
#include "atlas/sim/profile.hpp"

namespace atlas::sim {

using iso7816::Apdu;
using iso7816::ResponseApdu;

class SimBackend {
 public:
  virtual ~SimBackend() = default;
  virtual Bytes atr() const = 0;
  virtual ResponseApdu exchange(const Apdu& apdu) = 0;
  virtual void reset() = 0;
};

struct AuthResult {
  Bytes res;          // 8 bytes
  Bytes session_key;  // 16 bytes
};

// Keyed PRF standing in for the operator algorithm:
// res = HMAC-SHA256(ki, "RES" || rand)[0..8), key = HMAC-SHA256(ki, "KEY" || rand)[0..16).
// Throws Error(LengthError) unless ki and rand are 16 bytes each.
AuthResult authenticate_stub(ByteView ki, ByteView rand);

class SimulatedSim final : public SimBackend {
 public:
  explicit SimulatedSim(SimProfile profile);

  Bytes atr() const override;
  ResponseApdu exchange(const Apdu& apdu) override;
  void reset() override;

  const SimProfile& profile() const { return profile_; }
  std::size_t commands() const { return commands_; }
  bool proactive_pending() const { return pending_.has_value(); }

 private:
  ResponseApdu dispatch(const Apdu& apdu);
  ResponseApdu select(const Apdu& apdu);
  ResponseApdu read_binary(const Apdu& apdu);
  ResponseApdu update_binary(const Apdu& apdu);
  ResponseApdu status(const Apdu& apdu);
  ResponseApdu get_response(const Apdu& apdu);
  ResponseApdu authenticate(const Apdu& apdu);
  ResponseApdu fetch(const Apdu& apdu);
  void arm_events(bool authenticated);
  Bytes file_info(const std::vector<std::uint16_t>& path) const;

  SimProfile profile_;
  std::map<std::vector<std::uint16_t>, std::string> by_fids_;  // EF paths
  std::vector<std::vector<std::uint16_t>> dfs_;
  std::vector<std::uint16_t> current_;
  bool current_is_ef_ = false;
  Bytes last_response_;
  std::size_t commands_ = 0;
  std::size_t next_event_ = 0;
  std::vector<bool> auth_seen_;
  std::optional<Bytes> pending_;
};

struct TraceEntry {
  Apdu command;
  ResponseApdu response;
};

class TraceReplaySim final : public SimBackend {
 public:
  // Throws Error(PreconditionFailed) when the trace is empty.
  explicit TraceReplaySim(std::vector<TraceEntry> trace, Bytes atr = default_atr());

  Bytes atr() const override { return atr_; }
  // Throws Error(TraceExhausted) once every entry has been served.
  ResponseApdu exchange(const Apdu& apdu) override;
  void reset() override {}

  std::size_t divergences() const { return divergences_; }
  std::size_t position() const { return next_; }

 private:
  std::vector<TraceEntry> trace_;
  Bytes atr_;
  std::size_t next_ = 0;
  std::size_t divergences_ = 0;
};

// Wraps a backend and records every exchange; used to build replay traces.
class RecordingSim final : public SimBackend {
 public:
  explicit RecordingSim(std::shared_ptr<SimBackend> inner) : inner_(std::move(inner)) {}
  Bytes atr() const override { return inner_->atr(); }
  ResponseApdu exchange(const Apdu& apdu) override;
  void reset() override { inner_->reset(); }
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  std::shared_ptr<SimBackend> inner_;
  std::vector<TraceEntry> trace_;
};

// Pairs alternating card-bound TPDUs and card responses (data + SW) into a
// trace. Throws Error(ParseError) on an odd record count.
std::vector<TraceEntry> trace_from_raw_pairs(const std::vector<Bytes>& records);

}  // namespace atlas::sim
