#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace atlas {

// Error codes shared by every module. The string form (to_string) is what
// travels over the tunnel ERROR frame and the HTTP {"error":{"code":...}}
// envelope, so renaming an enumerator is a wire change.
enum class Errc {
  // iso7816
  MalformedAtr,
  MalformedPps,
  MalformedApdu,
  InvalidIndex,
  InvalidClock,
  ProtocolViolation,
  HandlerFailure,
  WaitingTimeExpired,
  // sim
  InvalidProfile,
  LengthError,
  TraceExhausted,
  // tunnel
  Truncated,
  UnknownKind,
  LengthMismatch,
  SimBusy,
  UnknownImsi,
  BadToken,
  CooldownActive,
  Detached,
  Timeout,
  Capacity,
  ReaderFault,
  // provider
  BindFailure,
  DuplicateImsi,
  UnknownCircuit,
  // probe
  AuthFailure,
  CircuitLost,
  ScenarioFailure,
  IsolationBreach,
  EndpointUnreachable,
  AuthRejected,
  PreconditionFailed,
  // management
  ProbeBusy,
  ProbeOffline,
  UnknownSim,
  UnknownProbe,
  UnknownJob,
  ValidationError,
  CorruptLog,
  // metering
  Ambiguous,
  Undecodable,
  NegativeBilled,
  ParseError,
  // analytics
  NonDecimalNibble,
  IndefiniteLength,
  // tone
  InvalidFingerprint,
  NoToneDetected,
  InvalidAudio,
  Internal,
};

std::string_view to_string(Errc code) noexcept;
std::optional<Errc> errc_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<std::int64_t> retry_after_s = std::nullopt);

  Errc code() const noexcept { return code_; }
  // Seconds until the rejected operation may succeed (CooldownActive).
  std::optional<std::int64_t> retry_after_s() const noexcept { return retry_after_s_; }
  // The message without the "Code: " prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
  std::optional<std::int64_t> retry_after_s_;
};

}  // namespace atlas
