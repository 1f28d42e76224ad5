#include "atlas/util/error.hpp"

#include <array>
#include <utility>

namespace atlas {
namespace {

constexpr std::array kNames = {
    std::pair{Errc::MalformedAtr, "MalformedAtr"},
    std::pair{Errc::MalformedPps, "MalformedPps"},
    std::pair{Errc::MalformedApdu, "MalformedApdu"},
    std::pair{Errc::InvalidIndex, "InvalidIndex"},
    std::pair{Errc::InvalidClock, "InvalidClock"},
    std::pair{Errc::ProtocolViolation, "ProtocolViolation"},
    std::pair{Errc::HandlerFailure, "HandlerFailure"},
    std::pair{Errc::WaitingTimeExpired, "WaitingTimeExpired"},
    std::pair{Errc::InvalidProfile, "InvalidProfile"},
    std::pair{Errc::LengthError, "LengthError"},
    std::pair{Errc::TraceExhausted, "TraceExhausted"},
    std::pair{Errc::Truncated, "Truncated"},
    std::pair{Errc::UnknownKind, "UnknownKind"},
    std::pair{Errc::LengthMismatch, "LengthMismatch"},
    std::pair{Errc::SimBusy, "SimBusy"},
    std::pair{Errc::UnknownImsi, "UnknownImsi"},
    std::pair{Errc::BadToken, "BadToken"},
    std::pair{Errc::CooldownActive, "CooldownActive"},
    std::pair{Errc::Detached, "Detached"},
    std::pair{Errc::Timeout, "Timeout"},
    std::pair{Errc::Capacity, "Capacity"},
    std::pair{Errc::ReaderFault, "ReaderFault"},
    std::pair{Errc::BindFailure, "BindFailure"},
    std::pair{Errc::DuplicateImsi, "DuplicateImsi"},
    std::pair{Errc::UnknownCircuit, "UnknownCircuit"},
    std::pair{Errc::AuthFailure, "AuthFailure"},
    std::pair{Errc::CircuitLost, "CircuitLost"},
    std::pair{Errc::ScenarioFailure, "ScenarioFailure"},
    std::pair{Errc::IsolationBreach, "IsolationBreach"},
    std::pair{Errc::EndpointUnreachable, "EndpointUnreachable"},
    std::pair{Errc::AuthRejected, "AuthRejected"},
    std::pair{Errc::PreconditionFailed, "PreconditionFailed"},
    std::pair{Errc::ProbeBusy, "ProbeBusy"},
    std::pair{Errc::ProbeOffline, "ProbeOffline"},
    std::pair{Errc::UnknownSim, "UnknownSim"},
    std::pair{Errc::UnknownProbe, "UnknownProbe"},
    std::pair{Errc::UnknownJob, "UnknownJob"},
    std::pair{Errc::ValidationError, "ValidationError"},
    std::pair{Errc::CorruptLog, "CorruptLog"},
    std::pair{Errc::Ambiguous, "Ambiguous"},
    std::pair{Errc::Undecodable, "Undecodable"},
    std::pair{Errc::NegativeBilled, "NegativeBilled"},
    std::pair{Errc::ParseError, "ParseError"},
    std::pair{Errc::NonDecimalNibble, "NonDecimalNibble"},
    std::pair{Errc::IndefiniteLength, "IndefiniteLength"},
    std::pair{Errc::InvalidFingerprint, "InvalidFingerprint"},
    std::pair{Errc::NoToneDetected, "NoToneDetected"},
    std::pair{Errc::InvalidAudio, "InvalidAudio"},
    std::pair{Errc::Internal, "Internal"},
};

}  // namespace

std::string_view to_string(Errc code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Internal";
}

std::optional<Errc> errc_from_string(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

Error::Error(Errc code, const std::string& message, std::optional<std::int64_t> retry_after_s)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      detail_(message),
      retry_after_s_(retry_after_s) {}

}  // namespace atlas
