#pragma once

#include <cstdint>
#include <optional>

#include "atlas/util/bytes.hpp"

namespace atlas::iso7816 {

enum class ApduCase { Case1, Case2, Case3, Case4 };

// Short command APDU. Lc is implied by the data field (present iff data is
// non-empty, 1..255 bytes); Le is 1..256.
struct Apdu {
  std::uint8_t cla = 0;
  std::uint8_t ins = 0;
  std::uint8_t p1 = 0;
  std::uint8_t p2 = 0;
  Bytes data;
  std::optional<std::uint16_t> le;

  std::optional<std::size_t> lc() const {
    return data.empty() ? std::nullopt : std::optional<std::size_t>(data.size());
  }
  ApduCase apdu_case() const;
  // Throws Error(MalformedApdu) when Lc or Le is out of range.
  void validate() const;

  // ISO 7816-4 short encoding (case 4 carries a trailing Le byte).
  Bytes encode() const;
  static Apdu decode(ByteView bytes);

  // T=0 command header: CLA INS P1 P2 P3 with P3 = Lc, or Le (256 as 00), or 0.
  Bytes tpdu_header() const;
  // Header followed by the command data, as seen on the T=0 line.
  Bytes to_tpdu() const;
  // Inverse of to_tpdu; the direction of P3 is taken from the instruction.
  static Apdu from_tpdu(ByteView bytes);

  friend bool operator==(const Apdu&, const Apdu&) = default;
};

struct ResponseApdu {
  Bytes data;
  std::uint8_t sw1 = 0x90;
  std::uint8_t sw2 = 0x00;

  std::uint16_t sw() const { return static_cast<std::uint16_t>((sw1 << 8) | sw2); }
  Bytes encode() const;
  // Throws Error(MalformedApdu) for fewer than 2 bytes.
  static ResponseApdu decode(ByteView bytes);
  static ResponseApdu status(std::uint16_t sw, Bytes data = {}) {
    return ResponseApdu{std::move(data), static_cast<std::uint8_t>(sw >> 8),
                        static_cast<std::uint8_t>(sw & 0xFF)};
  }

  friend bool operator==(const ResponseApdu&, const ResponseApdu&) = default;
};

// True for instructions whose T=0 data phase flows from card to terminal
// (P3 is Le): READ BINARY, READ RECORD, GET RESPONSE, STATUS, FETCH,
// GET DATA, GET CHALLENGE.
bool is_outgoing_ins(std::uint8_t ins);

namespace sw {
inline constexpr std::uint16_t kOk = 0x9000;
inline constexpr std::uint16_t kWrongLength = 0x6700;
inline constexpr std::uint16_t kSecurityNotSatisfied = 0x6982;
inline constexpr std::uint16_t kConditionsNotSatisfied = 0x6985;
inline constexpr std::uint16_t kNoEfSelected = 0x6986;
inline constexpr std::uint16_t kWrongData = 0x6A80;
inline constexpr std::uint16_t kFileNotFound = 0x6A82;
inline constexpr std::uint16_t kWrongP1P2 = 0x6B00;
inline constexpr std::uint16_t kInsNotSupported = 0x6D00;
inline constexpr std::uint16_t kClaNotSupported = 0x6E00;
inline constexpr std::uint16_t kNoPreciseDiagnosis = 0x6F00;
}  // namespace sw

}  // namespace atlas::iso7816
