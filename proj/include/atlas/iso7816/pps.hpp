#pragma once

#include <cstdint>
#include <optional>

#include "atlas/util/bytes.hpp"

namespace atlas::iso7816 {

// Protocol and Parameter Selection request/response. PPS2/PPS3 are not
// supported.
struct PpsFrame {
  std::uint8_t ppss = 0xFF;
  std::uint8_t pps0 = 0x10;
  std::optional<std::uint8_t> pps1;  // Fi index << 4 | Di index
  std::uint8_t pck = 0;

  int protocol() const { return pps0 & 0x0F; }
  Bytes encode() const;

  friend bool operator==(const PpsFrame&, const PpsFrame&) = default;
};

// Errors: InvalidIndex (RFU or unsupported Fi/Di index).
PpsFrame build_pps(std::uint8_t fi_index, std::uint8_t di_index, int protocol = 0);
// Errors: MalformedPps (bad PPSS, PPS2/PPS3 announced, truncation,
// trailing bytes, checksum).
PpsFrame parse_pps(ByteView bytes);

}  // namespace atlas::iso7816
