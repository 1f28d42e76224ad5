#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "atlas/util/bytes.hpp"

namespace atlas::iso7816 {

inline constexpr std::uint8_t kDirectConvention = 0x3B;

enum class InterfaceTag : std::uint8_t { TA = 0, TB = 1, TC = 2, TD = 3 };

struct InterfaceByte {
  InterfaceTag tag;
  std::uint8_t index;  // i in TAi/TBi/TCi/TDi, 1-based
  std::uint8_t value;

  friend bool operator==(const InterfaceByte&, const InterfaceByte&) = default;
};

// Answer To Reset, direct convention only.
struct Atr {
  std::uint8_t ts = kDirectConvention;
  std::uint8_t t0 = 0;
  std::vector<InterfaceByte> interface_bytes;  // in transmission order
  Bytes historical;
  std::optional<std::uint8_t> tck;

  std::optional<std::uint8_t> interface_byte(InterfaceTag tag, std::uint8_t index) const;
  std::optional<std::uint8_t> ta1() const { return interface_byte(InterfaceTag::TA, 1); }
  // Protocols announced by TDi; {0} when none is announced.
  std::set<int> protocols() const;

  friend bool operator==(const Atr&, const Atr&) = default;
};

// Errors: MalformedAtr (bad TS, truncation, trailing bytes, bad TCK).
Atr parse_atr(ByteView raw);
// Serializes after checking the Atr invariants (throws MalformedAtr).
Bytes build_atr(const Atr& atr);

// Builds a consistent Atr: T0/TDi presence bits and TCK are derived.
// `protocols` lists announced protocols in order (empty = implicit T=0).
Atr make_atr(std::optional<std::uint8_t> ta1, Bytes historical, std::vector<int> protocols = {});

// ISO 7816-3 conversion tables. nullopt for RFU slots and for Di values
// outside the supported {1,2,4,...,64} set.
std::optional<int> fi_from_index(std::uint8_t index);
std::optional<int> di_from_index(std::uint8_t index);

}  // namespace atlas::iso7816
