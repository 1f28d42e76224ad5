#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "atlas/util/bytes.hpp"

namespace atlas::analytics {

// Definite-length BER/COMPREHENSION TLV node. Tags are 1 or 2 bytes; the
// length field keeps its original width so re-serialization is lossless.
struct TlvNode {
  std::uint16_t tag = 0;
  std::uint8_t tag_bytes = 1;
  // 1 for short form, 2 for 0x81 xx, 3 for 0x82 xx xx.
  std::uint8_t length_bytes = 1;
  Bytes value;                    // set for primitive nodes
  std::vector<TlvNode> children;  // set for constructed nodes
  bool constructed = false;

  std::size_t value_length() const;
  const TlvNode* find(std::uint16_t t) const;

  friend bool operator==(const TlvNode&, const TlvNode&) = default;
};

// Constructed when the BER constructed bit is set or the tag is one of the
// SIM toolkit BER templates (0xD0..0xDF).
bool tag_is_constructed(std::uint16_t tag, std::uint8_t tag_bytes);

// Parses exactly one node spanning all of `bytes`.
// Errors: Truncated, IndefiniteLength, LengthMismatch (trailing bytes).
TlvNode parse_tlv(ByteView bytes);
// Parses a concatenation of nodes.
std::vector<TlvNode> parse_tlv_sequence(ByteView bytes);

Bytes serialize(const TlvNode& node);

// Primitive node with the minimal length encoding.
TlvNode make_tlv(std::uint16_t tag, Bytes value);
TlvNode make_constructed(std::uint16_t tag, std::vector<TlvNode> children);

// Proactive SEND SHORT MESSAGE command (tag D0) wrapping `sms_tpdu`.
Bytes build_proactive_sms(ByteView sms_tpdu);
// Returns the SMS TPDU (tag 0x0B / 0x8B) carried by a tag-D0 proactive
// command. Throws Error(ParseError) when the tree is not one.
Bytes extract_proactive_sms(const TlvNode& root);

}  // namespace atlas::analytics
