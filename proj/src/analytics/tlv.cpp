#include "atlas/analytics/tlv.hpp"

#include "atlas/util/error.hpp"

namespace atlas::analytics {

namespace {

constexpr std::uint16_t kProactiveCommand = 0xD0;
constexpr std::uint16_t kCommandDetails = 0x81;
constexpr std::uint16_t kDeviceIdentities = 0x82;
constexpr std::uint16_t kSmsTpdu = 0x8B;
constexpr std::uint8_t kSendShortMessage = 0x13;

std::uint8_t minimal_length_bytes(std::size_t len) {
  if (len < 0x80) return 1;
  if (len <= 0xFF) return 2;
  return 3;
}

TlvNode parse_one(ByteView bytes, std::size_t& pos) {
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw Error(Errc::Truncated, "TLV ends at offset " + std::to_string(bytes.size()));
  };
  TlvNode node;
  need(1);
  std::uint8_t first = bytes[pos++];
  node.tag = first;
  if ((first & 0x1F) == 0x1F) {
    need(1);
    node.tag = static_cast<std::uint16_t>((first << 8) | bytes[pos++]);
    node.tag_bytes = 2;
  }
  need(1);
  std::uint8_t l0 = bytes[pos++];
  std::size_t len = 0;
  if (l0 < 0x80) {
    len = l0;
  } else if (l0 == 0x80) {
    throw Error(Errc::IndefiniteLength, "indefinite length form");
  } else if (l0 == 0x81) {
    need(1);
    len = bytes[pos++];
    node.length_bytes = 2;
  } else if (l0 == 0x82) {
    need(2);
    len = get_u16be(bytes.data() + pos);
    pos += 2;
    node.length_bytes = 3;
  } else {
    throw Error(Errc::ParseError, "length field wider than 2 bytes");
  }
  need(len);
  ByteView value = bytes.subspan(pos, len);
  pos += len;
  node.constructed = tag_is_constructed(node.tag, node.tag_bytes);
  if (node.constructed) {
    node.children = parse_tlv_sequence(value);
  } else {
    node.value.assign(value.begin(), value.end());
  }
  return node;
}

void serialize_into(const TlvNode& node, Bytes& out) {
  if (node.tag_bytes == 2) out.push_back(static_cast<std::uint8_t>(node.tag >> 8));
  out.push_back(static_cast<std::uint8_t>(node.tag));
  std::size_t len = node.value_length();
  switch (node.length_bytes) {
    case 1:
      out.push_back(static_cast<std::uint8_t>(len));
      break;
    case 2:
      out.push_back(0x81);
      out.push_back(static_cast<std::uint8_t>(len));
      break;
    default:
      out.push_back(0x82);
      put_u16be(out, static_cast<std::uint16_t>(len));
      break;
  }
  if (node.constructed) {
    for (const auto& c : node.children) serialize_into(c, out);
  } else {
    append(out, node.value);
  }
}

std::size_t encoded_size(const TlvNode& node) {
  return node.tag_bytes + node.length_bytes + node.value_length();
}

}  // namespace

std::size_t TlvNode::value_length() const {
  if (!constructed) return value.size();
  std::size_t n = 0;
  for (const auto& c : children) n += encoded_size(c);
  return n;
}

const TlvNode* TlvNode::find(std::uint16_t t) const {
  for (const auto& c : children) {
    if (c.tag == t) return &c;
  }
  return nullptr;
}

bool tag_is_constructed(std::uint16_t tag, std::uint8_t tag_bytes) {
  std::uint8_t first = tag_bytes == 2 ? static_cast<std::uint8_t>(tag >> 8) : static_cast<std::uint8_t>(tag);
  if (tag_bytes == 1 && first >= 0xD0 && first <= 0xDF) return true;
  return (first & 0x20) != 0;
}

TlvNode parse_tlv(ByteView bytes) {
  std::size_t pos = 0;
  TlvNode node = parse_one(bytes, pos);
  if (pos != bytes.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(bytes.size() - pos) + " trailing bytes after TLV");
  }
  return node;
}

std::vector<TlvNode> parse_tlv_sequence(ByteView bytes) {
  std::vector<TlvNode> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) out.push_back(parse_one(bytes, pos));
  return out;
}

Bytes serialize(const TlvNode& node) {
  Bytes out;
  out.reserve(encoded_size(node));
  serialize_into(node, out);
  return out;
}

TlvNode make_tlv(std::uint16_t tag, Bytes value) {
  TlvNode n;
  n.tag = tag;
  n.tag_bytes = tag > 0xFF ? 2 : 1;
  n.length_bytes = minimal_length_bytes(value.size());
  n.value = std::move(value);
  return n;
}

TlvNode make_constructed(std::uint16_t tag, std::vector<TlvNode> children) {
  TlvNode n;
  n.tag = tag;
  n.tag_bytes = tag > 0xFF ? 2 : 1;
  n.constructed = true;
  n.children = std::move(children);
  n.length_bytes = minimal_length_bytes(n.value_length());
  return n;
}

Bytes build_proactive_sms(ByteView sms_tpdu) {
  // Command details: number 1, SEND SHORT MESSAGE, qualifier 0.
  // Device identities: source SIM (0x81), destination network (0x83).
  TlvNode root = make_constructed(
      kProactiveCommand,
      {make_tlv(kCommandDetails, {0x01, kSendShortMessage, 0x00}),
       make_tlv(kDeviceIdentities, {0x81, 0x83}),
       make_tlv(kSmsTpdu, Bytes(sms_tpdu.begin(), sms_tpdu.end()))});
  return serialize(root);
}

Bytes extract_proactive_sms(const TlvNode& root) {
  if (root.tag != kProactiveCommand || !root.constructed) {
    throw Error(Errc::ParseError, "not a proactive command (tag D0)");
  }
  const TlvNode* details = root.find(kCommandDetails);
  if (details == nullptr) details = root.find(0x01);
  if (details == nullptr || details->value.size() < 2 || details->value[1] != kSendShortMessage) {
    throw Error(Errc::ParseError, "proactive command is not SEND SHORT MESSAGE");
  }
  const TlvNode* tpdu = root.find(kSmsTpdu);
  if (tpdu == nullptr) tpdu = root.find(0x0B);
  if (tpdu == nullptr) throw Error(Errc::ParseError, "proactive command carries no SMS TPDU");
  return tpdu->value;
}

}  // namespace atlas::analytics
