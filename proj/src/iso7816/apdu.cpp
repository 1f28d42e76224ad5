#include "atlas/iso7816/apdu.hpp"

#include "atlas/util/error.hpp"

namespace atlas::iso7816 {

ApduCase Apdu::apdu_case() const {
  if (data.empty()) return le ? ApduCase::Case2 : ApduCase::Case1;
  return le ? ApduCase::Case4 : ApduCase::Case3;
}

void Apdu::validate() const {
  if (data.size() > 255) throw Error(Errc::MalformedApdu, "Lc exceeds 255 (short APDU only)");
  if (le && (*le == 0 || *le > 256)) throw Error(Errc::MalformedApdu, "Le must be 1..256");
}

Bytes Apdu::encode() const {
  validate();
  Bytes out{cla, ins, p1, p2};
  if (!data.empty()) {
    out.push_back(static_cast<std::uint8_t>(data.size()));
    append(out, data);
  }
  if (le) out.push_back(static_cast<std::uint8_t>(*le & 0xFF));
  return out;
}

Apdu Apdu::decode(ByteView bytes) {
  if (bytes.size() < 4) throw Error(Errc::MalformedApdu, "APDU shorter than 4 bytes");
  Apdu a{bytes[0], bytes[1], bytes[2], bytes[3], {}, std::nullopt};
  const std::size_t body = bytes.size() - 4;
  if (body == 0) return a;
  const std::uint8_t b4 = bytes[4];
  if (body == 1) {
    a.le = b4 == 0 ? 256 : b4;
    return a;
  }
  if (b4 == 0) throw Error(Errc::MalformedApdu, "extended-length APDUs are not supported");
  if (body == 1u + b4) {
    a.data.assign(bytes.begin() + 5, bytes.end());
    return a;
  }
  if (body == 2u + b4) {
    a.data.assign(bytes.begin() + 5, bytes.end() - 1);
    std::uint8_t le = bytes.back();
    a.le = le == 0 ? 256 : le;
    return a;
  }
  throw Error(Errc::MalformedApdu, "body length does not match Lc");
}

Bytes Apdu::tpdu_header() const {
  validate();
  std::uint8_t p3 = 0;
  if (!data.empty()) {
    p3 = static_cast<std::uint8_t>(data.size());
  } else if (le) {
    p3 = static_cast<std::uint8_t>(*le & 0xFF);
  }
  return Bytes{cla, ins, p1, p2, p3};
}

Bytes Apdu::to_tpdu() const {
  Bytes out = tpdu_header();
  append(out, data);
  return out;
}

Apdu Apdu::from_tpdu(ByteView bytes) {
  if (bytes.size() < 5) throw Error(Errc::MalformedApdu, "T=0 header shorter than 5 bytes");
  Apdu a{bytes[0], bytes[1], bytes[2], bytes[3], {}, std::nullopt};
  const std::uint8_t p3 = bytes[4];
  if (is_outgoing_ins(a.ins)) {
    if (bytes.size() != 5) throw Error(Errc::MalformedApdu, "outgoing command carries data");
    a.le = p3 == 0 ? 256 : p3;
    return a;
  }
  if (bytes.size() != 5u + p3) throw Error(Errc::MalformedApdu, "data length does not match P3");
  a.data.assign(bytes.begin() + 5, bytes.end());
  return a;
}

Bytes ResponseApdu::encode() const {
  Bytes out = data;
  out.push_back(sw1);
  out.push_back(sw2);
  return out;
}

ResponseApdu ResponseApdu::decode(ByteView bytes) {
  if (bytes.size() < 2) throw Error(Errc::MalformedApdu, "response shorter than 2 bytes");
  return ResponseApdu{Bytes(bytes.begin(), bytes.end() - 2), bytes[bytes.size() - 2], bytes.back()};
}

bool is_outgoing_ins(std::uint8_t ins) {
  switch (ins) {
    case 0xB0:  // READ BINARY
    case 0xB2:  // READ RECORD
    case 0xC0:  // GET RESPONSE
    case 0xF2:  // STATUS
    case 0x12:  // FETCH
    case 0xCA:  // GET DATA
    case 0x84:  // GET CHALLENGE
      return true;
    default:
      return false;
  }
}

}  // namespace atlas::iso7816
