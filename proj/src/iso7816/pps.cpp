#include "atlas/iso7816/pps.hpp"

#include "atlas/iso7816/atr.hpp"
#include "atlas/util/error.hpp"

namespace atlas::iso7816 {

Bytes PpsFrame::encode() const {
  Bytes out{ppss, pps0};
  if (pps1) out.push_back(*pps1);
  out.push_back(pck);
  return out;
}

PpsFrame build_pps(std::uint8_t fi_index, std::uint8_t di_index, int protocol) {
  if (!fi_from_index(fi_index)) {
    throw Error(Errc::InvalidIndex, "Fi index " + std::to_string(fi_index) + " is RFU");
  }
  if (!di_from_index(di_index)) {
    throw Error(Errc::InvalidIndex, "Di index " + std::to_string(di_index) + " is not supported");
  }
  if (protocol < 0 || protocol > 15) throw Error(Errc::InvalidIndex, "protocol out of range");
  PpsFrame f;
  f.pps0 = static_cast<std::uint8_t>(0x10 | protocol);
  f.pps1 = static_cast<std::uint8_t>((fi_index << 4) | di_index);
  f.pck = static_cast<std::uint8_t>(f.ppss ^ f.pps0 ^ *f.pps1);
  return f;
}

PpsFrame parse_pps(ByteView bytes) {
  if (bytes.size() < 3) throw Error(Errc::MalformedPps, "PPS shorter than 3 bytes");
  if (bytes[0] != 0xFF) throw Error(Errc::MalformedPps, "PPSS must be 0xFF");
  PpsFrame f;
  f.pps0 = bytes[1];
  if (f.pps0 & 0x60) throw Error(Errc::MalformedPps, "PPS2/PPS3 are not supported");
  std::size_t expected = (f.pps0 & 0x10) ? 4 : 3;
  if (bytes.size() != expected) throw Error(Errc::MalformedPps, "PPS length does not match PPS0");
  if (f.pps0 & 0x10) {
    f.pps1 = bytes[2];
    if (!fi_from_index(*f.pps1 >> 4) || !di_from_index(*f.pps1 & 0x0F)) {
      throw Error(Errc::MalformedPps, "PPS1 names an unsupported Fi/Di index");
    }
  }
  f.pck = bytes.back();
  std::uint8_t x = 0;
  for (auto b : bytes) x ^= b;
  if (x != 0) throw Error(Errc::MalformedPps, "PCK check failed");
  return f;
}

}  // namespace atlas::iso7816
