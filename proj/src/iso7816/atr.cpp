#include "atlas/iso7816/atr.hpp"

#include <array>

#include "atlas/util/error.hpp"

namespace atlas::iso7816 {

namespace {

constexpr std::array<int, 16> kFi = {372, 372, 558, 744, 1116, 1488, 1860, 0,
                                     0,   512, 768, 1024, 1536, 2048, 0,   0};
constexpr std::array<int, 16> kDi = {0, 1, 2, 4, 8, 16, 32, 64, 0, 0, 0, 0, 0, 0, 0, 0};

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::MalformedAtr, why); }

}  // namespace

std::optional<int> fi_from_index(std::uint8_t index) {
  if (index > 15 || kFi[index] == 0) return std::nullopt;
  return kFi[index];
}

std::optional<int> di_from_index(std::uint8_t index) {
  if (index > 15 || kDi[index] == 0) return std::nullopt;
  return kDi[index];
}

std::optional<std::uint8_t> Atr::interface_byte(InterfaceTag tag, std::uint8_t index) const {
  for (const auto& ib : interface_bytes) {
    if (ib.tag == tag && ib.index == index) return ib.value;
  }
  return std::nullopt;
}

std::set<int> Atr::protocols() const {
  std::set<int> out;
  for (const auto& ib : interface_bytes) {
    if (ib.tag == InterfaceTag::TD) out.insert(ib.value & 0x0F);
  }
  if (out.empty()) out.insert(0);
  return out;
}

Atr parse_atr(ByteView raw) {
  if (raw.size() < 2) malformed("ATR shorter than 2 bytes");
  if (raw[0] != kDirectConvention) {
    malformed(raw[0] == 0x3F ? "inverse convention is not supported" : "bad TS byte");
  }
  Atr atr;
  atr.ts = raw[0];
  atr.t0 = raw[1];
  std::size_t pos = 2;
  std::uint8_t presence = atr.t0 >> 4;
  std::uint8_t group = 1;
  bool needs_tck = false;
  while (true) {
    std::optional<std::uint8_t> td;
    for (int bit = 0; bit < 4; ++bit) {
      if ((presence & (1 << bit)) == 0) continue;
      if (pos >= raw.size()) malformed("truncated interface bytes");
      std::uint8_t v = raw[pos++];
      atr.interface_bytes.push_back({static_cast<InterfaceTag>(bit), group, v});
      if (bit == 3) td = v;
    }
    if (!td) break;
    if ((*td & 0x0F) != 0) needs_tck = true;
    presence = *td >> 4;
    ++group;
  }
  const std::size_t k = atr.t0 & 0x0F;
  if (pos + k > raw.size()) malformed("truncated historical bytes");
  atr.historical.assign(raw.begin() + pos, raw.begin() + pos + k);
  pos += k;
  if (needs_tck) {
    if (pos >= raw.size()) malformed("missing TCK");
    atr.tck = raw[pos++];
    std::uint8_t x = 0;
    for (std::size_t i = 1; i < pos; ++i) x ^= raw[i];
    if (x != 0) malformed("TCK check failed");
  }
  if (pos != raw.size()) malformed(std::to_string(raw.size() - pos) + " trailing bytes");
  return atr;
}

Bytes build_atr(const Atr& atr) {
  if (atr.ts != kDirectConvention) malformed("only direct convention (0x3B) is supported");
  if ((atr.t0 & 0x0F) != atr.historical.size()) malformed("T0 low nibble != historical length");
  Bytes out{atr.ts, atr.t0};
  std::uint8_t presence = atr.t0 >> 4;
  std::uint8_t group = 1;
  std::size_t i = 0;
  bool needs_tck = false;
  while (true) {
    std::optional<std::uint8_t> td;
    for (int bit = 0; bit < 4; ++bit) {
      if ((presence & (1 << bit)) == 0) continue;
      if (i >= atr.interface_bytes.size()) malformed("presence bits announce a missing interface byte");
      const auto& ib = atr.interface_bytes[i++];
      if (static_cast<int>(ib.tag) != bit || ib.index != group) {
        malformed("interface bytes out of order");
      }
      out.push_back(ib.value);
      if (bit == 3) td = ib.value;
    }
    if (!td) break;
    if ((*td & 0x0F) != 0) needs_tck = true;
    presence = *td >> 4;
    ++group;
  }
  if (i != atr.interface_bytes.size()) malformed("interface bytes not announced by presence bits");
  append(out, atr.historical);
  if (needs_tck != atr.tck.has_value()) {
    malformed(needs_tck ? "TCK required when a protocol other than T=0 is indicated"
                        : "TCK present but only T=0 indicated");
  }
  if (atr.tck) {
    out.push_back(*atr.tck);
    std::uint8_t x = 0;
    for (std::size_t j = 1; j < out.size(); ++j) x ^= out[j];
    if (x != 0) malformed("TCK does not match");
  }
  return out;
}

Atr make_atr(std::optional<std::uint8_t> ta1, Bytes historical, std::vector<int> protocols) {
  if (historical.size() > 15) malformed("more than 15 historical bytes");
  Atr atr;
  std::uint8_t y1 = ta1 ? 0x1 : 0x0;
  if (!protocols.empty()) y1 |= 0x8;
  atr.t0 = static_cast<std::uint8_t>((y1 << 4) | historical.size());
  if (ta1) atr.interface_bytes.push_back({InterfaceTag::TA, 1, *ta1});
  for (std::size_t i = 0; i < protocols.size(); ++i) {
    int t = protocols[i];
    if (t < 0 || t > 15) malformed("protocol number out of range");
    std::uint8_t next = i + 1 < protocols.size() ? 0x80 : 0x00;
    atr.interface_bytes.push_back(
        {InterfaceTag::TD, static_cast<std::uint8_t>(i + 1), static_cast<std::uint8_t>(next | t)});
  }
  atr.historical = std::move(historical);
  bool needs_tck = false;
  for (int t : protocols) needs_tck |= t != 0;
  if (needs_tck) {
    Bytes raw{atr.t0};
    for (const auto& ib : atr.interface_bytes) raw.push_back(ib.value);
    append(raw, atr.historical);
    std::uint8_t x = 0;
    for (auto b : raw) x ^= b;
    atr.tck = x;
  }
  return atr;
}

}  // namespace atlas::iso7816
