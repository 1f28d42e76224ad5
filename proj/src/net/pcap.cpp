#include "atlas/net/pcap.hpp"

#include <arpa/inet.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "atlas/util/error.hpp"

namespace atlas::net {

namespace {

std::uint16_t ipv4_checksum(const std::uint8_t* hdr, std::size_t len) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < len; i += 2) sum += get_u16be(hdr + i);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

bool is_v6(const std::string& addr) { return addr.find(':') != std::string::npos; }

void put_addr(Bytes& out, const std::string& addr, bool v6) {
  std::uint8_t buf[16];
  if (inet_pton(v6 ? AF_INET6 : AF_INET, addr.c_str(), buf) != 1) {
    throw Error(Errc::ParseError, "bad address '" + addr + "'");
  }
  out.insert(out.end(), buf, buf + (v6 ? 16 : 4));
}

std::string addr_str(const std::uint8_t* p, bool v6) {
  char buf[INET6_ADDRSTRLEN];
  inet_ntop(v6 ? AF_INET6 : AF_INET, p, buf, sizeof buf);
  return buf;
}

}  // namespace

Bytes build_frame(const PacketMeta& meta, ByteView payload) {
  const bool v6 = is_v6(meta.dst);
  if (v6 != is_v6(meta.src)) throw Error(Errc::ParseError, "mixed address families");
  const std::size_t l4 = meta.proto == L4::Udp ? kUdpHeader : kTcpHeader;
  Bytes f;
  f.reserve(kEthernetHeader + kIpv6Header + l4 + payload.size());
  // Locally administered MACs; the link layer is only a carrier.
  const std::uint8_t dst_mac[6] = {0x02, 0, 0, 0, 0, 0x02};
  const std::uint8_t src_mac[6] = {0x02, 0, 0, 0, 0, 0x01};
  f.insert(f.end(), dst_mac, dst_mac + 6);
  f.insert(f.end(), src_mac, src_mac + 6);
  put_u16be(f, v6 ? 0x86DD : 0x0800);

  const std::size_t l4_len = l4 + payload.size();
  if (v6) {
    put_u32be(f, 0x60000000);
    put_u16be(f, static_cast<std::uint16_t>(l4_len));
    f.push_back(static_cast<std::uint8_t>(meta.proto));
    f.push_back(64);
    put_addr(f, meta.src, true);
    put_addr(f, meta.dst, true);
  } else {
    const std::size_t ip_start = f.size();
    f.push_back(0x45);
    f.push_back(0x00);
    put_u16be(f, static_cast<std::uint16_t>(kIpv4Header + l4_len));
    put_u16be(f, 0);  // identification
    put_u16be(f, 0);  // flags/fragment
    f.push_back(64);
    f.push_back(static_cast<std::uint8_t>(meta.proto));
    put_u16be(f, 0);  // checksum placeholder
    put_addr(f, meta.src, false);
    put_addr(f, meta.dst, false);
    std::uint16_t c = ipv4_checksum(f.data() + ip_start, kIpv4Header);
    f[ip_start + 10] = static_cast<std::uint8_t>(c >> 8);
    f[ip_start + 11] = static_cast<std::uint8_t>(c);
  }
  put_u16be(f, meta.sport);
  put_u16be(f, meta.dport);
  if (meta.proto == L4::Udp) {
    put_u16be(f, static_cast<std::uint16_t>(l4_len));
    put_u16be(f, 0);
  } else {
    put_u32be(f, 0);            // seq
    put_u32be(f, 0);            // ack
    f.push_back(0x50);          // data offset 5 words
    f.push_back(0x18);          // PSH|ACK
    put_u16be(f, 0xFFFF);       // window
    put_u16be(f, 0);            // checksum
    put_u16be(f, 0);            // urgent
  }
  append(f, payload);
  return f;
}

PcapWriter::PcapWriter() {
  put_u32le(out_, 0xA1B2C3D4);
  put_u16le(out_, 2);
  put_u16le(out_, 4);
  put_u32le(out_, 0);  // thiszone
  put_u32le(out_, 0);  // sigfigs
  put_u32le(out_, 65535);
  put_u32le(out_, 1);
}

void PcapWriter::add(WallTime ts, ByteView frame) {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(ts.time_since_epoch()).count();
  put_u32le(out_, static_cast<std::uint32_t>(us / 1'000'000));
  put_u32le(out_, static_cast<std::uint32_t>(us % 1'000'000));
  const std::size_t incl = std::min<std::size_t>(frame.size(), 65535);
  put_u32le(out_, static_cast<std::uint32_t>(incl));
  put_u32le(out_, static_cast<std::uint32_t>(frame.size()));
  out_.insert(out_.end(), frame.begin(), frame.begin() + static_cast<std::ptrdiff_t>(incl));
  ++packets_;
}

PcapFile read_pcap(ByteView file) {
  if (file.size() < kPcapGlobalHeader) throw Error(Errc::Truncated, "pcap shorter than its global header");
  bool le;
  if (get_u32le(file.data()) == 0xA1B2C3D4) {
    le = true;
  } else if (get_u32be(file.data()) == 0xA1B2C3D4) {
    le = false;
  } else {
    throw Error(Errc::ParseError, "not a microsecond pcap file");
  }
  auto u32 = [&](std::size_t off) { return le ? get_u32le(file.data() + off) : get_u32be(file.data() + off); };
  PcapFile out;
  out.snaplen = u32(16);
  out.linktype = u32(20);
  std::size_t pos = kPcapGlobalHeader;
  while (pos < file.size()) {
    if (file.size() - pos < kPcapRecordHeader) throw Error(Errc::Truncated, "pcap record header cut short");
    std::uint32_t sec = u32(pos), usec = u32(pos + 4), incl = u32(pos + 8);
    pos += kPcapRecordHeader;
    if (file.size() - pos < incl) throw Error(Errc::Truncated, "pcap record body cut short");
    PcapPacket p;
    p.ts = WallTime{std::chrono::seconds{sec} + std::chrono::microseconds{usec}};
    p.frame.assign(file.begin() + static_cast<std::ptrdiff_t>(pos),
                   file.begin() + static_cast<std::ptrdiff_t>(pos + incl));
    pos += incl;
    out.packets.push_back(std::move(p));
  }
  return out;
}

ParsedFrame parse_frame(ByteView f) {
  auto need = [&](std::size_t n) {
    if (f.size() < n) throw Error(Errc::ParseError, "frame too short");
  };
  need(kEthernetHeader);
  const std::uint16_t type = get_u16be(f.data() + 12);
  ParsedFrame out;
  std::size_t pos = kEthernetHeader;
  std::uint8_t proto;
  std::size_t ip_end;
  if (type == 0x0800) {
    need(pos + kIpv4Header);
    const std::size_t ihl = (f[pos] & 0x0F) * 4u;
    need(pos + ihl);
    proto = f[pos + 9];
    out.meta.src = addr_str(f.data() + pos + 12, false);
    out.meta.dst = addr_str(f.data() + pos + 16, false);
    ip_end = pos + get_u16be(f.data() + pos + 2);
    pos += ihl;
  } else if (type == 0x86DD) {
    need(pos + kIpv6Header);
    proto = f[pos + 6];
    out.meta.src = addr_str(f.data() + pos + 8, true);
    out.meta.dst = addr_str(f.data() + pos + 24, true);
    ip_end = pos + kIpv6Header + get_u16be(f.data() + pos + 4);
    pos += kIpv6Header;
  } else {
    throw Error(Errc::ParseError, "unsupported ethertype");
  }
  need(ip_end);
  if (proto == 17) {
    need(pos + kUdpHeader);
    out.meta.proto = L4::Udp;
    out.meta.sport = get_u16be(f.data() + pos);
    out.meta.dport = get_u16be(f.data() + pos + 2);
    pos += kUdpHeader;
  } else if (proto == 6) {
    need(pos + kTcpHeader);
    out.meta.proto = L4::Tcp;
    out.meta.sport = get_u16be(f.data() + pos);
    out.meta.dport = get_u16be(f.data() + pos + 2);
    pos += (f[pos + 12] >> 4) * 4u;
  } else {
    throw Error(Errc::ParseError, "unsupported transport");
  }
  need(pos);
  if (ip_end < pos) throw Error(Errc::ParseError, "IP length too small");
  out.payload.assign(f.begin() + static_cast<std::ptrdiff_t>(pos), f.begin() + static_cast<std::ptrdiff_t>(ip_end));
  return out;
}

void write_file(const std::string& path, ByteView data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Internal, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::PreconditionFailed, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace atlas::net
