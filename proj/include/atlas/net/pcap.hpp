#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atlas/util/bytes.hpp"
#include "atlas/util/clock.hpp"

namespace atlas::net {

inline constexpr std::size_t kPcapGlobalHeader = 24;
inline constexpr std::size_t kPcapRecordHeader = 16;
inline constexpr std::size_t kEthernetHeader = 14;
inline constexpr std::size_t kIpv4Header = 20;
inline constexpr std::size_t kIpv6Header = 40;
inline constexpr std::size_t kUdpHeader = 8;
inline constexpr std::size_t kTcpHeader = 20;

enum class L4 : std::uint8_t { Udp = 17, Tcp = 6 };

struct PacketMeta {
  std::string src;  // IPv4 or IPv6 literal
  std::string dst;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  L4 proto = L4::Udp;
};

// Ethernet + IP + UDP/TCP frame around `payload`. IP and UDP lengths and
// the IPv4 header checksum are filled in; the UDP checksum is left zero.
Bytes build_frame(const PacketMeta& meta, ByteView payload);

// Classic little-endian libpcap file, linktype 1 (Ethernet).
class PcapWriter {
 public:
  PcapWriter();
  void add(WallTime ts, ByteView frame);
  const Bytes& bytes() const { return out_; }
  std::size_t packets() const { return packets_; }

 private:
  Bytes out_;
  std::size_t packets_ = 0;
};

struct PcapPacket {
  WallTime ts;
  Bytes frame;
};

struct PcapFile {
  std::uint32_t linktype = 0;
  std::uint32_t snaplen = 0;
  std::vector<PcapPacket> packets;
};

// Accepts both byte orders. Throws Error(ParseError) on a bad magic and
// Error(Truncated) on a short record.
PcapFile read_pcap(ByteView file);

// Payload after Ethernet/IP/UDP or TCP headers. Throws ParseError.
struct ParsedFrame {
  PacketMeta meta;
  Bytes payload;
};
ParsedFrame parse_frame(ByteView frame);

void write_file(const std::string& path, ByteView data);
Bytes read_file(const std::string& path);

}  // namespace atlas::net
