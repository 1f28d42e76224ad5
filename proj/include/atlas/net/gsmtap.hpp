#pragma once

#include <string>
#include <vector>

#include "atlas/util/bytes.hpp"
#include "atlas/util/clock.hpp"
#include "json.hpp"

namespace atlas::net {

inline constexpr std::uint16_t kGsmtapPort = 4729;
inline constexpr std::size_t kGsmtapHeader = 16;
inline constexpr std::uint8_t kGsmtapTypeSim = 0x04;

enum class Direction { ToSim, FromSim };

const char* to_string(Direction d);

// One direction of one APDU exchange as seen by the SIM side.
// ToSim carries the command TPDU (header + data), FromSim data + SW.
struct ApduLogRecord {
  std::string circuit_id;
  std::string imsi;
  Direction direction = Direction::ToSim;
  Bytes raw;
  Nanos mono{0};
  WallTime wall{};

  friend bool operator==(const ApduLogRecord&, const ApduLogRecord&) = default;
};

// 16-byte GSMTAP v2 header for a SIM payload.
Bytes gsmtap_header();

// PCAP whose packets are Ethernet/IPv4/UDP(4729)/GSMTAP(SIM)/raw.
Bytes write_gsmtap_pcap(const std::vector<ApduLogRecord>& records);

// Inverse of write_gsmtap_pcap for the payloads and timestamps. Packets
// that are not GSMTAP SIM are skipped. Direction alternates starting with
// ToSim, matching how exchanges are logged.
std::vector<ApduLogRecord> read_gsmtap_pcap(ByteView file);

nlohmann::json to_json(const ApduLogRecord& r);
ApduLogRecord record_from_json(const nlohmann::json& j);
std::string write_jsonl(const std::vector<ApduLogRecord>& records);
std::vector<ApduLogRecord> read_jsonl(const std::string& text);

}  // namespace atlas::net
