#include "atlas/net/gsmtap.hpp"

#include <sstream>

#include "atlas/net/pcap.hpp"
#include "atlas/util/error.hpp"

namespace atlas::net {

using nlohmann::json;

const char* to_string(Direction d) { return d == Direction::ToSim ? "ToSim" : "FromSim"; }

Bytes gsmtap_header() {
  Bytes h(kGsmtapHeader, 0);
  h[0] = 0x02;  // version
  h[1] = 0x04;  // header length in 32-bit words
  h[2] = kGsmtapTypeSim;
  return h;
}

Bytes write_gsmtap_pcap(const std::vector<ApduLogRecord>& records) {
  PcapWriter w;
  const PacketMeta meta{"127.0.0.1", "127.0.0.1", kGsmtapPort, kGsmtapPort, L4::Udp};
  for (const auto& r : records) {
    Bytes payload = gsmtap_header();
    append(payload, r.raw);
    w.add(r.wall, build_frame(meta, payload));
  }
  return w.bytes();
}

std::vector<ApduLogRecord> read_gsmtap_pcap(ByteView file) {
  PcapFile pcap = read_pcap(file);
  std::vector<ApduLogRecord> out;
  for (const auto& p : pcap.packets) {
    ParsedFrame f;
    try {
      f = parse_frame(p.frame);
    } catch (const Error&) {
      continue;
    }
    if (f.meta.proto != L4::Udp || f.meta.dport != kGsmtapPort) continue;
    if (f.payload.size() < kGsmtapHeader || f.payload[0] != 0x02 || f.payload[2] != kGsmtapTypeSim) continue;
    const std::size_t hdr = f.payload[1] * 4u;
    if (hdr < kGsmtapHeader || hdr > f.payload.size()) continue;
    ApduLogRecord r;
    r.direction = out.size() % 2 == 0 ? Direction::ToSim : Direction::FromSim;
    r.raw.assign(f.payload.begin() + static_cast<std::ptrdiff_t>(hdr), f.payload.end());
    r.wall = p.ts;
    out.push_back(std::move(r));
  }
  return out;
}

json to_json(const ApduLogRecord& r) {
  return json{{"circuit_id", r.circuit_id},
              {"imsi", r.imsi},
              {"direction", to_string(r.direction)},
              {"raw", to_hex(r.raw)},
              {"mono_ns", r.mono.count()},
              {"wall_us", std::chrono::duration_cast<std::chrono::microseconds>(r.wall.time_since_epoch()).count()}};
}

ApduLogRecord record_from_json(const json& j) {
  try {
    ApduLogRecord r;
    r.circuit_id = j.at("circuit_id").get<std::string>();
    r.imsi = j.at("imsi").get<std::string>();
    std::string d = j.at("direction").get<std::string>();
    if (d == "ToSim") {
      r.direction = Direction::ToSim;
    } else if (d == "FromSim") {
      r.direction = Direction::FromSim;
    } else {
      throw Error(Errc::ParseError, "bad direction '" + d + "'");
    }
    r.raw = from_hex(j.at("raw").get<std::string>());
    r.mono = Nanos{j.value("mono_ns", std::int64_t{0})};
    r.wall = WallTime{std::chrono::microseconds{j.value("wall_us", std::int64_t{0})}};
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

std::string write_jsonl(const std::vector<ApduLogRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<ApduLogRecord> read_jsonl(const std::string& text) {
  std::vector<ApduLogRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, e.what());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

}  // namespace atlas::net
