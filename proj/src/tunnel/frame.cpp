#include "atlas/tunnel/frame.hpp"

namespace atlas::tunnel {

bool is_valid_kind(std::uint8_t k) { return (k >= 0x01 && k <= 0x0A) || k == 0x0F; }

const char* to_string(FrameKind k) {
  switch (k) {
    case FrameKind::Hello: return "HELLO";
    case FrameKind::Attach: return "ATTACH";
    case FrameKind::Granted: return "GRANTED";
    case FrameKind::ApduReq: return "APDU_REQ";
    case FrameKind::ApduResp: return "APDU_RESP";
    case FrameKind::Reset: return "RESET";
    case FrameKind::Atr: return "ATR";
    case FrameKind::Ping: return "PING";
    case FrameKind::Pong: return "PONG";
    case FrameKind::Detach: return "DETACH";
    case FrameKind::Error: return "ERROR";
  }
  return "?";
}

Bytes encode_frame(const Frame& f) {
  if (!is_valid_kind(static_cast<std::uint8_t>(f.kind))) throw Error(Errc::UnknownKind, "cannot encode kind");
  if (f.payload.size() > kMaxPayload) throw Error(Errc::LengthMismatch, "payload too large");
  Bytes out;
  out.reserve(kHeaderSize + f.payload.size());
  put_u32be(out, static_cast<std::uint32_t>(f.payload.size()));
  out.push_back(static_cast<std::uint8_t>(f.kind));
  put_u32be(out, f.seq);
  append(out, f.payload);
  return out;
}

Frame decode_frame(ByteView bytes) {
  if (bytes.size() < kHeaderSize) throw Error(Errc::Truncated, "frame header needs 9 bytes");
  const std::uint32_t len = get_u32be(bytes.data());
  const std::uint8_t kind = bytes[4];
  if (!is_valid_kind(kind)) throw Error(Errc::UnknownKind, "kind byte " + to_hex(bytes.subspan(4, 1)));
  if (len > kMaxPayload) throw Error(Errc::LengthMismatch, "declared length " + std::to_string(len) + " too large");
  if (bytes.size() - kHeaderSize < len) throw Error(Errc::Truncated, "payload shorter than declared length");
  if (bytes.size() - kHeaderSize > len) throw Error(Errc::LengthMismatch, "bytes after payload");
  Frame f;
  f.kind = static_cast<FrameKind>(kind);
  f.seq = get_u32be(bytes.data() + 5);
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return f;
}

Bytes json_payload(const nlohmann::json& j) {
  std::string s = j.dump();
  return Bytes(s.begin(), s.end());
}

nlohmann::json parse_json_payload(const Frame& f) {
  try {
    return nlohmann::json::parse(f.payload.begin(), f.payload.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProtocolViolation, std::string(to_string(f.kind)) + " payload is not JSON");
  }
}

Frame error_frame(std::uint32_t seq, Errc code, const std::string& message) {
  return Frame{FrameKind::Error, seq, json_payload({{"code", std::string(to_string(code))}, {"message", message}})};
}

Error error_from_frame(const Frame& f) {
  nlohmann::json j = parse_json_payload(f);
  auto code = errc_from_string(j.value("code", std::string{}));
  std::optional<std::int64_t> retry;
  if (j.contains("retry_after")) retry = j["retry_after"].get<std::int64_t>();
  return Error(code.value_or(Errc::Internal), j.value("message", std::string{}), retry);
}

void FrameConnection::send(const Frame& f) {
  Bytes b = encode_frame(f);
  std::lock_guard lock(write_mu_);
  socket_.send_all(b);
}

std::optional<Frame> FrameConnection::receive() {
  std::uint8_t header[kHeaderSize];
  if (!socket_.recv_exact(header, kHeaderSize)) return std::nullopt;
  const std::uint32_t len = get_u32be(header);
  if (!is_valid_kind(header[4])) throw Error(Errc::UnknownKind, "kind byte " + to_hex(ByteView(header + 4, 1)));
  if (len > kMaxPayload) throw Error(Errc::LengthMismatch, "declared length too large");
  Frame f;
  f.kind = static_cast<FrameKind>(header[4]);
  f.seq = get_u32be(header + 5);
  f.payload.resize(len);
  if (len > 0 && !socket_.recv_exact(f.payload.data(), len)) throw Error(Errc::Truncated, "EOF inside frame");
  return f;
}

}  // namespace atlas::tunnel
