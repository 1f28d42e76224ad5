#pragma once

#include <cstdint>
#include <mutex>
#include <optional>

#include "atlas/util/bytes.hpp"
#include "atlas/util/error.hpp"
#include "atlas/util/socket.hpp"
#include "json.hpp"

namespace atlas::tunnel {

inline constexpr std::uint16_t kDefaultPort = 7816;
inline constexpr int kProtoVersion = 1;
inline constexpr std::size_t kHeaderSize = 9;
inline constexpr std::size_t kMaxPayload = 1 << 20;

enum class FrameKind : std::uint8_t {
  Hello = 0x01,
  Attach = 0x02,
  Granted = 0x03,
  ApduReq = 0x04,
  ApduResp = 0x05,
  Reset = 0x06,
  Atr = 0x07,
  Ping = 0x08,
  Pong = 0x09,
  Detach = 0x0A,
  Error = 0x0F,
};

bool is_valid_kind(std::uint8_t k);
const char* to_string(FrameKind k);

struct Frame {
  FrameKind kind = FrameKind::Ping;
  std::uint32_t seq = 0;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Header: u32 BE payload length, kind byte, u32 BE seq.
Bytes encode_frame(const Frame& f);
// Decodes exactly one frame. Errors: Truncated (short header or payload),
// UnknownKind, LengthMismatch (trailing bytes or oversized length).
Frame decode_frame(ByteView bytes);

// JSON payload helpers for the control frames.
Bytes json_payload(const nlohmann::json& j);
nlohmann::json parse_json_payload(const Frame& f);
Frame error_frame(std::uint32_t seq, Errc code, const std::string& message);
// Rebuilds the Error carried by an ERROR frame.
Error error_from_frame(const Frame& f);

// Framed, thread-safe writer plus single-reader stream over a socket.
class FrameConnection {
 public:
  explicit FrameConnection(net::Socket socket) : socket_(std::move(socket)) {}

  void send(const Frame& f);
  // Blocking; nullopt on orderly EOF. Throws Truncated/UnknownKind/...
  std::optional<Frame> receive();
  void shutdown() { socket_.shutdown(); }

 private:
  net::Socket socket_;
  std::mutex write_mu_;
};

}  // namespace atlas::tunnel
