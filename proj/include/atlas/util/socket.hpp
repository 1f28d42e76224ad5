#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "atlas/util/bytes.hpp"

namespace atlas::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// Parses "host:port", ":port", "port" and "http://host:port[/...]".
Endpoint parse_endpoint(const std::string& text, std::uint16_t default_port = 0);

// Blocking TCP stream socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  // Throws Error(CircuitLost) when the peer is gone.
  void send_all(ByteView data);
  // Fills `out` completely. Returns false on orderly EOF before the first
  // byte; throws Error(Truncated) on EOF mid-buffer.
  bool recv_exact(std::uint8_t* out, std::size_t n);
  // Wakes any thread blocked in recv on this socket.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds{5});

class Listener {
 public:
  // Port 0 binds an ephemeral port. Throws Error(BindFailure).
  explicit Listener(const Endpoint& ep);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  // Returns nullopt once close() has been called.
  std::optional<Socket> accept();
  void close();

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

}  // namespace atlas::net
