#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "atlas/mgmt/broker.hpp"
#include "atlas/util/http.hpp"

namespace atlas::mgmt {

// Bounded per-subscriber queue. When full the oldest event is dropped and
// the next pop reports {"type":"gap","dropped":n} before the survivors.
class EventQueue {
 public:
  explicit EventQueue(std::size_t capacity = 256) : capacity_(capacity) {}
  void push(Json ev);
  std::optional<Json> pop(std::chrono::milliseconds wait);
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Json> q_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

// Formats one server-sent event frame.
std::string sse_frame(const Json& ev);

// Tokens never leave the broker through the read API.
Json redact_state(Json state);

class MgmtServer {
 public:
  // reap_every: how often Offline probes are swept (real time).
  MgmtServer(Broker& broker, std::chrono::milliseconds reap_every = std::chrono::seconds{1},
             std::size_t sse_capacity = 256);
  ~MgmtServer();
  // Serves a built dashboard at /ui. Errors: ValidationError (no such dir).
  void mount_ui(const std::string& dir);
  std::uint16_t start(const net::Endpoint& ep);
  void stop();
  std::uint16_t port() const { return http_.port(); }

 private:
  Broker& broker_;
  std::chrono::milliseconds reap_every_;
  std::size_t sse_capacity_;
  http::Server http_;
  std::atomic<bool> stopping_{false};
  std::mutex reap_mu_;
  std::condition_variable reap_cv_;
  std::thread reaper_;
};

}  // namespace atlas::mgmt
