#include "atlas/tunnel/client.hpp"

namespace atlas::tunnel {

const char* to_string(CircuitState s) {
  switch (s) {
    case CircuitState::Attaching: return "Attaching";
    case CircuitState::Active: return "Active";
    case CircuitState::Detached: return "Detached";
  }
  return "?";
}

TunnelClient::TunnelClient(net::Endpoint provider, Clock& clock, TunnelConfig config)
    : endpoint_(std::move(provider)), clock_(clock), config_(config) {}

TunnelClient::~TunnelClient() {
  try {
    detach();
  } catch (...) {
  }
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (conn_) conn_->shutdown();
  if (reader_.joinable()) reader_.join();
  if (keepalive_.joinable()) keepalive_.join();
}

CircuitState TunnelClient::state() const {
  std::lock_guard lock(mu_);
  return session_.state;
}

CircuitSession TunnelClient::session() const {
  std::lock_guard lock(mu_);
  return session_;
}

std::size_t TunnelClient::pings_sent() const {
  std::lock_guard lock(mu_);
  return pings_sent_;
}

void TunnelClient::mark_detached(const std::string& why) {
  {
    std::lock_guard lock(mu_);
    if (session_.state != CircuitState::Detached) {
      session_.state = CircuitState::Detached;
      detach_reason_ = why;
    }
  }
  cv_.notify_all();
}

std::uint32_t TunnelClient::send_next(FrameKind kind, Bytes payload, bool await_reply) {
  std::lock_guard send_lock(send_mu_);
  std::uint32_t seq;
  {
    std::lock_guard lock(mu_);
    seq = next_seq_++;
    if (await_reply) awaiting_ = seq;
  }
  conn_->send(Frame{kind, seq, std::move(payload)});
  return seq;
}

Frame TunnelClient::request(FrameKind kind, Bytes payload) {
  Nanos deadline;
  {
    std::lock_guard lock(mu_);
    if (session_.state == CircuitState::Detached) throw Error(Errc::Detached, "circuit detached: " + detach_reason_);
    deadline = clock_.now() + config_.relay_deadline;
  }
  std::uint32_t seq;
  try {
    seq = send_next(kind, std::move(payload), true);
  } catch (const Error& e) {
    mark_detached(e.what());
    throw Error(Errc::Detached, std::string("send failed: ") + e.what());
  }
  std::unique_lock lock(mu_);
  bool got = wait_until(clock_, cv_, lock, deadline, [&] {
    return mailbox_.count(seq) > 0 || session_.state == CircuitState::Detached || stop_;
  });
  awaiting_ = 0;
  auto it = mailbox_.find(seq);
  if (it != mailbox_.end()) {
    Frame f = std::move(it->second);
    mailbox_.erase(it);
    return f;
  }
  if (got) throw Error(Errc::Detached, "circuit detached: " + detach_reason_);
  throw Error(Errc::Timeout, std::string(to_string(kind)) + " seq " + std::to_string(seq) + " unanswered after " +
                                 std::to_string(to_ms(config_.relay_deadline)) + " ms");
}

CircuitSession TunnelClient::attach(const std::string& imsi, ByteView token, const std::string& probe_id) {
  std::lock_guard relay_lock(relay_mu_);
  if (conn_) throw Error(Errc::PreconditionFailed, "client already attached");
  conn_ = std::make_unique<FrameConnection>(net::connect_tcp(endpoint_, config_.connect_timeout));
  {
    std::lock_guard lock(mu_);
    session_ = CircuitSession{};
    session_.imsi = imsi;
    session_.token.assign(token.begin(), token.end());
    last_rx_ = clock_.now();
  }
  reader_ = std::thread([this] { reader_loop(); });

  send_next(FrameKind::Hello, json_payload({{"proto", kProtoVersion}, {"role", "probe"}}), false);
  Frame reply = request(FrameKind::Attach,
                        json_payload({{"imsi", imsi}, {"token", to_hex(token)}, {"probe_id", probe_id}}));
  if (reply.kind == FrameKind::Error) {
    mark_detached("attach rejected");
    throw error_from_frame(reply);
  }
  if (reply.kind != FrameKind::Granted) {
    mark_detached("unexpected reply");
    throw Error(Errc::ProtocolViolation, std::string("expected GRANTED, got ") + to_string(reply.kind));
  }
  nlohmann::json j = parse_json_payload(reply);
  {
    std::lock_guard lock(mu_);
    session_.circuit_id = j.value("circuit_id", std::string{});
    session_.atr = from_hex(j.value("atr", std::string{}));
    session_.state = CircuitState::Active;
    last_rx_ = clock_.now();
  }
  keepalive_ = std::thread([this] { keepalive_loop(); });
  return session();
}

ResponseApdu TunnelClient::relay(const Apdu& apdu) {
  if (cache_) {
    if (auto hit = cache_(apdu)) return *hit;
  }
  std::lock_guard relay_lock(relay_mu_);
  if (state() != CircuitState::Active) throw Error(Errc::Detached, "circuit not active");
  Frame reply = request(FrameKind::ApduReq, apdu.encode());
  if (reply.kind == FrameKind::Error) throw error_from_frame(reply);
  if (reply.kind != FrameKind::ApduResp) {
    throw Error(Errc::ProtocolViolation, std::string("expected APDU_RESP, got ") + to_string(reply.kind));
  }
  return ResponseApdu::decode(reply.payload);
}

Bytes TunnelClient::reset() {
  std::lock_guard relay_lock(relay_mu_);
  if (state() != CircuitState::Active) throw Error(Errc::Detached, "circuit not active");
  Frame reply = request(FrameKind::Reset, {});
  if (reply.kind == FrameKind::Error) throw error_from_frame(reply);
  std::lock_guard lock(mu_);
  session_.atr = reply.payload;
  return reply.payload;
}

void TunnelClient::detach() {
  if (!conn_) return;
  if (state() == CircuitState::Active) {
    try {
      send_next(FrameKind::Detach, {}, false);
    } catch (const Error&) {
    }
  }
  mark_detached("local detach");
  conn_->shutdown();
}

void TunnelClient::reader_loop() {
  for (;;) {
    std::optional<Frame> f;
    try {
      f = conn_->receive();
    } catch (const Error& e) {
      mark_detached(e.what());
      return;
    }
    if (!f) {
      mark_detached("provider closed the connection");
      return;
    }
    {
      std::lock_guard lock(mu_);
      last_rx_ = clock_.now();
      if (f->kind == FrameKind::Pong) {
        outstanding_pings_ = 0;
        continue;
      }
    }
    if (f->kind == FrameKind::Ping) {
      try {
        conn_->send(Frame{FrameKind::Pong, f->seq, {}});
      } catch (const Error&) {
      }
      continue;
    }
    if (f->kind == FrameKind::Detach) {
      mark_detached("provider detached the circuit");
      continue;
    }
    {
      std::lock_guard lock(mu_);
      // Late answers to requests that already timed out are dropped.
      if (f->seq == awaiting_) mailbox_[f->seq] = std::move(*f);
    }
    cv_.notify_all();
  }
}

void TunnelClient::keepalive_loop() {
  std::unique_lock lock(mu_);
  while (!stop_ && session_.state == CircuitState::Active) {
    const Nanos idle_since = std::max(last_rx_, last_ping_);
    const Nanos due = idle_since + config_.keepalive_idle;
    wait_until(clock_, cv_, lock, due, [&] { return stop_ || session_.state != CircuitState::Active; });
    if (stop_ || session_.state != CircuitState::Active) break;
    const Nanos now = clock_.now();
    if (now - std::max(last_rx_, last_ping_) < config_.keepalive_idle) continue;
    if (outstanding_pings_ >= config_.max_missed_pongs) {
      session_.state = CircuitState::Detached;
      detach_reason_ = std::to_string(outstanding_pings_) + " keepalive PINGs unanswered";
      cv_.notify_all();
      lock.unlock();
      conn_->shutdown();
      return;
    }
    ++outstanding_pings_;
    ++pings_sent_;
    last_ping_ = now;
    lock.unlock();
    try {
      send_next(FrameKind::Ping, {}, false);
    } catch (const Error&) {
    }
    lock.lock();
  }
}

}  // namespace atlas::tunnel
