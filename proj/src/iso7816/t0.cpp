#include "atlas/iso7816/t0.hpp"

#include "atlas/util/error.hpp"

namespace atlas::iso7816 {

const char* to_string(T0State s) {
  switch (s) {
    case T0State::AwaitHeader:
      return "AwaitHeader";
    case T0State::SendProcedure:
      return "SendProcedure";
    case T0State::TransferData:
      return "TransferData";
    case T0State::SendStatus:
      return "SendStatus";
    case T0State::Idle:
      return "Idle";
  }
  return "?";
}

T0CardSession::T0CardSession(T0Config config) : config_(config) { history_.push_back(state_); }

void T0CardSession::enter(T0State s) {
  state_ = s;
  history_.push_back(s);
}

void T0CardSession::reset() {
  enter(T0State::AwaitHeader);
  pending_.reset();
  stashed_.reset();
  pps_.reset();
  pps_allowed_ = true;
}

ResponseApdu T0CardSession::await_response(const Apdu& apdu, const ApduHandler& handler,
                                           ByteSink& out) {
  std::future<ResponseApdu> fut;
  try {
    fut = handler(apdu);
  } catch (...) {
    ++handler_failures_;
    return ResponseApdu::status(sw::kNoPreciseDiagnosis);
  }
  if (config_.wtx_enabled && config_.wtx_interval.count() > 0) {
    while (fut.wait_for(config_.wtx_interval) == std::future_status::timeout) {
      out.write(kNullByte);
      ++nulls_;
    }
  } else {
    fut.wait();
  }
  try {
    return fut.get();
  } catch (...) {
    ++handler_failures_;
    return ResponseApdu::status(sw::kNoPreciseDiagnosis);
  }
}

void T0CardSession::serve_pps(ByteSource& in, ByteSink& out) {
  Bytes frame{0xFF};
  auto pps0 = in.read();
  if (!pps0) throw Error(Errc::ProtocolViolation, "stream ended inside PPS");
  frame.push_back(*pps0);
  std::size_t remaining = 1 + ((*pps0 & 0x10) ? 1 : 0) + ((*pps0 & 0x20) ? 1 : 0) + ((*pps0 & 0x40) ? 1 : 0);
  for (std::size_t i = 0; i < remaining; ++i) {
    auto b = in.read();
    if (!b) throw Error(Errc::ProtocolViolation, "stream ended inside PPS");
    frame.push_back(*b);
  }
  pps_allowed_ = false;
  PpsFrame request;
  try {
    request = parse_pps(frame);
  } catch (const Error&) {
    // A card that does not understand the request stays silent.
    return;
  }
  PpsFrame response = request;
  if (request.pps1) {
    std::uint8_t fi = *request.pps1 >> 4;
    std::uint8_t di = *request.pps1 & 0x0F;
    bool acceptable = fi <= (config_.max_ta1 >> 4) && di <= (config_.max_ta1 & 0x0F);
    if (!acceptable) {
      // Answer without PPS1: default Fi/Di stay in force.
      response.pps0 = static_cast<std::uint8_t>(request.pps0 & 0x0F);
      response.pps1.reset();
      response.pck = static_cast<std::uint8_t>(response.ppss ^ response.pps0);
    }
  }
  pps_ = response;
  for (auto b : response.encode()) out.write(b);
}

bool T0CardSession::step(ByteSource& in, ByteSink& out, const ApduHandler& handler) {
  if (state_ != T0State::AwaitHeader) enter(T0State::AwaitHeader);
  auto first = in.read();
  if (!first) {
    enter(T0State::Idle);
    return false;
  }
  if (*first == 0xFF && pps_allowed_) {
    serve_pps(in, out);
    return true;
  }
  pps_allowed_ = false;
  std::uint8_t header[5] = {*first, 0, 0, 0, 0};
  for (int i = 1; i < 5; ++i) {
    auto b = in.read();
    if (!b) {
      enter(T0State::Idle);
      throw Error(Errc::ProtocolViolation, "stream ended after " + std::to_string(i) + " header bytes");
    }
    header[i] = *b;
  }
  Apdu apdu{header[0], header[1], header[2], header[3], {}, std::nullopt};
  const std::uint8_t ins = header[1];
  const std::uint8_t p3 = header[4];
  enter(T0State::SendProcedure);

  ResponseApdu resp;
  if (is_outgoing_ins(ins)) {
    const std::size_t le = p3 == 0 ? 256 : p3;
    apdu.le = static_cast<std::uint16_t>(le);
    pending_ = apdu;
    if (ins == 0xC0 && stashed_) {
      resp = std::move(*stashed_);
      stashed_.reset();
    } else {
      resp = await_response(apdu, handler, out);
    }
    enter(T0State::TransferData);
    if (!resp.data.empty()) {
      if (resp.data.size() == le) {
        out.write(ins);
        for (auto b : resp.data) out.write(b);
      } else {
        // Wrong Le: tell the terminal the right length.
        resp = ResponseApdu::status(static_cast<std::uint16_t>(0x6C00 | (resp.data.size() & 0xFF)));
      }
    }
  } else {
    if (p3 > 0) {
      out.write(ins);
      enter(T0State::TransferData);
      apdu.data.reserve(p3);
      for (std::size_t i = 0; i < p3; ++i) {
        auto b = in.read();
        if (!b) {
          enter(T0State::Idle);
          throw Error(Errc::ProtocolViolation, "stream ended inside the data phase");
        }
        apdu.data.push_back(*b);
      }
    } else {
      enter(T0State::TransferData);
    }
    pending_ = apdu;
    resp = await_response(apdu, handler, out);
    if (!resp.data.empty()) {
      std::size_t n = resp.data.size();
      stashed_ = std::move(resp);
      resp = ResponseApdu::status(static_cast<std::uint16_t>(0x6100 | (n & 0xFF)));
    }
  }
  enter(T0State::SendStatus);
  out.write(resp.sw1);
  out.write(resp.sw2);
  pending_.reset();
  ++commands_;
  enter(T0State::AwaitHeader);
  return true;
}

void T0CardSession::run(ByteSource& in, ByteSink& out, const ApduHandler& handler) {
  while (step(in, out, handler)) {
  }
}

namespace {

class RecordingSource final : public ByteSource {
 public:
  RecordingSource(ByteView data, Bytes& line) : data_(data), line_(line) {}
  std::optional<std::uint8_t> read() override {
    if (pos_ >= data_.size()) return std::nullopt;
    line_.push_back(data_[pos_]);
    return data_[pos_++];
  }

 private:
  ByteView data_;
  Bytes& line_;
  std::size_t pos_ = 0;
};

class RecordingSink final : public ByteSink {
 public:
  explicit RecordingSink(T0Transcript& t) : t_(t) {}
  void write(std::uint8_t b) override {
    t_.card_tx.push_back(b);
    t_.line.push_back(b);
  }

 private:
  T0Transcript& t_;
};

}  // namespace

T0Transcript t0_card_drive(T0CardSession& session, ByteView inbound, const ApduHandler& handler) {
  if (session.state() != T0State::AwaitHeader) {
    throw Error(Errc::PreconditionFailed, "session is not awaiting a header");
  }
  T0Transcript t;
  RecordingSource in(inbound, t.line);
  RecordingSink out(t);
  session.run(in, out, handler);
  return t;
}

ApduHandler immediate_handler(std::function<ResponseApdu(const Apdu&)> fn) {
  return [fn = std::move(fn)](const Apdu& a) {
    std::promise<ResponseApdu> p;
    try {
      p.set_value(fn(a));
    } catch (...) {
      p.set_exception(std::current_exception());
    }
    return p.get_future();
  };
}

}  // namespace atlas::iso7816
