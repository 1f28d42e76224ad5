#include "atlas/probe/modem.hpp"

#include <algorithm>
#include <future>

#include "atlas/analytics/bcd.hpp"
#include "atlas/sim/profile.hpp"
#include "atlas/util/error.hpp"

namespace atlas::probe {

std::optional<std::uint8_t> ByteChannel::read() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !q_.empty() || closed_; });
  if (q_.empty()) return std::nullopt;
  auto b = q_.front();
  q_.pop_front();
  return b;
}

std::optional<std::uint8_t> ByteChannel::read_for(std::chrono::microseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; })) return std::nullopt;
  if (q_.empty()) return std::nullopt;
  auto b = q_.front();
  q_.pop_front();
  return b;
}

void ByteChannel::write(std::uint8_t b) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    q_.push_back(b);
  }
  cv_.notify_all();
}

void ByteChannel::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

SimulatedOperator::SimulatedOperator(metering::OperatorCore& core, metering::FlowPoster& billing,
                                     std::string country, std::uint64_t seed)
    : core_(core), billing_(billing), country_(std::move(country)), seed_(seed) {}

Bytes SimulatedOperator::challenge(const std::string& imsi) { return core_.auth_challenge(imsi); }

metering::Attachment SimulatedOperator::complete_attach(const std::string& imsi, ByteView rand, ByteView res) {
  core_.auth_verify(imsi, rand, res);
  network_ = std::make_unique<metering::SimulatedNetwork>(core_.subscriber_scenario(imsi), billing_, seed_);
  return network_->attach(imsi, country_);
}

void SimulatedOperator::detach() {
  if (network_) network_->detach();
  network_.reset();
}

metering::SimulatedNetwork& SimulatedOperator::network() {
  if (!network_) throw Error(Errc::PreconditionFailed, "no device attached to the operator");
  return *network_;
}

const char* to_string(ModemState s) {
  switch (s) {
    case ModemState::Off:
      return "Off";
    case ModemState::SimReady:
      return "SimReady";
    case ModemState::Attached:
      return "Attached";
  }
  return "?";
}

Json to_json(const AttachReport& r) {
  return Json{{"apdus_used", r.apdus_used},
              {"init_apdus", r.init_apdus},
              {"auth_exchanges", r.auth_exchanges},
              {"tpdus", r.tpdus},
              {"wall_ms", r.wall_ms},
              {"wtx_nulls_observed", r.wtx_nulls_observed},
              {"min_nulls_per_exchange", r.min_nulls_per_exchange},
              {"timeouts", r.timeouts}};
}

// Card side: a T=0 session on its own thread whose handler relays each
// command over the circuit.
class ModemSim::Bridge {
 public:
  Bridge(tunnel::TunnelClient& circuit, Clock& clock, iso7816::T0Config cfg)
      : circuit_(circuit), clock_(clock), session_(cfg) {
    thread_ = std::thread([this] {
      try {
        session_.run(to_card, to_modem, [this](const Apdu& a) { return relay(a); });
      } catch (const Error&) {
      }
      to_modem.close();
    });
  }
  ~Bridge() {
    to_card.close();
    if (thread_.joinable()) thread_.join();
  }

  ByteChannel to_card;
  ByteChannel to_modem;

  bool take_relayed() {
    std::lock_guard lock(mu_);
    return std::exchange(relayed_, false);
  }
  std::optional<Error> take_error() {
    std::lock_guard lock(mu_);
    auto e = std::move(error_);
    error_.reset();
    return e;
  }
  std::size_t relays() const {
    std::lock_guard lock(mu_);
    return relays_;
  }
  std::vector<net::ApduLogRecord> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

 private:
  std::future<ResponseApdu> relay(const Apdu& a) {
    {
      std::lock_guard lock(mu_);
      relayed_ = true;
    }
    return std::async(std::launch::async, [this, a] {
      const Nanos t_in = clock_.now();
      const WallTime w_in = clock_.wall();
      try {
        ResponseApdu r = circuit_.relay(a);
        std::lock_guard lock(mu_);
        ++relays_;
        const std::string id = circuit_.session().circuit_id;
        const std::string imsi = circuit_.session().imsi;
        log_.push_back({id, imsi, net::Direction::ToSim, a.to_tpdu(), t_in, w_in});
        log_.push_back({id, imsi, net::Direction::FromSim, r.encode(), clock_.now(), clock_.wall()});
        return r;
      } catch (const Error& e) {
        std::lock_guard lock(mu_);
        error_ = e;
        throw;
      }
    });
  }

  tunnel::TunnelClient& circuit_;
  Clock& clock_;
  iso7816::T0CardSession session_;
  std::thread thread_;
  mutable std::mutex mu_;
  bool relayed_ = false;
  std::size_t relays_ = 0;
  std::optional<Error> error_;
  std::vector<net::ApduLogRecord> log_;
};

namespace {

constexpr std::uint8_t kCla = 0xA0;

Apdu select_fid(std::uint16_t fid) {
  return Apdu{kCla, 0xA4, 0x00, 0x00, {static_cast<std::uint8_t>(fid >> 8), static_cast<std::uint8_t>(fid)}, {}};
}
Apdu get_response(std::uint16_t le) { return Apdu{kCla, 0xC0, 0x00, 0x00, {}, le}; }
Apdu read_binary(std::uint16_t offset, std::uint16_t le) {
  return Apdu{kCla, 0xB0, static_cast<std::uint8_t>(offset >> 8), static_cast<std::uint8_t>(offset), {}, le};
}
Apdu status_cmd() { return Apdu{kCla, 0xF2, 0x00, 0x00, {}, 15}; }

bool ok(const ResponseApdu& r) { return r.sw1 == 0x90 || r.sw1 == 0x91; }

const std::vector<const char*>& init_files() {
  static const std::vector<const char*> files = {
      sim::paths::kEfIccid, sim::paths::kEfPl,    sim::paths::kEfImsi,    sim::paths::kEfAd,
      sim::paths::kEfSst,   sim::paths::kEfSpn,   sim::paths::kEfPlmnSel, sim::paths::kEfHpplmn,
      sim::paths::kEfAcc,   sim::paths::kEfLoci,  sim::paths::kEfKc,      sim::paths::kEfBcch,
      sim::paths::kEfMsisdn};
  return files;
}

}  // namespace

ModemSim::ModemSim(ModemConfig config, Clock& clock) : config_(config), clock_(clock) {}

ModemSim::~ModemSim() { power_off(); }

void ModemSim::power_off() {
  if (operator_) operator_->detach();
  operator_ = nullptr;
  bridge_.reset();
  attachment_.reset();
  state_ = ModemState::Off;
}

std::uint8_t ModemSim::read_line() {
  auto b = bridge_->to_modem.read_for(work_waiting_time());
  if (!b) {
    if (auto e = bridge_->take_error(); e && e->code() == Errc::Detached) {
      throw Error(Errc::CircuitLost, e->detail());
    }
    throw Error(Errc::WaitingTimeExpired,
                "card silent for " + std::to_string(work_waiting_time().count() / 1000) + " ms");
  }
  return *b;
}

ResponseApdu ModemSim::tpdu(const Apdu& apdu, ExchangeStat& stat) {
  stat.ins = apdu.ins;
  const Bytes header = apdu.tpdu_header();
  for (auto b : header) bridge_->to_card.write(b);
  const bool outgoing = iso7816::is_outgoing_ins(apdu.ins);
  ResponseApdu resp;
  bool data_done = false;
  for (;;) {
    const std::uint8_t pb = read_line();
    if (pb == iso7816::kNullByte) {
      ++stat.nulls;
      continue;
    }
    if (pb == apdu.ins && !data_done) {
      data_done = true;
      if (outgoing) {
        const std::size_t n = header[4] == 0 ? 256 : header[4];
        for (std::size_t i = 0; i < n; ++i) resp.data.push_back(read_line());
      } else {
        for (auto b : apdu.data) bridge_->to_card.write(b);
      }
      continue;
    }
    if ((pb & 0xF0) == 0x60 || (pb & 0xF0) == 0x90) {
      resp.sw1 = pb;
      resp.sw2 = read_line();
      break;
    }
    throw Error(Errc::ProtocolViolation, "unexpected procedure byte " + to_hex(Bytes{pb}));
  }
  stat.relayed = bridge_->take_relayed();
  if (auto e = bridge_->take_error()) {
    if (e->code() == Errc::Detached) throw Error(Errc::CircuitLost, e->detail());
    throw *e;
  }
  return resp;
}

ResponseApdu ModemSim::command(const Apdu& apdu, std::vector<ExchangeStat>* stats) {
  auto run = [&](const Apdu& a) {
    ExchangeStat st;
    ResponseApdu r = tpdu(a, st);
    if (stats) stats->push_back(st);
    return r;
  };
  ResponseApdu r = run(apdu);
  if (r.sw1 == 0x6C) {
    Apdu again = apdu;
    again.le = r.sw2 == 0 ? 256 : r.sw2;
    r = run(again);
  }
  if (r.sw1 == 0x61) {
    ResponseApdu data = run(get_response(r.sw2 == 0 ? 256 : r.sw2));
    return data;
  }
  return r;
}

ResponseApdu ModemSim::transmit(const Apdu& apdu) {
  if (state_ == ModemState::Off || !bridge_) throw Error(Errc::PreconditionFailed, "modem is off");
  return command(apdu, nullptr);
}

AttachReport ModemSim::init_and_attach(tunnel::TunnelClient& circuit, SimulatedOperator& op) {
  if (circuit.state() != tunnel::CircuitState::Active) {
    throw Error(Errc::PreconditionFailed, "circuit is not active");
  }
  power_off();
  const Nanos t0 = clock_.now();
  iso7816::T0Config t0cfg;
  t0cfg.wtx_interval = config_.wtx_interval;
  t0cfg.wtx_enabled = config_.wtx_enabled;
  try {
    last_atr_ = circuit.reset();
  } catch (const Error& e) {
    throw Error(e.code() == Errc::Detached ? Errc::CircuitLost : e.code(), e.detail());
  }
  bridge_ = std::make_unique<Bridge>(circuit, clock_, t0cfg);
  state_ = ModemState::SimReady;

  AttachReport rep;
  std::vector<ExchangeStat> stats;
  std::size_t issued = 0;
  const std::size_t budget = config_.init_apdu_count;
  auto issue = [&](const Apdu& a) {
    ExchangeStat st;
    ResponseApdu r = tpdu(a, st);
    stats.push_back(st);
    ++issued;
    return r;
  };

  // Standard file walk: SELECT down the path, GET RESPONSE for the file
  // header, READ BINARY the body. STATUS pads to the budget.
  imsi_ = circuit.session().imsi;
  for (const char* path : init_files()) {
    if (issued >= budget) break;
    auto fids = sim::parse_file_path(path);
    bool found = true;
    for (auto fid : fids) {
      if (issued >= budget) break;
      if (!ok(issue(select_fid(fid)))) {
        found = false;
        break;
      }
    }
    if (!found || issued >= budget) continue;
    ResponseApdu info = issue(get_response(15));
    if (!ok(info) || info.data.size() < 4 || issued >= budget) continue;
    const std::uint16_t size = get_u16be(info.data.data() + 2);
    if (size == 0) continue;
    ResponseApdu body = issue(read_binary(0, std::min<std::uint16_t>(size, 256)));
    if (ok(body) && std::string(path) == sim::paths::kEfImsi) {
      try {
        imsi_ = analytics::decode_ef_imsi(body.data);
      } catch (const Error&) {
      }
    }
  }
  while (issued < budget) issue(status_cmd());
  rep.init_apdus = issued;

  // RUN GSM ALGORITHM with the network's RAND.
  const std::size_t before_auth = bridge_->relays();
  Bytes rand = op.challenge(imsi_);
  ResponseApdu auth = command(Apdu{kCla, 0x88, 0x00, 0x00, rand, {}}, &stats);
  rep.auth_exchanges = bridge_->relays() - before_auth;
  if (!ok(auth) || auth.data.size() < 8) {
    throw Error(Errc::AuthFailure, "SIM refused RUN GSM ALGORITHM: SW " + to_hex(Bytes{auth.sw1, auth.sw2}));
  }
  Bytes res(auth.data.begin(), auth.data.begin() + 8);
  attachment_ = op.complete_attach(imsi_, rand, res);
  operator_ = &op;
  state_ = ModemState::Attached;

  rep.apdus_used = bridge_->relays();
  rep.tpdus = stats.size();
  rep.wall_ms = to_ms(clock_.now() - t0);
  bool first = true;
  for (const auto& s : stats) {
    rep.wtx_nulls_observed += s.nulls;
    if (!s.relayed) continue;
    rep.min_nulls_per_exchange = first ? s.nulls : std::min(rep.min_nulls_per_exchange, s.nulls);
    first = false;
  }
  rep.exchanges = std::move(stats);
  return rep;
}

std::vector<net::ApduLogRecord> ModemSim::apdu_log() const { return bridge_ ? bridge_->log() : std::vector<net::ApduLogRecord>{}; }

std::string ModemSim::ussd(const std::string& code, metering::QuotaReader& quota, const std::string& api_key) {
  if (state_ != ModemState::Attached) throw Error(Errc::PreconditionFailed, "modem is not attached");
  if (code != "*100#") return "Unknown service code";
  auto q = quota.read_quota(imsi_, api_key);
  return "Remaining data: " + std::to_string(q.remaining_bytes / (1024 * 1024)) + " MB (" + q.plan + ")";
}

}  // namespace atlas::probe
