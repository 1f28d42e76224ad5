#include "atlas/mgmt/broker.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "atlas/util/bytes.hpp"
#include "atlas/util/error.hpp"
#include "atlas/util/http.hpp"
#include "atlas/util/uuid.hpp"

namespace atlas::mgmt {

namespace fs = std::filesystem;

const char* to_string(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::Online:
      return "Online";
    case ProbeStatus::Stale:
      return "Stale";
    case ProbeStatus::Offline:
      return "Offline";
  }
  return "?";
}

ProbeStatus probe_status_at(Nanos silence, Nanos interval) {
  if (silence < 2 * interval) return ProbeStatus::Online;
  if (silence < 3 * interval) return ProbeStatus::Stale;
  return ProbeStatus::Offline;
}

void HttpTokenPusher::push(const std::string& provider_admin, const std::string& imsi, const std::string& token_hex,
                           const std::string& circuit_id, const std::string& probe_id) {
  http::Client c(provider_admin, std::chrono::seconds{5});
  c.post("/tokens", {{"imsi", imsi}, {"token", token_hex}, {"circuit_id", circuit_id}, {"probe_id", probe_id}});
}

void HttpTokenPusher::revoke(const std::string& provider_admin, const std::string& imsi) {
  http::Client c(provider_admin, std::chrono::seconds{5});
  c.del("/tokens/" + imsi);
}

Json to_json(const Allocation& a) {
  return Json{{"circuit_id", a.circuit_id},
              {"token", a.token_hex},
              {"provider_id", a.provider_id},
              {"provider_address", a.provider_address}};
}

Json to_json(const RecoveryReport& r) {
  Json c = Json::array();
  for (const auto& l : r.corrupt) c.push_back({{"line", l.line}, {"reason", l.reason}});
  return Json{{"snapshot_seq", r.snapshot_seq}, {"replayed", r.replayed}, {"corrupt", c}};
}

// ---- EventStore ----

EventStore::EventStore(std::string dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

std::string EventStore::events_path() const { return (fs::path(dir_) / "events.jsonl").string(); }
std::string EventStore::snapshot_path() const { return (fs::path(dir_) / "snapshot.json").string(); }

EventStore::Loaded EventStore::load() {
  Loaded out;
  if (dir_.empty()) return out;
  std::lock_guard lock(mu_);
  if (fs::exists(snapshot_path())) {
    std::ifstream in(snapshot_path());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      Json snap = Json::parse(ss.str());
      if (!snap.contains("seq") || !snap.contains("state")) throw std::runtime_error("missing seq/state");
      out.snapshot = std::move(snap);
    } catch (const std::exception& e) {
      out.corrupt.push_back({0, std::string("snapshot unreadable: ") + e.what()});
    }
  }
  std::ifstream in(events_path(), std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  need_newline_ = !text.empty() && text.back() != '\n';
  std::size_t line_no = 0, pos = 0;
  std::uint64_t last_seq = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      Json ev = Json::parse(line);
      if (!ev.is_object() || !ev.contains("seq") || !ev.contains("type") || !ev.contains("t_us")) {
        throw std::runtime_error("missing seq/type/t_us");
      }
      auto seq = ev.at("seq").get<std::uint64_t>();
      if (seq <= last_seq) throw std::runtime_error("seq " + std::to_string(seq) + " out of order");
      last_seq = seq;
      out.events.emplace_back(line_no, std::move(ev));
    } catch (const std::exception& e) {
      out.corrupt.push_back({line_no, e.what()});
    }
  }
  return out;
}

void EventStore::append(const Json& event) {
  if (dir_.empty()) return;
  std::lock_guard lock(mu_);
  if (!out_) out_ = std::make_unique<std::ofstream>(events_path(), std::ios::app | std::ios::binary);
  if (need_newline_) {
    *out_ << '\n';
    need_newline_ = false;
  }
  *out_ << event.dump() << '\n';
  out_->flush();
  if (!*out_) throw Error(Errc::Internal, "cannot append to " + events_path());
}

void EventStore::write_snapshot(std::uint64_t seq, const Json& state) {
  if (dir_.empty()) return;
  std::lock_guard lock(mu_);
  const std::string tmp = snapshot_path() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << Json{{"seq", seq}, {"state", state}}.dump() << '\n';
    if (!out) throw Error(Errc::Internal, "cannot write " + tmp);
  }
  fs::rename(tmp, snapshot_path());
}

// ---- Broker ----

namespace {

Json empty_state() {
  return Json{{"probes", Json::object()}, {"providers", Json::object()}, {"sims", Json::object()},
              {"circuits", Json::object()}, {"jobs", Json::object()}, {"seq", 0}};
}

std::string random_token_hex() {
  Bytes t(32);
  if (RAND_bytes(t.data(), static_cast<int>(t.size())) != 1) throw Error(Errc::Internal, "RAND_bytes failed");
  return to_hex(t);
}

Json redacted(Json ev) {
  if (ev.contains("token")) ev["token"] = "redacted";
  return ev;
}

}  // namespace

Broker::Broker(MgmtConfig config, Clock& clock, TokenPusher& pusher)
    : config_(std::move(config)), clock_(clock), pusher_(pusher), store_(config_.data_dir), state_(empty_state()) {}

std::int64_t Broker::now_us() const {
  return std::chrono::duration_cast<std::chrono::microseconds>(clock_.wall().time_since_epoch()).count();
}

RecoveryReport Broker::recover() {
  std::lock_guard lock(mu_);
  RecoveryReport rep;
  auto loaded = store_.load();
  state_ = empty_state();
  history_.clear();
  seq_ = 0;
  if (loaded.snapshot) {
    state_ = loaded.snapshot->at("state");
    seq_ = loaded.snapshot->at("seq").get<std::uint64_t>();
    rep.snapshot_seq = seq_;
  }
  rep.corrupt = loaded.corrupt;
  for (auto& [line, ev] : loaded.events) {
    if (ev.at("seq").get<std::uint64_t>() <= seq_) continue;
    Json before = state_;
    try {
      apply(ev);
    } catch (const std::exception& e) {
      state_ = std::move(before);
      rep.corrupt.push_back({line, std::string("unappliable: ") + e.what()});
      continue;
    }
    seq_ = ev.at("seq").get<std::uint64_t>();
    state_["seq"] = seq_;
    history_.push_back(ev);
    ++rep.replayed;
  }
  std::sort(rep.corrupt.begin(), rep.corrupt.end(), [](auto& a, auto& b) { return a.line < b.line; });
  since_snapshot_ = 0;
  return rep;
}

void Broker::commit(Json ev) {
  ev["seq"] = seq_ + 1;
  ev["t_us"] = now_us();
  apply(ev);
  ++seq_;
  state_["seq"] = seq_;
  store_.append(ev);
  history_.push_back(ev);
  Json pub = redacted(ev);
  for (auto& [id, l] : listeners_) l(pub);
  if (++since_snapshot_ >= config_.snapshot_every) {
    store_.write_snapshot(seq_, state_);
    since_snapshot_ = 0;
  }
}

void Broker::apply(const Json& ev) {
  const std::string type = ev.at("type").get<std::string>();
  const std::int64_t t = ev.at("t_us").get<std::int64_t>();
  auto& probes = state_["probes"];
  auto& sims = state_["sims"];
  auto& circuits = state_["circuits"];
  auto& jobs = state_["jobs"];
  if (type == "probe_registered") {
    const std::string id = ev.at("probe_id");
    Json& p = probes[id];
    if (p.is_null()) p = {{"registered_us", t}, {"current_circuit", nullptr}, {"restart_pending", false}};
    p["country"] = ev.at("country");
    p["last_heartbeat_us"] = t;
  } else if (type == "heartbeat") {
    Json& p = probes.at(ev.at("probe_id").get<std::string>());
    p["last_heartbeat_us"] = t;
    p["restart_pending"] = false;
  } else if (type == "restart_requested") {
    probes.at(ev.at("probe_id").get<std::string>())["restart_pending"] = true;
  } else if (type == "inventory") {
    const std::string pid = ev.at("provider_id");
    state_["providers"][pid] = {{"address", ev.at("address")}, {"admin", ev.at("admin")}};
    std::set<std::string> seen;
    for (const auto& s : ev.at("sims")) {
      const std::string imsi = s.at("imsi");
      seen.insert(imsi);
      Json& rec = sims[imsi];
      if (rec.is_null()) rec = {{"circuit_id", nullptr}, {"last_country", nullptr}, {"last_closed_us", nullptr}};
      rec["provider_id"] = pid;
      rec["iccid"] = s.value("iccid", "");
      rec["home_country"] = s.value("home_country", "");
      rec["label"] = s.value("label", "");
      rec["online"] = s.value("online", true);
    }
    for (auto& [imsi, rec] : sims.items()) {
      if (rec.at("provider_id") == pid && !seen.count(imsi)) rec["online"] = false;
    }
  } else if (type == "circuit_opened") {
    const std::string cid = ev.at("circuit_id");
    const std::string imsi = ev.at("imsi");
    const std::string pid = ev.at("probe_id");
    circuits[cid] = {{"imsi", imsi},
                     {"probe_id", pid},
                     {"token", ev.at("token")},
                     {"country", ev.at("country")},
                     {"provider_id", ev.at("provider_id")},
                     {"created_us", t},
                     {"closed_us", nullptr},
                     {"close_reason", nullptr}};
    sims.at(imsi)["circuit_id"] = cid;
    probes.at(pid)["current_circuit"] = cid;
  } else if (type == "circuit_closed") {
    Json& c = circuits.at(ev.at("circuit_id").get<std::string>());
    if (!c.at("closed_us").is_null()) return;
    c["closed_us"] = t;
    c["close_reason"] = ev.at("reason");
    Json& s = sims.at(c.at("imsi").get<std::string>());
    s["circuit_id"] = nullptr;
    s["last_country"] = c.at("country");
    s["last_closed_us"] = t;
    Json& p = probes.at(c.at("probe_id").get<std::string>());
    if (p.at("current_circuit") == ev.at("circuit_id")) p["current_circuit"] = nullptr;
  } else if (type == "job_submitted") {
    Json j = ev.at("job");
    j["submit_seq"] = ev.at("seq");
    j["created_us"] = t;
    j["circuit_id"] = nullptr;
    j["result"] = nullptr;
    j["error"] = nullptr;
    j["status"] = "Pending";
    jobs[j.at("job_id").get<std::string>()] = j;
  } else if (type == "job_dispatched") {
    Json& j = jobs.at(ev.at("job_id").get<std::string>());
    j["status"] = "Running";
    j["circuit_id"] = ev.at("circuit_id");
    j["dispatched_us"] = t;
  } else if (type == "job_finished") {
    Json& j = jobs.at(ev.at("job_id").get<std::string>());
    j["result"] = ev.at("result");
    j["status"] = ev.at("result").at("status");
    if (ev.at("result").contains("error")) j["error"] = ev.at("result").at("error");
    j["finished_us"] = t;
  } else if (type == "job_failed") {
    Json& j = jobs.at(ev.at("job_id").get<std::string>());
    j["status"] = "Failed";
    j["error"] = {{"code", ev.at("code")}, {"message", ev.value("message", "")}};
    j["finished_us"] = t;
  } else {
    throw Error(Errc::CorruptLog, "unknown event type " + type);
  }
}

void Broker::check_probe(const std::string& probe_id) const {
  if (!state_.at("probes").contains(probe_id)) throw Error(Errc::UnknownProbe, "unknown probe " + probe_id);
}

ProbeStatus Broker::status_locked(const std::string& probe_id) const {
  const auto& p = state_.at("probes").at(probe_id);
  const std::int64_t silence_us = now_us() - p.at("last_heartbeat_us").get<std::int64_t>();
  return probe_status_at(std::chrono::microseconds{silence_us}, config_.heartbeat_interval);
}

Json Broker::register_probe(const std::string& probe_id, const std::string& country) {
  if (probe_id.empty()) throw Error(Errc::ValidationError, "probe_id is empty");
  if (country.size() != 2 || !std::isupper(static_cast<unsigned char>(country[0])) ||
      !std::isupper(static_cast<unsigned char>(country[1]))) {
    throw Error(Errc::ValidationError, "country must be ISO alpha-2, got '" + country + "'");
  }
  std::lock_guard lock(mu_);
  commit({{"type", "probe_registered"}, {"probe_id", probe_id}, {"country", country}});
  Json p = state_["probes"][probe_id];
  p["probe_id"] = probe_id;
  p["status"] = to_string(status_locked(probe_id));
  return p;
}

Json Broker::heartbeat(const std::string& probe_id, const Json& status) {
  std::lock_guard lock(mu_);
  check_probe(probe_id);
  const bool restart = state_["probes"][probe_id].value("restart_pending", false);
  Json ev{{"type", "heartbeat"}, {"probe_id", probe_id}};
  if (!status.empty()) ev["status"] = status;
  commit(ev);
  return Json{{"restart", restart}, {"status", to_string(ProbeStatus::Online)}};
}

void Broker::request_restart(const std::string& probe_id) {
  std::lock_guard lock(mu_);
  check_probe(probe_id);
  commit({{"type", "restart_requested"}, {"probe_id", probe_id}});
}

ProbeStatus Broker::probe_status(const std::string& probe_id) const {
  std::lock_guard lock(mu_);
  check_probe(probe_id);
  return status_locked(probe_id);
}

Json Broker::probes() const {
  std::lock_guard lock(mu_);
  Json out = Json::array();
  for (const auto& [id, p] : state_.at("probes").items()) {
    Json v = p;
    v["probe_id"] = id;
    v["status"] = to_string(status_locked(id));
    out.push_back(v);
  }
  return out;
}

void Broker::update_inventory(const std::string& provider_id, const std::string& address, const std::string& admin,
                              const Json& sims) {
  if (provider_id.empty()) throw Error(Errc::ValidationError, "provider_id is empty");
  if (!sims.is_array()) throw Error(Errc::ValidationError, "sims must be an array");
  Json list = Json::array();
  for (const auto& s : sims) {
    if (!s.is_object() || !s.contains("imsi") || !s.at("imsi").is_string()) {
      throw Error(Errc::ValidationError, "sim entry without imsi");
    }
    list.push_back({{"imsi", s.at("imsi")},
                    {"iccid", s.value("iccid", "")},
                    {"home_country", s.value("home_country", "")},
                    {"label", s.value("label", "")},
                    {"online", s.value("online", true)}});
  }
  std::lock_guard lock(mu_);
  commit({{"type", "inventory"}, {"provider_id", provider_id}, {"address", address}, {"admin", admin}, {"sims", list}});
}

Json Broker::sims() const {
  std::lock_guard lock(mu_);
  Json out = Json::array();
  for (const auto& [imsi, s] : state_.at("sims").items()) {
    Json v = s;
    v["imsi"] = imsi;
    out.push_back(v);
  }
  return out;
}

Json Broker::providers() const {
  std::lock_guard lock(mu_);
  Json out = Json::array();
  for (const auto& [id, p] : state_.at("providers").items()) {
    Json v = p;
    v["provider_id"] = id;
    out.push_back(v);
  }
  return out;
}

std::string Broker::admin_of(const std::string& provider_id) const {
  const auto& providers = state_.at("providers");
  if (!providers.contains(provider_id)) return {};
  return providers.at(provider_id).value("admin", "");
}

Allocation Broker::open_circuit_locked(const std::string& imsi, const std::string& probe_id, Json& ev) {
  check_probe(probe_id);
  const auto& sims = state_.at("sims");
  if (!sims.contains(imsi) || !sims.at(imsi).value("online", false)) {
    throw Error(Errc::UnknownSim, "SIM " + imsi + " is not in the inventory");
  }
  if (status_locked(probe_id) != ProbeStatus::Online) throw Error(Errc::ProbeOffline, "probe " + probe_id + " is not online");
  const auto& sim = sims.at(imsi);
  const auto& probe = state_.at("probes").at(probe_id);
  if (!sim.at("circuit_id").is_null()) throw Error(Errc::SimBusy, "SIM " + imsi + " is in circuit " + sim.at("circuit_id").get<std::string>());
  if (!probe.at("current_circuit").is_null()) throw Error(Errc::ProbeBusy, "probe " + probe_id + " already holds a circuit");
  const std::string country = probe.at("country");
  if (!sim.at("last_country").is_null() && sim.at("last_country") != country) {
    const std::int64_t gap_us = now_us() - sim.at("last_closed_us").get<std::int64_t>();
    const std::int64_t need_us = std::chrono::duration_cast<std::chrono::microseconds>(config_.min_gap).count();
    if (gap_us < need_us) {
      const std::int64_t retry = (need_us - gap_us + 999'999) / 1'000'000;
      throw Error(Errc::CooldownActive,
                  "SIM " + imsi + " was last used in " + sim.at("last_country").get<std::string>(), retry);
    }
  }
  std::set<std::string> tokens;
  for (const auto& [id, c] : state_.at("circuits").items()) tokens.insert(c.at("token").get<std::string>());
  Allocation a;
  a.circuit_id = make_uuid();
  do {
    a.token_hex = random_token_hex();
  } while (tokens.count(a.token_hex));
  a.provider_id = sim.at("provider_id");
  a.provider_address = state_.at("providers").at(a.provider_id).value("address", "");
  ev = {{"type", "circuit_opened"}, {"circuit_id", a.circuit_id}, {"imsi", imsi},          {"probe_id", probe_id},
        {"token", a.token_hex},     {"country", country},          {"provider_id", a.provider_id}};
  return a;
}

void Broker::after_open(const Allocation& a, const std::string& imsi, const std::string& probe_id) {
  std::string admin;
  {
    std::lock_guard lock(mu_);
    admin = admin_of(a.provider_id);
  }
  if (admin.empty()) return;
  try {
    pusher_.push(admin, imsi, a.token_hex, a.circuit_id, probe_id);
  } catch (const Error& e) {
    close_circuit(a.circuit_id, "token_push_failed");
    throw Error(Errc::EndpointUnreachable, "provider " + a.provider_id + " did not take the token: " + e.detail());
  }
}

Allocation Broker::allocate_circuit(const std::string& imsi, const std::string& probe_id) {
  Allocation a;
  {
    std::lock_guard lock(mu_);
    Json ev;
    a = open_circuit_locked(imsi, probe_id, ev);
    commit(ev);
  }
  after_open(a, imsi, probe_id);
  return a;
}

void Broker::close_circuit(const std::string& circuit_id, const std::string& reason) {
  std::string admin, imsi;
  {
    std::lock_guard lock(mu_);
    const auto& circuits = state_.at("circuits");
    if (!circuits.contains(circuit_id)) throw Error(Errc::UnknownCircuit, "unknown circuit " + circuit_id);
    const auto& c = circuits.at(circuit_id);
    if (!c.at("closed_us").is_null()) return;
    imsi = c.at("imsi");
    admin = admin_of(c.at("provider_id"));
    commit({{"type", "circuit_closed"}, {"circuit_id", circuit_id}, {"reason", reason}});
    for (const auto& [id, j] : state_.at("jobs").items()) {
      if (j.at("status") == "Running" && j.at("circuit_id") == circuit_id) {
        commit({{"type", "job_failed"}, {"job_id", id}, {"code", "CircuitLost"}, {"message", "circuit closed: " + reason}});
      }
    }
  }
  if (!admin.empty()) {
    try {
      pusher_.revoke(admin, imsi);
    } catch (const Error&) {
      // The provider drops the token with the connection anyway.
    }
  }
}

Json Broker::circuits() const {
  std::lock_guard lock(mu_);
  Json out = Json::array();
  for (const auto& [id, c] : state_.at("circuits").items()) {
    Json v = c;
    v["circuit_id"] = id;
    v.erase("token");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Broker::reap_stale() {
  std::vector<std::string> to_close;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, p] : state_.at("probes").items()) {
      if (status_locked(id) != ProbeStatus::Offline) continue;
      if (!p.at("current_circuit").is_null()) to_close.push_back(p.at("current_circuit"));
      std::vector<std::string> pending;
      for (const auto& [jid, j] : state_.at("jobs").items()) {
        if (j.at("probe_id") == id && j.at("status") == "Pending") pending.push_back(jid);
      }
      for (const auto& jid : pending) {
        commit({{"type", "job_failed"}, {"job_id", jid}, {"code", "ProbeOffline"}, {"message", "probe " + id + " went offline"}});
      }
    }
  }
  for (const auto& cid : to_close) close_circuit(cid, "stale");
  return to_close;
}

std::string Broker::submit_job(probe::MeasurementJob job) {
  job.validate();
  std::lock_guard lock(mu_);
  check_probe(job.probe_id);
  if (!state_.at("sims").contains(job.imsi)) throw Error(Errc::UnknownSim, "SIM " + job.imsi + " is not in the inventory");
  if (job.job_id.empty()) job.job_id = make_uuid();
  if (state_.at("jobs").contains(job.job_id)) throw Error(Errc::ValidationError, "job " + job.job_id + " exists");
  job.status = probe::JobStatus::Pending;
  commit({{"type", "job_submitted"}, {"job", probe::to_json(job)}});
  if (status_locked(job.probe_id) != ProbeStatus::Online) {
    commit({{"type", "job_failed"}, {"job_id", job.job_id}, {"code", "ProbeOffline"},
            {"message", "probe " + job.probe_id + " is not online"}});
  }
  return job.job_id;
}

Json Broker::job(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  const auto& jobs = state_.at("jobs");
  if (!jobs.contains(job_id)) throw Error(Errc::UnknownJob, "unknown job " + job_id);
  return jobs.at(job_id);
}

Json Broker::jobs() const {
  std::lock_guard lock(mu_);
  std::vector<Json> out;
  for (const auto& [id, j] : state_.at("jobs").items()) out.push_back(j);
  std::sort(out.begin(), out.end(), [](const Json& a, const Json& b) { return a.at("submit_seq") < b.at("submit_seq"); });
  return Json(out);
}

Json Broker::next_job(const std::string& probe_id) {
  Allocation a;
  Json job;
  {
    std::lock_guard lock(mu_);
    check_probe(probe_id);
    std::vector<Json> pending;
    for (const auto& [id, j] : state_.at("jobs").items()) {
      if (j.at("probe_id") == probe_id && j.at("status") == "Pending") pending.push_back(j);
    }
    std::sort(pending.begin(), pending.end(),
              [](const Json& x, const Json& y) { return x.at("submit_seq") < y.at("submit_seq"); });
    for (const auto& j : pending) {
      const std::string jid = j.at("job_id");
      Json ev;
      try {
        a = open_circuit_locked(j.at("imsi"), probe_id, ev);
      } catch (const Error& e) {
        if (e.code() == Errc::SimBusy || e.code() == Errc::CooldownActive) continue;
        if (e.code() == Errc::ProbeBusy) break;
        commit({{"type", "job_failed"}, {"job_id", jid}, {"code", std::string(to_string(e.code()))}, {"message", e.detail()}});
        continue;
      }
      commit(ev);
      commit({{"type", "job_dispatched"}, {"job_id", jid}, {"circuit_id", a.circuit_id}});
      job = state_.at("jobs").at(jid);
      break;
    }
  }
  if (job.is_null()) return Json{{"job", nullptr}};
  after_open(a, job.at("imsi"), probe_id);
  return Json{{"job", job}, {"circuit", to_json(a)}};
}

void Broker::job_result(const std::string& job_id, const probe::MeasurementResult& result) {
  std::string circuit;
  {
    std::lock_guard lock(mu_);
    const auto& jobs = state_.at("jobs");
    if (!jobs.contains(job_id)) throw Error(Errc::UnknownJob, "unknown job " + job_id);
    const auto& j = jobs.at(job_id);
    if (j.at("status") != "Running") {
      throw Error(Errc::ValidationError, "job " + job_id + " is " + j.at("status").get<std::string>() + ", not Running");
    }
    if (result.status != probe::JobStatus::Done && result.status != probe::JobStatus::Failed) {
      throw Error(Errc::ValidationError, "result status must be Done or Failed");
    }
    Json r = probe::to_json(result);
    r["job_id"] = job_id;
    commit({{"type", "job_finished"}, {"job_id", job_id}, {"result", r}});
    circuit = j.at("circuit_id");
  }
  close_circuit(circuit, "job_done");
}

Json Broker::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::uint64_t Broker::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

std::vector<Json> Broker::event_history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::uint64_t Broker::subscribe(Listener l) {
  std::lock_guard lock(mu_);
  listeners_[next_listener_] = std::move(l);
  return next_listener_++;
}

void Broker::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(mu_);
  listeners_.erase(id);
}

// ---- validator ----

std::vector<Violation> validate_event_log(const std::vector<Json>& events, Nanos min_gap) {
  std::vector<Violation> out;
  struct Open {
    std::string imsi, probe, country;
  };
  std::map<std::string, Open> open;                  // circuit -> parties
  std::map<std::string, std::string> imsi_open;      // imsi -> circuit
  std::map<std::string, std::string> probe_open;     // probe -> circuit
  std::map<std::string, std::pair<std::string, std::int64_t>> last;  // imsi -> (country, closed_us)
  std::set<std::string> known;
  const std::int64_t gap_us = std::chrono::duration_cast<std::chrono::microseconds>(min_gap).count();
  std::uint64_t prev = 0;
  for (const auto& ev : events) {
    const std::uint64_t seq = ev.value("seq", std::uint64_t{0});
    if (seq <= prev) out.push_back({seq, "seq_order", "seq " + std::to_string(seq) + " after " + std::to_string(prev)});
    prev = std::max(prev, seq);
    const std::string type = ev.value("type", "");
    const std::int64_t t = ev.value("t_us", std::int64_t{0});
    if (type == "circuit_opened") {
      const std::string cid = ev.at("circuit_id"), imsi = ev.at("imsi"), probe = ev.at("probe_id"),
                        country = ev.at("country");
      known.insert(cid);
      if (imsi_open.count(imsi)) out.push_back({seq, "imsi_double_open", imsi + " already in " + imsi_open[imsi]});
      if (probe_open.count(probe)) out.push_back({seq, "probe_double_open", probe + " already in " + probe_open[probe]});
      if (auto it = last.find(imsi); it != last.end() && it->second.first != country && t - it->second.second < gap_us) {
        out.push_back({seq, "cooldown", imsi + " moved " + it->second.first + " -> " + country + " after " +
                                             std::to_string((t - it->second.second) / 1'000'000) + " s"});
      }
      imsi_open[imsi] = cid;
      probe_open[probe] = cid;
      open[cid] = {imsi, probe, country};
    } else if (type == "circuit_closed") {
      const std::string cid = ev.at("circuit_id");
      auto it = open.find(cid);
      if (it == open.end()) {
        if (!known.count(cid)) out.push_back({seq, "unknown_circuit", cid});
        continue;
      }
      if (imsi_open[it->second.imsi] == cid) imsi_open.erase(it->second.imsi);
      if (probe_open[it->second.probe] == cid) probe_open.erase(it->second.probe);
      last[it->second.imsi] = {it->second.country, t};
      open.erase(it);
    }
  }
  return out;
}

}  // namespace atlas::mgmt
