#include "atlas/probe/agent.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "atlas/util/bytes.hpp"
#include "atlas/util/error.hpp"

namespace atlas::probe {

void ProbeConfig::validate() const {
  if (probe_id.empty()) throw Error(Errc::ValidationError, "probe_id is required");
  if (country.size() != 2) throw Error(Errc::ValidationError, "country must be ISO alpha-2");
  if (management_url.empty()) throw Error(Errc::ValidationError, "management_url is required");
  if (init_apdu_count == 0) throw Error(Errc::ValidationError, "init_apdu_count must be positive");
  if (wtx_interval.count() <= 0) throw Error(Errc::ValidationError, "wtx_interval_ms must be positive");
}

ProbeConfig parse_probe_config(const std::string& text) {
  ProbeConfig c;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  auto num = [&](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      long long x = std::stoll(v, &used);
      if (used != v.size() || x < 0) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw Error(Errc::ValidationError, "line " + std::to_string(n) + ": " + key + " needs a non-negative integer");
    }
  };
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto trim = [](std::string s) {
      const char* ws = " \t\r";
      s.erase(0, s.find_first_not_of(ws));
      s.erase(s.find_last_not_of(ws) + 1);
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::ValidationError, "line " + std::to_string(n) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (key == "probe_id") c.probe_id = v;
    else if (key == "country") c.country = v;
    else if (key == "management_url") c.management_url = v;
    else if (key == "provider_url") c.provider_url = v;
    else if (key == "billing_url") c.billing_url = v;
    else if (key == "results_dir") c.results_dir = v;
    else if (key == "api_key") c.api_key = v;
    else if (key == "init_apdu_count") c.init_apdu_count = static_cast<std::size_t>(num(key, v));
    else if (key == "wtx_interval_ms") c.wtx_interval = std::chrono::milliseconds{num(key, v)};
    else if (key == "poll_interval_ms") c.poll_interval = std::chrono::milliseconds{num(key, v)};
    else if (key == "heartbeat_interval_ms") c.heartbeat_interval = std::chrono::milliseconds{num(key, v)};
    else throw Error(Errc::ValidationError, "line " + std::to_string(n) + ": unknown key " + key);
  }
  return c;
}

ProbeConfig load_probe_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ValidationError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_probe_config(ss.str());
}

ProbeAgent::ProbeAgent(ProbeConfig config, Clock& clock, metering::OperatorCore& core, metering::FlowPoster& billing,
                       metering::QuotaReader& quota, Clock* scenario_clock)
    : config_(std::move(config)), clock_(clock), core_(core), billing_(billing), quota_(quota),
      scenario_clock_(scenario_clock),
      mgmt_((config_.validate(), config_.management_url)) {}

void ProbeAgent::register_self() {
  mgmt_.post("/probes/register", {{"probe_id", config_.probe_id}, {"country", config_.country}});
}

bool ProbeAgent::heartbeat() {
  auto ack = mgmt_.post("/probes/" + config_.probe_id + "/heartbeat", Json::object());
  return ack.value("restart", false);
}

MeasurementResult ProbeAgent::execute(const MeasurementJob& job, const Json& circuit) {
  MeasurementResult result;
  result.job_id = job.job_id;
  result.started = clock_.wall();
  auto fail = [&](const Error& e) {
    result.status = JobStatus::Failed;
    result.error_code = std::string(to_string(e.code()));
    result.error_message = e.detail();
    result.ended = clock_.wall();
    return result;
  };
  last_attach_.reset();
  try {
    const std::string address =
        !config_.provider_url.empty() ? config_.provider_url : circuit.at("provider_address").get<std::string>();
    tunnel::TunnelClient tc(net::parse_endpoint(address), clock_);
    tc.attach(job.imsi, from_hex(circuit.at("token").get<std::string>()), config_.probe_id);

    SimulatedOperator op(core_, billing_, config_.country);
    ModemConfig mc;
    mc.init_apdu_count = config_.init_apdu_count;
    mc.wtx_interval = config_.wtx_interval;
    ModemSim modem(mc, clock_);
    last_attach_ = modem.init_and_attach(tc, op);

    MeasurementContext ctx{clock_, modem, op, quota_, config_.api_key, config_.results_dir, {}, scenario_clock_};
    if (auto it = job.params.find("api_key"); it != job.params.end()) ctx.api_key = it->second;
    result = run_measurement(job, ctx);
    result.summary["attach"] = to_json(*last_attach_);
    modem.power_off();
    tc.detach();
    return result;
  } catch (const Error& e) {
    return fail(e);
  } catch (const Json::exception& e) {
    return fail(Error(Errc::ValidationError, std::string("circuit: ") + e.what()));
  }
}

std::optional<MeasurementResult> ProbeAgent::run_once() {
  auto next = mgmt_.get("/probes/" + config_.probe_id + "/jobs/next");
  if (!next.contains("job") || next.at("job").is_null()) return std::nullopt;
  MeasurementJob job = job_from_json(next.at("job"));
  MeasurementResult r = execute(job, next.at("circuit"));
  mgmt_.post("/jobs/" + job.job_id + "/result", to_json(r));
  return r;
}

namespace {

void sleep_unless(const std::atomic<bool>& stop, std::chrono::milliseconds d) {
  const auto until = std::chrono::steady_clock::now() + d;
  while (!stop && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(std::chrono::milliseconds{50});
}

}  // namespace

void ProbeAgent::run(const std::atomic<bool>& stop) {
  register_self();
  std::thread hb([this, &stop] {
    http::Client c(config_.management_url);
    while (!stop) {
      try {
        auto ack = c.post("/probes/" + config_.probe_id + "/heartbeat", Json::object());
        if (ack.value("restart", false)) {
          std::cerr << "probe " << config_.probe_id << ": restart requested, re-registering\n";
          c.post("/probes/register", {{"probe_id", config_.probe_id}, {"country", config_.country}});
        }
      } catch (const Error& e) {
        std::cerr << "heartbeat: " << e.what() << "\n";
      }
      sleep_unless(stop, config_.heartbeat_interval);
    }
  });
  while (!stop) {
    try {
      if (auto r = run_once()) {
        std::cerr << "job " << r->job_id << ": " << to_string(r->status)
                  << (r->error_code ? " (" + *r->error_code + ": " + r->error_message + ")" : std::string{}) << "\n";
        continue;
      }
    } catch (const Error& e) {
      std::cerr << "poll: " << e.what() << "\n";
    }
    sleep_unless(stop, config_.poll_interval);
  }
  hb.join();
}

}  // namespace atlas::probe
