#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atlas/metering/billing_api.hpp"
#include "atlas/net/vif.hpp"
#include "atlas/probe/modem.hpp"
#include "atlas/util/clock.hpp"

namespace atlas::probe {

enum class JobStatus { Pending, Running, Done, Failed };
const char* to_string(JobStatus s);
JobStatus job_status_from_string(const std::string& s);  // Error(ValidationError)
// Pending -> Running -> {Done, Failed}; a status may also repeat.
bool job_transition_allowed(JobStatus from, JobStatus to);

inline const std::vector<std::string> kJobScenarios = {"dns_metering", "zero_rating_freeride", "ip_config",
                                                       "tone_capture"};

struct MeasurementJob {
  std::string job_id;
  std::string scenario;
  std::map<std::string, std::string> params;
  std::string imsi;
  std::string probe_id;
  JobStatus status = JobStatus::Pending;

  // Errors: ValidationError (unknown scenario, missing imsi or probe).
  void validate() const;
};

Json to_json(const MeasurementJob& j);
MeasurementJob job_from_json(const Json& j);

struct MeasurementResult {
  std::string job_id;
  JobStatus status = JobStatus::Done;
  WallTime started{};
  WallTime ended{};
  std::map<std::string, std::string> artifacts;  // name -> file path
  Json summary;
  std::optional<std::string> error_code;
  std::string error_message;
};

Json to_json(const MeasurementResult& r);
MeasurementResult result_from_json(const Json& j);

struct MeasurementContext {
  Clock& clock;
  ModemSim& modem;
  SimulatedOperator& op;
  metering::QuotaReader& quota;
  std::string api_key;
  std::string results_dir = "results";
  // Runs on the interface before the scenario; a leaky harness uses it to
  // put foreign packets on the wire.
  std::function<void(net::VirtualInterface&)> background;
  // Clock the scenario waits on (quota settling). Defaults to `clock`; the
  // lab passes the billing desk's fake clock so CDR delays pass instantly.
  Clock* scenario_clock = nullptr;
};

// Runs one job on an attached modem and writes results_dir/{job_id}/:
// report.json, traffic.pcap, apdu.gsmtap.pcap (and call.wav for tones).
// Errors: PreconditionFailed (modem not attached with the job's SIM),
// ValidationError, ScenarioFailure, IsolationBreach.
MeasurementResult run_measurement(const MeasurementJob& job, MeasurementContext& ctx);

// Preset for a country's ringback in tone_capture jobs ("AT" -> "AT_A1").
std::string default_tone_label(const std::string& country);

}  // namespace atlas::probe
