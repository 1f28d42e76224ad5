#pragma once

#include <atomic>
#include <optional>
#include <string>

#include "atlas/probe/measurement.hpp"
#include "atlas/util/http.hpp"

namespace atlas::probe {

struct ProbeConfig {
  std::string probe_id;
  std::string country;          // ISO alpha-2 where the probe sits
  std::string management_url;
  std::string provider_url;     // overrides the tunnel address from allocation
  std::string billing_url;      // operator core for auth and metering
  std::string results_dir = "results";
  std::string api_key;          // self-service key when the job carries none
  std::size_t init_apdu_count = 50;
  std::chrono::milliseconds wtx_interval{250};
  std::chrono::milliseconds poll_interval{2000};
  std::chrono::milliseconds heartbeat_interval{15000};

  // Errors: ValidationError.
  void validate() const;
};

// key=value lines, '#' comments. Unknown keys are rejected.
ProbeConfig load_probe_config(const std::string& path);
ProbeConfig parse_probe_config(const std::string& text);

// Pull loop of a measurement probe: register, heartbeat, take the next
// job with its circuit, attach the modem through the tunnel, measure and
// report.
class ProbeAgent {
 public:
  ProbeAgent(ProbeConfig config, Clock& clock, metering::OperatorCore& core, metering::FlowPoster& billing,
             metering::QuotaReader& quota, Clock* scenario_clock = nullptr);

  const ProbeConfig& config() const { return config_; }
  void register_self();
  // True when management asked for a restart.
  bool heartbeat();
  // Runs at most one job. Returns its result, nullopt when idle.
  std::optional<MeasurementResult> run_once();
  // Executes a dispatched job on the given circuit; never throws for
  // measurement errors, they land in the result.
  MeasurementResult execute(const MeasurementJob& job, const Json& circuit);
  // Loops until stop is set; heartbeats on their own thread.
  void run(const std::atomic<bool>& stop);
  const std::optional<AttachReport>& last_attach() const { return last_attach_; }

 private:
  ProbeConfig config_;
  Clock& clock_;
  metering::OperatorCore& core_;
  metering::FlowPoster& billing_;
  metering::QuotaReader& quota_;
  Clock* scenario_clock_;
  http::Client mgmt_;
  std::optional<AttachReport> last_attach_;
};

}  // namespace atlas::probe
