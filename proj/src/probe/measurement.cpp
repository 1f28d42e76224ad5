#include "atlas/probe/measurement.hpp"

#include <filesystem>
#include <fstream>

#include "atlas/metering/scenario.hpp"
#include "atlas/net/gsmtap.hpp"
#include "atlas/tone/tone.hpp"
#include "atlas/util/error.hpp"

namespace atlas::probe {

namespace fs = std::filesystem;

const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Pending:
      return "Pending";
    case JobStatus::Running:
      return "Running";
    case JobStatus::Done:
      return "Done";
    case JobStatus::Failed:
      return "Failed";
  }
  return "?";
}

JobStatus job_status_from_string(const std::string& s) {
  for (auto st : {JobStatus::Pending, JobStatus::Running, JobStatus::Done, JobStatus::Failed}) {
    if (s == to_string(st)) return st;
  }
  throw Error(Errc::ValidationError, "unknown job status " + s);
}

bool job_transition_allowed(JobStatus from, JobStatus to) {
  if (from == to) return true;
  switch (from) {
    case JobStatus::Pending:
      return to == JobStatus::Running || to == JobStatus::Failed;
    case JobStatus::Running:
      return to == JobStatus::Done || to == JobStatus::Failed;
    default:
      return false;
  }
}

void MeasurementJob::validate() const {
  if (std::find(kJobScenarios.begin(), kJobScenarios.end(), scenario) == kJobScenarios.end()) {
    throw Error(Errc::ValidationError, "unknown scenario '" + scenario + "'");
  }
  if (imsi.empty()) throw Error(Errc::ValidationError, "job has no SIM");
  if (probe_id.empty()) throw Error(Errc::ValidationError, "job has no probe");
}

Json to_json(const MeasurementJob& j) {
  return Json{{"job_id", j.job_id}, {"scenario", j.scenario},   {"params", j.params},
              {"imsi", j.imsi},     {"probe_id", j.probe_id},   {"status", to_string(j.status)}};
}

MeasurementJob job_from_json(const Json& j) {
  try {
    MeasurementJob m;
    m.job_id = j.value("job_id", std::string{});
    m.scenario = j.at("scenario").get<std::string>();
    if (j.contains("params")) {
      for (const auto& [k, v] : j.at("params").items()) m.params[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    m.imsi = j.at("imsi").get<std::string>();
    m.probe_id = j.at("probe_id").get<std::string>();
    m.status = job_status_from_string(j.value("status", std::string{"Pending"}));
    return m;
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("job: ") + e.what());
  }
}

namespace {

std::int64_t wall_us(WallTime t) {
  return std::chrono::duration_cast<std::chrono::microseconds>(t.time_since_epoch()).count();
}
WallTime from_us(std::int64_t us) { return WallTime{std::chrono::microseconds{us}}; }

void write_file(const fs::path& p, const Bytes& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::Internal, "cannot write " + p.string());
}

void write_text(const fs::path& p, const std::string& text) { write_file(p, Bytes(text.begin(), text.end())); }

}  // namespace

Json to_json(const MeasurementResult& r) {
  Json j{{"job_id", r.job_id},
         {"status", to_string(r.status)},
         {"started_us", wall_us(r.started)},
         {"ended_us", wall_us(r.ended)},
         {"artifacts", r.artifacts},
         {"summary", r.summary}};
  if (r.error_code) j["error"] = {{"code", *r.error_code}, {"message", r.error_message}};
  return j;
}

MeasurementResult result_from_json(const Json& j) {
  try {
    MeasurementResult r;
    r.job_id = j.at("job_id").get<std::string>();
    r.status = job_status_from_string(j.at("status").get<std::string>());
    r.started = from_us(j.value("started_us", std::int64_t{0}));
    r.ended = from_us(j.value("ended_us", std::int64_t{0}));
    if (j.contains("artifacts")) r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    r.summary = j.value("summary", Json());
    if (j.contains("error")) {
      r.error_code = j.at("error").at("code").get<std::string>();
      r.error_message = j.at("error").value("message", std::string{});
    }
    return r;
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("result: ") + e.what());
  }
}

std::string default_tone_label(const std::string& country) {
  for (const auto& fp : tone::preset_fingerprints()) {
    if (fp.operator_label.rfind(country + "_", 0) == 0) return fp.operator_label;
  }
  throw Error(Errc::ValidationError, "no ringback preset for country " + country);
}

namespace {

double param_d(const MeasurementJob& job, const std::string& key, double def) {
  auto it = job.params.find(key);
  if (it == job.params.end()) return def;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw Error(Errc::ValidationError, "parameter " + key + " is not a number");
  }
}

Json run_tone_capture(const MeasurementJob& job, MeasurementContext& ctx, const fs::path& dir,
                      std::map<std::string, std::string>& artifacts) {
  std::vector<tone::ToneFingerprint> db = tone::preset_fingerprints();
  if (auto it = job.params.find("db"); it != job.params.end()) db = tone::load_db(it->second);
  auto it = job.params.find("fingerprint");
  const std::string label = it != job.params.end() ? it->second : default_tone_label(ctx.op.country());
  const auto& truth = tone::find_fingerprint(tone::preset_fingerprints(), label);

  // The test call: the visited network plays its ringback into the line.
  tone::SynthOptions o;
  o.noise_dbfs = param_d(job, "noise_dbfs", -30.0);
  o.seed = static_cast<std::uint64_t>(param_d(job, "seed", 1));
  o.offset_s = param_d(job, "offset_s", 0.0);
  auto clip = tone::synthesize_ringback(truth, param_d(job, "duration_s", tone::kAnalysisCapS), o);
  const fs::path wav = dir / "call.wav";
  tone::write_wav(wav.string(), clip);
  artifacts["call.wav"] = wav.string();

  auto features = tone::extract_features(clip);
  auto id = tone::identify(features, db, param_d(job, "reject_threshold", tone::kDefaultRejectThreshold));
  Json ranked = Json::array();
  for (std::size_t i = 0; i < id.ranked.size() && i < 3; ++i) {
    ranked.push_back({{"label", id.ranked[i].label}, {"distance", id.ranked[i].distance}, {"tie", id.ranked[i].tie}});
  }
  return Json{{"features", tone::to_json(features)},
              {"ranked", ranked},
              {"identified", id.confident ? Json(id.ranked.front().label) : Json(nullptr)},
              {"confident", id.confident},
              {"played", label}};
}

}  // namespace

MeasurementResult run_measurement(const MeasurementJob& job, MeasurementContext& ctx) {
  job.validate();
  if (ctx.modem.state() != ModemState::Attached) {
    throw Error(Errc::PreconditionFailed, "modem is not attached");
  }
  if (ctx.modem.imsi() != job.imsi) {
    throw Error(Errc::PreconditionFailed, "modem holds " + ctx.modem.imsi() + ", job needs " + job.imsi);
  }
  MeasurementResult result;
  result.job_id = job.job_id;
  result.started = ctx.clock.wall();
  const fs::path dir = fs::path(ctx.results_dir) / (job.job_id.empty() ? std::string("adhoc") : job.job_id);
  fs::create_directories(dir);

  Clock& sclock = ctx.scenario_clock ? *ctx.scenario_clock : ctx.clock;
  net::VirtualInterface vif("probe0", sclock);
  Json summary;
  bool empty_capture = false;
  if (job.scenario == "tone_capture") {
    summary = run_tone_capture(job, ctx, dir, result.artifacts);
    empty_capture = true;  // a voice call, no data traffic
    if (ctx.background) ctx.background(vif);
  } else {
    auto& network = ctx.op.network();
    vif.set_sink([&network](const net::CapturedPacket& p) { network.observe(p); });
    if (ctx.background) ctx.background(vif);
    metering::ScenarioParams params = metering::params_from_map(job.params);
    params.home_pools = network.scenario().network.v4_pools;
    metering::ScenarioEnv env{sclock,
                              vif,
                              *ctx.modem.attachment(),
                              ctx.quota,
                              {job.imsi, ctx.api_key},
                              [&network] { network.flush(); },
                              [&network](const net::PacketMeta& m) { return network.admits_inbound(m); },
                              params};
    summary = metering::run_scenario(job.scenario == "zero_rating_freeride" ? "zero_rating" : job.scenario, env);
  }

  const fs::path pcap = dir / "traffic.pcap";
  write_file(pcap, vif.capture_pcap());
  result.artifacts["traffic.pcap"] = pcap.string();
  const fs::path apdu = dir / "apdu.gsmtap.pcap";
  write_file(apdu, net::write_gsmtap_pcap(ctx.modem.apdu_log()));
  result.artifacts["apdu.gsmtap.pcap"] = apdu.string();

  summary["capture_packets"] = vif.emitted();
  summary["empty_capture"] = empty_capture;
  result.summary = summary;
  result.ended = ctx.clock.wall();
  const fs::path report = dir / "report.json";
  result.artifacts["report.json"] = report.string();
  Json doc{{"job", to_json(job)}, {"result", to_json(result)}, {"attachment", metering::to_json(*ctx.modem.attachment())}};
  write_text(report, doc.dump(2) + "\n");

  // Artifacts stay on disk as evidence when the boundary leaked.
  vif.verify_isolation();
  result.status = JobStatus::Done;
  return result;
}

}  // namespace atlas::probe
