#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "atlas/analytics/scan.hpp"
#include "atlas/metering/billing_api.hpp"
#include "atlas/metering/scenario.hpp"
#include "atlas/mgmt/server.hpp"
#include "atlas/net/gsmtap.hpp"
#include "atlas/net/pcap.hpp"
#include "atlas/probe/agent.hpp"
#include "atlas/provider/provider.hpp"
#include "atlas/sim/profile.hpp"
#include "atlas/tone/tone.hpp"

using namespace atlas;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds{200});
}

// ---- probe ----

struct ProbeOpts {
  std::string config, management, provider, probe_id, country, billing = "http://127.0.0.1:7900", results, api_key;
  bool once = false;
};

int probe_run(const ProbeOpts& o) {
  probe::ProbeConfig cfg;
  if (!o.config.empty()) cfg = probe::load_probe_config(o.config);
  if (!o.management.empty()) cfg.management_url = o.management;
  if (!o.provider.empty()) cfg.provider_url = o.provider;
  if (!o.probe_id.empty()) cfg.probe_id = o.probe_id;
  if (!o.country.empty()) cfg.country = o.country;
  if (!o.results.empty()) cfg.results_dir = o.results;
  if (!o.api_key.empty()) cfg.api_key = o.api_key;
  if (cfg.billing_url.empty()) cfg.billing_url = o.billing;
  cfg.validate();
  metering::BillingClient billing(cfg.billing_url);
  probe::ProbeAgent agent(cfg, system_clock(), billing, billing, billing);
  if (o.once) {
    agent.register_self();
    auto r = agent.run_once();
    if (!r) {
      std::cout << "{\"job\":null}\n";
      return 0;
    }
    std::cout << probe::to_json(*r).dump(2) << "\n";
    return r->status == probe::JobStatus::Done ? 0 : 1;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "probe " << cfg.probe_id << " (" << cfg.country << ") polling " << cfg.management_url << "\n";
  agent.run(g_stop);
  return 0;
}

// ---- management ----

int mgmt_serve(const std::string& listen, const std::string& data, const std::string& ui, int min_gap_s, int hb_s) {
  mgmt::MgmtConfig mc;
  mc.data_dir = data;
  mc.min_gap = std::chrono::seconds{min_gap_s};
  mc.heartbeat_interval = std::chrono::seconds{hb_s};
  mgmt::HttpTokenPusher pusher;
  mgmt::Broker broker(mc, system_clock(), pusher);
  auto rep = broker.recover();
  std::cerr << "recovered seq " << broker.last_seq() << " (snapshot " << rep.snapshot_seq << ", replayed "
            << rep.replayed << ")\n";
  for (const auto& c : rep.corrupt) std::cerr << "  skipped line " << c.line << ": " << c.reason << "\n";
  mgmt::MgmtServer server(broker);
  if (!ui.empty()) server.mount_ui(ui);
  auto port = server.start(net::parse_endpoint(listen));
  std::cerr << "management listening on port " << port << "\n";
  wait_for_signal();
  server.stop();
  return 0;
}

// ---- provider ----

int provider_serve(const std::string& id, const std::string& tunnel, const std::string& admin, const std::string& data,
                   const std::string& management, std::size_t max_sims, bool open, const std::string& advertise) {
  provider::ProviderConfig pc;
  pc.provider_id = id;
  pc.tunnel = net::parse_endpoint(tunnel);
  pc.admin = net::parse_endpoint(admin);
  pc.data_dir = data;
  pc.management_url = management;
  pc.max_concurrent_sims = max_sims;
  pc.require_tokens = !open;
  pc.advertised_address = advertise;
  provider::ProviderService svc(pc, system_clock());
  svc.start();
  std::cerr << "provider " << id << ": tunnel " << svc.tunnel_address() << ", admin port " << svc.admin_port() << ", "
            << svc.registry().size() << " SIMs\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  // Periodic inventory push so a restarted management learns the SIMs.
  int ticks = 0;
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds{200});
    if (!management.empty() && ++ticks % 50 == 0) svc.push_status();
  }
  svc.stop();
  return 0;
}

int sim_make(const std::string& mcc_mnc, int count, int first, const std::string& country, const std::string& out) {
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    auto p = sim::make_test_profile(mcc_mnc, static_cast<std::uint32_t>(first + i), country);
    const auto file = (fs::path(out) / (p.imsi + ".json")).string();
    sim::save_profile(p, file);
    std::cout << file << "\n";
  }
  return 0;
}

// ---- lab ----

std::map<std::string, std::string> kv_pairs(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& s : items) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::ValidationError, "expected key=value, got " + s);
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

int lab_run(const std::string& scenario, const std::string& config, const std::string& context,
            const std::vector<std::string>& params) {
  auto s = metering::load_scenario(config);
  const std::string name = scenario == "zero_rating_freeride" ? "zero_rating" : scenario;
  auto report = metering::run_lab(name, s, metering::context_from_string(context),
                                  metering::params_from_map(kv_pairs(params)));
  std::cout << report.dump(2) << "\n";
  return 0;
}

int lab_serve(const std::string& listen, const std::string& sims_dir, const std::string& scenario_path,
              const std::string& api_key, std::optional<double> cdr_delay_s) {
  metering::BillingSimulator sim(system_clock());
  if (!sims_dir.empty()) {
    if (scenario_path.empty()) throw Error(Errc::ValidationError, "--sims needs --scenario");
    auto sc = metering::load_scenario(scenario_path);
    // Real-time demos do not want to wait out a five minute CDR delay.
    if (cdr_delay_s) sc.cdr_delay = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(*cdr_delay_s));
    for (const auto& de : fs::directory_iterator(sims_dir)) {
      if (de.path().extension() != ".json") continue;
      auto p = sim::load_profile(de.path().string());
      sim.provision(p.imsi, sc, api_key, p.ki);
      std::cerr << "provisioned " << p.imsi << " on " << sc.name << "\n";
    }
  }
  metering::BillingServer server(sim);
  auto port = server.start(net::parse_endpoint(listen));
  std::cerr << "billing simulator listening on port " << port << "\n";
  wait_for_signal();
  server.stop();
  return 0;
}

// ---- apdu ----

struct Blob {
  std::string label;
  Bytes data;
};

std::vector<Blob> load_blobs(const std::string& path) {
  Bytes raw = net::read_file(path);
  std::vector<Blob> out;
  auto from_records = [&](const std::vector<net::ApduLogRecord>& recs) {
    for (std::size_t i = 0; i < recs.size(); ++i) {
      out.push_back({"record " + std::to_string(i) + " " + net::to_string(recs[i].direction), recs[i].raw});
    }
  };
  const bool pcap = raw.size() >= 4 && ((raw[0] == 0xD4 && raw[1] == 0xC3) || (raw[0] == 0xA1 && raw[1] == 0xB2));
  if (pcap) {
    from_records(net::read_gsmtap_pcap(raw));
  } else if (!raw.empty() && raw[0] == '{') {
    from_records(net::read_jsonl(std::string(raw.begin(), raw.end())));
  } else {
    out.push_back({"file", std::move(raw)});
  }
  return out;
}

void hexdump_around(std::ostream& os, const Bytes& data, std::size_t offset, std::size_t len) {
  const std::size_t start = offset & ~std::size_t{15};
  const std::size_t end = std::min(data.size(), (offset + len + 15) & ~std::size_t{15});
  for (std::size_t row = start; row < end; row += 16) {
    os << "    " << std::hex << std::setw(6) << std::setfill('0') << row << "  ";
    for (std::size_t i = row; i < row + 16; ++i) {
      if (i < data.size()) {
        const bool in = i >= offset && i < offset + len;
        os << (in ? '[' : ' ') << std::setw(2) << static_cast<int>(data[i]) << (in ? ']' : ' ');
      } else {
        os << "    ";
      }
    }
    os << std::dec << std::setfill(' ') << "\n";
  }
}

std::size_t hit_length(analytics::IdentifierKind k) {
  switch (k) {
    case analytics::IdentifierKind::Imsi:
      return 9;
    case analytics::IdentifierKind::Iccid:
      return 10;
    case analytics::IdentifierKind::ImeiSv:
      return 8;
  }
  return 8;
}

int apdu_scan(const std::string& path, const std::string& format) {
  const auto& mcc = analytics::default_mcc_list();
  std::size_t total = 0;
  for (const auto& blob : load_blobs(path)) {
    for (const auto& h : analytics::scan_identifiers(blob.data, mcc)) {
      ++total;
      if (format == "jsonl") {
        std::cout << Json{{"source", blob.label},
                          {"kind", analytics::to_string(h.kind)},
                          {"digits", h.digits},
                          {"offset", h.byte_offset},
                          {"confidence", analytics::to_string(h.confidence)}}
                         .dump()
                  << "\n";
      } else {
        std::cout << blob.label << " +" << h.byte_offset << "  " << analytics::to_string(h.kind) << " " << h.digits
                  << " (" << analytics::to_string(h.confidence) << ")\n";
        hexdump_around(std::cout, blob.data, h.byte_offset, hit_length(h.kind));
      }
    }
  }
  if (format != "jsonl") std::cout << total << " identifier(s)\n";
  return 0;
}

// ---- tone ----

std::vector<tone::ToneFingerprint> tone_db(const std::string& path) {
  return path.empty() ? tone::preset_fingerprints() : tone::load_db(path);
}

int tone_analyze(const std::string& wav, const std::string& db_path, double threshold, int top) {
  auto db = tone_db(db_path);
  auto f = tone::extract_features(tone::read_wav(wav));
  auto id = tone::identify(f, db, threshold);
  Json ranked = Json::array();
  for (int i = 0; i < top && i < static_cast<int>(id.ranked.size()); ++i) {
    ranked.push_back({{"label", id.ranked[i].label}, {"distance", id.ranked[i].distance}, {"tie", id.ranked[i].tie}});
  }
  std::cout << Json{{"features", tone::to_json(f)},
                    {"ranked", ranked},
                    {"confident", id.confident},
                    {"identified", id.confident ? Json(id.ranked.front().label) : Json(nullptr)}}
                   .dump(2)
            << "\n";
  return 0;
}

int tone_synth(const std::string& label, const std::string& out, const std::string& db_path, double seconds,
               std::optional<double> noise, std::uint64_t seed) {
  auto db = tone_db(db_path);
  tone::SynthOptions o;
  o.noise_dbfs = noise;
  o.seed = seed;
  tone::write_wav(out, tone::synthesize_ringback(tone::find_fingerprint(db, label), seconds, o));
  std::cerr << "wrote " << out << "\n";
  return 0;
}

int tone_calibrate(const std::string& db_path, const std::vector<double>& noise, int seeds, const std::string& out) {
  auto c = tone::calibrate_threshold(tone_db(db_path), noise, seeds);
  const std::string text = tone::to_json(c).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(out) << text;
  }
  if (c.genuine_max >= c.impostor_min) {
    std::cerr << "genuine and impostor distances overlap; no separating threshold\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIM roaming measurement toolkit"};
  app.require_subcommand(1);

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "measurement probe")->require_subcommand(1);
  ProbeOpts po;
  auto* probe_run_cmd = probe_cmd->add_subcommand("run", "register and run jobs pulled from management");
  probe_run_cmd->add_option("--config", po.config, "key=value probe config");
  probe_run_cmd->add_option("--management", po.management, "management base URL");
  probe_run_cmd->add_option("--provider", po.provider, "tunnel endpoint, overrides the allocation");
  probe_run_cmd->add_option("--probe-id", po.probe_id);
  probe_run_cmd->add_option("--country", po.country, "ISO alpha-2");
  probe_run_cmd->add_option("--billing", po.billing, "operator core / billing simulator URL")->capture_default_str();
  probe_run_cmd->add_option("--results", po.results, "results directory");
  probe_run_cmd->add_option("--api-key", po.api_key, "operator core key for quota reads");
  probe_run_cmd->add_flag("--once", po.once, "run at most one job and print its result");

  // mgmt
  auto* mgmt_cmd = app.add_subcommand("mgmt", "management service")->require_subcommand(1);
  std::string m_listen = ":8080", m_data = "./state", m_ui;
  int m_gap = 1800, m_hb = 15;
  auto* mgmt_serve_cmd = mgmt_cmd->add_subcommand("serve", "serve the management API");
  mgmt_serve_cmd->add_option("--listen", m_listen)->capture_default_str();
  mgmt_serve_cmd->add_option("--data", m_data, "event log and snapshot directory")->capture_default_str();
  mgmt_serve_cmd->add_option("--ui", m_ui, "built dashboard to serve at /ui");
  mgmt_serve_cmd->add_option("--min-gap-s", m_gap, "country switch cooldown")->capture_default_str();
  mgmt_serve_cmd->add_option("--heartbeat-s", m_hb)->capture_default_str();

  // provider
  auto* prov_cmd = app.add_subcommand("provider", "SIM provider")->require_subcommand(1);
  std::string p_id = "provider-1", p_tunnel = ":7816", p_admin = "127.0.0.1:7817", p_data = "./sims", p_mgmt, p_adv;
  std::size_t p_max = 32;
  bool p_open = false;
  auto* prov_serve_cmd = prov_cmd->add_subcommand("serve", "serve SIMs over the tunnel");
  prov_serve_cmd->add_option("--id", p_id)->capture_default_str();
  prov_serve_cmd->add_option("--tunnel", p_tunnel)->capture_default_str();
  prov_serve_cmd->add_option("--admin", p_admin)->capture_default_str();
  prov_serve_cmd->add_option("--data", p_data, "directory of SIM profile JSON files")->capture_default_str();
  prov_serve_cmd->add_option("--management", p_mgmt, "management URL for inventory pushes");
  prov_serve_cmd->add_option("--max-sims", p_max)->capture_default_str();
  prov_serve_cmd->add_option("--advertise", p_adv, "tunnel address given to probes");
  prov_serve_cmd->add_flag("--open", p_open, "accept any token (standalone desk use)");

  // sim
  auto* sim_cmd = app.add_subcommand("sim", "SIM profiles")->require_subcommand(1);
  std::string s_plmn = "23203", s_country = "AT", s_out = "./sims";
  int s_count = 1, s_first = 1;
  auto* sim_make_cmd = sim_cmd->add_subcommand("make", "write deterministic test profiles");
  sim_make_cmd->add_option("--plmn", s_plmn, "MCC+MNC")->capture_default_str();
  sim_make_cmd->add_option("--count", s_count)->capture_default_str();
  sim_make_cmd->add_option("--first", s_first, "first index")->capture_default_str();
  sim_make_cmd->add_option("--country", s_country)->capture_default_str();
  sim_make_cmd->add_option("--out", s_out)->capture_default_str();

  // lab
  auto* lab_cmd = app.add_subcommand("lab", "metering lab")->require_subcommand(1);
  std::string l_scenario, l_config, l_context = "roaming";
  std::vector<std::string> l_params;
  auto* lab_run_cmd = lab_cmd->add_subcommand("run", "run a scenario against the in-process billing simulator");
  lab_run_cmd->add_option("--scenario", l_scenario)
      ->required()
      ->check(CLI::IsMember({"dns_metering", "zero_rating", "zero_rating_freeride", "ip_config"}));
  lab_run_cmd->add_option("--config", l_config, "provider scenario JSON")->required()->check(CLI::ExistingFile);
  lab_run_cmd->add_option("--context", l_context)->check(CLI::IsMember({"roaming", "domestic"}))->capture_default_str();
  lab_run_cmd->add_option("--param", l_params, "scenario parameter key=value");
  std::string ls_listen = ":7900", ls_sims, ls_scenario, ls_key = "lab";
  auto* lab_serve_cmd = lab_cmd->add_subcommand("serve", "serve the billing simulator over HTTP");
  lab_serve_cmd->add_option("--listen", ls_listen)->capture_default_str();
  lab_serve_cmd->add_option("--sims", ls_sims, "provision every SIM profile in this directory");
  lab_serve_cmd->add_option("--scenario", ls_scenario, "plan for provisioned SIMs");
  lab_serve_cmd->add_option("--api-key", ls_key)->capture_default_str();
  std::optional<double> ls_cdr;
  lab_serve_cmd->add_option("--cdr-delay-s", ls_cdr, "override the plan's CDR posting delay");

  // apdu
  auto* apdu_cmd = app.add_subcommand("apdu", "APDU analytics")->require_subcommand(1);
  std::string a_file, a_format = "hexdump";
  auto* apdu_scan_cmd = apdu_cmd->add_subcommand("scan", "find IMSI/ICCID/IMEISV in a blob, jsonl log or GSMTAP pcap");
  apdu_scan_cmd->add_option("file", a_file)->required()->check(CLI::ExistingFile);
  apdu_scan_cmd->add_option("--format", a_format)->check(CLI::IsMember({"hexdump", "jsonl"}))->capture_default_str();

  // tone
  auto* tone_cmd = app.add_subcommand("tone", "ringback tone fingerprinting")->require_subcommand(1);
  std::string t_wav, t_db, t_fp, t_out;
  double t_threshold = tone::kDefaultRejectThreshold, t_seconds = tone::kAnalysisCapS;
  int t_top = 5, t_seeds = 10;
  std::optional<double> t_noise;
  std::uint64_t t_seed = 1;
  std::vector<double> t_levels = {-40, -30, -20};
  auto* tone_an = tone_cmd->add_subcommand("analyze", "identify the network from a recorded ringback");
  tone_an->add_option("wav", t_wav)->required()->check(CLI::ExistingFile);
  tone_an->add_option("--db", t_db, "fingerprint database JSON (default: built-in presets)");
  tone_an->add_option("--threshold", t_threshold, "reject distance")->capture_default_str();
  tone_an->add_option("--top", t_top)->capture_default_str();
  auto* tone_syn = tone_cmd->add_subcommand("synth", "render a fingerprint as WAV");
  tone_syn->add_option("--fp", t_fp, "fingerprint label")->required();
  tone_syn->add_option("--out", t_out)->required();
  tone_syn->add_option("--db", t_db);
  tone_syn->add_option("--seconds", t_seconds)->capture_default_str();
  tone_syn->add_option("--noise-dbfs", t_noise, "white noise level");
  tone_syn->add_option("--seed", t_seed)->capture_default_str();
  auto* tone_cal = tone_cmd->add_subcommand("calibrate", "measure genuine/impostor distances, print the threshold");
  tone_cal->add_option("--db", t_db);
  tone_cal->add_option("--noise-dbfs", t_levels)->capture_default_str();
  tone_cal->add_option("--seeds", t_seeds)->capture_default_str();
  tone_cal->add_option("--out", t_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*probe_run_cmd) return probe_run(po);
    if (*mgmt_serve_cmd) return mgmt_serve(m_listen, m_data, m_ui, m_gap, m_hb);
    if (*prov_serve_cmd) return provider_serve(p_id, p_tunnel, p_admin, p_data, p_mgmt, p_max, p_open, p_adv);
    if (*sim_make_cmd) return sim_make(s_plmn, s_count, s_first, s_country, s_out);
    if (*lab_run_cmd) return lab_run(l_scenario, l_config, l_context, l_params);
    if (*lab_serve_cmd) return lab_serve(ls_listen, ls_sims, ls_scenario, ls_key, ls_cdr);
    if (*apdu_scan_cmd) return apdu_scan(a_file, a_format);
    if (*tone_an) return tone_analyze(t_wav, t_db, t_threshold, t_top);
    if (*tone_syn) return tone_synth(t_fp, t_out, t_db, t_seconds, t_noise, t_seed);
    if (*tone_cal) return tone_calibrate(t_db, t_levels, t_seeds, t_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
