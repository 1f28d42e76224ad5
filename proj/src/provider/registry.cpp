#include "atlas/provider/provider.hpp"
#include "atlas/util/error.hpp"

namespace atlas::provider {

nlohmann::json to_json(const SimStatus& s) {
  return {{"imsi", s.imsi},
          {"iccid", s.meta.iccid},
          {"home_country", s.meta.home_country},
          {"label", s.meta.label},
          {"online", s.meta.online},
          {"circuit_id", s.circuit_id ? nlohmann::json(*s.circuit_id) : nlohmann::json(nullptr)}};
}

std::string SimRegistry::register_sim(const sim::SimProfile& profile, const std::string& source_file) {
  profile.validate();
  auto backend = std::make_shared<sim::SimulatedSim>(profile);
  SimMetadata meta{profile.iccid, profile.home_country, profile.label, true};
  std::unique_lock lock(mu_);
  if (entries_.count(profile.imsi)) throw Error(Errc::DuplicateImsi, "imsi " + profile.imsi + " already registered");
  Entry e;
  e.backend = std::move(backend);
  e.meta = std::move(meta);
  e.source_file = source_file;
  entries_.emplace(profile.imsi, std::move(e));
  return profile.imsi;
}

std::string SimRegistry::register_backend(const std::string& imsi, std::shared_ptr<sim::SimBackend> backend,
                                          SimMetadata meta) {
  std::unique_lock lock(mu_);
  if (entries_.count(imsi)) throw Error(Errc::DuplicateImsi, "imsi " + imsi + " already registered");
  Entry e;
  e.backend = std::move(backend);
  e.meta = std::move(meta);
  entries_.emplace(imsi, std::move(e));
  return imsi;
}

void SimRegistry::unregister_sim(const std::string& imsi) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(imsi);
  if (it == entries_.end()) throw Error(Errc::UnknownImsi, "imsi " + imsi + " not registered");
  if (it->second.circuit_id) throw Error(Errc::SimBusy, "imsi " + imsi + " is in circuit " + *it->second.circuit_id);
  entries_.erase(it);
}

void SimRegistry::set_flaky(const std::string& imsi, double p) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(imsi);
  if (it == entries_.end()) throw Error(Errc::UnknownImsi, "imsi " + imsi + " not registered");
  it->second.flaky_p = p;
}

std::vector<SimStatus> SimRegistry::list() const {
  std::shared_lock lock(mu_);
  std::vector<SimStatus> out;
  for (const auto& [imsi, e] : entries_) out.push_back({imsi, e.meta, e.circuit_id});
  return out;
}

std::size_t SimRegistry::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t SimRegistry::active_circuits() const {
  std::shared_lock lock(mu_);
  return active_;
}

bool SimRegistry::contains(const std::string& imsi) const {
  std::shared_lock lock(mu_);
  return entries_.count(imsi) > 0;
}

SimRegistry::Entry SimRegistry::claim(const std::string& imsi, const std::string& circuit_id, std::size_t max_active,
                                      double roll) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(imsi);
  if (it == entries_.end()) throw Error(Errc::UnknownImsi, "imsi " + imsi + " not registered");
  Entry& e = it->second;
  if (e.circuit_id) throw Error(Errc::SimBusy, "imsi " + imsi + " is in circuit " + *e.circuit_id);
  if (active_ >= max_active) throw Error(Errc::Capacity, "capacity");
  if (roll < e.flaky_p) throw Error(Errc::ReaderFault, "reader for " + imsi + " failed to enumerate");
  e.circuit_id = circuit_id;
  ++active_;
  return e;
}

void SimRegistry::release(const std::string& imsi, const std::string& circuit_id) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(imsi);
  if (it == entries_.end() || it->second.circuit_id != circuit_id) return;
  it->second.circuit_id.reset();
  --active_;
}

std::set<std::string> SimRegistry::files() const {
  std::shared_lock lock(mu_);
  std::set<std::string> out;
  for (const auto& [imsi, e] : entries_) {
    if (!e.source_file.empty()) out.insert(e.source_file);
  }
  return out;
}

std::optional<std::string> SimRegistry::imsi_for_file(const std::string& file) const {
  std::shared_lock lock(mu_);
  for (const auto& [imsi, e] : entries_) {
    if (e.source_file == file) return imsi;
  }
  return std::nullopt;
}

}  // namespace atlas::provider
