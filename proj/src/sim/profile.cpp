#include "atlas/sim/profile.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "atlas/analytics/bcd.hpp"
#include "atlas/iso7816/atr.hpp"
#include "atlas/util/error.hpp"

namespace atlas::sim {

using analytics::encode_bcd_swapped;
using analytics::is_digits;
using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::InvalidProfile, what); }

Bytes padded(Bytes b, std::size_t n, std::uint8_t fill = 0xFF) {
  if (b.size() < n) b.resize(n, fill);
  return b;
}

}  // namespace

ProactiveEvent ProactiveEvent::after_n(int n, Bytes sms) {
  return {Trigger::AfterNCommands, n, Kind::SendBinarySms, std::move(sms)};
}

ProactiveEvent ProactiveEvent::on_authenticate(Bytes sms) {
  return {Trigger::OnAuthenticate, 0, Kind::SendBinarySms, std::move(sms)};
}

Bytes default_atr() {
  // TA1 0x96 (Fi 512, Di 32), historical bytes "ATLAS".
  return iso7816::build_atr(iso7816::make_atr(0x96, Bytes{0x41, 0x54, 0x4C, 0x41, 0x53}));
}

std::vector<std::uint16_t> parse_file_path(const std::string& path) {
  std::vector<std::uint16_t> out;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (part.size() != 4) invalid("bad file path '" + path + "'");
    try {
      Bytes b = from_hex(part);
      out.push_back(get_u16be(b.data()));
    } catch (const Error&) {
      invalid("bad file path '" + path + "'");
    }
  }
  if (out.size() < 2 || out.size() > 3 || out.front() != 0x3F00) {
    invalid("file path must be MF/EF or MF/DF/EF: '" + path + "'");
  }
  return out;
}

SimProfile SimProfile::make(std::string imsi, std::string iccid, Bytes ki, std::string home_country) {
  SimProfile p;
  p.imsi = std::move(imsi);
  p.iccid = std::move(iccid);
  p.ki = std::move(ki);
  p.home_country = std::move(home_country);
  if (!is_digits(p.imsi) || p.imsi.size() < 6) invalid("imsi must be 6-15 digits");

  p.files[paths::kEfIccid] = analytics::encode_ef_iccid(p.iccid);
  p.files[paths::kEfImsi] = analytics::encode_ef_imsi(p.imsi);
  p.files[paths::kEfAd] = Bytes{0x00, 0x00, 0x00, 0x02};
  p.files[paths::kEfSst] = Bytes{0xFF, 0x3F, 0xFF, 0xFF, 0x00, 0x00, 0x3F, 0x03, 0x00, 0x00};
  Bytes spn{0x01};
  for (char c : p.home_country) spn.push_back(static_cast<std::uint8_t>(c));
  p.files[paths::kEfSpn] = padded(spn, 17);
  // LAI from the IMSI's MCC/MNC (2-digit MNC), LAC 0xFFFE, "not updated".
  const std::string& s = p.imsi;
  auto d = [&](std::size_t i) { return static_cast<std::uint8_t>(s[i] - '0'); };
  Bytes loci{0xFF, 0xFF, 0xFF, 0xFF,
             static_cast<std::uint8_t>(d(1) << 4 | d(0)), static_cast<std::uint8_t>(0xF0 | d(2)),
             static_cast<std::uint8_t>(d(4) << 4 | d(3)), 0xFF, 0xFE, 0xFF, 0x01};
  p.files[paths::kEfLoci] = loci;
  p.files[paths::kEfKc] = Bytes{0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0x07};
  p.files[paths::kEfPlmnSel] = Bytes(24, 0xFF);
  p.files[paths::kEfHpplmn] = Bytes{0x0A};
  std::uint8_t acc_class = static_cast<std::uint8_t>(d(s.size() - 1));
  std::uint16_t acc = static_cast<std::uint16_t>(1u << acc_class);
  p.files[paths::kEfAcc] = Bytes{static_cast<std::uint8_t>(acc >> 8), static_cast<std::uint8_t>(acc)};
  p.files[paths::kEfBcch] = Bytes(16, 0x00);
  p.files[paths::kEfPl] = Bytes{0x65, 0x6E, 0xFF, 0xFF};
  return p;
}

void SimProfile::validate() const {
  if (!is_digits(imsi) || imsi.size() < 6 || imsi.size() > 15) invalid("imsi must be 6-15 digits");
  if (!is_digits(iccid) || iccid.size() < 19 || iccid.size() > 20) invalid("iccid must be 19-20 digits");
  if (!analytics::luhn_valid(iccid)) invalid("iccid fails the Luhn check");
  if (msisdn) {
    std::string_view m = *msisdn;
    if (!m.empty() && m.front() == '+') m.remove_prefix(1);
    if (m.empty() || m.size() > 15 || !is_digits(m)) invalid("msisdn must be E.164");
  }
  if (ki.size() != 16) invalid("ki must be 16 bytes");
  if (home_country.size() != 2 || !std::isupper(static_cast<unsigned char>(home_country[0])) ||
      !std::isupper(static_cast<unsigned char>(home_country[1]))) {
    invalid("home_country must be ISO-3166 alpha-2");
  }
  for (const auto& [path, content] : files) parse_file_path(path);
  auto f = files.find(paths::kEfIccid);
  if (f == files.end() || f->second != analytics::encode_ef_iccid(iccid)) {
    invalid("EF_ICCID does not match iccid");
  }
  f = files.find(paths::kEfImsi);
  if (f == files.end() || f->second != analytics::encode_ef_imsi(imsi)) {
    invalid("EF_IMSI does not match imsi");
  }
  for (const auto& e : proactive_script) {
    if (e.trigger == ProactiveEvent::Trigger::AfterNCommands && e.n < 0) invalid("proactive n < 0");
    if (e.payload.size() > 255) invalid("proactive payload over 255 bytes");
  }
  if (!atr.empty()) {
    try {
      iso7816::parse_atr(atr);
    } catch (const Error& e) {
      invalid(std::string("atr: ") + e.what());
    }
  }
}

Bytes SimProfile::effective_atr() const { return atr.empty() ? default_atr() : atr; }

json to_json(const SimProfile& p) {
  json j;
  j["imsi"] = p.imsi;
  j["iccid"] = p.iccid;
  j["msisdn"] = p.msisdn ? json(*p.msisdn) : json(nullptr);
  j["ki"] = to_hex(p.ki);
  j["home_country"] = p.home_country;
  json files = json::object();
  for (const auto& [path, content] : p.files) files[path] = to_hex(content);
  j["files"] = files;
  json script = json::array();
  for (const auto& e : p.proactive_script) {
    json ev;
    if (e.trigger == ProactiveEvent::Trigger::AfterNCommands) {
      ev["trigger"] = "after_n_commands";
      ev["n"] = e.n;
    } else {
      ev["trigger"] = "on_authenticate";
    }
    if (e.kind == ProactiveEvent::Kind::SendBinarySms) {
      ev["kind"] = "send_binary_sms";
      ev["payload"] = to_hex(e.payload);
    } else {
      ev["kind"] = "noop";
    }
    script.push_back(ev);
  }
  j["proactive_script"] = script;
  if (!p.atr.empty()) j["atr"] = to_hex(p.atr);
  if (!p.label.empty()) j["label"] = p.label;
  return j;
}

SimProfile profile_from_json(const json& j) {
  SimProfile p;
  try {
    p.imsi = j.at("imsi").get<std::string>();
    p.iccid = j.at("iccid").get<std::string>();
    if (j.contains("msisdn") && !j["msisdn"].is_null()) p.msisdn = j["msisdn"].get<std::string>();
    p.ki = from_hex(j.at("ki").get<std::string>());
    p.home_country = j.at("home_country").get<std::string>();
    for (const auto& [path, hex] : j.at("files").items()) p.files[path] = from_hex(hex.get<std::string>());
    if (j.contains("proactive_script")) {
      for (const auto& ev : j["proactive_script"]) {
        ProactiveEvent e;
        std::string trig = ev.at("trigger").get<std::string>();
        if (trig == "after_n_commands") {
          e.trigger = ProactiveEvent::Trigger::AfterNCommands;
          e.n = ev.at("n").get<int>();
        } else if (trig == "on_authenticate") {
          e.trigger = ProactiveEvent::Trigger::OnAuthenticate;
        } else {
          invalid("unknown trigger '" + trig + "'");
        }
        std::string kind = ev.at("kind").get<std::string>();
        if (kind == "send_binary_sms") {
          e.kind = ProactiveEvent::Kind::SendBinarySms;
          e.payload = from_hex(ev.at("payload").get<std::string>());
        } else if (kind == "noop") {
          e.kind = ProactiveEvent::Kind::NoOp;
        } else {
          invalid("unknown event kind '" + kind + "'");
        }
        p.proactive_script.push_back(std::move(e));
      }
    }
    if (j.contains("atr")) p.atr = from_hex(j["atr"].get<std::string>());
    if (j.contains("label")) p.label = j["label"].get<std::string>();
  } catch (const json::exception& e) {
    invalid(e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidProfile) throw;
    invalid(e.what());
  }
  p.validate();
  return p;
}

SimProfile load_profile(const std::string& file) {
  std::ifstream in(file);
  if (!in) invalid("cannot open " + file);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    invalid(file + ": " + e.what());
  }
  return profile_from_json(j);
}

void save_profile(const SimProfile& p, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::Internal, "cannot write " + file);
  out << to_json(p).dump(2) << '\n';
}

SimProfile make_test_profile(const std::string& mcc_mnc, std::uint32_t index, const std::string& country) {
  std::string idx = std::to_string(index);
  std::string imsi = mcc_mnc + std::string(15 - mcc_mnc.size() - idx.size(), '0') + idx;
  std::string body = "8999" + mcc_mnc.substr(0, 3);
  body += std::string(18 - body.size() - idx.size(), '0') + idx;
  std::string iccid = body + analytics::luhn_check_digit(body);
  Bytes ki(16);
  for (std::size_t k = 0; k < ki.size(); ++k) ki[k] = static_cast<std::uint8_t>(index * 31 + k * 7 + 1);
  SimProfile p = SimProfile::make(imsi, iccid, ki, country);
  p.label = country + "-" + idx;
  return p;
}

}  // namespace atlas::sim
