#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atlas/util/bytes.hpp"
#include "json.hpp"

namespace atlas::sim {

struct ProactiveEvent {
  enum class Trigger { AfterNCommands, OnAuthenticate };
  enum class Kind { SendBinarySms, NoOp };

  Trigger trigger = Trigger::AfterNCommands;
  int n = 0;  // only for AfterNCommands
  Kind kind = Kind::NoOp;
  Bytes payload;  // only for SendBinarySms

  static ProactiveEvent after_n(int n, Bytes sms);
  static ProactiveEvent on_authenticate(Bytes sms);

  friend bool operator==(const ProactiveEvent&, const ProactiveEvent&) = default;
};

// Well-known file paths used by the simulated card and the modem init.
namespace paths {
inline constexpr const char* kEfIccid = "3F00/2FE2";
inline constexpr const char* kEfPl = "3F00/2F05";
inline constexpr const char* kEfImsi = "3F00/7F20/6F07";
inline constexpr const char* kEfKc = "3F00/7F20/6F20";
inline constexpr const char* kEfPlmnSel = "3F00/7F20/6F30";
inline constexpr const char* kEfHpplmn = "3F00/7F20/6F31";
inline constexpr const char* kEfSst = "3F00/7F20/6F38";
inline constexpr const char* kEfSpn = "3F00/7F20/6F46";
inline constexpr const char* kEfBcch = "3F00/7F20/6F74";
inline constexpr const char* kEfAcc = "3F00/7F20/6F78";
inline constexpr const char* kEfLoci = "3F00/7F20/6F7E";
inline constexpr const char* kEfAd = "3F00/7F20/6FAD";
inline constexpr const char* kEfMsisdn = "3F00/7F10/6F40";
}  // namespace paths

struct SimProfile {
  std::string imsi;
  std::string iccid;
  std::optional<std::string> msisdn;
  Bytes ki;  // 16 bytes
  std::string home_country;
  std::map<std::string, Bytes> files;
  std::vector<ProactiveEvent> proactive_script;
  // Not part of the identity; empty means the default ATR.
  Bytes atr;
  std::string label;

  // Profile with the standard GSM file set derived from the identifiers.
  static SimProfile make(std::string imsi, std::string iccid, Bytes ki, std::string home_country);

  // Throws Error(InvalidProfile) naming the first violated invariant.
  void validate() const;
  Bytes effective_atr() const;

  friend bool operator==(const SimProfile&, const SimProfile&) = default;
};

Bytes default_atr();

// Splits "3F00/7F20/6F07" into FIDs; throws InvalidProfile on bad syntax.
std::vector<std::uint16_t> parse_file_path(const std::string& path);

nlohmann::json to_json(const SimProfile& p);
// Throws Error(InvalidProfile) on missing fields or invariant violations.
SimProfile profile_from_json(const nlohmann::json& j);
SimProfile load_profile(const std::string& file);
void save_profile(const SimProfile& p, const std::string& file);

// Deterministic test profile: IMSI = mcc + mnc + zero-padded index, a
// Luhn-completed 19-digit ICCID and a ki derived from the index.
SimProfile make_test_profile(const std::string& mcc_mnc, std::uint32_t index, const std::string& country);

}  // namespace atlas::sim
