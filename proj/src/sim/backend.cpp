#include "atlas/sim/backend.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>

#include "atlas/analytics/tlv.hpp"
#include "atlas/util/error.hpp"

namespace atlas::sim {

namespace {

constexpr std::uint16_t kMf = 0x3F00;

Bytes hmac_sha256(ByteView key, ByteView msg) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), out.data(), &len)) {
    throw Error(Errc::Internal, "HMAC failed");
  }
  out.resize(len);
  return out;
}

Bytes tagged(const char* tag, ByteView rand) {
  Bytes m(tag, tag + 3);
  append(m, rand);
  return m;
}

ResponseApdu sw_only(std::uint16_t sw) { return ResponseApdu::status(sw); }

ResponseApdu with_le(Bytes data, const Apdu& apdu) {
  if (apdu.le && *apdu.le < data.size()) data.resize(*apdu.le);
  return ResponseApdu::status(iso7816::sw::kOk, std::move(data));
}

// MORE TIME proactive command, used for NoOp events.
Bytes more_time_command() {
  using analytics::make_constructed;
  using analytics::make_tlv;
  return analytics::serialize(make_constructed(
      0xD0, {make_tlv(0x81, Bytes{0x01, 0x02, 0x00}), make_tlv(0x82, Bytes{0x81, 0x82})}));
}

}  // namespace

AuthResult authenticate_stub(ByteView ki, ByteView rand) {
  if (ki.size() != 16) throw Error(Errc::LengthError, "ki must be 16 bytes, got " + std::to_string(ki.size()));
  if (rand.size() != 16) {
    throw Error(Errc::LengthError, "rand must be 16 bytes, got " + std::to_string(rand.size()));
  }
  AuthResult r;
  r.res = hmac_sha256(ki, tagged("RES", rand));
  r.res.resize(8);
  r.session_key = hmac_sha256(ki, tagged("KEY", rand));
  r.session_key.resize(16);
  return r;
}

SimulatedSim::SimulatedSim(SimProfile profile) : profile_(std::move(profile)) {
  dfs_.push_back({kMf});
  for (const auto& [path, content] : profile_.files) {
    auto fids = parse_file_path(path);
    by_fids_[fids] = path;
    if (fids.size() == 3) {
      std::vector<std::uint16_t> df{fids[0], fids[1]};
      if (std::find(dfs_.begin(), dfs_.end(), df) == dfs_.end()) dfs_.push_back(df);
    }
  }
  auth_seen_.assign(profile_.proactive_script.size(), false);
  reset();
}

Bytes SimulatedSim::atr() const { return profile_.effective_atr(); }

void SimulatedSim::reset() {
  current_ = {kMf};
  current_is_ef_ = false;
  last_response_.clear();
}

ResponseApdu SimulatedSim::exchange(const Apdu& apdu) {
  ResponseApdu resp;
  try {
    resp = dispatch(apdu);
  } catch (...) {
    resp = sw_only(iso7816::sw::kNoPreciseDiagnosis);
  }
  ++commands_;
  arm_events(apdu.ins == 0x88 && resp.sw() == iso7816::sw::kOk);
  if (pending_ && resp.sw() == iso7816::sw::kOk) {
    resp.sw1 = 0x91;
    resp.sw2 = static_cast<std::uint8_t>(pending_->size());
  }
  return resp;
}

void SimulatedSim::arm_events(bool authenticated) {
  if (authenticated && next_event_ < auth_seen_.size()) {
    for (std::size_t i = next_event_; i < auth_seen_.size(); ++i) auth_seen_[i] = true;
  }
  while (!pending_ && next_event_ < profile_.proactive_script.size()) {
    const auto& e = profile_.proactive_script[next_event_];
    bool ready = e.trigger == ProactiveEvent::Trigger::AfterNCommands
                     ? commands_ >= static_cast<std::size_t>(e.n)
                     : auth_seen_[next_event_];
    if (!ready) break;
    pending_ = e.kind == ProactiveEvent::Kind::SendBinarySms ? analytics::build_proactive_sms(e.payload)
                                                             : more_time_command();
    ++next_event_;
  }
}

ResponseApdu SimulatedSim::dispatch(const Apdu& apdu) {
  if (apdu.cla != 0xA0 && (apdu.cla & 0xF0) != 0x00 && (apdu.cla & 0xF0) != 0x80) {
    return sw_only(iso7816::sw::kClaNotSupported);
  }
  switch (apdu.ins) {
    case 0xA4:
      return select(apdu);
    case 0xB0:
      return read_binary(apdu);
    case 0xD6:
      return update_binary(apdu);
    case 0xF2:
      return status(apdu);
    case 0xC0:
      return get_response(apdu);
    case 0x88:
      return authenticate(apdu);
    case 0x12:
      return fetch(apdu);
    default:
      return sw_only(iso7816::sw::kInsNotSupported);
  }
}

Bytes SimulatedSim::file_info(const std::vector<std::uint16_t>& path) const {
  bool is_ef = by_fids_.count(path) > 0;
  std::uint16_t size = 0;
  if (is_ef) size = static_cast<std::uint16_t>(profile_.files.at(by_fids_.at(path)).size());
  std::uint8_t type = path.size() == 1 ? 0x01 : (is_ef ? 0x04 : 0x02);
  Bytes info{0x00, 0x00};
  put_u16be(info, size);
  put_u16be(info, path.back());
  info.push_back(type);
  for (int i = 0; i < 5; ++i) info.push_back(0x00);
  info.push_back(0x01);  // not invalidated
  info.push_back(0x02);
  info.push_back(0x00);  // transparent
  info.push_back(0x00);
  return info;
}

ResponseApdu SimulatedSim::select(const Apdu& apdu) {
  if (apdu.data.size() != 2) return sw_only(iso7816::sw::kWrongLength);
  if (apdu.p1 != 0x00) return sw_only(iso7816::sw::kWrongP1P2);
  const std::uint16_t fid = get_u16be(apdu.data.data());

  std::vector<std::uint16_t> df = current_;
  if (current_is_ef_) df.pop_back();
  std::vector<std::vector<std::uint16_t>> candidates;
  if (fid == kMf) candidates.push_back({kMf});
  if (!df.empty() && df.back() == fid) candidates.push_back(df);
  auto child = df;
  child.push_back(fid);
  candidates.push_back(child);
  if (df.size() > 1) {
    auto sibling = std::vector<std::uint16_t>(df.begin(), df.end() - 1);
    sibling.push_back(fid);
    candidates.push_back(sibling);
  }
  candidates.push_back({kMf, fid});

  for (const auto& c : candidates) {
    bool ef = by_fids_.count(c) > 0;
    bool is_df = std::find(dfs_.begin(), dfs_.end(), c) != dfs_.end();
    if (ef || is_df) {
      current_ = c;
      current_is_ef_ = ef;
      last_response_ = file_info(c);
      return sw_only(iso7816::sw::kOk);
    }
  }
  return sw_only(iso7816::sw::kFileNotFound);
}

ResponseApdu SimulatedSim::read_binary(const Apdu& apdu) {
  if (!current_is_ef_) return sw_only(iso7816::sw::kNoEfSelected);
  if (apdu.p1 & 0x80) return sw_only(iso7816::sw::kWrongP1P2);
  if (!apdu.le || !apdu.data.empty()) return sw_only(iso7816::sw::kWrongLength);
  const Bytes& content = profile_.files.at(by_fids_.at(current_));
  const std::size_t offset = (std::size_t{apdu.p1} << 8) | apdu.p2;
  if (offset >= content.size()) return sw_only(iso7816::sw::kWrongP1P2);
  if (offset + *apdu.le > content.size()) return sw_only(iso7816::sw::kWrongLength);
  return ResponseApdu::status(iso7816::sw::kOk,
                              Bytes(content.begin() + static_cast<std::ptrdiff_t>(offset),
                                    content.begin() + static_cast<std::ptrdiff_t>(offset + *apdu.le)));
}

ResponseApdu SimulatedSim::update_binary(const Apdu& apdu) {
  if (!current_is_ef_) return sw_only(iso7816::sw::kNoEfSelected);
  if (apdu.p1 & 0x80) return sw_only(iso7816::sw::kWrongP1P2);
  if (apdu.data.empty()) return sw_only(iso7816::sw::kWrongLength);
  const std::string& path = by_fids_.at(current_);
  if (path == paths::kEfIccid || path == paths::kEfImsi) return sw_only(iso7816::sw::kSecurityNotSatisfied);
  Bytes& content = profile_.files.at(path);
  const std::size_t offset = (std::size_t{apdu.p1} << 8) | apdu.p2;
  if (offset + apdu.data.size() > content.size()) return sw_only(iso7816::sw::kWrongLength);
  std::copy(apdu.data.begin(), apdu.data.end(), content.begin() + static_cast<std::ptrdiff_t>(offset));
  return sw_only(iso7816::sw::kOk);
}

ResponseApdu SimulatedSim::status(const Apdu& apdu) {
  std::vector<std::uint16_t> df = current_;
  if (current_is_ef_) df.pop_back();
  return with_le(file_info(df), apdu);
}

ResponseApdu SimulatedSim::get_response(const Apdu& apdu) {
  if (last_response_.empty()) return sw_only(iso7816::sw::kConditionsNotSatisfied);
  return with_le(last_response_, apdu);
}

ResponseApdu SimulatedSim::authenticate(const Apdu& apdu) {
  if (apdu.data.size() != 16) return sw_only(iso7816::sw::kWrongLength);
  AuthResult r = authenticate_stub(profile_.ki, apdu.data);
  Bytes out = r.res;
  append(out, r.session_key);
  last_response_ = out;
  return ResponseApdu::status(iso7816::sw::kOk, std::move(out));
}

ResponseApdu SimulatedSim::fetch(const Apdu& apdu) {
  if (!pending_) return sw_only(iso7816::sw::kConditionsNotSatisfied);
  if (apdu.le && *apdu.le != 256 && *apdu.le != pending_->size()) return sw_only(iso7816::sw::kWrongLength);
  Bytes cmd = std::move(*pending_);
  pending_.reset();
  return ResponseApdu::status(iso7816::sw::kOk, std::move(cmd));
}

TraceReplaySim::TraceReplaySim(std::vector<TraceEntry> trace, Bytes atr)
    : trace_(std::move(trace)), atr_(std::move(atr)) {
  if (trace_.empty()) throw Error(Errc::PreconditionFailed, "trace is empty");
}

ResponseApdu TraceReplaySim::exchange(const Apdu& apdu) {
  if (next_ >= trace_.size()) {
    throw Error(Errc::TraceExhausted, "trace of " + std::to_string(trace_.size()) + " entries exhausted");
  }
  const Apdu& want = trace_[next_].command;
  bool match = want.cla == apdu.cla && want.ins == apdu.ins && want.p1 == apdu.p1 && want.p2 == apdu.p2 &&
               want.data.size() == apdu.data.size();
  if (!match) {
    ++divergences_;
    return sw_only(iso7816::sw::kNoPreciseDiagnosis);
  }
  return trace_[next_++].response;
}

ResponseApdu RecordingSim::exchange(const Apdu& apdu) {
  ResponseApdu r = inner_->exchange(apdu);
  trace_.push_back({apdu, r});
  return r;
}

std::vector<TraceEntry> trace_from_raw_pairs(const std::vector<Bytes>& records) {
  if (records.size() % 2 != 0) throw Error(Errc::ParseError, "odd number of trace records");
  std::vector<TraceEntry> out;
  for (std::size_t i = 0; i < records.size(); i += 2) {
    out.push_back({Apdu::from_tpdu(records[i]), ResponseApdu::decode(records[i + 1])});
  }
  return out;
}

}  // namespace atlas::sim
