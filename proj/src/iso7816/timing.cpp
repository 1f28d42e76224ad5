#include "atlas/iso7816/timing.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "atlas/iso7816/atr.hpp"
#include "atlas/util/error.hpp"

namespace atlas::iso7816 {

namespace {
constexpr std::array kFiValues = {372, 558, 744, 1116, 1488, 1860, 512, 768, 1024, 1536, 2048};
constexpr std::array kDiValues = {1, 2, 4, 8, 16, 32, 64};
}  // namespace

ClockParams::ClockParams(double clock_hz, int fi, int di) : clock_hz_(clock_hz), fi_(fi), di_(di) {
  if (!(clock_hz > 0) || !std::isfinite(clock_hz)) {
    throw Error(Errc::InvalidClock, "clock frequency must be positive");
  }
  if (std::find(kFiValues.begin(), kFiValues.end(), fi) == kFiValues.end()) {
    throw Error(Errc::InvalidClock, "F=" + std::to_string(fi) + " is not a table value");
  }
  if (std::find(kDiValues.begin(), kDiValues.end(), di) == kDiValues.end()) {
    throw Error(Errc::InvalidClock, "D=" + std::to_string(di) + " is not a table value");
  }
}

ClockParams ClockParams::from_indices(double clock_hz, std::uint8_t fi_index, std::uint8_t di_index) {
  auto fi = fi_from_index(fi_index);
  auto di = di_from_index(di_index);
  if (!fi || !di) throw Error(Errc::InvalidIndex, "unsupported Fi/Di index");
  return ClockParams(clock_hz, *fi, *di);
}

std::chrono::microseconds ClockParams::work_waiting_time(int wi) const {
  double seconds = 960.0 * wi * fi_ / clock_hz_;
  return std::chrono::microseconds(static_cast<std::int64_t>(seconds * 1e6));
}

double effective_baud(const ClockParams& params) {
  return params.clock_hz() * params.di() / params.fi();
}

bool clock_within_tolerance(double nominal_hz, double actual_hz, double neg_pct, double pos_pct) {
  if (!(nominal_hz > 0)) throw Error(Errc::InvalidClock, "nominal clock must be positive");
  double deviation = 100.0 * (actual_hz - nominal_hz) / nominal_hz;
  return deviation >= -neg_pct && deviation <= pos_pct;
}

}  // namespace atlas::iso7816
