#pragma once

#include <chrono>
#include <cstdint>

namespace atlas::iso7816 {

// SIM clock plus negotiated conversion factors. One etu = fi/di clock cycles.
class ClockParams {
 public:
  // Throws Error(InvalidClock) for clock_hz <= 0 or F/D outside the tables.
  ClockParams(double clock_hz, int fi, int di);
  static ClockParams from_indices(double clock_hz, std::uint8_t fi_index, std::uint8_t di_index);

  double clock_hz() const { return clock_hz_; }
  int fi() const { return fi_; }
  int di() const { return di_; }

  double etu_seconds() const { return static_cast<double>(fi_) / (di_ * clock_hz_); }
  // Work waiting time 960 * WI * Fi / f.
  std::chrono::microseconds work_waiting_time(int wi = 10) const;

 private:
  double clock_hz_;
  int fi_;
  int di_;
};

double effective_baud(const ClockParams& params);

// True iff -neg_pct <= 100 * (actual - nominal) / nominal <= pos_pct.
bool clock_within_tolerance(double nominal_hz, double actual_hz, double neg_pct, double pos_pct);

}  // namespace atlas::iso7816
