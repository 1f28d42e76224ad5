#include "atlas/util/clock.hpp"

#include <algorithm>
#include <thread>

namespace atlas {
namespace {

class SystemClock final : public Clock {
 public:
  Nanos now() const override {
    return std::chrono::duration_cast<Nanos>(
        std::chrono::steady_clock::now().time_since_epoch());
  }
  WallTime wall() const override { return std::chrono::system_clock::now(); }
  void sleep_for(Nanos d) override {
    if (d > Nanos::zero()) std::this_thread::sleep_for(d);
  }
  Nanos poll_interval(Nanos remaining) const override {
    return std::min<Nanos>(remaining, Millis{50});
  }
};

}  // namespace

Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

FakeClock::FakeClock(WallTime wall_origin) : wall_origin_(wall_origin) {}

Nanos FakeClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

WallTime FakeClock::wall() const {
  std::lock_guard lock(mu_);
  return wall_origin_ + std::chrono::duration_cast<WallTime::duration>(now_);
}

void FakeClock::sleep_for(Nanos d) {
  if (d > Nanos::zero()) advance(d);
}

Nanos FakeClock::poll_interval(Nanos) const { return Millis{1}; }

void FakeClock::advance(Nanos d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

}  // namespace atlas
