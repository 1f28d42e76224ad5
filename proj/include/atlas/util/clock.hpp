#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>

namespace atlas {

using Nanos = std::chrono::nanoseconds;
using Millis = std::chrono::milliseconds;
using Seconds = std::chrono::seconds;
using WallTime = std::chrono::system_clock::time_point;

// Time source injected into every component that has deadlines, delays or
// liveness rules. Production code uses system_clock(); tests use FakeClock.
class Clock {
 public:
  virtual ~Clock() = default;

  // Monotonic time since an arbitrary origin.
  virtual Nanos now() const = 0;
  virtual WallTime wall() const = 0;
  virtual void sleep_for(Nanos d) = 0;
  // Real time a waiter should block before re-reading now().
  virtual Nanos poll_interval(Nanos remaining) const = 0;
};

Clock& system_clock();

// Manually driven clock. sleep_for() advances the clock by the requested
// amount and returns immediately, so code that sleeps runs instantly while
// still observing the elapsed time.
class FakeClock final : public Clock {
 public:
  explicit FakeClock(WallTime wall_origin = WallTime{std::chrono::seconds{1'700'000'000}});

  Nanos now() const override;
  WallTime wall() const override;
  void sleep_for(Nanos d) override;
  Nanos poll_interval(Nanos remaining) const override;

  void advance(Nanos d);

 private:
  mutable std::mutex mu_;
  Nanos now_{0};
  WallTime wall_origin_;
};

inline std::int64_t to_ms(Nanos d) {
  return std::chrono::duration_cast<Millis>(d).count();
}

// Waits on `cv` until `pred` holds or `clock` reaches `deadline`.
// Returns the final value of pred().
template <class Pred>
bool wait_until(const Clock& clock, std::condition_variable& cv, std::unique_lock<std::mutex>& lock,
                Nanos deadline, Pred pred) {
  while (!pred()) {
    Nanos now = clock.now();
    if (now >= deadline) return pred();
    cv.wait_for(lock, clock.poll_interval(deadline - now));
  }
  return true;
}

}  // namespace atlas
