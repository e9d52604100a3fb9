#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace modcascade {

using Nanos = std::chrono::nanoseconds;

inline double to_ms(Nanos d) { return static_cast<double>(d.count()) / 1e6; }
Nanos from_ms(double ms);

// Monotonic time source. Injected everywhere timing is measured so tests can
// substitute a deterministic clock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Nanos now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  Nanos now() const override;
};

// Only moves when told to. Integer nanoseconds keep accumulated time exact.
class FakeClock final : public Clock {
 public:
  Nanos now() const override { return Nanos(ticks_.load()); }
  void advance(Nanos d) { ticks_.fetch_add(d.count()); }
  void advance_ms(double ms) { advance(from_ms(ms)); }

 private:
  std::atomic<std::int64_t> ticks_{0};
};

const Clock& steady_clock();

}  // namespace modcascade
