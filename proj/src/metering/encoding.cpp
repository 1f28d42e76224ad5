#include "atlas/metering/encoding.hpp"

#include <limits>
#include <string>

#include "atlas/util/error.hpp"

namespace atlas::metering {

void TrafficClassPlan::validate() const {
  if (unit_bytes == 0) throw Error(Errc::ValidationError, "unit_bytes must be positive");
  for (int c : classes) {
    if (c < 0 || c > kMaxClass) throw Error(Errc::ValidationError, "class " + std::to_string(c) + " outside 0..20");
  }
}

std::uint64_t TrafficClassPlan::total() const {
  std::uint64_t t = 0;
  for (int c : classes) t += volume(c);
  return t;
}

std::vector<Transfer> encode_classes(const TrafficClassPlan& plan) {
  plan.validate();
  std::vector<Transfer> out;
  for (int c : plan.classes) out.push_back({c, plan.volume(c)});
  return out;
}

std::uint64_t round_up(std::uint64_t bytes, std::uint64_t granularity) {
  if (granularity <= 1) return bytes;
  return (bytes + granularity - 1) / granularity * granularity;
}

std::set<int> decode_billed(std::int64_t billed_bytes, const TrafficClassPlan& plan, std::uint64_t rounding_bytes) {
  if (billed_bytes < 0) throw Error(Errc::NegativeBilled, "billed " + std::to_string(billed_bytes) + " bytes");
  if (rounding_bytes == 0) throw Error(Errc::ValidationError, "rounding_bytes must be at least 1");
  plan.validate();

  const std::vector<int> cls(plan.classes.begin(), plan.classes.end());
  std::vector<std::uint64_t> vol;
  for (int c : cls) vol.push_back(plan.volume(c));
  const auto billed = static_cast<std::uint64_t>(billed_bytes);

  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  std::uint32_t best_mask = 0;
  int ties = 0;
  const std::uint32_t n = 1u << cls.size();
  for (std::uint32_t mask = 0; mask < n; ++mask) {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < cls.size(); ++i) {
      if (mask & (1u << i)) sum += vol[i];
    }
    std::uint64_t expected = round_up(sum, rounding_bytes);
    std::uint64_t residual = expected > billed ? expected - billed : billed - expected;
    if (residual < best) {
      best = residual;
      best_mask = mask;
      ties = 1;
    } else if (residual == best) {
      ++ties;
    }
  }
  if (best >= rounding_bytes) {
    throw Error(Errc::Undecodable, "no class subset within " + std::to_string(rounding_bytes) + " bytes of " +
                                       std::to_string(billed_bytes));
  }
  if (ties > 1) {
    throw Error(Errc::Ambiguous, std::to_string(ties) + " class subsets explain " + std::to_string(billed_bytes) +
                                     " bytes equally well");
  }
  std::set<int> out;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (best_mask & (1u << i)) out.insert(cls[i]);
  }
  return out;
}

}  // namespace atlas::metering
