#pragma once

#include <cstdint>
#include <set>
#include <vector>

namespace atlas::metering {

inline constexpr int kMaxClass = 20;
inline constexpr std::uint64_t kMiB = 1024 * 1024;

// Traffic classes told apart by volume alone: class c moves 2^c units, so
// any subset of billed classes sums to a distinct amount.
struct TrafficClassPlan {
  std::set<int> classes;
  std::uint64_t unit_bytes = kMiB;

  // Throws Error(ValidationError) for class numbers outside 0..20 or a zero unit.
  void validate() const;
  std::uint64_t volume(int cls) const { return (std::uint64_t{1} << cls) * unit_bytes; }
  std::uint64_t total() const;
};

struct Transfer {
  int cls = 0;
  std::uint64_t bytes = 0;
};

std::vector<Transfer> encode_classes(const TrafficClassPlan& plan);

std::uint64_t round_up(std::uint64_t bytes, std::uint64_t granularity);

// Subset S of plan.classes minimizing |billed - round_up(sum S)|, provided the
// residual stays below `rounding_bytes`.
// Errors: NegativeBilled, Ambiguous (tie between minimizers), Undecodable
// (no subset within one rounding step), ValidationError (bad plan, rounding 0).
std::set<int> decode_billed(std::int64_t billed_bytes, const TrafficClassPlan& plan, std::uint64_t rounding_bytes);

}  // namespace atlas::metering
