#pragma once

// Absolute discounting primitives shared by the models and the clustering criteria.

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "classlm/common.hpp"

namespace classlm {

/// Absolute discount B, 0 < B < 1.
class Discount {
 public:
  static constexpr double kMin = 0.05;
  static constexpr double kMax = 0.95;
  static constexpr double kDefault = 0.5;

  constexpr Discount() = default;
  explicit Discount(double b) : value_(b) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("discount must lie in (0,1), got " + detail::format_double(b));
  }
  double value() const { return value_; }
  bool operator==(const Discount&) const = default;

 private:
  double value_ = kDefault;
};

/// Count-of-counts: how many events occurred exactly r times.
class CountOfCounts {
 public:
  CountOfCounts() = default;

  template <typename Range>
  static CountOfCounts of(const Range& counts) {
    CountOfCounts h;
    for (Count c : counts)
      if (c > 0) ++h.hist_[c];
    return h;
  }

  void add(Count r, Count events = 1) {
    if (r > 0 && events > 0) hist_[r] += events;
  }
  Count operator[](Count r) const {
    auto it = hist_.find(r);
    return it == hist_.end() ? 0 : it->second;
  }

 private:
  std::map<Count, Count> hist_;
};

/// B = r1 / (r1 + 2 r2), clamped to [0.05, 0.95]; 0.5 when there are no singletons or doubletons.
inline Discount estimate_discount(const CountOfCounts& h) {
  const double r1 = static_cast<double>(h[1]);
  const double r2 = static_cast<double>(h[2]);
  if (r1 + 2.0 * r2 == 0.0) return Discount(Discount::kDefault);
  return Discount(std::clamp(r1 / (r1 + 2.0 * r2), Discount::kMin, Discount::kMax));
}

/// p(i) = max(c_i - B, 0)/N + (B n+ / N) fallback(i). Returns the fallback when N = 0.
inline std::vector<double> discounted_distribution(std::span<const Count> counts, Discount discount,
                                                   std::span<const double> fallback) {
  if (counts.size() != fallback.size()) throw ConfigError("counts and fallback differ in length");
  Count total = 0;
  Count seen = 0;
  for (Count c : counts) {
    total += c;
    if (c > 0) ++seen;
  }
  std::vector<double> p(fallback.begin(), fallback.end());
  if (total == 0) return p;
  const double b = discount.value();
  const double n = static_cast<double>(total);
  const double reserve = b * static_cast<double>(seen) / n;
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = std::max(static_cast<double>(counts[i]) - b, 0.0) / n + reserve * fallback[i];
  return p;
}

}  // namespace classlm
