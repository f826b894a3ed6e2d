#pragma once

#include <cstddef>
#include <span>

namespace t4g {

/// Pairwise (cascade) summation in index order. The reduction tree depends
/// only on the length, never on threading.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace t4g
