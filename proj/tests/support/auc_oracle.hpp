#pragma once

#include <span>

namespace s2h::testing {

/// O(n^2) Mann-Whitney: fraction of positive-negative pairs ordered correctly, ties count half.
/// Counts are kept in half-units so the result is exact.
inline double pairwise_auc(std::span<const double> s, std::span<const int> l) {
  long long halves = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      ++pairs;
      halves += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(halves) / (2.0 * static_cast<double>(pairs));
}

}  // namespace s2h::testing
