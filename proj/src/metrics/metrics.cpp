#include "s2h/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "s2h/error.hpp"

namespace s2h {

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> f) {
  if (y.empty()) throw ConfigError("regression_metrics: empty input");
  if (y.size() != f.size()) throw DimensionError("regression_metrics: length mismatch");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - f[i];
    se += d * d;
    ae += std::abs(d);
  }
  RegressionMetrics m;
  m.n = y.size();
  m.mse = se / static_cast<double>(m.n);
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / static_cast<double>(m.n);
  return m;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: length mismatch");
  const std::size_t n = scores.size();
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("auc: non-finite score");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank sum of positives with tied groups sharing their average rank. Ranks are 1-based;
  // doubling keeps every average rank an integer, so the sum is exact.
  long long doubled_rank_sum = 0;
  long long n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const long long doubled_avg = static_cast<long long>(i + 1 + j);  // 2 * (i+1 + j) / 2
    for (std::size_t k = i; k < j; ++k) {
      const int l = labels[order[k]];
      if (l != 0 && l != 1) throw ConfigError("auc: labels must be 0 or 1");
      if (l == 1) {
        doubled_rank_sum += doubled_avg;
        ++n_pos;
      }
    }
    i = j;
  }
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("auc: both classes must be present");
  // U = R_pos - n_pos(n_pos+1)/2, doubled.
  const long long doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace s2h
