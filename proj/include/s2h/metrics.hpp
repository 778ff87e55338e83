#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace s2h {

struct RegressionMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
};

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> f);

/// Mann-Whitney AUC via rank sums, average ranks for ties. Labels are 0/1; both classes required.
double auc(std::span<const double> scores, std::span<const int> labels);

/// One named value with its sample count and grouping key (e.g. "A/R|joint").
struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::string group;
};

}  // namespace s2h
