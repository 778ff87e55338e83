#pragma once

// Non-deep forecasting baselines: constant predictors and boosted trees on window statistics.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace s2h {

double global_mean_baseline(std::span<const double> train_y);

/// Per-user mean heart rate over whatever samples it is fitted on (the CLI passes each
/// user's full trace, which makes it an oracle for held-out users).
class UserMeanBaseline {
 public:
  void fit(std::span<const std::int64_t> users, std::span<const double> hr);
  /// Unknown users fall back to the global mean and bump fallback_count().
  double predict(std::int64_t user) const;
  std::size_t fallback_count() const { return fallbacks_; }
  double global_mean() const { return global_; }

 private:
  std::map<std::int64_t, double> means_;
  double global_ = 0.0;
  mutable std::size_t fallbacks_ = 0;
};

inline constexpr std::size_t kStatStreams = 10;
inline constexpr std::size_t kStatsPerStream = 8;
inline constexpr std::size_t kStatFeatures = kStatStreams * kStatsPerStream;

/// Linear-interpolation percentile of sorted values, q in [0,1].
double percentile_sorted(std::span<const double> sorted, double q);

/// Least-squares slope of values against 0..n-1.
double ols_slope(std::span<const double> values);

/// Stream-major: for each of ax, ay, az, |a|, enmo, vmhpf, hour_sin, hour_cos, month_sin, month_cos
/// the statistics mean, std (population), max, min, p25, p50, p75, slope. Metadata values are
/// treated as constant sequences.
/// x is one window [T, 6] row-major; meta holds at least the four cyclical values.
std::array<double, kStatFeatures> extract_stat_features(std::span<const double> x, std::span<const double> meta,
                                                        std::size_t window);
std::vector<std::string> stat_feature_names();

struct GbtConfig {
  int rounds = 100;
  int depth = 3;
  double shrinkage = 0.1;
  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1, right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
};

struct GbtModel {
  double f0 = 0.0;
  double shrinkage = 0.1;
  int depth = 3;
  std::size_t features = 0;
  std::vector<RegressionTree> trees;
  std::vector<double> train_mse;  // after 0..rounds trees

  double predict(std::span<const double> x) const;
};

/// Squared-error boosting with exact greedy splits. `x` is [n, p] row-major.
GbtModel gbt_fit(std::span<const double> x, std::size_t p, std::span<const double> y, const GbtConfig& config);

/// Plain-text dump that reloads bit-exactly.
std::string gbt_dump(const GbtModel& model);
GbtModel gbt_load(const std::string& text);

}  // namespace s2h
