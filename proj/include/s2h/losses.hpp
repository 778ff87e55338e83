#pragma once

#include <span>
#include <string>
#include <vector>

#include "s2h/autodiff.hpp"

namespace s2h {

/// Strictly increasing quantile levels in (0,1).
class QuantileSet {
 public:
  QuantileSet() = default;
  explicit QuantileSet(std::vector<double> levels);
  static QuantileSet standard() { return QuantileSet({0.01, 0.05, 0.5, 0.95, 0.99}); }

  const std::vector<double>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  bool empty() const { return levels_.empty(); }
  double operator[](std::size_t j) const { return levels_[j]; }
  /// Index of the level nearest 0.5 (lowest index on ties).
  std::size_t median_index() const;

 private:
  std::vector<double> levels_;
};

enum class LossMode { MseOnly, QuantileOnly, Joint };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

struct LossConfig {
  LossMode mode = LossMode::Joint;
  double mse_weight = 0.5;
  QuantileSet quantiles = QuantileSet::standard();

  void validate() const;
  bool has_point_head() const { return mode != LossMode::QuantileOnly; }
  bool has_quantile_heads() const { return mode != LossMode::MseOnly; }
  /// Output width of the head layer: [point?, q_1..q_J?].
  std::size_t head_count() const;
};

// Scalar reductions.

double mse_loss(std::span<const double> y, std::span<const double> f);

/// Pinball loss of residual xi = y - f at level alpha.
double pinball(double xi, double alpha);

double quantile_loss_batch(std::span<const double> y, std::span<const double> f, double alpha);

/// lambda * mse(y, point) + sum_j quantile_loss_batch(y, quantiles[:,j], alpha_j).
/// MseOnly mode returns mse exactly (weight 1), QuantileOnly drops the mse term.
/// `quantiles` is [N,J] row-major; it may be empty in MseOnly mode, `point` may be empty
/// in QuantileOnly mode.
double joint_loss(std::span<const double> y, std::span<const double> point, std::span<const double> quantiles,
                  const LossConfig& config);

// Taped versions.

/// Mean squared error between target and a prediction node of equal element count.
Var mse_loss(Tape& tape, const Tensor& target, Var prediction);

/// Batch pinball loss. At xi = 0 the subgradient is alpha.
Var quantile_loss(Tape& tape, const Tensor& y, Var prediction, double alpha);

/// Joint objective on the head matrix [N, config.head_count()].
Var joint_loss(Tape& tape, const Tensor& y, Var heads, const LossConfig& config);

}  // namespace s2h
