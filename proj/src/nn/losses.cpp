#include "s2h/losses.hpp"

#include <cmath>

#include "s2h/error.hpp"

namespace s2h {

QuantileSet::QuantileSet(std::vector<double> levels) : levels_(std::move(levels)) {
  for (std::size_t j = 0; j < levels_.size(); ++j) {
    if (!(levels_[j] > 0.0 && levels_[j] < 1.0))
      throw ConfigError("quantile level " + std::to_string(levels_[j]) + " outside (0,1)");
    if (j > 0 && !(levels_[j] > levels_[j - 1])) throw ConfigError("quantile levels must be strictly increasing");
  }
}

std::size_t QuantileSet::median_index() const {
  if (levels_.empty()) throw ConfigError("empty quantile set has no median head");
  std::size_t best = 0;
  for (std::size_t j = 1; j < levels_.size(); ++j)
    if (std::abs(levels_[j] - 0.5) < std::abs(levels_[best] - 0.5)) best = j;
  return best;
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::MseOnly: return "mse";
    case LossMode::QuantileOnly: return "quantile";
    case LossMode::Joint: return "joint";
  }
  return "?";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "mse") return LossMode::MseOnly;
  if (s == "quantile") return LossMode::QuantileOnly;
  if (s == "joint") return LossMode::Joint;
  throw ConfigError("unknown loss mode '" + s + "' (expected mse, quantile or joint)");
}

void LossConfig::validate() const {
  if (mse_weight < 0.0 || !std::isfinite(mse_weight)) throw ConfigError("mse weight must be a finite value >= 0");
  if (mode == LossMode::Joint && !(mse_weight > 0.0)) throw ConfigError("joint loss needs mse weight > 0");
  if (has_quantile_heads() && quantiles.empty()) throw ConfigError("loss mode needs at least one quantile");
}

std::size_t LossConfig::head_count() const {
  return (has_point_head() ? 1 : 0) + (has_quantile_heads() ? quantiles.size() : 0);
}

namespace {
void check_pair(std::size_t y, std::size_t f) {
  if (y == 0) throw ConfigError("empty batch");
  if (y != f) throw DimensionError("prediction length " + std::to_string(f) + " vs target length " + std::to_string(y));
}
void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile level must lie in (0,1), got " + std::to_string(alpha));
}
double pinball_slope(double xi, double alpha) { return xi >= 0.0 ? alpha : alpha - 1.0; }
}  // namespace

double mse_loss(std::span<const double> y, std::span<const double> f) {
  check_pair(y.size(), f.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - f[i]) * (y[i] - f[i]);
  return acc / static_cast<double>(y.size());
}

double pinball(double xi, double alpha) {
  check_alpha(alpha);
  return xi >= 0.0 ? alpha * xi : (alpha - 1.0) * xi;
}

double quantile_loss_batch(std::span<const double> y, std::span<const double> f, double alpha) {
  check_pair(y.size(), f.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += pinball(y[i] - f[i], alpha);
  return acc / static_cast<double>(y.size());
}

double joint_loss(std::span<const double> y, std::span<const double> point, std::span<const double> quantiles,
                  const LossConfig& config) {
  config.validate();
  const std::size_t n = y.size();
  double total = 0.0;
  if (config.has_point_head()) {
    const double w = config.mode == LossMode::MseOnly ? 1.0 : config.mse_weight;
    total += w * mse_loss(y, point);
  }
  if (config.has_quantile_heads()) {
    const std::size_t J = config.quantiles.size();
    if (n == 0) throw ConfigError("empty batch");
    if (quantiles.size() != n * J)
      throw ConfigError("quantile predictions hold " + std::to_string(quantiles.size()) + " values, expected N*J = " +
                        std::to_string(n * J));
    for (std::size_t j = 0; j < J; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += pinball(y[i] - quantiles[i * J + j], config.quantiles[j]);
      total += acc / static_cast<double>(n);
    }
  }
  return total;
}

Var mse_loss(Tape& tape, const Tensor& target, Var prediction) {
  const Tensor& f = tape.value(prediction);
  const double value = mse_loss(target.span(), f.span());
  const double n = static_cast<double>(target.size());
  return tape.record(Tensor::scalar(value), {prediction}, [target, n](BackwardContext& ctx) {
    Tensor* df = ctx.input_grad(0);
    if (!df) return;
    const double g = ctx.output_grad()[0];
    const Tensor& f = ctx.input(0);
    for (std::size_t i = 0; i < f.size(); ++i) (*df)[i] += g * 2.0 * (f[i] - target[i]) / n;
  });
}

Var quantile_loss(Tape& tape, const Tensor& y, Var prediction, double alpha) {
  const Tensor& f = tape.value(prediction);
  const double value = quantile_loss_batch(y.span(), f.span(), alpha);
  const double n = static_cast<double>(y.size());
  return tape.record(Tensor::scalar(value), {prediction}, [y, alpha, n](BackwardContext& ctx) {
    Tensor* df = ctx.input_grad(0);
    if (!df) return;
    const double g = ctx.output_grad()[0];
    const Tensor& f = ctx.input(0);
    for (std::size_t i = 0; i < f.size(); ++i) (*df)[i] -= g * pinball_slope(y[i] - f[i], alpha) / n;
  });
}

Var joint_loss(Tape& tape, const Tensor& y, Var heads, const LossConfig& config) {
  config.validate();
  const Tensor& h = tape.value(heads);
  const std::size_t width = config.head_count();
  if (h.rank() != 2 || h.dim(1) != width)
    throw ConfigError("head matrix " + shape_str(h.shape()) + " does not match loss config width " +
                      std::to_string(width));
  const std::size_t n = h.dim(0);
  check_pair(y.size(), n);
  const std::size_t J = config.has_quantile_heads() ? config.quantiles.size() : 0;
  const std::size_t q0 = config.has_point_head() ? 1 : 0;

  std::vector<double> point, quant;
  if (config.has_point_head()) {
    point.resize(n);
    for (std::size_t i = 0; i < n; ++i) point[i] = h.at(i, 0);
  }
  if (J) {
    quant.resize(n * J);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < J; ++j) quant[i * J + j] = h.at(i, q0 + j);
  }
  const double value = joint_loss(y.span(), point, quant, config);
  const double w = config.mode == LossMode::MseOnly ? 1.0 : config.mse_weight;

  return tape.record(Tensor::scalar(value), {heads}, [y, config, n, J, q0, width, w](BackwardContext& ctx) {
    Tensor* dh = ctx.input_grad(0);
    if (!dh) return;
    const double g = ctx.output_grad()[0];
    const Tensor& h = ctx.input(0);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (config.has_point_head()) (*dh)[i * width] += g * w * 2.0 * (h.at(i, 0) - y[i]) * inv;
      for (std::size_t j = 0; j < J; ++j)
        (*dh)[i * width + q0 + j] -= g * pinball_slope(y[i] - h.at(i, q0 + j), config.quantiles[j]) * inv;
    }
  });
}

}  // namespace s2h
