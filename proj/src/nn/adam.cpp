#include "s2h/adam.hpp"

#include <cmath>

#include "s2h/error.hpp"

namespace s2h {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ConfigError("adam learning rate must be > 0");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0,1)");
  if (!(config_.eps > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

void Adam::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  if (m_.size() != params.size()) throw ConfigError("adam state was built for a different parameter set");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t idx = 0;
  for (auto& p : params) {
    auto& m = m_[idx].values();
    auto& v = v_[idx].values();
    if (m.size() != p.value.size()) throw ConfigError("adam moment shape mismatch for " + p.name);
    auto& w = p.value.values();
    const auto& g = p.grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
    ++idx;
  }
}

}  // namespace s2h
