#pragma once

#include <cstdint>
#include <vector>

#include "s2h/autodiff.hpp"

namespace s2h {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are created on the first step for the parameter
/// set passed in, and the same set (same order) must be passed on every later step.
class Adam {
 public:
  explicit Adam(AdamConfig config);

  void step(ParameterSet& params);

  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace s2h
