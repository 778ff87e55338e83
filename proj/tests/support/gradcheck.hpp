#pragma once

// Central finite-difference check of tape gradients. Shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "s2h/autodiff.hpp"

namespace s2h::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst element
  std::size_t checked = 0;
};

using LossBuilder = std::function<Var(Tape&, ParameterSet&)>;

/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// gradients that are zero up to round-off from dominating the ratio.
inline GradCheckResult grad_check(ParameterSet& params, const LossBuilder& build, double step = 1e-5,
                                  std::size_t max_per_param = 24, std::uint64_t seed = 7, double floor = 1e-6) {
  Tape tape;
  params.zero_grad();
  tape.backward(build(tape, params));

  auto loss_at = [&]() {
    Tape t;
    return t.value(build(t, params))[0];
  };

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (auto& p : params) {
    const std::size_t n = p.value.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > max_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_param);
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = loss_at();
      p.value[i] = saved - step;
      const double down = loss_at();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : 1e300;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace s2h::testing
