#pragma once

// Mini-batch Adam loop with patience-based early stopping, shared by both networks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "s2h/error.hpp"
#include "s2h/model.hpp"
#include "s2h/seed.hpp"

namespace s2h::detail {

using BatchLoss = std::function<Var(Tape&, std::span<const std::size_t>)>;
using RowsLoss = std::function<double(std::span<const std::size_t>)>;

inline std::vector<Tensor> snapshot(const ParameterSet& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

inline void restore(ParameterSet& params, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  for (auto& p : params) p.value = values[i++];
}

inline TrainingLog fit_loop(ParameterSet& params, std::vector<std::size_t> train_rows,
                            std::span<const std::size_t> val_rows, const TrainConfig& cfg, const BatchLoss& batch_loss,
                            const RowsLoss& val_loss) {
  cfg.validate();
  if (train_rows.empty()) throw ConfigError("training split is empty");
  if (val_rows.empty()) throw ConfigError("validation split is empty");
  Adam adam(cfg.adam);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7368756666ULL));
  EarlyStopping stopper(cfg.patience);
  std::vector<Tensor> best = snapshot(params);
  TrainingLog log;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < train_rows.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(train_rows.size(), b + cfg.batch_size);
      std::span<const std::size_t> rows(train_rows.data() + b, e - b);
      Tape tape;
      params.zero_grad();
      const Var loss = batch_loss(tape, rows);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value))
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + " (non-finite batch loss)");
      total += value * static_cast<double>(rows.size());
      tape.backward(loss);
      adam.step(params);
    }
    const double train_loss = total / static_cast<double>(train_rows.size());
    const double val = val_loss(val_rows);
    if (!std::isfinite(val))
      throw NumericError("training diverged in epoch " + std::to_string(epoch) + " (non-finite validation loss)");
    log.epochs.push_back({epoch, train_loss, val});
    if (cfg.on_epoch) cfg.on_epoch(epoch, train_loss, val);
    const bool stop = stopper.update(val);
    if (stopper.improved()) best = snapshot(params);
    if (stop) {
      log.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  log.best_epoch = stopper.best_epoch();
  log.best_val = stopper.best_value();
  return log;
}

/// Rows split into consecutive chunks of at most `size`.
template <typename Fn>
void for_each_chunk(std::span<const std::size_t> rows, std::size_t size, Fn&& fn) {
  for (std::size_t b = 0; b < rows.size(); b += size) fn(rows.subspan(b, std::min(size, rows.size() - b)));
}

}  // namespace s2h::detail
