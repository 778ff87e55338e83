#include <cmath>
#include <limits>
#include <random>

#include "fit_loop.hpp"
#include "s2h/error.hpp"
#include "s2h/layers.hpp"
#include "s2h/model.hpp"
#include "s2h/seed.hpp"

namespace s2h {

void AutoencoderConfig::validate() const {
  if (cnn_filters < 1 || bottleneck < 1 || coarse_steps < 1) throw ConfigError("autoencoder widths must be >= 1");
  if (kernel % 2 == 0) throw ConfigError("autoencoder kernel size must be odd");
  train.validate();
}

std::size_t autoencoder_parameter_count(const AutoencoderConfig& c, std::size_t fd) {
  std::size_t n = 0, in = kSeqChannels;
  for (std::size_t l = 0; l < c.cnn_layers; ++l) {
    n += c.kernel * in * c.cnn_filters + c.cnn_filters;
    in = c.cnn_filters;
  }
  n += c.coarse_steps * in * c.bottleneck + c.bottleneck;
  n += c.bottleneck * c.coarse_steps * fd + c.coarse_steps * fd;
  n += c.cnn_layers * (c.kernel * fd * fd + fd);
  n += c.kernel * fd * kSeqChannels + kSeqChannels;
  return n;
}

std::size_t match_decoder_filters(const AutoencoderConfig& config, std::size_t target) {
  std::size_t best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t fd = 1; fd <= 4096; ++fd) {
    const double gap =
        std::abs(static_cast<double>(autoencoder_parameter_count(config, fd)) - static_cast<double>(target));
    if (gap < best_gap) {
      best_gap = gap;
      best = fd;
    }
  }
  return best;
}

AutoencoderModel::AutoencoderModel(AutoencoderConfig config, std::size_t window, std::uint64_t init_seed)
    : config_(std::move(config)), window_(window) {
  config_.validate();
  if (config_.decoder_filters < 1) throw ConfigError("autoencoder decoder_filters must be resolved before building");
  if (window_ % config_.coarse_steps != 0)
    throw ConfigError("autoencoder: window " + std::to_string(window_) + " is not a multiple of coarse_steps " +
                      std::to_string(config_.coarse_steps));
  std::mt19937_64 rng(derive_seed(init_seed, 0x6165ULL));
  const auto& c = config_;
  const std::size_t fd = c.decoder_filters, K = c.kernel;
  const auto conv = [&](const std::string& name, std::size_t in, std::size_t out) {
    glorot_uniform(params_.add(name + ".kernel", Tensor({K, in, out})).value, K * in, K * out, rng);
    params_.add(name + ".bias", Tensor({out}));
  };
  std::size_t in = kSeqChannels;
  for (std::size_t l = 0; l < c.cnn_layers; ++l) {
    conv("enc.conv" + std::to_string(l), in, c.cnn_filters);
    in = c.cnn_filters;
  }
  const std::size_t flat = c.coarse_steps * in;
  glorot_uniform(params_.add("enc.dense.weight", Tensor({flat, c.bottleneck})).value, flat, c.bottleneck, rng);
  params_.add("enc.dense.bias", Tensor({c.bottleneck}));
  const std::size_t coarse = c.coarse_steps * fd;
  glorot_uniform(params_.add("dec.dense.weight", Tensor({c.bottleneck, coarse})).value, c.bottleneck, coarse, rng);
  params_.add("dec.dense.bias", Tensor({coarse}));
  for (std::size_t l = 0; l < c.cnn_layers; ++l) conv("dec.conv" + std::to_string(l), fd, fd);
  conv("dec.out", fd, kSeqChannels);
}

AutoencoderModel::Graph AutoencoderModel::forward(Tape& tape, const Tensor& x, bool trainable) {
  const auto& c = config_;
  if (x.rank() != 3 || x.dim(1) != window_ || x.dim(2) != kSeqChannels)
    throw DimensionError("autoencoder input must be [batch, " + std::to_string(window_) + ", " +
                         std::to_string(kSeqChannels) + "], got " + shape_str(x.shape()));
  const auto use = [&](const std::string& name) {
    Parameter& p = params_.get(name);
    return trainable ? tape.param(p) : tape.constant(p.value);
  };
  const auto conv = [&](Var h, const std::string& name) { return conv1d(tape, h, use(name + ".kernel"), use(name + ".bias")); };

  Var h = tape.constant(x);
  for (std::size_t l = 0; l < c.cnn_layers; ++l) h = relu(tape, conv(h, "enc.conv" + std::to_string(l)));
  // Segment means mirror the decoder's coarse grid: [B, T, F] -> [B*S, T/S, F] -> [B*S, F] -> [B, S*F].
  const std::size_t B = x.dim(0), S = c.coarse_steps, F = tape.value(h).dim(2);
  h = mean_pool_time(tape, reshape(tape, h, {B * S, window_ / S, F}));
  const Var code =
      dense(tape, reshape(tape, h, {B, S * F}), use("enc.dense.weight"), use("enc.dense.bias"), Activation::Linear);

  Var d = dense(tape, code, use("dec.dense.weight"), use("dec.dense.bias"), Activation::Relu);
  d = reshape(tape, d, {B, c.coarse_steps, c.decoder_filters});
  d = upsample_time(tape, d, window_ / c.coarse_steps);
  for (std::size_t l = 0; l < c.cnn_layers; ++l) d = relu(tape, conv(d, "dec.conv" + std::to_string(l)));
  return {conv(d, "dec.out"), code};
}

double reconstruction_loss(AutoencoderModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows) {
  if (!scaled.scaled) throw ConfigError("autoencoder inputs must be scaled first");
  double total = 0.0;
  detail::for_each_chunk(rows, model.config().train.batch_size, [&](std::span<const std::size_t> chunk) {
    Tape tape;
    const Tensor x = batch_x(scaled, chunk);
    const auto g = model.forward(tape, x, false);
    total += mse_loss(x.span(), tape.value(g.reconstruction).span()) * static_cast<double>(chunk.size());
  });
  return total / static_cast<double>(rows.size());
}

TrainingLog train_autoencoder(AutoencoderModel& model, const WindowedDataset& scaled, const SplitSpec& split) {
  if (!scaled.scaled) throw ConfigError("autoencoder inputs must be scaled first");
  const auto train_rows = rows_with_role(scaled, split, SplitSpec::Role::Train);
  const auto val_rows = rows_with_role(scaled, split, SplitSpec::Role::Val);
  const auto batch_loss = [&](Tape& tape, std::span<const std::size_t> rows) {
    const Tensor x = batch_x(scaled, rows);
    const auto g = model.forward(tape, x, true);
    return mse_loss(tape, x, g.reconstruction);
  };
  const auto val_loss = [&](std::span<const std::size_t> rows) { return reconstruction_loss(model, scaled, rows); };
  return detail::fit_loop(model.params(), train_rows, val_rows, model.config().train, batch_loss, val_loss);
}

EmbeddingTable autoencoder_encode(AutoencoderModel& model, const WindowedDataset& scaled,
                                  std::span<const std::size_t> rows) {
  if (!scaled.scaled) throw ConfigError("autoencoder inputs must be scaled first");
  EmbeddingTable t;
  t.dim = model.config().bottleneck;
  detail::for_each_chunk(rows, model.config().train.batch_size, [&](std::span<const std::size_t> chunk) {
    Tape tape;
    const auto g = model.forward(tape, batch_x(scaled, chunk), false);
    const Tensor& code = tape.value(g.bottleneck);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      t.push(scaled.index[chunk[i]].user_id, scaled.index[chunk[i]].window_start,
             std::span<const double>(code.data() + i * t.dim, t.dim));
  });
  return t;
}

}  // namespace s2h
