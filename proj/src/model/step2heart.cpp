#include <algorithm>
#include <cmath>
#include <random>

#include "fit_loop.hpp"
#include "s2h/baselines.hpp"
#include "s2h/error.hpp"
#include "s2h/layers.hpp"
#include "s2h/model.hpp"
#include "s2h/seed.hpp"

namespace s2h {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::AT: return "A/T";
    case Variant::AR: return "A/R";
    case Variant::ART: return "A/R/T";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "A") return Variant::A;
  if (s == "A/T" || s == "A-T") return Variant::AT;
  if (s == "A/R" || s == "A-R") return Variant::AR;
  if (s == "A/R/T" || s == "A-R-T") return Variant::ART;
  throw ConfigError("unknown variant '" + s + "' (expected A, A/T, A/R or A/R/T)");
}

std::string file_tag(Variant v) {
  std::string s = to_string(v);
  std::replace(s.begin(), s.end(), '/', '-');
  return s;
}

bool uses_time(Variant v) { return v == Variant::AT || v == Variant::ART; }
bool uses_rhr(Variant v) { return v == Variant::AR || v == Variant::ART; }

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void Step2HeartConfig::validate() const {
  if (cnn_filters < 1 || gru_units < 1 || gru_layers < 1 || mlp_units < 1)
    throw ConfigError("model widths and gru_layers must be >= 1");
  if (kernel % 2 == 0) throw ConfigError("kernel size must be odd");
  loss.validate();
  train.validate();
}

std::size_t Step2HeartConfig::metadata_streams() const {
  return (uses_time(variant) ? 1 : 0) + (uses_rhr(variant) ? 1 : 0);
}

std::size_t Step2HeartConfig::embedding_dim() const { return 2 * gru_units + mlp_units * metadata_streams(); }

std::size_t trunk_parameter_count(const Step2HeartConfig& c) {
  std::size_t n = 0, in = kSeqChannels;
  for (std::size_t l = 0; l < c.cnn_layers; ++l) {
    n += c.kernel * in * c.cnn_filters + c.cnn_filters;
    in = c.cnn_filters;
  }
  const std::size_t H = c.gru_units;
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    n += 2 * (in * 3 * H + H * 3 * H + 3 * H);
    in = 2 * H;
  }
  return n;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  ++seen_;
  improved_ = seen_ == 1 || val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = seen_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

namespace {

constexpr std::size_t kTimeColumns[] = {kHourSin, kHourCos, kMonthSin, kMonthCos};
constexpr std::size_t kRhrColumns[] = {kRhr};

Var use(Tape& tape, Parameter& p, bool trainable) { return trainable ? tape.param(p) : tape.constant(p.value); }

Tensor meta_columns(const Tensor& meta, std::span<const std::size_t> cols) {
  Tensor out({meta.dim(0), cols.size()});
  for (std::size_t i = 0; i < meta.dim(0); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out.at(i, j) = meta.at(i, cols[j]);
  return out;
}

}  // namespace

Step2HeartModel::Step2HeartModel(Step2HeartConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(derive_seed(init_seed, 0x696e6974ULL));
  const auto& c = config_;
  std::size_t in = kSeqChannels;
  for (std::size_t l = 0; l < c.cnn_layers; ++l) {
    const std::string p = "conv" + std::to_string(l);
    auto& k = params_.add(p + ".kernel", Tensor({c.kernel, in, c.cnn_filters}));
    glorot_uniform(k.value, c.kernel * in, c.kernel * c.cnn_filters, rng);
    params_.add(p + ".bias", Tensor({c.cnn_filters}));
    in = c.cnn_filters;
  }
  const std::size_t H = c.gru_units;
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = "gru" + std::to_string(l) + "." + dir;
      glorot_uniform(params_.add(p + ".wx", Tensor({in, 3 * H})).value, in, 3 * H, rng);
      glorot_uniform(params_.add(p + ".uh", Tensor({H, 3 * H})).value, H, 3 * H, rng);
      params_.add(p + ".bias", Tensor({3 * H}));
    }
    in = 2 * H;
  }
  if (uses_time(c.variant)) {
    glorot_uniform(params_.add("mlp_time.weight", Tensor({4, c.mlp_units})).value, 4, c.mlp_units, rng);
    params_.add("mlp_time.bias", Tensor({c.mlp_units}));
  }
  if (uses_rhr(c.variant)) {
    glorot_uniform(params_.add("mlp_rhr.weight", Tensor({1, c.mlp_units})).value, 1, c.mlp_units, rng);
    params_.add("mlp_rhr.bias", Tensor({c.mlp_units}));
  }
  const std::size_t D = c.embedding_dim(), W = c.loss.head_count();
  glorot_uniform(params_.add("head.weight", Tensor({D, W})).value, D, W, rng);
  params_.add("head.bias", Tensor({W}));
}

Step2HeartModel::Graph Step2HeartModel::forward(Tape& tape, const Tensor& x, const Tensor& meta, bool trainable) {
  const auto& c = config_;
  if (x.rank() != 3 || x.dim(2) != kSeqChannels)
    throw DimensionError("model input must be [batch, time, " + std::to_string(kSeqChannels) + "], got " +
                         shape_str(x.shape()));
  if (meta.rank() != 2 || meta.dim(0) != x.dim(0) || meta.dim(1) != kMetaColumns)
    throw DimensionError("metadata must be [batch, " + std::to_string(kMetaColumns) + "], got " +
                         shape_str(meta.shape()));
  Var h = tape.constant(x);
  for (std::size_t l = 0; l < c.cnn_layers; ++l) {
    const std::string p = "conv" + std::to_string(l);
    h = relu(tape, conv1d(tape, h, use(tape, params_.get(p + ".kernel"), trainable),
                          use(tape, params_.get(p + ".bias"), trainable)));
  }
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    const std::string p = "gru" + std::to_string(l);
    const auto weights = [&](const std::string& d) {
      return GruWeights{use(tape, params_.get(p + d + ".wx"), trainable),
                        use(tape, params_.get(p + d + ".uh"), trainable),
                        use(tape, params_.get(p + d + ".bias"), trainable)};
    };
    h = bidirectional_gru(tape, h, weights(".fwd"), weights(".bwd"));
  }
  std::vector<Var> parts{mean_pool_time(tape, h)};
  if (uses_time(c.variant)) {
    const Var t = tape.constant(meta_columns(meta, kTimeColumns));
    parts.push_back(dense(tape, t, use(tape, params_.get("mlp_time.weight"), trainable),
                          use(tape, params_.get("mlp_time.bias"), trainable), Activation::Relu));
  }
  if (uses_rhr(c.variant)) {
    const Var r = tape.constant(meta_columns(meta, kRhrColumns));
    parts.push_back(dense(tape, r, use(tape, params_.get("mlp_rhr.weight"), trainable),
                          use(tape, params_.get("mlp_rhr.bias"), trainable), Activation::Relu));
  }
  const Var embedding = parts.size() == 1 ? parts[0] : concat_last(tape, parts);
  return {head(tape, embedding, trainable), embedding};
}

Var Step2HeartModel::head(Tape& tape, Var embedding, bool trainable) {
  return dense(tape, embedding, use(tape, params_.get("head.weight"), trainable),
               use(tape, params_.get("head.bias"), trainable), Activation::Linear);
}

void Step2HeartModel::init_head_bias(std::span<const double> train_y) {
  if (train_y.empty()) throw ConfigError("head bias init: no targets");
  std::vector<double> sorted(train_y.begin(), train_y.end());
  std::sort(sorted.begin(), sorted.end());
  Tensor& b = params_.get("head.bias").value;
  std::size_t j = 0;
  if (config_.loss.has_point_head()) b[j++] = global_mean_baseline(train_y);
  if (config_.loss.has_quantile_heads())
    for (double a : config_.loss.quantiles.levels()) b[j++] = percentile_sorted(sorted, a);
}

namespace {

std::vector<std::size_t> all_meta_columns() { return {kHourSin, kHourCos, kMonthSin, kMonthCos, kRhr}; }

void require_scaled(const WindowedDataset& ds) {
  if (!ds.scaled) throw ConfigError("model inputs must be scaled with the training scaler first");
}

}  // namespace

Inference infer(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows) {
  require_scaled(scaled);
  const std::size_t W = model.config().loss.head_count(), D = model.config().embedding_dim();
  const auto cols = all_meta_columns();
  Inference out;
  out.heads.reserve(rows.size() * W);
  out.embeddings.reserve(rows.size() * D);
  detail::for_each_chunk(rows, model.config().train.batch_size, [&](std::span<const std::size_t> chunk) {
    Tape tape;
    const auto g = model.forward(tape, batch_x(scaled, chunk), batch_meta(scaled, chunk, cols), false);
    const auto& h = tape.value(g.heads).values();
    const auto& e = tape.value(g.embedding).values();
    out.heads.insert(out.heads.end(), h.begin(), h.end());
    out.embeddings.insert(out.embeddings.end(), e.begin(), e.end());
  });
  return out;
}

std::vector<double> point_from_heads(const Step2HeartConfig& config, std::span<const double> heads) {
  const std::size_t W = config.loss.head_count();
  const std::size_t col = config.loss.has_point_head() ? 0 : config.loss.quantiles.median_index();
  std::vector<double> out(heads.size() / W);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = heads[i * W + col];
  return out;
}

std::vector<double> predict(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows) {
  return point_from_heads(model.config(), infer(model, scaled, rows).heads);
}

EmbeddingTable extract_embeddings(Step2HeartModel& model, const WindowedDataset& scaled,
                                  std::span<const std::size_t> rows) {
  const Inference inf = infer(model, scaled, rows);
  const std::size_t D = model.config().embedding_dim();
  EmbeddingTable t;
  t.dim = D;
  for (std::size_t i = 0; i < rows.size(); ++i)
    t.push(scaled.index[rows[i]].user_id, scaled.index[rows[i]].window_start,
           std::span<const double>(inf.embeddings.data() + i * D, D));
  return t;
}

double evaluate_loss(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows) {
  const auto& cfg = model.config().loss;
  const Inference inf = infer(model, scaled, rows);
  const std::size_t W = cfg.head_count(), J = cfg.has_quantile_heads() ? cfg.quantiles.size() : 0;
  const std::size_t off = cfg.has_point_head() ? 1 : 0;
  std::vector<double> y, point, q;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y.push_back(scaled.y[rows[i]]);
    if (off) point.push_back(inf.heads[i * W]);
    for (std::size_t j = 0; j < J; ++j) q.push_back(inf.heads[i * W + off + j]);
  }
  return joint_loss(y, point, q, cfg);
}

TrainingLog train(Step2HeartModel& model, const WindowedDataset& scaled, const SplitSpec& split) {
  require_scaled(scaled);
  const auto train_rows = rows_with_role(scaled, split, SplitSpec::Role::Train);
  const auto val_rows = rows_with_role(scaled, split, SplitSpec::Role::Val);
  if (train_rows.empty() || val_rows.empty()) throw ConfigError("train: empty training or validation split");
  std::vector<double> train_y;
  for (std::size_t r : train_rows) train_y.push_back(scaled.y[r]);
  model.init_head_bias(train_y);

  const auto cols = all_meta_columns();
  const auto batch_loss = [&](Tape& tape, std::span<const std::size_t> rows) {
    const auto g = model.forward(tape, batch_x(scaled, rows), batch_meta(scaled, rows, cols), true);
    return joint_loss(tape, batch_y(scaled, rows), g.heads, model.config().loss);
  };
  const auto val_loss = [&](std::span<const std::size_t> rows) { return evaluate_loss(model, scaled, rows); };
  return detail::fit_loop(model.params(), train_rows, val_rows, model.config().train, batch_loss, val_loss);
}

}  // namespace s2h
