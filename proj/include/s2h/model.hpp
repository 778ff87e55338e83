#pragma once

// CNN -> bidirectional GRU -> mean pool -> metadata MLPs -> linear heads, its training loop,
// and the convolutional autoencoder used as an embedding baseline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "s2h/adam.hpp"
#include "s2h/autodiff.hpp"
#include "s2h/embedding.hpp"
#include "s2h/losses.hpp"
#include "s2h/pipeline.hpp"

namespace s2h {

/// Which metadata streams feed the network: A (activity only), A/T (+time), A/R (+resting HR), A/R/T.
enum class Variant { A, AT, AR, ART };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
/// Filesystem-safe name ("A-R-T").
std::string file_tag(Variant v);
bool uses_time(Variant v);
bool uses_rhr(Variant v);

/// Shared by the forecaster and the autoencoder.
struct TrainConfig {
  AdamConfig adam;
  int max_epochs = 300;
  int patience = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Called after every epoch with (epoch, train loss, val loss).
  std::function<void(int, double, double)> on_epoch;
  void validate() const;
};

struct Step2HeartConfig {
  std::size_t cnn_layers = 2, cnn_filters = 128, kernel = 5;
  std::size_t gru_layers = 2, gru_units = 128;
  std::size_t mlp_units = 128;
  Variant variant = Variant::ART;
  LossConfig loss;
  TrainConfig train;

  void validate() const;
  std::size_t metadata_streams() const;
  /// 2 * gru_units + mlp_units * metadata_streams().
  std::size_t embedding_dim() const;
};

/// Parameters of the convolutional and recurrent stacks alone.
std::size_t trunk_parameter_count(const Step2HeartConfig& config);

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

/// Strict-improvement patience rule. update() returns true when training should stop.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  bool update(double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  int epochs_seen() const { return seen_; }

 private:
  int patience_;
  int seen_ = 0, best_epoch_ = 0, since_best_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

class Step2HeartModel {
 public:
  Step2HeartModel(Step2HeartConfig config, std::uint64_t init_seed);

  const Step2HeartConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  struct Graph {
    Var heads;      // [B, head_count]
    Var embedding;  // [B, D]
  };
  /// x [B,T,6] scaled; meta [B,5] scaled (all metadata columns; the variant picks its own).
  /// With trainable=false parameters enter the tape as constants.
  Graph forward(Tape& tape, const Tensor& x, const Tensor& meta, bool trainable);
  Var head(Tape& tape, Var embedding, bool trainable);

  /// Point bias to the target mean and quantile biases to the empirical quantiles.
  void init_head_bias(std::span<const double> train_y);

 private:
  Step2HeartConfig config_;
  ParameterSet params_;
};

/// Train on the split's train rows, early-stop on its val rows, restore the best snapshot.
TrainingLog train(Step2HeartModel& model, const WindowedDataset& scaled, const SplitSpec& split);

/// Head outputs [rows, head_count] and embeddings [rows, D] for the given rows, batched.
struct Inference {
  std::vector<double> heads;
  std::vector<double> embeddings;
};
Inference infer(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows);

/// Point forecast in BPM (the median quantile head when the model has no point head).
std::vector<double> predict(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows);
std::vector<double> point_from_heads(const Step2HeartConfig& config, std::span<const double> heads);

EmbeddingTable extract_embeddings(Step2HeartModel& model, const WindowedDataset& scaled,
                                  std::span<const std::size_t> rows);

/// Mean joint loss over rows.
double evaluate_loss(Step2HeartModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows);

// ---- autoencoder ----

struct AutoencoderConfig {
  std::size_t cnn_layers = 2, cnn_filters = 128, kernel = 5;
  std::size_t bottleneck = 128;
  std::size_t coarse_steps = 8;     // decoder starts from this many time steps
  std::size_t decoder_filters = 0;  // 0: pick to match a parameter budget
  TrainConfig train;
  void validate() const;
};

class AutoencoderModel {
 public:
  AutoencoderModel(AutoencoderConfig config, std::size_t window, std::uint64_t init_seed);

  const AutoencoderConfig& config() const { return config_; }
  std::size_t window() const { return window_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  struct Graph {
    Var reconstruction;  // [B,T,6]
    Var bottleneck;      // [B,bottleneck]
  };
  Graph forward(Tape& tape, const Tensor& x, bool trainable);

 private:
  AutoencoderConfig config_;
  std::size_t window_;
  ParameterSet params_;
};

std::size_t autoencoder_parameter_count(const AutoencoderConfig& config, std::size_t decoder_filters);
/// Decoder width whose total parameter count is closest to `target` (lowest width on ties).
std::size_t match_decoder_filters(const AutoencoderConfig& config, std::size_t target);

TrainingLog train_autoencoder(AutoencoderModel& model, const WindowedDataset& scaled, const SplitSpec& split);
double reconstruction_loss(AutoencoderModel& model, const WindowedDataset& scaled, std::span<const std::size_t> rows);
EmbeddingTable autoencoder_encode(AutoencoderModel& model, const WindowedDataset& scaled,
                                  std::span<const std::size_t> rows);

// ---- checkpoints ----

struct Checkpoint {
  std::string kind;  // "step2heart" or "autoencoder"
  MinMaxScaler scaler;
  SplitSpec split;
};

void save_checkpoint(const std::filesystem::path& path, const Step2HeartModel& model, const MinMaxScaler& scaler,
                     const SplitSpec& split);
void save_checkpoint(const std::filesystem::path& path, const AutoencoderModel& model, const MinMaxScaler& scaler,
                     const SplitSpec& split);

/// Reads kind, scaler and split only.
Checkpoint read_checkpoint_header(const std::filesystem::path& path);
Step2HeartModel load_step2heart(const std::filesystem::path& path);
AutoencoderModel load_autoencoder(const std::filesystem::path& path);

}  // namespace s2h
