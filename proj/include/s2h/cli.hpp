#pragma once

// Experiment configuration, run manifests and the subcommands behind the s2h tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "s2h/baselines.hpp"
#include "s2h/datagen.hpp"
#include "s2h/model.hpp"
#include "s2h/pipeline.hpp"
#include "s2h/transfer.hpp"

namespace s2h {

struct ExperimentConfig {
  std::uint64_t seed = 42;  // cohort, split, and run i trains with seed + i
  CohortConfig cohort;      // cohort.master_seed is ignored in favour of `seed`
  PipelineConfig pipeline;

  Step2HeartConfig model;  // variant, loss and train fields are set per cell
  std::vector<Variant> variants{Variant::A, Variant::AT, Variant::AR, Variant::ART};
  std::vector<LossMode> loss_modes{LossMode::Joint};
  int runs = 3;

  bool baseline_global_mean = true;
  bool baseline_user_mean = true;
  bool baseline_gbt = true;
  GbtConfig gbt;

  bool autoencoder = true;
  std::size_t ae_bottleneck = 128;
  std::size_t ae_coarse_steps = 8;
  std::size_t ae_decoder_filters = 0;  // 0: match the A-variant trunk's parameter count

  std::vector<Variant> embed_variants{Variant::AT, Variant::ART};
  std::vector<std::string> traits{"gain", "activity_level", "rhr"};
  std::vector<double> cutoffs{0.90, 0.95, 0.99, 0.999};
  double probe_lambda = 1.0;

  void validate() const;
  CohortConfig cohort_config() const;
  /// Model config for one cell of the pretraining grid.
  Step2HeartConfig cell_config(Variant v, LossMode mode, int run) const;
  AutoencoderConfig autoencoder_config() const;
};

/// Flat `key = value` text, one line per field, lists comma-separated.
std::string to_text(const ExperimentConfig& config);
/// Unknown keys and malformed values are config errors; absent keys keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::vector<std::string> config_keys();

/// FNV-1a of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

struct ManifestEntry {
  std::string stage;
  std::uint64_t seed = 0;
  std::string started, finished;  // UTC, ISO 8601
  std::vector<std::string> artifacts;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::vector<ManifestEntry> entries;

  static RunManifest read_or_empty(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

/// Forecast table row. run is an index, "mean" or "std".
struct ForecastRow {
  std::string model, loss, run;
  std::size_t n = 0;
  double mse = 0.0, rmse = 0.0, mae = 0.0;
  std::string notes;
};

inline constexpr const char* kForecastHeader = "model,loss,run,n,mse,rmse,mae,notes";
std::string format_forecast_rows(const std::vector<ForecastRow>& rows);
std::vector<ForecastRow> parse_forecast_rows(const std::string& text);
/// Adds mean and std (n-1) rows per (model, loss) over the successful runs.
std::vector<ForecastRow> with_summaries(const std::vector<ForecastRow>& runs);

/// Entry point of the s2h tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace s2h
