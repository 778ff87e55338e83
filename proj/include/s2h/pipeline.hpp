#pragma once

// Raw cohort records -> windowed, user-split, min-max scaled model inputs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "s2h/datagen.hpp"
#include "s2h/tensor.hpp"

namespace s2h {

/// Per-timestep sequence channels, in this order.
enum SeqChannel : std::size_t { kAx, kAy, kAz, kMagnitude, kEnmo, kVmHpf, kSeqChannels };
/// Per-window metadata columns, in this order. The variant decides which ones the model reads.
enum MetaColumn : std::size_t { kHourSin, kHourCos, kMonthSin, kMonthCos, kRhr, kMetaColumns };

struct PipelineConfig {
  std::size_t window = 512;
  std::size_t horizon = 1;  // target is this many steps after the last input step
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  int hour_divisor = 24;
  int month_divisor = 12;
  double lowpass_seconds = 60.0;  // VM-HPF low-pass time constant

  void validate() const;
};

/// One user's derived channels. `channels` is [n, kSeqChannels] row-major.
struct ChannelSeries {
  std::int64_t user_id = 0;
  std::vector<std::int64_t> timestamps;
  std::vector<double> hr;
  std::vector<double> channels;

  std::size_t size() const { return timestamps.size(); }
  double at(std::size_t t, std::size_t c) const { return channels[t * kSeqChannels + c]; }
};

/// Records of a single user on a constant 15-s grid.
ChannelSeries derive_channels(std::span<const SensorRecord> records, double lowpass_seconds = 60.0);

/// (sin, cos) of 2*pi*t/period, for 0 <= t < period.
std::pair<double, double> cyclical_encode(int t, int period);

int hour_of(std::int64_t timestamp);
/// Zero-based calendar month (UTC).
int month_of(std::int64_t timestamp);

struct WindowKey {
  std::int64_t user_id = 0;
  std::int64_t window_start = 0;  // timestamp of the first input step
  std::int64_t last_input = 0;
  std::int64_t target_time = 0;
};

/// Model-ready rows. x is [rows, window, kSeqChannels], m is [rows, kMetaColumns], y is raw BPM.
struct WindowedDataset {
  std::size_t window = 512;
  std::vector<double> x;
  std::vector<double> m;
  std::vector<double> y;
  std::vector<WindowKey> index;
  bool scaled = false;

  std::size_t rows() const { return y.size(); }
  std::size_t row_stride() const { return window * kSeqChannels; }
  std::span<const double> x_row(std::size_t i) const { return {x.data() + i * row_stride(), row_stride()}; }
  std::span<const double> m_row(std::size_t i) const { return {m.data() + i * kMetaColumns, kMetaColumns}; }
  void append(const WindowedDataset& other);
};

/// Non-overlapping windows from the start of the series; trailing partial windows are dropped.
WindowedDataset window_segments(const ChannelSeries& series, double rhr, const PipelineConfig& config);

struct BuildStats {
  std::size_t users = 0;
  std::size_t skipped_users = 0;  // too short for one window plus its target
};

/// Derive and window every user, in the cohort's user order.
WindowedDataset build_dataset(const Cohort& cohort, const PipelineConfig& config, BuildStats* stats = nullptr);

struct SplitSpec {
  std::vector<std::int64_t> train, val, test;  // each sorted ascending
  enum class Role { Train, Val, Test, None };
  Role role_of(std::int64_t user) const;
};

/// Seeded user shuffle; test = floor(test_fraction*n), val = floor(val_fraction*rest), each at least 1.
SplitSpec split_by_user(std::vector<std::int64_t> user_ids, double test_fraction, double val_fraction,
                        std::uint64_t seed);

/// Row indices whose user has the given role.
std::vector<std::size_t> rows_with_role(const WindowedDataset& ds, const SplitSpec& split, SplitSpec::Role role);
WindowedDataset subset(const WindowedDataset& ds, std::span<const std::size_t> rows);

/// Per-channel min/max over all training timesteps, per-column for metadata.
class MinMaxScaler {
 public:
  void fit(const WindowedDataset& ds, std::span<const std::size_t> train_rows);
  /// Scaled copy; y is carried over untouched. Values outside the training range are not clipped.
  WindowedDataset apply(const WindowedDataset& ds) const;
  bool fitted() const { return fitted_; }

  std::vector<double> seq_min, seq_max, meta_min, meta_max;

  void set(std::vector<double> smin, std::vector<double> smax, std::vector<double> mmin, std::vector<double> mmax);

 private:
  bool fitted_ = false;
};

// Batch tensors.
Tensor batch_x(const WindowedDataset& ds, std::span<const std::size_t> rows);
Tensor batch_meta(const WindowedDataset& ds, std::span<const std::size_t> rows, std::span<const std::size_t> columns);
Tensor batch_y(const WindowedDataset& ds, std::span<const std::size_t> rows);

/// Raw dataset plus its scaler and split: manifest.txt and dataset.bin in dir.
void write_dataset_cache(const std::filesystem::path& dir, const WindowedDataset& raw, const MinMaxScaler& scaler,
                         const SplitSpec& split);
struct DatasetCache {
  WindowedDataset raw;
  MinMaxScaler scaler;
  SplitSpec split;
};
DatasetCache read_dataset_cache(const std::filesystem::path& dir);

}  // namespace s2h
