#include "s2h/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "s2h/csv.hpp"
#include "s2h/error.hpp"

namespace s2h {

void PipelineConfig::validate() const {
  if (window < 1) throw ConfigError("pipeline: window must be >= 1");
  if (horizon < 1) throw ConfigError("pipeline: horizon must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("pipeline: test_fraction outside (0, 1)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("pipeline: val_fraction outside (0, 1)");
  if (hour_divisor < 1 || month_divisor < 1) throw ConfigError("pipeline: cyclical divisors must be >= 1");
  if (!(lowpass_seconds > 0.0)) throw ConfigError("pipeline: lowpass_seconds must be > 0");
}

ChannelSeries derive_channels(std::span<const SensorRecord> records, double lowpass_seconds) {
  ChannelSeries s;
  if (records.empty()) return s;
  s.user_id = records.front().user_id;
  const std::size_t n = records.size();
  s.timestamps.resize(n);
  s.hr.resize(n);
  s.channels.resize(n * kSeqChannels);
  const double k = kSampleSeconds / (kSampleSeconds + lowpass_seconds);
  double low = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const SensorRecord& r = records[t];
    if (r.user_id != s.user_id) throw DataError("derive_channels: records span more than one user");
    if (t > 0 && r.timestamp - records[t - 1].timestamp != 15)
      throw DataError("grid error: user " + std::to_string(s.user_id) + " has a non-15-s step at timestamp " +
                      std::to_string(r.timestamp));
    const double mag = std::sqrt(r.ax * r.ax + r.ay * r.ay + r.az * r.az) / kGravity;
    low = t == 0 ? mag : low + k * (mag - low);
    double* c = s.channels.data() + t * kSeqChannels;
    c[kAx] = r.ax;
    c[kAy] = r.ay;
    c[kAz] = r.az;
    c[kMagnitude] = mag;
    c[kEnmo] = std::max(mag - 1.0, 0.0) * 1000.0;
    c[kVmHpf] = std::abs(1000.0 * (mag - low));
    s.timestamps[t] = r.timestamp;
    s.hr[t] = r.hr;
  }
  return s;
}

std::pair<double, double> cyclical_encode(int t, int period) {
  if (period < 1 || t < 0 || t >= period)
    throw ConfigError("cyclical_encode: t=" + std::to_string(t) + " outside [0, " + std::to_string(period) + ")");
  const double angle = 2.0 * std::numbers::pi * t / period;
  return {std::sin(angle), std::cos(angle)};
}

int hour_of(std::int64_t timestamp) {
  const std::int64_t sod = ((timestamp % 86400) + 86400) % 86400;
  return static_cast<int>(sod / 3600);
}

int month_of(std::int64_t timestamp) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{timestamp}};
  const year_month_day ymd{floor<days>(tp)};
  return static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

void WindowedDataset::append(const WindowedDataset& other) {
  if (other.rows() == 0) return;
  if (rows() > 0 && other.window != window) throw DimensionError("append: window length differs");
  window = other.window;
  x.insert(x.end(), other.x.begin(), other.x.end());
  m.insert(m.end(), other.m.begin(), other.m.end());
  y.insert(y.end(), other.y.begin(), other.y.end());
  index.insert(index.end(), other.index.begin(), other.index.end());
}

WindowedDataset window_segments(const ChannelSeries& series, double rhr, const PipelineConfig& config) {
  WindowedDataset ds;
  ds.window = config.window;
  const std::size_t T = config.window, n = series.size();
  if (n < T + config.horizon) return ds;
  const std::size_t count = (n - config.horizon) / T;
  ds.x.reserve(count * T * kSeqChannels);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * T, last = start + T - 1, target = last + config.horizon;
    ds.x.insert(ds.x.end(), series.channels.begin() + static_cast<long>(start * kSeqChannels),
                series.channels.begin() + static_cast<long>((last + 1) * kSeqChannels));
    const std::int64_t ts = series.timestamps[last];
    // Fold the divisor into the encoding so a divisor other than the period is expressible.
    const auto [hs, hc] = cyclical_encode(hour_of(ts) % config.hour_divisor, config.hour_divisor);
    const auto [ms, mc] = cyclical_encode(month_of(ts) % config.month_divisor, config.month_divisor);
    ds.m.insert(ds.m.end(), {hs, hc, ms, mc, rhr});
    ds.y.push_back(series.hr[target]);
    ds.index.push_back({series.user_id, series.timestamps[start], ts, series.timestamps[target]});
  }
  return ds;
}

WindowedDataset build_dataset(const Cohort& cohort, const PipelineConfig& config, BuildStats* stats) {
  config.validate();
  std::map<std::int64_t, double> rhr;
  for (const auto& p : cohort.profiles) rhr[p.user_id] = p.rhr;

  // Contiguous user ranges in record order.
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t i = 0; i < cohort.records.size();) {
    std::size_t j = i;
    while (j < cohort.records.size() && cohort.records[j].user_id == cohort.records[i].user_id) ++j;
    ranges.emplace_back(i, j);
    i = j;
  }
  std::vector<WindowedDataset> parts(ranges.size());
#pragma omp parallel for schedule(dynamic)
  for (long u = 0; u < static_cast<long>(ranges.size()); ++u) {
    const auto [b, e] = ranges[static_cast<std::size_t>(u)];
    std::span<const SensorRecord> recs(cohort.records.data() + b, e - b);
    const auto it = rhr.find(recs.front().user_id);
    if (it == rhr.end()) continue;  // reported below
    parts[static_cast<std::size_t>(u)] =
        window_segments(derive_channels(recs, config.lowpass_seconds), it->second, config);
  }
  WindowedDataset out;
  out.window = config.window;
  BuildStats st;
  for (std::size_t u = 0; u < ranges.size(); ++u) {
    const std::int64_t id = cohort.records[ranges[u].first].user_id;
    if (!rhr.count(id)) throw DataError("records for user " + std::to_string(id) + " have no traits row");
    ++st.users;
    if (parts[u].rows() == 0) ++st.skipped_users;
    out.append(parts[u]);
  }
  if (stats) *stats = st;
  return out;
}

SplitSpec::Role SplitSpec::role_of(std::int64_t user) const {
  if (std::binary_search(train.begin(), train.end(), user)) return Role::Train;
  if (std::binary_search(val.begin(), val.end(), user)) return Role::Val;
  if (std::binary_search(test.begin(), test.end(), user)) return Role::Test;
  return Role::None;
}

SplitSpec split_by_user(std::vector<std::int64_t> user_ids, double test_fraction, double val_fraction,
                        std::uint64_t seed) {
  std::sort(user_ids.begin(), user_ids.end());
  if (std::adjacent_find(user_ids.begin(), user_ids.end()) != user_ids.end())
    throw ConfigError("split_by_user: duplicate user ids");
  if (user_ids.size() < 3) throw ConfigError("split_by_user: need at least 3 users");
  std::mt19937_64 rng(seed);
  std::shuffle(user_ids.begin(), user_ids.end(), rng);
  const std::size_t n = user_ids.size();
  const auto count = [](double f, std::size_t total) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * static_cast<double>(total) + 1e-9)));
  };
  const std::size_t n_test = count(test_fraction, n);
  const std::size_t pool = n - n_test;
  const std::size_t n_val = count(val_fraction, pool);
  if (n_test >= n || n_val >= pool) throw ConfigError("split_by_user: a split would be empty");
  SplitSpec s;
  s.train.assign(user_ids.begin(), user_ids.begin() + static_cast<long>(pool - n_val));
  s.val.assign(user_ids.begin() + static_cast<long>(pool - n_val), user_ids.begin() + static_cast<long>(pool));
  s.test.assign(user_ids.begin() + static_cast<long>(pool), user_ids.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

std::vector<std::size_t> rows_with_role(const WindowedDataset& ds, const SplitSpec& split, SplitSpec::Role role) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (split.role_of(ds.index[i].user_id) == role) out.push_back(i);
  return out;
}

WindowedDataset subset(const WindowedDataset& ds, std::span<const std::size_t> rows) {
  WindowedDataset out;
  out.window = ds.window;
  out.scaled = ds.scaled;
  const std::size_t stride = ds.row_stride();
  out.x.reserve(rows.size() * stride);
  for (std::size_t r : rows) {
    if (r >= ds.rows()) throw DimensionError("subset: row " + std::to_string(r) + " out of range");
    out.x.insert(out.x.end(), ds.x.begin() + static_cast<long>(r * stride),
                 ds.x.begin() + static_cast<long>((r + 1) * stride));
    out.m.insert(out.m.end(), ds.m.begin() + static_cast<long>(r * kMetaColumns),
                 ds.m.begin() + static_cast<long>((r + 1) * kMetaColumns));
    out.y.push_back(ds.y[r]);
    out.index.push_back(ds.index[r]);
  }
  return out;
}

void MinMaxScaler::fit(const WindowedDataset& ds, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw ConfigError("scaler: no training rows");
  if (ds.scaled) throw ConfigError("scaler: dataset is already scaled");
  seq_min.assign(kSeqChannels, INFINITY);
  seq_max.assign(kSeqChannels, -INFINITY);
  meta_min.assign(kMetaColumns, INFINITY);
  meta_max.assign(kMetaColumns, -INFINITY);
  for (std::size_t r : train_rows) {
    const auto xr = ds.x_row(r);
    for (std::size_t t = 0; t < ds.window; ++t)
      for (std::size_t c = 0; c < kSeqChannels; ++c) {
        const double v = xr[t * kSeqChannels + c];
        seq_min[c] = std::min(seq_min[c], v);
        seq_max[c] = std::max(seq_max[c], v);
      }
    const auto mr = ds.m_row(r);
    for (std::size_t c = 0; c < kMetaColumns; ++c) {
      meta_min[c] = std::min(meta_min[c], mr[c]);
      meta_max[c] = std::max(meta_max[c], mr[c]);
    }
  }
  fitted_ = true;
}

void MinMaxScaler::set(std::vector<double> smin, std::vector<double> smax, std::vector<double> mmin,
                       std::vector<double> mmax) {
  if (smin.size() != kSeqChannels || smax.size() != kSeqChannels || mmin.size() != kMetaColumns ||
      mmax.size() != kMetaColumns)
    throw DimensionError("scaler: channel count mismatch");
  seq_min = std::move(smin);
  seq_max = std::move(smax);
  meta_min = std::move(mmin);
  meta_max = std::move(mmax);
  fitted_ = true;
}

namespace {

double scale_value(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

}  // namespace

WindowedDataset MinMaxScaler::apply(const WindowedDataset& ds) const {
  if (!fitted_) throw ConfigError("scaler: apply called before fit");
  if (ds.scaled) throw ConfigError("scaler: dataset is already scaled");
  WindowedDataset out;
  out.window = ds.window;
  out.index = ds.index;
  out.y = ds.y;
  out.scaled = true;
  out.x.resize(ds.x.size());
  out.m.resize(ds.m.size());
  for (std::size_t i = 0; i < ds.x.size(); ++i) {
    const std::size_t c = i % kSeqChannels;
    out.x[i] = scale_value(ds.x[i], seq_min[c], seq_max[c]);
  }
  for (std::size_t i = 0; i < ds.m.size(); ++i) {
    const std::size_t c = i % kMetaColumns;
    out.m[i] = scale_value(ds.m[i], meta_min[c], meta_max[c]);
  }
  // Targets stay in BPM.
  if (std::memcmp(out.y.data(), ds.y.data(), ds.y.size() * sizeof(double)) != 0)
    throw NumericError("scaler: target column changed");
  return out;
}

Tensor batch_x(const WindowedDataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DimensionError("batch: empty row list");
  const std::size_t stride = ds.row_stride();
  std::vector<double> data(rows.size() * stride);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto xr = ds.x_row(rows[i]);
    std::copy(xr.begin(), xr.end(), data.begin() + static_cast<long>(i * stride));
  }
  return Tensor({rows.size(), ds.window, kSeqChannels}, std::move(data));
}

Tensor batch_meta(const WindowedDataset& ds, std::span<const std::size_t> rows, std::span<const std::size_t> columns) {
  if (rows.empty() || columns.empty()) throw DimensionError("batch_meta: empty rows or columns");
  Tensor out({rows.size(), columns.size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < columns.size(); ++j) out.at(i, j) = ds.m_row(rows[i])[columns[j]];
  return out;
}

Tensor batch_y(const WindowedDataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DimensionError("batch_y: empty row list");
  Tensor out({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = ds.y[rows[i]];
  return out;
}

// ---- cache ----

namespace {

constexpr char kMagic[8] = {'S', '2', 'H', 'D', 'S', 'E', 'T', '1'};

std::string join_nums(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::num(v[i]);
  return s;
}

std::string join_ids(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
void put(std::ofstream& out, const T* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void get(std::ifstream& in, T* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw DataError("dataset.bin: truncated");
}

}  // namespace

void write_dataset_cache(const std::filesystem::path& dir, const WindowedDataset& raw, const MinMaxScaler& scaler,
                         const SplitSpec& split) {
  if (raw.scaled) throw ConfigError("dataset cache stores unscaled rows");
  if (!scaler.fitted()) throw ConfigError("dataset cache: scaler not fitted");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string());
  std::ostringstream man;
  man << "rows = " << raw.rows() << "\n"
      << "window = " << raw.window << "\n"
      << "seq_channels = " << kSeqChannels << "\n"
      << "meta_columns = " << kMetaColumns << "\n"
      << "seq_min = " << join_nums(scaler.seq_min) << "\n"
      << "seq_max = " << join_nums(scaler.seq_max) << "\n"
      << "meta_min = " << join_nums(scaler.meta_min) << "\n"
      << "meta_max = " << join_nums(scaler.meta_max) << "\n"
      << "train_users = " << join_ids(split.train) << "\n"
      << "val_users = " << join_ids(split.val) << "\n"
      << "test_users = " << join_ids(split.test) << "\n";
  csv::write_file(dir / "manifest.txt", man.str());

  std::ofstream out(dir / "dataset.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset.bin");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t header[2] = {raw.rows(), raw.window};
  put(out, header, 2);
  for (const auto& k : raw.index) {
    const std::int64_t v[4] = {k.user_id, k.window_start, k.last_input, k.target_time};
    put(out, v, 4);
  }
  put(out, raw.y.data(), raw.y.size());
  put(out, raw.m.data(), raw.m.size());
  put(out, raw.x.data(), raw.x.size());
  if (!out) throw DataError("write failed: dataset.bin");
}

DatasetCache read_dataset_cache(const std::filesystem::path& dir) {
  std::map<std::string, std::string> kv;
  {
    const std::string text = csv::read_file(dir / "manifest.txt");
    csv::LineReader lines(text);
    std::string_view line;
    while (lines.next(line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string_view::npos) continue;
      kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
    }
  }
  const auto field = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("manifest.txt: missing ") + key);
    return it->second;
  };
  const auto nums = [&](const char* key) {
    std::vector<double> v;
    for (auto s : csv::split(field(key))) v.push_back(csv::to_double(s));
    return v;
  };
  const auto ids = [&](const char* key) {
    std::vector<std::int64_t> v;
    if (field(key).empty()) return v;
    for (auto s : csv::split(field(key))) v.push_back(csv::to_int(s));
    return v;
  };
  if (csv::to_int(field("seq_channels")) != static_cast<std::int64_t>(kSeqChannels) ||
      csv::to_int(field("meta_columns")) != static_cast<std::int64_t>(kMetaColumns))
    throw DataError("manifest.txt: channel layout differs from this build");

  DatasetCache cache;
  cache.scaler.set(nums("seq_min"), nums("seq_max"), nums("meta_min"), nums("meta_max"));
  cache.split.train = ids("train_users");
  cache.split.val = ids("val_users");
  cache.split.test = ids("test_users");

  std::ifstream in(dir / "dataset.bin", std::ios::binary);
  if (!in) throw DataError("cannot read dataset.bin");
  char magic[sizeof kMagic];
  get(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("dataset.bin: bad magic");
  std::uint64_t header[2];
  get(in, header, 2);
  const std::size_t rows = header[0];
  if (rows != static_cast<std::size_t>(csv::to_int(field("rows"))) ||
      header[1] != static_cast<std::uint64_t>(csv::to_int(field("window"))))
    throw DataError("dataset.bin disagrees with manifest.txt");
  WindowedDataset& ds = cache.raw;
  ds.window = header[1];
  ds.index.resize(rows);
  for (auto& k : ds.index) {
    std::int64_t v[4];
    get(in, v, 4);
    k = {v[0], v[1], v[2], v[3]};
  }
  ds.y.resize(rows);
  ds.m.resize(rows * kMetaColumns);
  ds.x.resize(rows * ds.row_stride());
  get(in, ds.y.data(), ds.y.size());
  get(in, ds.m.data(), ds.m.size());
  get(in, ds.x.data(), ds.x.size());
  return cache;
}

}  // namespace s2h
