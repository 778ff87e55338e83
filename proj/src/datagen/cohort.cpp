#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "s2h/csv.hpp"
#include "s2h/datagen.hpp"
#include "s2h/error.hpp"
#include "s2h/seed.hpp"

namespace s2h {

namespace {

constexpr char kRecordsHeader[] = "user_id,timestamp,ax,ay,az,hr";
constexpr char kTraitsHeader[] = "user_id,rhr,gain,tau,circ_amp,activity_level";

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("cohort config: ") + what);
}

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

/// Lognormal with the given mean and coefficient of variation, driven by a standard normal draw.
double lognormal(double mean, double cv, double z) {
  if (cv == 0.0) return mean;
  const double s2 = std::log1p(cv * cv);
  return std::exp(std::log(mean) - 0.5 * s2 + std::sqrt(s2) * z);
}

double hour_of_day(std::int64_t ts) {
  const std::int64_t sod = ((ts % 86400) + 86400) % 86400;
  return static_cast<double>(sod) / 3600.0;
}

double entry_probability(const CohortConfig& c, double hour) {
  if (hour < 6.0) return c.p_active_night;
  if (hour >= 7.0 && hour < 21.0) return c.p_active_day;
  return c.p_active_shoulder;
}

}  // namespace

void CohortConfig::validate() const {
  require(n_users >= 2, "n_users must be >= 2");
  require(days >= 1, "days must be >= 1");
  require(start_day_span >= 1, "start_day_span must be >= 1");
  require(rhr_mean >= 40.0 && rhr_mean <= 90.0, "rhr_mean outside [40, 90]");
  require(tau_mean >= 30.0 && tau_mean <= 600.0, "tau_mean outside [30, 600]");
  require(gain_mean >= 0.0, "gain_mean must be >= 0");
  require(activity_mean > 0.0, "activity_mean must be > 0");
  require(circ_amp_mean >= 0.0, "circ_amp_mean must be >= 0");
  require(rhr_sd >= 0.0 && circ_amp_sd >= 0.0, "spreads must be >= 0");
  require(gain_cv >= 0.0 && tau_cv >= 0.0 && activity_cv >= 0.0 && bout_log_sd >= 0.0, "spreads must be >= 0");
  require(gain_activity_corr >= -1.0 && gain_activity_corr <= 1.0, "gain_activity_corr outside [-1, 1]");
  require(probability(extreme_gain_fraction), "extreme_gain_fraction outside [0, 1]");
  require(extreme_gain_multiplier > 0.0, "extreme_gain_multiplier must be > 0");
  require(probability(p_active_night) && probability(p_active_day) && probability(p_active_shoulder) &&
              probability(p_bout_end),
          "transition probabilities outside [0, 1]");
  require(hr_noise_sd >= 0.0 && motion_scale >= 0.0, "noise scales must be >= 0");
  require(orientation_drift >= 0.0 && probability(orientation_pull), "orientation parameters out of range");
}

std::vector<UserProfile> sample_profiles(const CohortConfig& config) {
  config.validate();
  std::vector<UserProfile> out;
  out.reserve(static_cast<std::size_t>(config.n_users));
  const double rho = config.gain_activity_corr;
  for (int i = 0; i < config.n_users; ++i) {
    UserProfile p;
    p.user_id = i + 1;
    std::mt19937_64 rng(derive_seed(config.master_seed, static_cast<std::uint64_t>(p.user_id), 1));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;

    const double z_act = normal(rng);
    const double z_other = normal(rng);
    const double z_gain = rho * z_act + std::sqrt(1.0 - rho * rho) * z_other;
    p.activity_level = lognormal(config.activity_mean, config.activity_cv, z_act);
    p.gain = lognormal(config.gain_mean, config.gain_cv, z_gain);
    if (unit(rng) < config.extreme_gain_fraction) p.gain *= config.extreme_gain_multiplier;
    p.rhr = std::clamp(config.rhr_mean + config.rhr_sd * normal(rng), 40.0, 90.0);
    p.tau = std::clamp(lognormal(config.tau_mean, config.tau_cv, normal(rng)), 30.0, 600.0);
    p.circ_amp = std::max(0.0, config.circ_amp_mean + config.circ_amp_sd * normal(rng));
    std::uniform_int_distribution<int> day(0, config.start_day_span - 1);
    p.start_time = config.start_epoch + std::int64_t{day(rng)} * 86400;
    p.rng_seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(p.user_id), 2);
    out.push_back(p);
  }
  return out;
}

std::vector<double> simulate_intensity(const UserProfile& profile, std::int64_t samples,
                                       const CohortConfig& config) {
  std::mt19937_64 rng(derive_seed(profile.rng_seed, 1));
  std::uniform_real_distribution<double> unit;
  std::normal_distribution<double> normal;
  const double log_sd = config.bout_log_sd;
  std::vector<double> out(static_cast<std::size_t>(samples), 0.0);
  bool active = false;
  double level = 0.0;
  for (std::int64_t t = 0; t < samples; ++t) {
    const double hour = hour_of_day(profile.start_time + t * 15);
    const double u = unit(rng);
    if (active) {
      active = u >= config.p_bout_end;
    } else if (u < entry_probability(config, hour)) {
      // Intensity is drawn once per bout.
      active = true;
      level = profile.activity_level * std::exp(-0.5 * log_sd * log_sd + log_sd * normal(rng));
    }
    out[static_cast<std::size_t>(t)] = active ? level : 0.0;
  }
  return out;
}

std::vector<double> hr_response(std::span<const double> intensity, double tau) {
  if (!(tau > 0.0)) throw ConfigError("hr_response: tau must be > 0");
  const double a = std::exp(-kSampleSeconds / tau);
  std::vector<double> y(intensity.size(), 0.0);
  double prev_y = 0.0, prev_i = 0.0;
  for (std::size_t t = 0; t < intensity.size(); ++t) {
    y[t] = a * prev_y + (1.0 - a) * prev_i;
    prev_y = y[t];
    prev_i = intensity[t];
  }
  return y;
}

std::vector<double> heart_rate(const UserProfile& profile, std::span<const double> intensity, double noise_sd,
                               std::uint64_t noise_seed) {
  const std::vector<double> response = hr_response(intensity, profile.tau);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal;
  std::vector<double> hr(intensity.size());
  for (std::size_t t = 0; t < hr.size(); ++t) {
    const double hour = hour_of_day(profile.start_time + static_cast<std::int64_t>(t) * 15);
    const double circ = profile.circ_amp * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0);
    const double noise = noise_sd > 0.0 ? noise_sd * normal(rng) : 0.0;
    hr[t] = std::clamp(profile.rhr + circ + profile.gain * response[t] + noise, 30.0, 220.0);
  }
  return hr;
}

std::vector<SensorRecord> simulate_user(const UserProfile& profile, int days, const CohortConfig& config) {
  if (days < 1) throw ConfigError("simulate_user: days must be >= 1");
  const std::int64_t n = std::int64_t{days} * kSamplesPerDay;
  const std::vector<double> intensity = simulate_intensity(profile, n, config);
  const std::vector<double> hr = heart_rate(profile, intensity, config.hr_noise_sd, derive_seed(profile.rng_seed, 2));

  std::mt19937_64 rng(derive_seed(profile.rng_seed, 3));
  std::normal_distribution<double> normal;
  // Habitual wrist orientation, then a slow pull-back random walk around it.
  double home[3];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& h : home) {
      h = normal(rng);
      norm += h * h;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& h : home) h /= norm;
  double v[3] = {home[0], home[1], home[2]};

  std::vector<SensorRecord> out(static_cast<std::size_t>(n));
  const double per_axis = config.motion_scale / std::sqrt(3.0);
  for (std::int64_t t = 0; t < n; ++t) {
    const auto i = static_cast<std::size_t>(t);
    double g_norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      v[k] += config.orientation_pull * (home[k] - v[k]) + config.orientation_drift * normal(rng);
      g_norm += v[k] * v[k];
    }
    g_norm = std::sqrt(g_norm);
    const double amp = per_axis * std::sqrt(intensity[i]);
    double a[3];
    for (int k = 0; k < 3; ++k) a[k] = v[k] / g_norm + amp * normal(rng);
    out[i] = {profile.user_id, profile.start_time + t * 15, a[0] * kGravity, a[1] * kGravity, a[2] * kGravity,
              hr[i]};
  }
  return out;
}

Cohort generate_cohort(const CohortConfig& config) {
  Cohort cohort;
  cohort.profiles = sample_profiles(config);
  std::vector<std::vector<SensorRecord>> per_user(cohort.profiles.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(per_user.size()); ++i)
    per_user[static_cast<std::size_t>(i)] = simulate_user(cohort.profiles[static_cast<std::size_t>(i)], config.days, config);
  std::size_t total = 0;
  for (const auto& u : per_user) total += u.size();
  cohort.records.reserve(total);
  for (auto& u : per_user) cohort.records.insert(cohort.records.end(), u.begin(), u.end());
  return cohort;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  std::string records;
  records.reserve(cohort.records.size() * 48 + 64);
  records += kRecordsHeader;
  records += '\n';
  for (const auto& r : cohort.records) {
    records += std::to_string(r.user_id);
    records += ',';
    records += std::to_string(r.timestamp);
    for (double v : {r.ax, r.ay, r.az}) {
      records += ',';
      records += csv::fixed(v, 5);
    }
    records += ',';
    records += csv::fixed(r.hr, 3);
    records += '\n';
  }
  csv::write_file(dir / "records.csv", records);

  std::string traits = std::string(kTraitsHeader) + "\n";
  for (const auto& p : cohort.profiles) {
    traits += std::to_string(p.user_id);
    for (double v : {p.rhr, p.gain, p.tau, p.circ_amp, p.activity_level}) {
      traits += ',';
      traits += csv::num(v);
    }
    traits += '\n';
  }
  csv::write_file(dir / "traits.csv", traits);
}

std::vector<UserProfile> read_profiles(const std::filesystem::path& dir) {
  std::vector<UserProfile> profiles;
  {
    const std::string text = csv::read_file(dir / "traits.csv");
    csv::LineReader lines(text);
    std::string_view line;
    if (!lines.next(line) || line != kTraitsHeader) throw DataError("traits.csv: unexpected header");
    while (lines.next(line)) {
      if (line.empty()) continue;
      const auto f = csv::split(line);
      if (f.size() != 6) throw DataError("traits.csv line " + std::to_string(lines.line_number()) + ": 6 fields expected");
      UserProfile p;
      p.user_id = csv::to_int(f[0]);
      p.rhr = csv::to_double(f[1]);
      p.gain = csv::to_double(f[2]);
      p.tau = csv::to_double(f[3]);
      p.circ_amp = csv::to_double(f[4]);
      p.activity_level = csv::to_double(f[5]);
      profiles.push_back(p);
    }
  }
  return profiles;
}

Cohort read_cohort(const std::filesystem::path& dir) {
  Cohort cohort;
  cohort.profiles = read_profiles(dir);
  const std::string text = csv::read_file(dir / "records.csv");
  csv::LineReader lines(text);
  std::string_view line;
  if (!lines.next(line) || line != kRecordsHeader) throw DataError("records.csv: unexpected header");
  cohort.records.reserve(text.size() / 48);
  while (lines.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 6) throw DataError("records.csv line " + std::to_string(lines.line_number()) + ": 6 fields expected");
    cohort.records.push_back({csv::to_int(f[0]), csv::to_int(f[1]), csv::to_double(f[2]), csv::to_double(f[3]),
                              csv::to_double(f[4]), csv::to_double(f[5])});
  }
  // Start times are recoverable from the first record of each user.
  for (auto& p : cohort.profiles) {
    const auto it = std::find_if(cohort.records.begin(), cohort.records.end(),
                                 [&](const SensorRecord& r) { return r.user_id == p.user_id; });
    if (it != cohort.records.end()) p.start_time = it->timestamp;
  }
  return cohort;
}

}  // namespace s2h
