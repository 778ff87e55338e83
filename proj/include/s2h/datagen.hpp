#pragma once

// Synthetic free-living cohort: triaxial wrist acceleration and heart rate on a 15-s grid.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace s2h {

inline constexpr double kSampleSeconds = 15.0;
inline constexpr std::int64_t kSamplesPerDay = 86400 / 15;
inline constexpr double kGravity = 9.81;

struct UserProfile {
  std::int64_t user_id = 0;
  double rhr = 60.0;             // BPM
  double gain = 30.0;            // BPM per unit intensity
  double tau = 120.0;            // s, HR recovery time constant
  double circ_amp = 5.0;         // BPM
  double activity_level = 1.0;   // multiplier on active-bout intensity
  std::uint64_t rng_seed = 0;
  std::int64_t start_time = 1577836800;  // epoch s of the first sample (midnight UTC)
};

struct SensorRecord {
  std::int64_t user_id = 0;
  std::int64_t timestamp = 0;
  double ax = 0, ay = 0, az = 0;  // m/s^2, gravity included
  double hr = 0;                  // BPM
};

struct CohortConfig {
  int n_users = 50;
  int days = 7;
  std::uint64_t master_seed = 42;

  std::int64_t start_epoch = 1577836800;  // 2020-01-01 00:00 UTC
  int start_day_span = 365;               // users start on a random day in [0, span)

  double rhr_mean = 62.0, rhr_sd = 7.0;
  double gain_mean = 30.0, gain_cv = 0.35;
  double gain_activity_corr = -0.8;  // latent-normal correlation between gain and activity_level
  double extreme_gain_fraction = 0.0;
  double extreme_gain_multiplier = 3.0;
  double tau_mean = 120.0, tau_cv = 0.4;
  double circ_amp_mean = 5.0, circ_amp_sd = 1.5;
  double activity_mean = 1.0, activity_cv = 0.4;

  // Rest/active chain, per 15-s step.
  // Bouts and rests last about an hour by day, so a two-hour window says something
  // about the state at its end.
  double p_active_night = 0.0004;  // 00:00-06:00
  double p_active_day = 0.004;     // 07:00-21:00
  double p_active_shoulder = 0.0016;
  double p_bout_end = 0.004;
  double bout_log_sd = 0.5;  // lognormal spread of a bout's intensity (mean 1 before scaling)

  double hr_noise_sd = 2.0;
  double motion_scale = 0.3;       // g of dynamic acceleration per sqrt(intensity)
  double orientation_drift = 0.02;
  double orientation_pull = 0.01;

  void validate() const;
};

/// Traits per user; user ids are 1..n_users. A user's traits depend only on (master_seed, user_id).
std::vector<UserProfile> sample_profiles(const CohortConfig& config);

/// Rest/active intensity trace for `samples` steps starting at profile.start_time.
std::vector<double> simulate_intensity(const UserProfile& profile, std::int64_t samples, const CohortConfig& config);

/// Unit-sum causal exponential response to intensity: y_t = a*y_{t-1} + (1-a)*I_{t-1}, a = exp(-dt/tau).
std::vector<double> hr_response(std::span<const double> intensity, double tau);

/// rhr + circadian + gain * response + noise, clamped to [30, 220].
std::vector<double> heart_rate(const UserProfile& profile, std::span<const double> intensity, double noise_sd,
                               std::uint64_t noise_seed);

std::vector<SensorRecord> simulate_user(const UserProfile& profile, int days, const CohortConfig& config);

struct Cohort {
  std::vector<UserProfile> profiles;
  std::vector<SensorRecord> records;  // users contiguous, timestamps ascending
};

Cohort generate_cohort(const CohortConfig& config);

/// Writes records.csv and traits.csv into dir (created if missing).
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort read_cohort(const std::filesystem::path& dir);
/// traits.csv only; start_time is left at 0.
std::vector<UserProfile> read_profiles(const std::filesystem::path& dir);

}  // namespace s2h
