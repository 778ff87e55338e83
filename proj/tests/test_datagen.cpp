#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "s2h/csv.hpp"
#include "s2h/datagen.hpp"
#include "s2h/error.hpp"
#include "support/stats.hpp"
#include "support/temp_dir.hpp"

using namespace s2h;
using s2h::testing::pearson;
using s2h::testing::spearman;

namespace {

CohortConfig small_config(int users, int days) {
  CohortConfig c;
  c.n_users = users;
  c.days = days;
  return c;
}

UserProfile quiet_profile(double tau) {
  UserProfile p;
  p.rhr = 60.0;
  p.gain = 40.0;
  p.tau = tau;
  p.circ_amp = 0.0;
  return p;
}

/// Lag (in samples, within [-max_lag, max_lag]) maximizing the correlation of I_t with hr_{t+lag}.
int xcorr_peak(const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
  int best = 0;
  double best_r = -2.0;
  const int n = static_cast<int>(a.size());
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    std::vector<double> x, y;
    for (int t = 0; t < n; ++t)
      if (t + lag >= 0 && t + lag < n) {
        x.push_back(a[static_cast<std::size_t>(t)]);
        y.push_back(b[static_cast<std::size_t>(t + lag)]);
      }
    const double r = pearson(x, y);
    if (r > best_r) {
      best_r = r;
      best = lag;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("profiles are a pure function of the config") {
  const auto a = sample_profiles(small_config(2, 1));
  const auto b = sample_profiles(small_config(2, 1));
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rhr == b[i].rhr);
    CHECK(a[i].gain == b[i].gain);
    CHECK(a[i].tau == b[i].tau);
    CHECK(a[i].rng_seed == b[i].rng_seed);
  }
  CHECK(a[0].rng_seed != a[1].rng_seed);
}

TEST_CASE("a user's traits do not depend on cohort size") {
  const auto small = sample_profiles(small_config(3, 1));
  const auto big = sample_profiles(small_config(30, 1));
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(small[i].gain == big[i].gain);
}

TEST_CASE("zero spreads give every user the configured traits") {
  CohortConfig c = small_config(5, 1);
  c.rhr_sd = c.circ_amp_sd = 0.0;
  c.gain_cv = c.tau_cv = c.activity_cv = 0.0;
  for (const auto& p : sample_profiles(c)) {
    CHECK(p.rhr == c.rhr_mean);
    CHECK(p.gain == c.gain_mean);
    CHECK(p.tau == c.tau_mean);
    CHECK(p.circ_amp == c.circ_amp_mean);
    CHECK(p.activity_level == c.activity_mean);
  }
}

TEST_CASE("sampled trait means track the configured means") {
  const CohortConfig c = small_config(1000, 1);
  const auto ps = sample_profiles(c);
  const auto mean_of = [&](auto field) {
    double s = 0.0;
    for (const auto& p : ps) s += field(p);
    return s / static_cast<double>(ps.size());
  };
  CHECK(mean_of([](const UserProfile& p) { return p.rhr; }) == doctest::Approx(c.rhr_mean).epsilon(0.05));
  CHECK(mean_of([](const UserProfile& p) { return p.gain; }) == doctest::Approx(c.gain_mean).epsilon(0.05));
  CHECK(mean_of([](const UserProfile& p) { return p.tau; }) == doctest::Approx(c.tau_mean).epsilon(0.05));
  CHECK(mean_of([](const UserProfile& p) { return p.circ_amp; }) == doctest::Approx(c.circ_amp_mean).epsilon(0.05));
  CHECK(mean_of([](const UserProfile& p) { return p.activity_level; }) ==
        doctest::Approx(c.activity_mean).epsilon(0.05));
  for (const auto& p : ps) {
    CHECK(p.rhr >= 40.0);
    CHECK(p.rhr <= 90.0);
    CHECK(p.tau >= 30.0);
    CHECK(p.tau <= 600.0);
    CHECK(p.gain > 0.0);
    CHECK(p.activity_level > 0.0);
  }
}

TEST_CASE("extreme-gain mixing scales roughly the configured fraction of users") {
  CohortConfig c = small_config(2000, 1);
  c.gain_cv = 0.0;
  c.extreme_gain_fraction = 0.1;
  const auto ps = sample_profiles(c);
  const auto extreme = std::count_if(ps.begin(), ps.end(), [&](const UserProfile& p) { return p.gain > c.gain_mean; });
  CHECK(static_cast<double>(extreme) / 2000.0 == doctest::Approx(0.1).epsilon(0.25));
}

TEST_CASE("invalid cohort configs are rejected") {
  CHECK_THROWS_AS(sample_profiles(small_config(1, 1)), ConfigError);
  CHECK_THROWS_AS(sample_profiles(small_config(2, 0)), ConfigError);
  CohortConfig c = small_config(2, 1);
  c.rhr_mean = 120.0;
  CHECK_THROWS_AS(sample_profiles(c), ConfigError);
  c = small_config(2, 1);
  c.p_bout_end = 1.5;
  CHECK_THROWS_AS(sample_profiles(c), ConfigError);
}

TEST_CASE("decoupled user has a flat heart rate") {
  UserProfile p = quiet_profile(120.0);
  p.gain = 0.0;
  const std::vector<double> intensity(500, 1.7);
  for (double hr : heart_rate(p, intensity, 0.0, 1)) CHECK(hr == 60.0);
}

TEST_CASE("impulse response matches the normalized exponential kernel") {
  const double tau = 90.0;
  const UserProfile p = quiet_profile(tau);
  std::vector<double> impulse(400, 0.0);
  const std::size_t t0 = 50;
  impulse[t0] = 1.0;
  const auto hr = heart_rate(p, impulse, 0.0, 1);

  // Kernel k_s = (dt/tau) exp(-s dt/tau) for s >= 1, normalized by brute-force summation.
  const double dt = 15.0;
  double norm = 0.0;
  for (int s = 1; s < 200000; ++s) norm += (dt / tau) * std::exp(-s * dt / tau);
  for (std::size_t t = 0; t < hr.size(); ++t) {
    const double k = t > t0 ? (dt / tau) * std::exp(-static_cast<double>(t - t0) * dt / tau) / norm : 0.0;
    CHECK(hr[t] - 60.0 == doctest::Approx(40.0 * k).epsilon(1e-9));
  }
  const auto peak = static_cast<std::size_t>(std::max_element(hr.begin(), hr.end()) - hr.begin());
  CHECK(peak == t0 + 1);
  // e-folding time of the decay is tau.
  const double drop = (hr[peak] - 60.0) / (hr[peak + 6] - 60.0);
  CHECK(std::log(drop) == doctest::Approx(6.0 * dt / tau).epsilon(1e-9));
}

TEST_CASE("heart rate lags activity on a simulated day") {
  CohortConfig c = small_config(2, 1);
  UserProfile p = sample_profiles(c)[0];
  p.tau = 120.0;
  const auto intensity = simulate_intensity(p, kSamplesPerDay, c);
  const auto hr = heart_rate(p, intensity, c.hr_noise_sd, 11);
  CHECK(xcorr_peak(intensity, hr, 40) >= 1);
}

TEST_CASE("cohort records sit on the 15-s grid with bounded heart rate") {
  const Cohort co = generate_cohort(small_config(2, 1));
  REQUIRE(co.records.size() == 2 * 5760);
  for (std::size_t i = 1; i < co.records.size(); ++i) {
    const auto& a = co.records[i - 1];
    const auto& b = co.records[i];
    if (a.user_id == b.user_id) CHECK(b.timestamp - a.timestamp == 15);
  }
  for (const auto& r : co.records) {
    CHECK(r.hr >= 30.0);
    CHECK(r.hr <= 220.0);
  }
  CHECK(co.records.front().user_id == 1);
  CHECK(co.records.back().user_id == 2);
}

TEST_CASE("cohort files have the documented headers and regenerate byte-identically") {
  s2h::testing::TempDir dir("datagen");
  const CohortConfig c = small_config(2, 1);
  write_cohort(generate_cohort(c), dir.path() / "a");
  write_cohort(generate_cohort(c), dir.path() / "b");
  const std::string ra = csv::read_file(dir.path() / "a" / "records.csv");
  const std::string ta = csv::read_file(dir.path() / "a" / "traits.csv");
  CHECK(ra == csv::read_file(dir.path() / "b" / "records.csv"));
  CHECK(ta == csv::read_file(dir.path() / "b" / "traits.csv"));
  CHECK(ra.rfind("user_id,timestamp,ax,ay,az,hr\n", 0) == 0);
  CHECK(ta.rfind("user_id,rhr,gain,tau,circ_amp,activity_level\n", 0) == 0);

  const Cohort back = read_cohort(dir.path() / "a");
  const Cohort orig = generate_cohort(c);
  REQUIRE(back.records.size() == orig.records.size());
  REQUIRE(back.profiles.size() == 2);
  CHECK(back.profiles[1].gain == orig.profiles[1].gain);  // shortest round-trip form
  CHECK(back.records[100].hr == doctest::Approx(orig.records[100].hr).epsilon(1e-5));
  CHECK(back.profiles[1].start_time == orig.profiles[1].start_time);
}

TEST_CASE("unwritable output directory is a data error") {
  const Cohort co = generate_cohort(small_config(2, 1));
  CHECK_THROWS_AS(write_cohort(co, "/proc/self/forbidden/cohort"), DataError);
}

TEST_CASE("cohort-level properties on 50 users x 7 days") {
  const CohortConfig c = small_config(50, 7);
  const Cohort co = generate_cohort(c);

  std::vector<double> mean_hr, rhr, mean_intensity, activity;
  for (const auto& p : co.profiles) {
    double s = 0.0, night = 0.0, day = 0.0;
    std::size_t n = 0, nn = 0, nd = 0;
    for (const auto& r : co.records) {
      if (r.user_id != p.user_id) continue;
      s += r.hr;
      ++n;
      const auto hour = ((r.timestamp % 86400) / 3600);
      if (hour >= 2 && hour < 5) {
        night += r.hr;
        ++nn;
      } else if (hour >= 10 && hour < 20) {
        day += r.hr;
        ++nd;
      }
    }
    mean_hr.push_back(s / static_cast<double>(n));
    rhr.push_back(p.rhr);
    CHECK_MESSAGE(night / static_cast<double>(nn) < day / static_cast<double>(nd), "user ", p.user_id);

    const auto intensity = simulate_intensity(p, c.days * kSamplesPerDay, c);
    mean_intensity.push_back(std::accumulate(intensity.begin(), intensity.end(), 0.0) /
                             static_cast<double>(intensity.size()));
    activity.push_back(p.activity_level);

    if (p.tau >= 60.0) {
      const auto day_i = std::vector<double>(intensity.begin(), intensity.begin() + kSamplesPerDay);
      const auto hr = heart_rate(p, day_i, c.hr_noise_sd, 5);
      CHECK_MESSAGE(xcorr_peak(day_i, hr, 40) >= 1, "user ", p.user_id);
    }
  }
  CHECK(pearson(mean_hr, rhr) > 0.8);
  CHECK(spearman(mean_intensity, activity) > 0.9);
}
