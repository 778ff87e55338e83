#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "s2h/cli.hpp"
#include "s2h/csv.hpp"
#include "s2h/error.hpp"

namespace s2h {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
std::string show(const T& v);
template <class T>
T read(const std::string& s);

template <>
std::string show(const int& v) { return std::to_string(v); }
template <>
std::string show(const std::uint64_t& v) { return std::to_string(v); }
template <>
std::string show(const std::int64_t& v) { return std::to_string(v); }
template <>
std::string show(const double& v) { return csv::num(v); }
template <>
std::string show(const bool& v) { return v ? "true" : "false"; }

template <class T>
std::string show_list(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}

template <>
std::string show(const std::vector<double>& v) {
  return show_list<double>(v, [](const double& x) { return csv::num(x); });
}
template <>
std::string show(const std::vector<std::string>& v) {
  return show_list<std::string>(v, [](const std::string& x) { return x; });
}
template <>
std::string show(const std::vector<Variant>& v) {
  return show_list<Variant>(v, [](const Variant& x) { return to_string(x); });
}
template <>
std::string show(const std::vector<LossMode>& v) {
  return show_list<LossMode>(v, [](const LossMode& x) { return to_string(x); });
}

std::int64_t read_int(const std::string& s) {
  try {
    return csv::to_int(s);
  } catch (const DataError&) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
}

template <>
int read(const std::string& s) { return static_cast<int>(read_int(s)); }
template <>
std::int64_t read(const std::string& s) { return read_int(s); }
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "widths and seeds share one unsigned reader");
template <>
std::uint64_t read(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected an unsigned integer, got '" + s + "'");
  return v;
}
template <>
double read(const std::string& s) {
  try {
    return csv::to_double(s);
  } catch (const DataError&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
}
template <>
bool read(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> read_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  for (auto part : csv::split(s)) out.push_back(trim(part));
  return out;
}

template <>
std::vector<double> read(const std::string& s) {
  std::vector<double> out;
  for (const auto& p : read_list(s)) out.push_back(read<double>(p));
  return out;
}
template <>
std::vector<std::string> read(const std::string& s) { return read_list(s); }
template <>
std::vector<Variant> read(const std::string& s) {
  std::vector<Variant> out;
  for (const auto& p : read_list(s)) out.push_back(variant_from_string(p));
  return out;
}
template <>
std::vector<LossMode> read(const std::string& s) {
  std::vector<LossMode> out;
  for (const auto& p : read_list(s)) out.push_back(loss_mode_from_string(p));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

/// `ref` maps a config to one of its members; it is called on const and non-const configs alike.
template <class Ref>
Field field(std::string key, Ref ref) {
  return {key, [ref](const ExperimentConfig& c) { return show(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& v) {
            auto& slot = ref(c);
            slot = read<std::remove_cvref_t<decltype(slot)>>(v);
          }};
}

#define S2H_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      S2H_FIELD("seed", seed),
      S2H_FIELD("cohort.n_users", cohort.n_users),
      S2H_FIELD("cohort.days", cohort.days),
      S2H_FIELD("cohort.start_epoch", cohort.start_epoch),
      S2H_FIELD("cohort.start_day_span", cohort.start_day_span),
      S2H_FIELD("cohort.rhr_mean", cohort.rhr_mean),
      S2H_FIELD("cohort.rhr_sd", cohort.rhr_sd),
      S2H_FIELD("cohort.gain_mean", cohort.gain_mean),
      S2H_FIELD("cohort.gain_cv", cohort.gain_cv),
      S2H_FIELD("cohort.gain_activity_corr", cohort.gain_activity_corr),
      S2H_FIELD("cohort.extreme_gain_fraction", cohort.extreme_gain_fraction),
      S2H_FIELD("cohort.extreme_gain_multiplier", cohort.extreme_gain_multiplier),
      S2H_FIELD("cohort.tau_mean", cohort.tau_mean),
      S2H_FIELD("cohort.tau_cv", cohort.tau_cv),
      S2H_FIELD("cohort.circ_amp_mean", cohort.circ_amp_mean),
      S2H_FIELD("cohort.circ_amp_sd", cohort.circ_amp_sd),
      S2H_FIELD("cohort.activity_mean", cohort.activity_mean),
      S2H_FIELD("cohort.activity_cv", cohort.activity_cv),
      S2H_FIELD("cohort.p_active_night", cohort.p_active_night),
      S2H_FIELD("cohort.p_active_day", cohort.p_active_day),
      S2H_FIELD("cohort.p_active_shoulder", cohort.p_active_shoulder),
      S2H_FIELD("cohort.p_bout_end", cohort.p_bout_end),
      S2H_FIELD("cohort.bout_log_sd", cohort.bout_log_sd),
      S2H_FIELD("cohort.hr_noise_sd", cohort.hr_noise_sd),
      S2H_FIELD("cohort.motion_scale", cohort.motion_scale),
      S2H_FIELD("cohort.orientation_drift", cohort.orientation_drift),
      S2H_FIELD("cohort.orientation_pull", cohort.orientation_pull),
      S2H_FIELD("pipeline.window", pipeline.window),
      S2H_FIELD("pipeline.horizon", pipeline.horizon),
      S2H_FIELD("pipeline.test_fraction", pipeline.test_fraction),
      S2H_FIELD("pipeline.val_fraction", pipeline.val_fraction),
      S2H_FIELD("pipeline.hour_divisor", pipeline.hour_divisor),
      S2H_FIELD("pipeline.month_divisor", pipeline.month_divisor),
      S2H_FIELD("pipeline.lowpass_seconds", pipeline.lowpass_seconds),
      S2H_FIELD("model.variants", variants),
      S2H_FIELD("model.cnn_layers", model.cnn_layers),
      S2H_FIELD("model.cnn_filters", model.cnn_filters),
      S2H_FIELD("model.kernel", model.kernel),
      S2H_FIELD("model.gru_layers", model.gru_layers),
      S2H_FIELD("model.gru_units", model.gru_units),
      S2H_FIELD("model.mlp_units", model.mlp_units),
      S2H_FIELD("loss.modes", loss_modes),
      S2H_FIELD("loss.mse_weight", model.loss.mse_weight),
      Field{"loss.quantiles", [](const ExperimentConfig& c) { return show(c.model.loss.quantiles.levels()); },
            [](ExperimentConfig& c, const std::string& v) {
              c.model.loss.quantiles = QuantileSet(read<std::vector<double>>(v));
            }},
      S2H_FIELD("train.lr", model.train.adam.lr),
      S2H_FIELD("train.beta1", model.train.adam.beta1),
      S2H_FIELD("train.beta2", model.train.adam.beta2),
      S2H_FIELD("train.eps", model.train.adam.eps),
      S2H_FIELD("train.batch_size", model.train.batch_size),
      S2H_FIELD("train.max_epochs", model.train.max_epochs),
      S2H_FIELD("train.patience", model.train.patience),
      S2H_FIELD("train.runs", runs),
      S2H_FIELD("baseline.global_mean", baseline_global_mean),
      S2H_FIELD("baseline.user_mean", baseline_user_mean),
      S2H_FIELD("baseline.gbt", baseline_gbt),
      S2H_FIELD("baseline.gbt_rounds", gbt.rounds),
      S2H_FIELD("baseline.gbt_depth", gbt.depth),
      S2H_FIELD("baseline.gbt_shrinkage", gbt.shrinkage),
      S2H_FIELD("autoencoder.enabled", autoencoder),
      S2H_FIELD("autoencoder.bottleneck", ae_bottleneck),
      S2H_FIELD("autoencoder.coarse_steps", ae_coarse_steps),
      S2H_FIELD("autoencoder.decoder_filters", ae_decoder_filters),
      S2H_FIELD("transfer.sources", embed_variants),
      S2H_FIELD("transfer.traits", traits),
      S2H_FIELD("transfer.cutoffs", cutoffs),
      S2H_FIELD("transfer.probe_lambda", probe_lambda),
  };
  return all;
}

#undef S2H_FIELD

}  // namespace

void ExperimentConfig::validate() const {
  cohort_config().validate();
  pipeline.validate();
  if (variants.empty()) throw ConfigError("model.variants is empty");
  if (loss_modes.empty()) throw ConfigError("loss.modes is empty");
  if (runs < 1) throw ConfigError("train.runs must be >= 1");
  for (auto v : variants)
    for (auto m : loss_modes) cell_config(v, m, 0).validate();
  gbt.validate();
  for (auto v : embed_variants) {
    bool found = false;
    for (auto w : variants) found = found || w == v;
    if (!found) throw ConfigError("transfer.sources lists " + to_string(v) + " which is not in model.variants");
  }
  static const std::vector<std::string> known{"rhr", "gain", "tau", "circ_amp", "activity_level"};
  for (const auto& t : traits)
    if (std::find(known.begin(), known.end(), t) == known.end()) throw ConfigError("unknown trait '" + t + "'");
  for (double c : cutoffs)
    if (!(c > 0.0 && c <= 1.0)) throw ConfigError("transfer.cutoffs must lie in (0, 1]");
  if (!(probe_lambda >= 0.0)) throw ConfigError("transfer.probe_lambda must be >= 0");
  if (autoencoder) autoencoder_config().validate();
}

CohortConfig ExperimentConfig::cohort_config() const {
  CohortConfig c = cohort;
  c.master_seed = seed;
  return c;
}

Step2HeartConfig ExperimentConfig::cell_config(Variant v, LossMode mode, int run) const {
  Step2HeartConfig c = model;
  c.variant = v;
  c.loss.mode = mode;
  c.train.seed = seed + static_cast<std::uint64_t>(run);
  return c;
}

AutoencoderConfig ExperimentConfig::autoencoder_config() const {
  AutoencoderConfig c;
  c.cnn_layers = model.cnn_layers;
  c.cnn_filters = model.cnn_filters;
  c.kernel = model.kernel;
  c.bottleneck = ae_bottleneck;
  c.coarse_steps = ae_coarse_steps;
  c.train = model.train;
  c.train.seed = seed;
  Step2HeartConfig trunk = model;
  trunk.variant = Variant::A;
  c.decoder_filters = ae_decoder_filters ? ae_decoder_filters : match_decoder_filters(c, trunk_parameter_count(trunk));
  return c;
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  ExperimentConfig c;
  csv::LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    const auto eq = l.find('=');
    const std::string where = "config line " + std::to_string(lines.line_number());
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(l).substr(0, eq));
    const std::string value = trim(std::string_view(l).substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      it->second->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + " (" + key + "): " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = csv::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunManifest RunManifest::read_or_empty(const std::filesystem::path& path) {
  RunManifest m;
  if (!std::filesystem::exists(path)) return m;
  const std::string text = csv::read_file(path);
  csv::LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) continue;
    const std::string key(line.substr(0, eq));
    const std::string value(line.substr(eq + 3));
    if (key == "config_hash") {
      m.config_hash = std::stoull(value, nullptr, 16);
    } else if (key == "stage") {
      m.entries.push_back({value, 0, {}, {}, {}});
    } else if (!m.entries.empty()) {
      auto& e = m.entries.back();
      if (key == "seed") e.seed = read<std::uint64_t>(value);
      if (key == "started") e.started = value;
      if (key == "finished") e.finished = value;
      if (key == "artifact") e.artifacts.push_back(value);
    }
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ostringstream out;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  out << "config_hash = " << hash << "\n";
  for (const auto& e : entries) {
    out << "\nstage = " << e.stage << "\nseed = " << e.seed << "\nstarted = " << e.started
        << "\nfinished = " << e.finished << "\n";
    for (const auto& a : e.artifacts) out << "artifact = " << a << "\n";
  }
  csv::write_file(path, out.str());
}

std::string format_forecast_rows(const std::vector<ForecastRow>& rows) {
  std::string out = std::string(kForecastHeader) + "\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.loss + "," + r.run + "," + std::to_string(r.n) + ",";
    if (r.n == 0)
      out += ",,";
    else
      out += csv::fixed(r.mse, 6) + "," + csv::fixed(r.rmse, 6) + "," + csv::fixed(r.mae, 6);
    out += "," + r.notes + "\n";
  }
  return out;
}

std::vector<ForecastRow> parse_forecast_rows(const std::string& text) {
  std::vector<ForecastRow> rows;
  csv::LineReader lines(text);
  std::string_view line;
  if (!lines.next(line) || line != kForecastHeader) throw DataError("forecast table: unexpected header");
  while (lines.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 8) throw DataError("forecast table line " + std::to_string(lines.line_number()) + ": 8 fields expected");
    ForecastRow r{std::string(f[0]), std::string(f[1]), std::string(f[2]), 0, 0, 0, 0, std::string(f[7])};
    r.n = static_cast<std::size_t>(csv::to_int(f[3]));
    if (r.n) {
      r.mse = csv::to_double(f[4]);
      r.rmse = csv::to_double(f[5]);
      r.mae = csv::to_double(f[6]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ForecastRow> with_summaries(const std::vector<ForecastRow>& runs) {
  std::vector<ForecastRow> out;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ForecastRow*>> groups;
  for (const auto& r : runs) {
    out.push_back(r);
    const auto key = std::make_pair(r.model, r.loss);
    if (!groups.count(key)) order.push_back(key);
    auto& g = groups[key];
    if (r.n > 0) g.push_back(&r);
  }
  for (const auto& key : order) {
    const auto& g = groups[key];
    if (g.empty()) continue;
    const double k = static_cast<double>(g.size());
    ForecastRow mean{key.first, key.second, "mean", g.front()->n, 0, 0, 0, "runs=" + std::to_string(g.size())};
    for (const auto* r : g) {
      mean.mse += r->mse / k;
      mean.rmse += r->rmse / k;
      mean.mae += r->mae / k;
    }
    ForecastRow sd = mean;
    sd.run = "std";
    sd.mse = sd.rmse = sd.mae = 0.0;
    if (g.size() > 1) {
      for (const auto* r : g) {
        sd.mse += (r->mse - mean.mse) * (r->mse - mean.mse);
        sd.rmse += (r->rmse - mean.rmse) * (r->rmse - mean.rmse);
        sd.mae += (r->mae - mean.mae) * (r->mae - mean.mae);
      }
      sd.mse = std::sqrt(sd.mse / (k - 1));
      sd.rmse = std::sqrt(sd.rmse / (k - 1));
      sd.mae = std::sqrt(sd.mae / (k - 1));
    }
    out.push_back(mean);
    out.push_back(sd);
  }
  return out;
}

}  // namespace s2h
