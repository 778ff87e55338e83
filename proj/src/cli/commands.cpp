#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include "s2h/cli.hpp"
#include "s2h/csv.hpp"
#include "s2h/error.hpp"
#include "s2h/metrics.hpp"

namespace s2h {

namespace {

namespace fs = std::filesystem;

const std::set<std::string> kBaselineModels{"global-mean", "user-mean", "gbt"};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Report cells are comma-delimited, so messages and notes must not carry commas or newlines.
std::string cell_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

class Stage {
 public:
  Stage(const fs::path& out, const ExperimentConfig& config, std::string name)
      : out_(out), config_(config), entry_{std::move(name), config.seed, utc_now(), {}, {}} {}
  void artifact(const fs::path& p) { entry_.artifacts.push_back(p.string()); }
  void finish() {
    const fs::path path = out_ / "manifest.txt";
    auto m = RunManifest::read_or_empty(path);
    const auto hash = config_hash(config_);
    if (m.config_hash != hash) m.entries.clear();  // a new config starts a new history
    m.config_hash = hash;
    entry_.finished = utc_now();
    m.entries.push_back(entry_);
    m.write(path);
  }

 private:
  fs::path out_;
  const ExperimentConfig& config_;
  ManifestEntry entry_;
};

struct Prepared {
  Cohort cohort;
  WindowedDataset raw, scaled;
  SplitSpec split;
  MinMaxScaler scaler;
};

Prepared prepare(const ExperimentConfig& config, const fs::path& cohort_dir) {
  Prepared p;
  p.cohort = read_cohort(cohort_dir);
  p.raw = build_dataset(p.cohort, config.pipeline);
  if (p.raw.rows() == 0) throw DataError("cohort yields no windows");
  std::vector<std::int64_t> ids;
  for (const auto& u : p.cohort.profiles) ids.push_back(u.user_id);
  p.split = split_by_user(ids, config.pipeline.test_fraction, config.pipeline.val_fraction, config.seed);
  p.scaler.fit(p.raw, rows_with_role(p.raw, p.split, SplitSpec::Role::Train));
  p.scaled = p.scaler.apply(p.raw);
  return p;
}

/// Replaces the rows owned by one subcommand, keeping the others in place.
void merge_forecast(const fs::path& path, const std::vector<ForecastRow>& rows, bool baseline_rows) {
  std::vector<ForecastRow> kept;
  if (fs::exists(path))
    for (auto& r : parse_forecast_rows(csv::read_file(path)))
      if ((kBaselineModels.count(r.model) > 0) != baseline_rows) kept.push_back(std::move(r));
  kept.insert(kept.end(), rows.begin(), rows.end());
  csv::write_file(path, format_forecast_rows(kept));
}

ForecastRow scored(std::string model, std::string loss, std::string run, std::span<const double> y,
                   std::span<const double> f, std::string notes) {
  const auto m = regression_metrics(y, f);
  return {std::move(model), std::move(loss), std::move(run), m.n, m.mse, m.rmse, m.mae, std::move(notes)};
}

std::string checkpoint_name(Variant v, LossMode mode, int run) {
  return file_tag(v) + "_" + to_string(mode) + "_run" + std::to_string(run) + ".json";
}

void cmd_generate(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  Stage stage(out, config, "generate");
  ensure_dir(out);
  const Cohort cohort = generate_cohort(config.cohort_config());
  write_cohort(cohort, out);
  stage.artifact(out / "records.csv");
  stage.artifact(out / "traits.csv");
  stage.finish();
  log << "generate: " << cohort.profiles.size() << " users, " << cohort.records.size() << " records -> " << out.string()
      << "\n";
}

void cmd_pretrain(const ExperimentConfig& config, const fs::path& in, const fs::path& out, std::ostream& log) {
  Stage stage(out, config, "pretrain");
  ensure_dir(out / "checkpoints");
  const Prepared p = prepare(config, in);
  write_dataset_cache(out / "dataset", p.raw, p.scaler, p.split);
  stage.artifact(out / "dataset" / "manifest.txt");
  stage.artifact(out / "dataset" / "dataset.bin");

  const auto train_rows = rows_with_role(p.scaled, p.split, SplitSpec::Role::Train);
  const auto test_rows = rows_with_role(p.scaled, p.split, SplitSpec::Role::Test);
  const Tensor train_y = batch_y(p.scaled, train_rows);
  const Tensor test_y = batch_y(p.scaled, test_rows);

  std::vector<ForecastRow> rows;
  for (auto v : config.variants)
    for (auto mode : config.loss_modes)
      for (int run = 0; run < config.runs; ++run) {
        const auto cell = config.cell_config(v, mode, run);
        try {
          Step2HeartModel model(cell, cell.train.seed);
          model.init_head_bias(train_y.span());
          const auto tl = train(model, p.scaled, p.split);
          const auto f = predict(model, p.scaled, test_rows);
          const fs::path ckpt = out / "checkpoints" / checkpoint_name(v, mode, run);
          save_checkpoint(ckpt, model, p.scaler, p.split);
          stage.artifact(ckpt);
          rows.push_back(scored(to_string(v), to_string(mode), std::to_string(run), test_y.span(), f,
                                "best_epoch=" + std::to_string(tl.best_epoch)));
          log << "pretrain " << to_string(v) << " " << to_string(mode) << " run " << run << ": test rmse "
              << csv::fixed(rows.back().rmse, 4) << "\n";
        } catch (const Error& e) {
          rows.push_back({to_string(v), to_string(mode), std::to_string(run), 0, 0, 0, 0,
                          "failed: " + cell_text(e.what())});
          log << "pretrain " << to_string(v) << " " << to_string(mode) << " run " << run << " failed: " << e.what()
              << "\n";
        }
      }

  if (config.autoencoder) {
    AutoencoderModel ae(config.autoencoder_config(), config.pipeline.window, config.seed);
    const auto tl = train_autoencoder(ae, p.scaled, p.split);
    const fs::path ckpt = out / "checkpoints" / "autoencoder.json";
    save_checkpoint(ckpt, ae, p.scaler, p.split);
    stage.artifact(ckpt);
    log << "pretrain autoencoder: decoder filters " << ae.config().decoder_filters << ", best val "
        << csv::fixed(tl.best_val, 6) << "\n";
  }

  merge_forecast(out / "forecast.csv", with_summaries(rows), false);
  stage.artifact(out / "forecast.csv");
  stage.finish();
}

void cmd_baseline(const ExperimentConfig& config, const fs::path& in, const fs::path& out, std::ostream& log) {
  Stage stage(out, config, "baseline");
  ensure_dir(out);
  const Prepared p = prepare(config, in);
  const auto train_rows = rows_with_role(p.raw, p.split, SplitSpec::Role::Train);
  const auto test_rows = rows_with_role(p.raw, p.split, SplitSpec::Role::Test);
  const Tensor train_y = batch_y(p.raw, train_rows);
  const Tensor test_y = batch_y(p.raw, test_rows);

  std::vector<ForecastRow> rows;
  if (config.baseline_global_mean) {
    const std::vector<double> f(test_rows.size(), global_mean_baseline(train_y.span()));
    rows.push_back(scored("global-mean", "-", "0", test_y.span(), f, ""));
  }
  if (config.baseline_user_mean) {
    // Fitted on every user's full trace, held-out users included.
    std::vector<std::int64_t> users;
    std::vector<double> hr;
    for (const auto& r : p.cohort.records) {
      users.push_back(r.user_id);
      hr.push_back(r.hr);
    }
    UserMeanBaseline um;
    um.fit(users, hr);
    std::vector<double> f;
    for (auto r : test_rows) f.push_back(um.predict(p.raw.index[r].user_id));
    rows.push_back(scored("user-mean", "-", "0", test_y.span(), f, "oracle=true"));
  }
  if (config.baseline_gbt) {
    const auto features = [&](std::span<const std::size_t> idx) {
      std::vector<double> x;
      x.reserve(idx.size() * kStatFeatures);
      for (auto r : idx) {
        const auto f = extract_stat_features(p.raw.x_row(r), p.raw.m_row(r), p.raw.window);
        x.insert(x.end(), f.begin(), f.end());
      }
      return x;
    };
    const auto model = gbt_fit(features(train_rows), kStatFeatures, train_y.span(), config.gbt);
    const auto xt = features(test_rows);
    std::vector<double> f;
    for (std::size_t i = 0; i < test_rows.size(); ++i)
      f.push_back(model.predict(std::span<const double>(xt.data() + i * kStatFeatures, kStatFeatures)));
    csv::write_file(out / "gbt.txt", gbt_dump(model));
    stage.artifact(out / "gbt.txt");
    rows.push_back(scored("gbt", "mse", "0", test_y.span(), f,
                          "rounds=" + std::to_string(config.gbt.rounds) + ";depth=" + std::to_string(config.gbt.depth)));
  }
  for (const auto& r : rows) log << "baseline " << r.model << ": test rmse " << csv::fixed(r.rmse, 4) << "\n";
  merge_forecast(out / "forecast.csv", rows, true);
  stage.artifact(out / "forecast.csv");
  stage.finish();
}

void require_same_split(const Checkpoint& h, const DatasetCache& cache, const fs::path& ckpt) {
  if (h.split.train != cache.split.train || h.split.val != cache.split.val || h.split.test != cache.split.test)
    throw DataError(ckpt.string() + " was trained on a different user split than the dataset cache");
  if (h.scaler.seq_min != cache.scaler.seq_min || h.scaler.seq_max != cache.scaler.seq_max ||
      h.scaler.meta_min != cache.scaler.meta_min || h.scaler.meta_max != cache.scaler.meta_max)
    throw DataError(ckpt.string() + " carries a different scaler than the dataset cache");
}

void cmd_embed(const ExperimentConfig& config, const fs::path& in, const fs::path& out,
               const std::optional<fs::path>& checkpoint, std::ostream& log) {
  Stage stage(out, config, "embed");
  ensure_dir(out);
  const DatasetCache cache = read_dataset_cache(in / "dataset");
  const WindowedDataset scaled = cache.scaler.apply(cache.raw);
  std::vector<std::size_t> all(scaled.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::vector<std::pair<fs::path, fs::path>> jobs;  // checkpoint -> embedding file
  if (checkpoint) {
    const auto kind = read_checkpoint_header(*checkpoint).kind;
    const std::string tag = kind == "autoencoder" ? "autoencoder" : file_tag(load_step2heart(*checkpoint).config().variant);
    jobs.emplace_back(*checkpoint, out / ("embeddings_" + tag + ".csv"));
  } else {
    for (auto v : config.embed_variants)
      jobs.emplace_back(in / "checkpoints" / checkpoint_name(v, config.loss_modes.front(), 0),
                        out / ("embeddings_" + file_tag(v) + ".csv"));
    if (config.autoencoder) jobs.emplace_back(in / "checkpoints" / "autoencoder.json", out / "embeddings_autoencoder.csv");
  }
  for (const auto& [ckpt, dest] : jobs) {
    const auto header = read_checkpoint_header(ckpt);
    require_same_split(header, cache, ckpt);
    EmbeddingTable table;
    if (header.kind == "autoencoder") {
      auto ae = load_autoencoder(ckpt);
      table = autoencoder_encode(ae, scaled, all);
    } else {
      auto model = load_step2heart(ckpt);
      table = extract_embeddings(model, scaled, all);
    }
    write_embeddings(dest, table);
    stage.artifact(dest);
    log << "embed " << ckpt.filename().string() << ": " << table.rows() << " x " << table.dim << "\n";
  }
  std::string split = "train_users = ";
  const auto ids = [](const std::vector<std::int64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  split += ids(cache.split.train) + "\nval_users = " + ids(cache.split.val) + "\ntest_users = " + ids(cache.split.test) + "\n";
  csv::write_file(out / "split.txt", split);
  stage.artifact(out / "split.txt");
  stage.finish();
}

SplitSpec read_split(const fs::path& path) {
  SplitSpec s;
  const std::string text = csv::read_file(path);
  csv::LineReader lines(text);
  std::string_view line;
  while (lines.next(line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) continue;
    std::vector<std::int64_t> v;
    const auto value = line.substr(eq + 3);
    if (!value.empty())
      for (auto f : csv::split(value)) v.push_back(csv::to_int(f));
    const auto key = line.substr(0, eq);
    if (key == "train_users") s.train = v;
    if (key == "val_users") s.val = v;
    if (key == "test_users") s.test = v;
  }
  if (s.train.empty() || s.test.empty()) throw DataError(path.string() + ": missing train or test users");
  return s;
}

double trait_of(const UserProfile& p, const std::string& name) {
  if (name == "rhr") return p.rhr;
  if (name == "gain") return p.gain;
  if (name == "tau") return p.tau;
  if (name == "circ_amp") return p.circ_amp;
  if (name == "activity_level") return p.activity_level;
  throw ConfigError("unknown trait '" + name + "'");
}

void cmd_transfer(const ExperimentConfig& config, const fs::path& in, const fs::path& cohort_dir, const fs::path& out,
                  std::ostream& log) {
  Stage stage(out, config, "transfer");
  ensure_dir(out);
  std::vector<TransferSource> sources;
  for (auto v : config.embed_variants)
    sources.push_back({to_string(v), read_embeddings(in / ("embeddings_" + file_tag(v) + ".csv")), uses_rhr(v)});
  if (fs::exists(in / "embeddings_autoencoder.csv"))
    sources.push_back({"autoencoder", read_embeddings(in / "embeddings_autoencoder.csv"), false});
  if (sources.empty()) throw ConfigError("transfer: no embedding sources configured");

  const auto profiles = read_profiles(cohort_dir);
  std::vector<Trait> traits;
  for (const auto& name : config.traits) {
    Trait t{name, {}};
    for (const auto& p : profiles) t.values[p.user_id] = trait_of(p, name);
    traits.push_back(std::move(t));
  }

  // Training users for the probes are every user the forecaster saw during training.
  const SplitSpec split = read_split(in / "split.txt");
  std::vector<std::int64_t> fit_users = split.train;
  fit_users.insert(fit_users.end(), split.val.begin(), split.val.end());
  std::sort(fit_users.begin(), fit_users.end());

  TransferConfig tc;
  tc.cutoffs = config.cutoffs;
  tc.probe.lambda = config.probe_lambda;
  tc.seed = config.seed;
  const auto report = run_transfer_suite(sources, traits, fit_users, split.test, tc);
  csv::write_file(out / "transfer.csv", format_transfer_report(report));
  csv::write_file(out / "pca2d.csv", format_pca_coordinates(report));
  stage.artifact(out / "transfer.csv");
  stage.artifact(out / "pca2d.csv");
  stage.finish();
  log << format_transfer_report(report);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Activity-to-heart-rate forecasting experiments on a synthetic wearable cohort", "s2h"};
  app.require_subcommand(1);

  struct Common {
    std::string config, in, out;
    std::optional<std::uint64_t> seed;
  };
  Common common;
  std::string checkpoint, cohort;
  const auto add_common = [&](CLI::App* sub, bool needs_in) {
    sub->add_option("--config", common.config, "key = value experiment config (defaults when omitted)");
    auto* in = sub->add_option("--in", common.in, "input directory");
    if (needs_in) in->required();
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed", common.seed, "master seed, overrides the config");
  };
  auto* gen = app.add_subcommand("generate", "simulate a cohort into --out");
  add_common(gen, false);
  auto* pre = app.add_subcommand("pretrain", "train the forecasting grid on the cohort in --in");
  add_common(pre, true);
  auto* base = app.add_subcommand("baseline", "score the baselines on the cohort in --in");
  add_common(base, true);
  auto* emb = app.add_subcommand("embed", "extract embeddings from the pretrain directory --in");
  add_common(emb, true);
  emb->add_option("--checkpoint", checkpoint, "embed only this checkpoint");
  auto* tra = app.add_subcommand("transfer", "probe the embeddings in --in against the cohort traits");
  add_common(tra, true);
  tra->add_option("--cohort", cohort, "cohort directory holding traits.csv")->required();
  auto* keys = app.add_subcommand("config", "print the default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    if (keys->parsed()) {
      out << to_text(ExperimentConfig{});
      return 0;
    }
    ExperimentConfig config = common.config.empty() ? ExperimentConfig{} : load_config(common.config);
    if (common.seed) config.seed = *common.seed;
    config.validate();
    const fs::path outdir = common.out;
    if (gen->parsed()) cmd_generate(config, outdir, out);
    if (pre->parsed()) cmd_pretrain(config, common.in, outdir, out);
    if (base->parsed()) cmd_baseline(config, common.in, outdir, out);
    if (emb->parsed())
      cmd_embed(config, common.in, outdir, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), out);
    if (tra->parsed()) cmd_transfer(config, common.in, cohort, outdir, out);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::Data);
  }
}

}  // namespace s2h
