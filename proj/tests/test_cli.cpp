#include <doctest.h>

#include <random>
#include <sstream>

#include "s2h/cli.hpp"
#include "s2h/csv.hpp"
#include "s2h/error.hpp"
#include "support/temp_dir.hpp"

using namespace s2h;

namespace {

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "s2h");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

const char* kTinyConfig = R"(# smallest useful run
cohort.n_users = 12
cohort.days = 1
pipeline.window = 64
model.cnn_layers = 1
model.cnn_filters = 3
model.gru_layers = 1
model.gru_units = 3
model.mlp_units = 2
model.variants = A, A/R/T
transfer.sources = A/R/T
loss.modes = joint
train.max_epochs = 2
train.runs = 2
train.batch_size = 32
baseline.gbt_rounds = 5
)";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("default config round-trips through text") {
  const ExperimentConfig c;
  const std::string text = to_text(c);
  CHECK(to_text(parse_config(text)) == text);
  CHECK(config_hash(parse_config(text)) == config_hash(c));
  CHECK(count_lines(text) == config_keys().size());
  CHECK(text.find("train.patience = 5\n") != std::string::npos);
  CHECK(text.find("train.max_epochs = 300\n") != std::string::npos);
  CHECK(text.find("loss.quantiles = 0.01,0.05,0.5,0.95,0.99\n") != std::string::npos);
  CHECK(text.find("model.cnn_filters = 128\n") != std::string::npos);
}

TEST_CASE("property: random configs round-trip and the hash tracks every change") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.01, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig c;
    c.seed = rng();
    c.cohort.gain_cv = u(rng);
    c.pipeline.test_fraction = u(rng);
    c.model.train.adam.lr = u(rng) / 7.0;
    c.model.gru_units = 1 + rng() % 200;
    c.cutoffs = {0.5 + u(rng), 0.999};
    c.baseline_gbt = rng() % 2;
    const auto back = parse_config(to_text(c));
    CHECK(to_text(back) == to_text(c));
    CHECK(back.model.train.adam.lr == c.model.train.adam.lr);
    CHECK(back.seed == c.seed);

    ExperimentConfig d = c;
    d.cohort.rhr_sd = c.cohort.rhr_sd + 1e-9;
    CHECK(config_hash(d) != config_hash(c));
  }
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(parse_config("nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("cohort.days = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.variants = A,B\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("loss.quantiles = 0.5,0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("baseline.gbt = yes\n"), ConfigError);
  auto c = parse_config("transfer.sources = A/R\nmodel.variants = A\n");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(ExperimentConfig{}.validate());
  CHECK_THROWS_AS(load_config("/nonexistent/config.conf"), ConfigError);
}

TEST_CASE("forecast summaries are the mean and sample std of the runs") {
  std::vector<ForecastRow> runs{{"A", "joint", "0", 10, 4.0, 2.0, 1.0, ""},
                                {"A", "joint", "1", 10, 9.0, 3.0, 2.0, ""},
                                {"A", "joint", "2", 0, 0, 0, 0, "failed: x"},
                                {"A/R", "joint", "0", 10, 1.0, 1.0, 1.0, ""}};
  const auto rows = with_summaries(runs);
  REQUIRE(rows.size() == 8);
  CHECK(rows[4].run == "mean");
  CHECK(rows[4].mse == 6.5);
  CHECK(rows[4].rmse == 2.5);
  CHECK(rows[5].run == "std");
  CHECK(rows[5].rmse == doctest::Approx(std::sqrt(0.5)));
  CHECK(rows[7].rmse == 0.0);
  const auto text = format_forecast_rows(rows);
  CHECK(text.rfind(std::string(kForecastHeader) + "\n", 0) == 0);
  const auto back = parse_forecast_rows(text);
  REQUIRE(back.size() == rows.size());
  CHECK(back[2].notes == "failed: x");
  CHECK(back[4].mse == 6.5);
}

TEST_CASE("exit codes") {
  s2h::testing::TempDir dir("cli_exit");
  CHECK(cli({}) == 1);
  CHECK(cli({"frobnicate"}) == 1);
  CHECK(cli({"generate"}) == 1);
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"pretrain", "--in", (dir.path() / "missing").string(), "--out", (dir.path() / "o").string()}) == 2);
  csv::write_file(dir.path() / "bad.conf", "cohort.n_users = 1\n");
  CHECK(cli({"generate", "--config", (dir.path() / "bad.conf").string(), "--out", (dir.path() / "g").string()}) == 1);
  CHECK(cli({"generate", "--out", "/proc/self/forbidden/x"}) == 2);
}

TEST_CASE("end-to-end run emits the documented reports, deterministically") {
  s2h::testing::TempDir dir("cli_e2e");
  const auto conf = (dir.path() / "tiny.conf").string();
  csv::write_file(conf, kTinyConfig);
  const auto run = [&](const std::string& tag) {
    const auto root = dir.path() / tag;
    const auto p = [&](const char* sub) { return (root / sub).string(); };
    REQUIRE(cli({"generate", "--config", conf, "--out", p("cohort")}) == 0);
    REQUIRE(cli({"pretrain", "--config", conf, "--in", p("cohort"), "--out", p("pre")}) == 0);
    REQUIRE(cli({"baseline", "--config", conf, "--in", p("cohort"), "--out", p("pre")}) == 0);
    REQUIRE(cli({"embed", "--config", conf, "--in", p("pre"), "--out", p("emb")}) == 0);
    REQUIRE(cli({"transfer", "--config", conf, "--in", p("emb"), "--cohort", p("cohort"), "--out", p("tr")}) == 0);
    return root;
  };
  const auto a = run("a");
  const auto b = run("b");

  const auto forecast = csv::read_file(a / "pre" / "forecast.csv");
  const auto rows = parse_forecast_rows(forecast);
  // 2 variants x 2 runs, plus mean and std per variant, plus 3 baselines.
  CHECK(rows.size() == 2 * 2 + 2 * 2 + 3);
  CHECK(forecast.find("user-mean,-,0,") != std::string::npos);
  CHECK(forecast.find(",oracle=true\n") != std::string::npos);
  CHECK(forecast.find(",rounds=5;depth=3\n") != std::string::npos);
  for (const auto& r : rows)
    if (r.run == "mean" && r.model == "A") {
      double s = 0;
      for (const auto& q : rows)
        if (q.model == "A" && q.run != "mean" && q.run != "std") s += q.rmse;
      CHECK(r.rmse == doctest::Approx(s / 2.0).epsilon(1e-6));
    }

  const auto transfer = csv::read_file(a / "tr" / "transfer.csv");
  // (A/R/T + autoencoder) x 3 traits x 4 cutoffs, plus header.
  CHECK(count_lines(transfer) == 1 + 2 * 3 * 4);
  CHECK(transfer.find("A/R/T,rhr,0.999,N/A,N/A\n") != std::string::npos);
  CHECK(transfer.find("autoencoder,rhr,0.9,") != std::string::npos);
  CHECK(csv::read_file(a / "emb" / "embeddings_A-R-T.csv").rfind("user_id,window_start,e0,", 0) == 0);

  for (const char* f : {"cohort/records.csv", "cohort/traits.csv", "pre/forecast.csv", "emb/embeddings_A-R-T.csv",
                        "emb/embeddings_autoencoder.csv", "tr/transfer.csv", "tr/pca2d.csv"})
    CHECK_MESSAGE(csv::read_file(a / f) == csv::read_file(b / f), f);

  const auto manifest = RunManifest::read_or_empty(a / "pre" / "manifest.txt");
  REQUIRE(manifest.entries.size() == 2);
  CHECK(manifest.entries[0].stage == "pretrain");
  CHECK(manifest.entries[1].stage == "baseline");
  CHECK(manifest.config_hash == config_hash(load_config(conf)));
  for (const auto& e : manifest.entries)
    for (const auto& f : e.artifacts) CHECK_MESSAGE(std::filesystem::exists(f), f);

  // Embedding a checkpoint against a dataset with another split is an alignment error.
  const auto other = (dir.path() / "other.conf").string();
  csv::write_file(other, std::string(kTinyConfig) + "seed = 7\n");
  const auto c2 = dir.path() / "c2";
  REQUIRE(cli({"generate", "--config", other, "--out", (c2 / "cohort").string()}) == 0);
  REQUIRE(cli({"pretrain", "--config", other, "--in", (c2 / "cohort").string(), "--out", (c2 / "pre").string()}) == 0);
  CHECK(cli({"embed", "--config", conf, "--in", (c2 / "pre").string(), "--out", (c2 / "emb").string(), "--checkpoint",
             (a / "pre" / "checkpoints" / "A-R-T_joint_run0.json").string()}) == 2);
}
