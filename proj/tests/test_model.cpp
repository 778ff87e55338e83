#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "s2h/datagen.hpp"
#include "s2h/error.hpp"
#include "s2h/model.hpp"
#include "support/temp_dir.hpp"

using namespace s2h;

namespace {

Step2HeartConfig tiny_config(Variant v, LossMode mode = LossMode::Joint) {
  Step2HeartConfig c;
  c.cnn_layers = 1;
  c.cnn_filters = 4;
  c.kernel = 3;
  c.gru_layers = 1;
  c.gru_units = 3;
  c.mlp_units = 2;
  c.variant = v;
  c.loss.mode = mode;
  c.train.max_epochs = 4;
  c.train.batch_size = 16;
  c.train.adam.lr = 0.01;
  return c;
}

struct TinyData {
  WindowedDataset raw, scaled;
  SplitSpec split;
  MinMaxScaler scaler;

  TinyData() {
    CohortConfig cc;
    cc.n_users = 5;
    cc.days = 1;
    cc.master_seed = 8;
    PipelineConfig pc;
    pc.window = 64;
    raw = build_dataset(generate_cohort(cc), pc);
    split = split_by_user({1, 2, 3, 4, 5}, 0.2, 0.1, 3);
    scaler.fit(raw, rows_with_role(raw, split, SplitSpec::Role::Train));
    scaled = scaler.apply(raw);
  }
  std::vector<std::size_t> rows(SplitSpec::Role r) const { return rows_with_role(scaled, split, r); }
};

std::size_t count_with_prefix(const ParameterSet& ps, const std::string& a, const std::string& b) {
  std::size_t n = 0;
  for (const auto& p : ps)
    if (p.name.rfind(a, 0) == 0 || p.name.rfind(b, 0) == 0) n += p.value.size();
  return n;
}

}  // namespace

TEST_CASE("variant names and metadata streams") {
  for (auto v : {Variant::A, Variant::AT, Variant::AR, Variant::ART}) CHECK(variant_from_string(to_string(v)) == v);
  CHECK(to_string(Variant::ART) == "A/R/T");
  CHECK(file_tag(Variant::ART) == "A-R-T");
  CHECK(variant_from_string("A-R") == Variant::AR);
  CHECK_THROWS_AS(variant_from_string("B"), ConfigError);
  CHECK(uses_rhr(Variant::AR));
  CHECK(!uses_rhr(Variant::AT));
  CHECK(uses_time(Variant::AT));
}

TEST_CASE("embedding width with the default widths") {
  Step2HeartConfig c;
  c.variant = Variant::A;
  CHECK(c.embedding_dim() == 256);
  c.variant = Variant::AT;
  CHECK(c.embedding_dim() == 384);
  c.variant = Variant::ART;
  CHECK(c.embedding_dim() == 512);
}

TEST_CASE("trunk parameter count matches a hand count and the built model") {
  // conv 5*6*128+128 + 5*128*128+128; gru per direction in*384 + 128*384 + 384, in = 128 then 256.
  const std::size_t conv = (5 * 6 * 128 + 128) + (5 * 128 * 128 + 128);
  const std::size_t gru = 2 * (128 * 384 + 128 * 384 + 384) + 2 * (256 * 384 + 128 * 384 + 384);
  Step2HeartConfig c;
  CHECK(trunk_parameter_count(c) == conv + gru);
  CHECK(trunk_parameter_count(c) == 579072);
  const auto tiny = tiny_config(Variant::AR);
  Step2HeartModel m(tiny, 1);
  CHECK(trunk_parameter_count(tiny) == count_with_prefix(m.params(), "conv", "gru"));
}

TEST_CASE("invalid model configs are rejected") {
  auto c = tiny_config(Variant::A);
  c.kernel = 4;
  CHECK_THROWS_AS(Step2HeartModel(c, 1), ConfigError);
  c = tiny_config(Variant::A);
  c.gru_units = 0;
  CHECK_THROWS_AS(Step2HeartModel(c, 1), ConfigError);
  c = tiny_config(Variant::A);
  c.train.batch_size = 0;
  CHECK_THROWS_AS(Step2HeartModel(c, 1), ConfigError);
}

TEST_CASE("early stopping trace") {
  EarlyStopping es(5);
  const std::vector<double> trace{5, 4, 4.1, 4.2, 4.3, 4.4, 4.5};
  std::vector<bool> stops;
  for (double v : trace) stops.push_back(es.update(v));
  CHECK(stops == std::vector<bool>{false, false, false, false, false, false, true});
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_value() == 4.0);
  EarlyStopping eq(2);
  eq.update(1.0);
  CHECK(!eq.update(1.0));
  CHECK(eq.update(1.0));  // equal is not an improvement
  CHECK_THROWS_AS(EarlyStopping(0), ConfigError);
}

TEST_CASE("zero head weights return the head bias") {
  TinyData d;
  for (auto mode : {LossMode::Joint, LossMode::MseOnly, LossMode::QuantileOnly}) {
    Step2HeartModel m(tiny_config(Variant::ART, mode), 2);
    const auto train_y = batch_y(d.scaled, d.rows(SplitSpec::Role::Train));
    m.init_head_bias(train_y.span());
    m.params().get("head.weight").value.fill(0.0);
    const std::vector<std::size_t> rows{0, 3, 9};
    const auto inf = infer(m, d.scaled, rows);
    const auto& bias = m.params().get("head.bias").value;
    const std::size_t W = m.config().loss.head_count();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < W; ++j) CHECK(inf.heads[i * W + j] == bias[j]);
    if (mode != LossMode::QuantileOnly) {
      double mean = 0;
      for (double y : train_y.span()) mean += y;
      CHECK(bias[0] == doctest::Approx(mean / static_cast<double>(train_y.size())));
    }
  }
}

TEST_CASE("inference matches a taped forward pass and predictions read the right head") {
  TinyData d;
  Step2HeartModel m(tiny_config(Variant::AT), 4);
  const std::vector<std::size_t> rows{1, 2, 40};
  const auto inf = infer(m, d.scaled, rows);
  Tape tape;
  const auto g = m.forward(tape, batch_x(d.scaled, rows), batch_meta(d.scaled, rows, std::vector<std::size_t>{0, 1, 2, 3, 4}), true);
  const auto& heads = tape.value(g.heads);
  const auto& emb = tape.value(g.embedding);
  for (std::size_t i = 0; i < heads.size(); ++i) CHECK(inf.heads[i] == heads.data()[i]);
  for (std::size_t i = 0; i < emb.size(); ++i) CHECK(inf.embeddings[i] == emb.data()[i]);
  CHECK(predict(m, d.scaled, rows) == point_from_heads(m.config(), inf.heads));
  // Joint heads are [point, q...]; the point column is the forecast.
  const std::size_t W = m.config().loss.head_count();
  CHECK(point_from_heads(m.config(), inf.heads)[2] == inf.heads[2 * W]);
  auto qc = tiny_config(Variant::AT, LossMode::QuantileOnly);
  const std::vector<double> qh{1, 2, 3, 4, 5};
  CHECK(point_from_heads(qc, qh) == std::vector<double>{3});

  const auto table = extract_embeddings(m, d.scaled, rows);
  CHECK(table.dim == m.config().embedding_dim());
  CHECK(table.users[2] == d.scaled.index[40].user_id);
  CHECK(table.values == inf.embeddings);
}

TEST_CASE("training lowers the loss and is deterministic") {
  TinyData d;
  const auto train_rows = d.rows(SplitSpec::Role::Train);
  Step2HeartModel a(tiny_config(Variant::AR), 5);
  Step2HeartModel b(tiny_config(Variant::AR), 5);
  a.init_head_bias(batch_y(d.scaled, train_rows).span());
  const double before = evaluate_loss(a, d.scaled, train_rows);
  const auto log = train(a, d.scaled, d.split);
  train(b, d.scaled, d.split);
  CHECK(!log.epochs.empty());
  CHECK(evaluate_loss(a, d.scaled, train_rows) < before);
  CHECK(log.best_val == doctest::Approx(evaluate_loss(a, d.scaled, d.rows(SplitSpec::Role::Val))));
  for (const auto& p : a.params()) {
    const std::span<const double> x = p.value.span(), y = b.params().get(p.name).value.span();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }

  WindowedDataset unscaled = d.raw;
  CHECK_THROWS_AS(train(a, unscaled, d.split), ConfigError);
}

TEST_CASE("checkpoints reload bit-exactly") {
  TinyData d;
  s2h::testing::TempDir dir("ckpt");
  Step2HeartModel m(tiny_config(Variant::ART, LossMode::QuantileOnly), 6);
  m.init_head_bias(batch_y(d.scaled, d.rows(SplitSpec::Role::Train)).span());
  save_checkpoint(dir.path() / "m.json", m, d.scaler, d.split);
  auto back = load_step2heart(dir.path() / "m.json");
  const auto rows = d.rows(SplitSpec::Role::Test);
  CHECK(predict(back, d.scaled, rows) == predict(m, d.scaled, rows));
  CHECK(back.config().variant == Variant::ART);
  CHECK(back.config().loss.mode == LossMode::QuantileOnly);
  const auto h = read_checkpoint_header(dir.path() / "m.json");
  CHECK(h.kind == "step2heart");
  CHECK(h.split.test == d.split.test);
  CHECK(h.scaler.seq_max == d.scaler.seq_max);
  CHECK_THROWS_AS(load_autoencoder(dir.path() / "m.json"), DataError);
  CHECK_THROWS_AS(load_step2heart(dir.path() / "missing.json"), DataError);
}

TEST_CASE("default autoencoder lands within 20% of the A trunk") {
  const std::size_t trunk = trunk_parameter_count(Step2HeartConfig{});
  AutoencoderConfig c;
  c.decoder_filters = match_decoder_filters(c, trunk);
  const auto n = static_cast<double>(autoencoder_parameter_count(c, c.decoder_filters));
  CHECK(std::abs(n / static_cast<double>(trunk) - 1.0) <= 0.2);
}

TEST_CASE("autoencoder shapes, parameter budget and training") {
  TinyData d;
  AutoencoderConfig c;
  c.cnn_layers = 1;
  c.cnn_filters = 4;
  c.kernel = 3;
  c.bottleneck = 128;
  c.train.max_epochs = 3;
  c.train.batch_size = 16;
  c.train.adam.lr = 0.01;
  const std::size_t target = 8000;
  c.decoder_filters = match_decoder_filters(c, target);
  AutoencoderModel m(c, 64, 3);
  std::size_t total = 0;
  for (const auto& p : m.params()) total += p.value.size();
  CHECK(total == autoencoder_parameter_count(c, c.decoder_filters));
  // The chosen width beats its neighbours.
  const auto gap = [&](std::size_t fd) {
    return std::abs(static_cast<double>(autoencoder_parameter_count(c, fd)) - static_cast<double>(target));
  };
  CHECK(gap(c.decoder_filters) <= gap(c.decoder_filters + 1));
  if (c.decoder_filters > 1) CHECK(gap(c.decoder_filters) < gap(c.decoder_filters - 1));

  const auto rows = d.rows(SplitSpec::Role::Train);
  const double before = reconstruction_loss(m, d.scaled, rows);
  train_autoencoder(m, d.scaled, d.split);
  CHECK(reconstruction_loss(m, d.scaled, rows) < before);
  const auto codes = autoencoder_encode(m, d.scaled, std::vector<std::size_t>{0, 1});
  CHECK(codes.dim == 128);
  CHECK(codes.rows() == 2);

  s2h::testing::TempDir dir("ae");
  save_checkpoint(dir.path() / "ae.json", m, d.scaler, d.split);
  auto back = load_autoencoder(dir.path() / "ae.json");
  CHECK(autoencoder_encode(back, d.scaled, std::vector<std::size_t>{0, 1}).values == codes.values);

  auto bad = c;
  bad.decoder_filters = 0;
  CHECK_THROWS_AS(AutoencoderModel(bad, 64, 1), ConfigError);
  CHECK_THROWS_AS(AutoencoderModel(c, 60, 1), ConfigError);
}
