#include <json.hpp>

#include "s2h/csv.hpp"
#include "s2h/error.hpp"
#include "s2h/model.hpp"

namespace s2h {

namespace {

using nlohmann::json;

json train_json(const TrainConfig& t) {
  return {{"lr", t.adam.lr},         {"beta1", t.adam.beta1},           {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},       {"max_epochs", t.max_epochs},       {"patience", t.patience},
          {"batch_size", t.batch_size}, {"seed", t.seed}};
}

TrainConfig train_from(const json& j) {
  TrainConfig t;
  t.adam.lr = j.at("lr");
  t.adam.beta1 = j.at("beta1");
  t.adam.beta2 = j.at("beta2");
  t.adam.eps = j.at("eps");
  t.max_epochs = j.at("max_epochs");
  t.patience = j.at("patience");
  t.batch_size = j.at("batch_size");
  t.seed = j.at("seed");
  return t;
}

json params_json(const ParameterSet& params) {
  json out = json::object();
  for (const auto& p : params) out[p.name] = {{"shape", p.value.shape()}, {"data", p.value.values()}};
  return out;
}

void load_params(ParameterSet& params, const json& j) {
  if (j.size() != params.size()) throw DataError("checkpoint parameter count differs from the configured model");
  for (auto& p : params) {
    if (!j.contains(p.name)) throw DataError("checkpoint is missing parameter " + p.name);
    const auto& e = j.at(p.name);
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != p.value.shape())
      throw DataError("checkpoint parameter " + p.name + " has shape " + shape_str(shape) + ", model expects " +
                      shape_str(p.value.shape()));
    p.value = Tensor(shape, e.at("data").get<std::vector<double>>());
  }
}

json scaler_json(const MinMaxScaler& s) {
  return {{"seq_min", s.seq_min}, {"seq_max", s.seq_max}, {"meta_min", s.meta_min}, {"meta_max", s.meta_max}};
}

json split_json(const SplitSpec& s) { return {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) { csv::write_file(path, j.dump(1) + "\n"); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Step2HeartModel& model, const MinMaxScaler& scaler,
                     const SplitSpec& split) {
  const auto& c = model.config();
  json cfg = {{"cnn_layers", c.cnn_layers},
              {"cnn_filters", c.cnn_filters},
              {"kernel", c.kernel},
              {"gru_layers", c.gru_layers},
              {"gru_units", c.gru_units},
              {"mlp_units", c.mlp_units},
              {"variant", to_string(c.variant)},
              {"loss", {{"mode", to_string(c.loss.mode)},
                        {"mse_weight", c.loss.mse_weight},
                        {"quantiles", c.loss.quantiles.levels()}}},
              {"train", train_json(c.train)}};
  write_json(path, {{"kind", "step2heart"},
                    {"config", cfg},
                    {"scaler", scaler_json(scaler)},
                    {"split", split_json(split)},
                    {"params", params_json(model.params())}});
}

void save_checkpoint(const std::filesystem::path& path, const AutoencoderModel& model, const MinMaxScaler& scaler,
                     const SplitSpec& split) {
  const auto& c = model.config();
  json cfg = {{"cnn_layers", c.cnn_layers},   {"cnn_filters", c.cnn_filters},
              {"kernel", c.kernel},           {"bottleneck", c.bottleneck},
              {"coarse_steps", c.coarse_steps}, {"decoder_filters", c.decoder_filters},
              {"window", model.window()},     {"train", train_json(c.train)}};
  write_json(path, {{"kind", "autoencoder"},
                    {"config", cfg},
                    {"scaler", scaler_json(scaler)},
                    {"split", split_json(split)},
                    {"params", params_json(model.params())}});
}

Checkpoint read_checkpoint_header(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    Checkpoint c;
    c.kind = j.at("kind");
    const auto& s = j.at("scaler");
    c.scaler.set(s.at("seq_min"), s.at("seq_max"), s.at("meta_min"), s.at("meta_max"));
    c.split.train = j.at("split").at("train").get<std::vector<std::int64_t>>();
    c.split.val = j.at("split").at("val").get<std::vector<std::int64_t>>();
    c.split.test = j.at("split").at("test").get<std::vector<std::int64_t>>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Step2HeartModel load_step2heart(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    if (j.at("kind") != "step2heart") throw DataError(path.string() + " is not a step2heart checkpoint");
    const auto& cj = j.at("config");
    Step2HeartConfig c;
    c.cnn_layers = cj.at("cnn_layers");
    c.cnn_filters = cj.at("cnn_filters");
    c.kernel = cj.at("kernel");
    c.gru_layers = cj.at("gru_layers");
    c.gru_units = cj.at("gru_units");
    c.mlp_units = cj.at("mlp_units");
    c.variant = variant_from_string(cj.at("variant"));
    c.loss.mode = loss_mode_from_string(cj.at("loss").at("mode"));
    c.loss.mse_weight = cj.at("loss").at("mse_weight");
    c.loss.quantiles = QuantileSet(cj.at("loss").at("quantiles").get<std::vector<double>>());
    c.train = train_from(cj.at("train"));
    Step2HeartModel model(c, 0);
    load_params(model.params(), j.at("params"));
    return model;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

AutoencoderModel load_autoencoder(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    if (j.at("kind") != "autoencoder") throw DataError(path.string() + " is not an autoencoder checkpoint");
    const auto& cj = j.at("config");
    AutoencoderConfig c;
    c.cnn_layers = cj.at("cnn_layers");
    c.cnn_filters = cj.at("cnn_filters");
    c.kernel = cj.at("kernel");
    c.bottleneck = cj.at("bottleneck");
    c.coarse_steps = cj.at("coarse_steps");
    c.decoder_filters = cj.at("decoder_filters");
    c.train = train_from(cj.at("train"));
    AutoencoderModel model(c, cj.at("window").get<std::size_t>(), 0);
    load_params(model.params(), j.at("params"));
    return model;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace s2h
