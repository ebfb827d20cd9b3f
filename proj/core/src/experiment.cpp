#include "hialign/experiment.hpp"

#include "hialign/errors.hpp"
#include "hialign/io.hpp"
#include "json_fields.hpp"

namespace hialign {

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig out = *this;
  out.dataset.seed = derive_seed(seed, "dataset");
  out.train.seed = derive_seed(seed, "train");
  return out;
}

void ExperimentConfig::validate() const {
  try {
    dataset.validate();
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (model.embed_dim == 0) throw ConfigError("config: model.embed_dim must be >= 1");
  if (model.kind == EncoderKind::mlp1 && model.hidden_dim == 0) {
    throw ConfigError("config: model.hidden_dim must be >= 1 for mlp1");
  }
  if (protocol.shots.empty()) throw ConfigError("config: protocol.shots must not be empty");
  for (auto s : protocol.shots) {
    if (s == 0) throw ConfigError("config: protocol.shots entries must be >= 1");
  }
  if (protocol.k_shot == 0) throw ConfigError("config: protocol.k_shot must be >= 1");
  if (protocol.query_per_class == 0) throw ConfigError("config: protocol.query_per_class must be >= 1");
  for (double r : protocol.noise_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("config: protocol.noise_rates entries must lie in [0, 1]");
  }
  if (!(protocol.roi_weight >= 0.0)) throw ConfigError("config: protocol.roi_weight must be >= 0");
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json dataset = dataset_spec_to_json(cfg.dataset);
  dataset.erase("seed");
  if (cfg.dataset_path) dataset["path"] = *cfg.dataset_path;
  std::vector<std::string> modes;
  for (auto m : cfg.protocol.noise_modes) modes.push_back(to_string(m));
  return {{"seed", cfg.seed},
          {"dataset", std::move(dataset)},
          {"model", {{"kind", to_string(cfg.model.kind)}, {"hidden_dim", cfg.model.hidden_dim},
                     {"embed_dim", cfg.model.embed_dim}}},
          {"train", train_config_to_json(cfg.train)},
          {"loss", loss_config_to_json(cfg.train.loss)},
          {"protocol", {{"shots", cfg.protocol.shots},
                        {"k_shot", cfg.protocol.k_shot},
                        {"query_per_class", cfg.protocol.query_per_class},
                        {"noise_rates", cfg.protocol.noise_rates},
                        {"noise_modes", modes},
                        {"unseen_fraction", cfg.protocol.unseen_fraction},
                        {"roi_weight", cfg.protocol.roi_weight}}},
          {"output_dir", cfg.output_dir}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::FieldReader root(j, "");
  root.required("seed", cfg.seed);
  root.optional("output_dir", cfg.output_dir);

  nlohmann::json dataset = *root.section("dataset", true);
  if (!dataset.is_object()) throw ConfigError("config: 'dataset' must be an object");
  if (dataset.contains("seed")) {
    throw ConfigError("config: field 'dataset.seed' is not allowed; the dataset seed derives from 'seed'");
  }
  if (dataset.contains("path")) {
    if (!dataset["path"].is_string()) throw ConfigError("config: field 'dataset.path' has the wrong type");
    cfg.dataset_path = dataset["path"].get<std::string>();
    dataset.erase("path");
  }
  dataset_spec_from_json(dataset, cfg.dataset, "dataset");

  if (const auto* model = root.section("model", false)) {
    detail::FieldReader r(*model, "model");
    std::string kind = to_string(cfg.model.kind);
    r.optional("kind", kind);
    cfg.model.kind = encoder_kind_from_string(kind);
    r.optional("hidden_dim", cfg.model.hidden_dim);
    r.optional("embed_dim", cfg.model.embed_dim);
    r.finish();
  }
  if (const auto* train = root.section("train", false)) train_config_from_json(*train, cfg.train, "train");
  if (const auto* loss = root.section("loss", false)) loss_config_from_json(*loss, cfg.train.loss, "loss");
  if (const auto* protocol = root.section("protocol", false)) {
    detail::FieldReader r(*protocol, "protocol");
    r.optional("shots", cfg.protocol.shots);
    r.optional("k_shot", cfg.protocol.k_shot);
    r.optional("query_per_class", cfg.protocol.query_per_class);
    r.optional("noise_rates", cfg.protocol.noise_rates);
    std::vector<std::string> modes;
    if (r.optional("noise_modes", modes)) {
      cfg.protocol.noise_modes.clear();
      for (const auto& m : modes) cfg.protocol.noise_modes.push_back(corruption_mode_from_string(m));
    }
    r.optional("unseen_fraction", cfg.protocol.unseen_fraction);
    r.optional("roi_weight", cfg.protocol.roi_weight);
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig default_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  return cfg;
}

}  // namespace hialign
