#include "hialign/protocols.hpp"

#include <algorithm>
#include <sstream>

#include "hialign/errors.hpp"
#include "hialign/io.hpp"

namespace hialign {

namespace {

Dataset without(const Dataset& ds, const std::vector<std::size_t>& held_out) {
  std::vector<bool> drop(ds.samples.size(), false);
  for (auto i : held_out) drop[i] = true;
  Dataset out = ds;
  out.samples.clear();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (!drop[i]) out.samples.push_back(ds.samples[i]);
  }
  return out;
}

TrainedModel train_with(const ExperimentConfig& cfg, const Dataset& ds, std::size_t k_shot,
                        const TrainConfig& train) {
  TrainedModel m;
  m.k_shot = k_shot;
  m.episode = episode_for(cfg, ds, k_shot);
  auto [image, text] = init_encoders(cfg, ds.spec.image_dim, ds.spec.text_dim);
  Stage1Result s1 = stage1_pretrain(image, text, without(ds, m.episode.query_index), train);
  Stage2Result s2 = stage2_align(s1.image, s1.text, m.episode.support, ds.descriptors, train);
  m.image = std::move(s2.image);
  m.text = std::move(s2.text);
  m.log = std::move(s1.log);
  m.log.append(s2.log);
  m.image_state = std::move(s2.image_state);
  m.text_state = std::move(s2.text_state);
  return m;
}

std::string rate_label(double rate) { return format_double(rate); }

}  // namespace

Dataset load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path) return generate_dataset(cfg.dataset);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(*cfg.dataset_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("dataset file '" + *cfg.dataset_path + "' is not valid JSON: " + e.what());
  }
  return dataset_from_json(j);
}

std::pair<Encoder, Encoder> init_encoders(const ExperimentConfig& cfg, std::size_t image_dim, std::size_t text_dim) {
  Rng image_rng(derive_seed(cfg.seed, "init/image"));
  Rng text_rng(derive_seed(cfg.seed, "init/text"));
  return {init_encoder(cfg.model.kind, image_dim, cfg.model.hidden_dim, cfg.model.embed_dim, image_rng),
          init_encoder(cfg.model.kind, text_dim, cfg.model.hidden_dim, cfg.model.embed_dim, text_rng)};
}

Episode episode_for(const ExperimentConfig& cfg, const Dataset& ds, std::size_t k_shot) {
  Rng rng(derive_seed(cfg.seed, "episode/shot=" + std::to_string(k_shot)));
  return sample_episode(ds, k_shot, cfg.protocol.query_per_class, rng);
}

TrainedModel train_model(const ExperimentConfig& cfg, const Dataset& ds, std::size_t k_shot) {
  return train_with(cfg, ds, k_shot, cfg.train);
}

MetricsReport evaluate_queries(const TrainedModel& model, const ExperimentConfig& cfg, const Dataset& ds,
                               const std::string& variant) {
  MetricsReport r = evaluate(model.image, model.text, model.episode.query, ds.descriptors,
                             {cfg.protocol.roi_weight}, variant);
  r.seed = cfg.seed;
  return r;
}

MetricsReport run_experiment(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = raw.resolved();
  const Dataset ds = load_or_generate(cfg);
  const TrainedModel model = train_model(cfg, ds, cfg.protocol.k_shot);
  return evaluate_queries(model, cfg, ds, "full");
}

std::vector<MetricsReport> run_ablation(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = raw.resolved();
  const Dataset ds = load_or_generate(cfg);
  struct Variant {
    const char* tag;
    TrainConfig train;
  };
  std::vector<Variant> variants(4, Variant{"", cfg.train});
  variants[0].tag = "full";
  variants[1].tag = "no_local";
  variants[1].train.loss.lambda1 = 0.0;
  variants[2].tag = "no_cross";
  variants[2].train.loss.lambda2 = 0.0;
  variants[3].tag = "no_global";
  variants[3].train.loss.use_global = false;

  std::vector<MetricsReport> rows;
  for (const auto& v : variants) {
    const TrainedModel model = train_with(cfg, ds, cfg.protocol.k_shot, v.train);
    rows.push_back(evaluate_queries(model, cfg, ds, v.tag));
  }
  return rows;
}

std::vector<MetricsReport> run_robustness(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = raw.resolved();
  const Dataset ds = load_or_generate(cfg);
  const TrainedModel model = train_model(cfg, ds, cfg.protocol.k_shot);
  std::vector<MetricsReport> rows;
  rows.push_back(evaluate_queries(model, cfg, ds, "clean"));
  for (auto mode : cfg.protocol.noise_modes) {
    for (double rate : cfg.protocol.noise_rates) {
      Rng rng(derive_seed(cfg.seed, "robustness/" + to_string(mode) + "/" + rate_label(rate)));
      const DescriptorSet noisy = corrupt_descriptors(ds.descriptors, rate, mode, rng);
      MetricsReport r =
          evaluate(model.image, model.text, model.episode.query, noisy, {cfg.protocol.roi_weight}, "noisy");
      r.seed = cfg.seed;
      r.noise_mode = to_string(mode);
      r.noise_rate = rate;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

GeneralizationReport run_generalization(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = raw.resolved();
  const Dataset ds = load_or_generate(cfg);
  Rng split_rng(derive_seed(cfg.seed, "split"));
  const auto [seen, unseen] = split_seen_unseen(ds, cfg.protocol.unseen_fraction, split_rng);

  const TrainedModel model = train_model(cfg, seen, cfg.protocol.k_shot);
  GeneralizationReport out;
  out.seen = evaluate_queries(model, cfg, seen, "seen");
  out.unseen = evaluate(model.image, model.text, unseen.samples, unseen.descriptors, {cfg.protocol.roi_weight},
                        "unseen");
  out.unseen.seed = cfg.seed;
  const auto [image0, text0] = init_encoders(cfg, ds.spec.image_dim, ds.spec.text_dim);
  out.unseen_untrained =
      evaluate(image0, text0, unseen.samples, unseen.descriptors, {cfg.protocol.roi_weight}, "unseen_untrained");
  out.unseen_untrained.seed = cfg.seed;
  return out;
}

std::string reports_to_csv(const std::vector<MetricsReport>& rows) {
  std::ostringstream out;
  out << "variant,accuracy,auc,n,seed,noise_mode,noise_rate\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << format_double(r.accuracy) << ',' << format_double(r.auc) << ',' << r.n_samples << ','
        << r.seed << ',' << r.noise_mode << ',' << format_double(r.noise_rate) << '\n';
  }
  return out.str();
}

nlohmann::json report_to_json(const MetricsReport& r) {
  return {{"variant", r.variant},       {"accuracy", r.accuracy},     {"auc", r.auc},
          {"per_class_accuracy", r.per_class_accuracy}, {"n", r.n_samples}, {"seed", r.seed},
          {"noise_mode", r.noise_mode}, {"noise_rate", r.noise_rate}};
}

nlohmann::json reports_document(const ExperimentConfig& cfg, const std::vector<MetricsReport>& rows) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rows) list.push_back(report_to_json(r));
  nlohmann::json config = config_to_json(cfg);
  config.erase("output_dir");
  return {{"config", std::move(config)}, {"reports", std::move(list)}};
}

}  // namespace hialign
