#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hialign/experiment.hpp"
#include "hialign/metrics.hpp"

namespace hialign {

struct TrainedModel {
  Encoder image;
  Encoder text;
  TrainLog log;
  OptimState image_state;
  OptimState text_state;
  Episode episode;
  std::size_t k_shot = 0;
};

// Generates the configured dataset, or reads it when dataset_path is set.
// Expects a resolved config.
Dataset load_or_generate(const ExperimentConfig& cfg);

// Randomly initialized encoders for the config's dimensions.
std::pair<Encoder, Encoder> init_encoders(const ExperimentConfig& cfg, std::size_t image_dim, std::size_t text_dim);

// Episode for `k_shot`; query samples are held out of Stage 1 as well.
Episode episode_for(const ExperimentConfig& cfg, const Dataset& ds, std::size_t k_shot);

// Full two-stage run: Stage 1 on every non-query sample, Stage 2 on the
// k-shot support set. Expects a resolved config.
TrainedModel train_model(const ExperimentConfig& cfg, const Dataset& ds, std::size_t k_shot);

MetricsReport evaluate_queries(const TrainedModel& model, const ExperimentConfig& cfg, const Dataset& ds,
                               const std::string& variant);

// Default single run: train at protocol.k_shot and evaluate the queries.
MetricsReport run_experiment(const ExperimentConfig& cfg);

// Rows: full, no_local (lambda1 = 0), no_cross (lambda2 = 0), no_global.
std::vector<MetricsReport> run_ablation(const ExperimentConfig& cfg);

// Clean row first, then one row per (mode, rate) in config order.
std::vector<MetricsReport> run_robustness(const ExperimentConfig& cfg);

struct GeneralizationReport {
  MetricsReport seen;
  MetricsReport unseen;
  MetricsReport unseen_untrained;  // random-init encoders on the unseen classes
};

GeneralizationReport run_generalization(const ExperimentConfig& cfg);

// variant,accuracy,auc,n,seed,noise_mode,noise_rate
std::string reports_to_csv(const std::vector<MetricsReport>& rows);
nlohmann::json report_to_json(const MetricsReport& r);
// {config, reports}; the embedded config omits output_dir so artifacts do not depend on where they are written.
nlohmann::json reports_document(const ExperimentConfig& cfg, const std::vector<MetricsReport>& rows);

}  // namespace hialign
