#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hialign/encoder.hpp"
#include "hialign/synthdata.hpp"
#include "hialign/trainer.hpp"

namespace hialign {

struct ModelConfig {
  EncoderKind kind = EncoderKind::linear;
  std::size_t hidden_dim = 16;  // mlp1 only
  std::size_t embed_dim = 8;    // shared embedding width d

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ProtocolConfig {
  std::vector<std::size_t> shots{1, 5, 10, 20};  // cmd_train sweep
  std::size_t k_shot = 20;                       // shot count used by eval and the protocol runners
  std::size_t query_per_class = 30;
  std::vector<double> noise_rates{0.0, 0.3, 0.6, 1.0};
  std::vector<CorruptionMode> noise_modes{CorruptionMode::append_irrelevant, CorruptionMode::random_replace};
  double unseen_fraction = 0.5;
  double roi_weight = 1.0;

  friend bool operator==(const ProtocolConfig&, const ProtocolConfig&) = default;
};

// One JSON document describing an entire experiment. Every random stream is
// derived from `seed` by label (see resolved()).
struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  std::optional<std::string> dataset_path;  // read instead of generating when set
  ModelConfig model;
  TrainConfig train;
  ProtocolConfig protocol;
  std::string output_dir = "out";

  // Copy with dataset.seed and train.seed filled in from the master seed.
  ExperimentConfig resolved() const;
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Requires "seed" and "dataset" (with class_count and per_class); everything
// else falls back to defaults. Unknown fields are errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Default experiment: 4 classes x 50 samples, K = 3, d = 8, 20-shot.
ExperimentConfig default_config(std::uint64_t seed = 7);

}  // namespace hialign
