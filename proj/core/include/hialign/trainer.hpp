#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hialign/encoder.hpp"
#include "hialign/kmeans.hpp"
#include "hialign/losses.hpp"
#include "hialign/synthdata.hpp"

namespace hialign {

struct TrainConfig {
  std::size_t stage1_epochs = 30;
  std::size_t stage2_epochs = 50;
  // Stage-2 minibatch size; 0 means "number of classes in the support set".
  std::size_t batch_size = 0;
  std::size_t stage1_batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  std::size_t clusters = 0;  // Stage-1 k; 0 means the dataset's class count
  std::size_t kmeans_restarts = 5;
  std::size_t kmeans_max_iter = 100;
  double text_noise = 0.1;        // Stage-1 perturbation scale for descriptor copies
  std::size_t text_copies = 4;    // perturbed copies per descriptor
  bool freeze_image = false;
  bool freeze_text = false;
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Adam moments for one encoder.
struct OptimState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimState for_encoder(const Encoder& enc, const TrainConfig& cfg);
  friend bool operator==(const OptimState&, const OptimState&) = default;
};

struct EpochRecord {
  std::string stage;
  std::size_t epoch = 0;
  double total = 0.0;
  double global = 0.0;
  double local = 0.0;
  double cross = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over the epoch's steps

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  std::vector<EpochRecord> records;

  void append(const TrainLog& other);
  // Header: stage,epoch,total,global,local,cross,grad_norm
  std::string to_csv() const;
};

// In-place Adam update with bias correction. Throws NumericError on
// non-finite gradients.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, OptimState& state);

// Scales grads so their joint L2 norm is <= max_norm and returns the norm
// measured before clipping.
double clip_gradients(std::vector<EncoderGrads*> grads, double max_norm);

double gradient_norm(const std::vector<const EncoderGrads*>& grads);

struct Stage1Result {
  Encoder image;
  Encoder text;
  TrainLog log;
  KMeansResult clusters;
};

// Pseudo-label pretraining of the image encoder plus descriptor
// self-alignment of the text encoder.
Stage1Result stage1_pretrain(const Encoder& image, const Encoder& text, const Dataset& ds, const TrainConfig& cfg);

struct Stage2Result {
  Encoder image;
  Encoder text;
  TrainLog log;
  OptimState image_state;
  OptimState text_state;
  // Parameters after every optimizer step, when requested.
  std::vector<std::pair<Encoder, Encoder>> trajectory;
};

struct Stage2Options {
  bool record_trajectory = false;
};

// Joint global + local + cross optimization on the support set.
Stage2Result stage2_align(const Encoder& image, const Encoder& text, const std::vector<Sample>& support,
                          const DescriptorSet& descriptors, const TrainConfig& cfg, const Stage2Options& opts = {});

// Reference trainer that only knows the global InfoNCE term. Shares batching
// and optimizer code with stage2_align but never touches ROI features.
Stage2Result train_global_only(const Encoder& image, const Encoder& text, const std::vector<Sample>& support,
                               const DescriptorSet& descriptors, const TrainConfig& cfg,
                               const Stage2Options& opts = {});

// Minibatches for one epoch: classes are interleaved round-robin so that a
// batch repeats a class only when it is larger than the class count.
std::vector<std::vector<std::size_t>> assemble_batches(const std::vector<Sample>& support, std::size_t batch_size,
                                                       Rng& rng);

nlohmann::json optim_state_to_json(const OptimState& state);
OptimState optim_state_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
void train_config_from_json(const nlohmann::json& j, TrainConfig& cfg, const std::string& path);
nlohmann::json loss_config_to_json(const LossConfig& cfg);
void loss_config_from_json(const nlohmann::json& j, LossConfig& cfg, const std::string& path);

}  // namespace hialign
