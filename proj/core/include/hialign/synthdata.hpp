#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hialign/matrix.hpp"
#include "hialign/rng.hpp"

namespace hialign {

struct DatasetSpec {
  std::size_t class_count = 4;
  std::size_t per_class = 50;
  std::size_t rois = 3;        // K
  std::size_t image_dim = 16;  // p
  std::size_t text_dim = 12;   // q
  double noise_sigma = 0.3;
  double separability = 3.0;   // prototype norm
  // Fraction of disjoint class pairs (0,1), (2,3), ... that share one global
  // prototype and differ only through their ROI prototypes.
  double confusable_fraction = 0.5;
  double descriptor_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Sample {
  Matrix global;  // 1 x p
  Matrix rois;    // K x p
  std::size_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ClassDescriptor {
  Matrix coarse;  // 1 x q
  Matrix fine;    // K x q

  friend bool operator==(const ClassDescriptor&, const ClassDescriptor&) = default;
};

struct DescriptorSet {
  std::vector<ClassDescriptor> classes;

  std::size_t class_count() const { return classes.size(); }
  friend bool operator==(const DescriptorSet&, const DescriptorSet&) = default;
};

struct Dataset {
  DatasetSpec spec;
  std::size_t class_count = 0;
  std::size_t rois = 0;
  std::vector<Sample> samples;
  DescriptorSet descriptors;
  // original_class[c] is the id class c had in the generated dataset; identity
  // unless the dataset came out of split_seen_unseen.
  std::vector<std::size_t> original_class;

  Matrix global_features() const;  // N x p
  std::vector<std::size_t> labels() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Episode {
  std::vector<std::size_t> support_index;  // indices into the source dataset
  std::vector<std::size_t> query_index;
  std::vector<Sample> support;
  std::vector<Sample> query;
};

enum class CorruptionMode { append_irrelevant, random_replace };

std::string to_string(CorruptionMode mode);
CorruptionMode corruption_mode_from_string(const std::string& name);

// ceil(fraction * n), robust to representation error (0.3 * 10 -> 3).
std::size_t ceil_count(double fraction, std::size_t n);

Dataset generate_dataset(const DatasetSpec& spec);

// Per class, k_shot support and query_per_class query samples drawn without
// replacement. Support and query lists are ordered by class.
Episode sample_episode(const Dataset& ds, std::size_t k_shot, std::size_t query_per_class, Rng& rng);

// Corrupts ceil(noise_rate * class_count) randomly chosen classes (coarse and
// fine descriptors alike).
DescriptorSet corrupt_descriptors(const DescriptorSet& descriptors, double noise_rate, CorruptionMode mode,
                                  Rng& rng);

// Partitions classes into seen and unseen halves; ceil(unseen_fraction * C)
// classes become unseen. Class ids are remapped densely in ascending order of
// their original ids.
std::pair<Dataset, Dataset> split_seen_unseen(const Dataset& ds, double unseen_fraction, Rng& rng);

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec);
// Fills `spec` from the keys present in j; unknown keys are rejected.
void dataset_spec_from_json(const nlohmann::json& j, DatasetSpec& spec, const std::string& path);

}  // namespace hialign
