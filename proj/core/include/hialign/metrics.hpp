#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hialign/encoder.hpp"
#include "hialign/synthdata.hpp"

namespace hialign {

struct Prediction {
  std::size_t index = 0;       // position in the evaluated sample list
  std::vector<double> scores;  // one per class
  std::size_t predicted = 0;   // argmax, lowest class id on ties

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ClassifyOptions {
  // Weight of the ROI-level term. Score for class j is
  //   (cos(img, coarse_j) + w * mean_k cos(roi_k, fine_jk)) / (1 + w)
  // so w = 0 is plain nearest-text-embedding classification.
  double roi_weight = 1.0;
};

std::vector<Prediction> classify(const Encoder& image, const Encoder& text, const std::vector<Sample>& samples,
                                 const DescriptorSet& descriptors, const ClassifyOptions& opts = {});

std::size_t argmax_lowest(std::span<const double> scores);

double accuracy(const std::vector<Prediction>& preds, std::span<const std::size_t> labels);

// Mann-Whitney estimate of ROC AUC: fraction of (positive, negative) pairs
// ranked correctly, ties credited 1/2. labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

// One-vs-rest AUC per class present in labels (using that class's score
// column), macro-averaged. Classes that are absent, or that cover every
// sample, are skipped.
double multiclass_auc(const std::vector<Prediction>& preds, std::span<const std::size_t> labels);

struct MetricsReport {
  std::string variant;
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<double> per_class_accuracy;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double noise_rate = 0.0;
  std::string noise_mode;  // empty unless produced by the robustness runner

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport evaluate(const Encoder& image, const Encoder& text, const std::vector<Sample>& samples,
                       const DescriptorSet& descriptors, const ClassifyOptions& opts, const std::string& variant);

}  // namespace hialign
