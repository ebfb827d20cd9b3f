#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "hialign/matrix.hpp"

namespace hialign {

struct LossConfig {
  double tau = 0.07;
  double lambda1 = 1.0;  // local alignment weight
  double lambda2 = 1.0;  // cross-category separation weight
  double delta = 0.2;    // separation margin on cosine similarity
  // Ablation switch: false drops the global term from the value and gradients.
  bool use_global = true;

  void validate() const;
  double global_weight() const { return use_global ? 1.0 : 0.0; }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_img;
  Matrix grad_text;
};

using Labels = std::vector<std::size_t>;

// All (i, j) with labels[i] != labels[j], in row-major order.
std::vector<std::pair<std::size_t, std::size_t>> mismatched_pairs(std::span<const std::size_t> labels);

double cosine_sim(const Matrix& u, const Matrix& v);

// Entry (i, j) is the cosine similarity of row i of a and row j of b.
Matrix sim_matrix(const Matrix& a, const Matrix& b);

// Temperature-scaled softmax cross-entropy over cosine similarities:
//   weight * sum_i -log softmax_j(sim(q_i, k_j) / tau)[targets[i]]
// This is the shared kernel behind the global, local and prototype losses.
// grad_img is w.r.t. queries, grad_text w.r.t. keys.
LossOutput infonce_loss(const Matrix& queries, const Matrix& keys, std::span<const std::size_t> targets,
                        double tau, double weight);

// In-batch InfoNCE: image row i is positive with text row i.
LossOutput global_loss(const Matrix& z_img, const Matrix& z_text, const LossConfig& cfg);

// ROI-level InfoNCE. z_roi and z_text_fine hold B*rois rows; row i*rois + k is
// slot k of sample i. Negatives for slot k are the other samples' slot-k
// descriptors, and the per-slot losses are averaged.
LossOutput local_loss(const Matrix& z_roi, const Matrix& z_text_fine, std::size_t rois, const LossConfig& cfg);

// Mean hinge max(0, sim(img_i, text_j) - delta) over image-text pairs with
// different labels. Zero (with zero gradients) when no such pair exists.
LossOutput cross_loss(const Matrix& z_img, const Matrix& z_text, std::span<const std::size_t> labels,
                      const LossConfig& cfg);

struct HicaBatch {
  Matrix z_img;        // B x d
  Matrix z_text;       // B x d, coarse descriptor of each sample's class
  Matrix z_roi;        // (B * rois) x d
  Matrix z_text_fine;  // (B * rois) x d
  Labels labels;       // B
  std::size_t rois = 1;
};

struct HicaOutput {
  double value = 0.0;
  double global = 0.0;
  double local = 0.0;
  double cross = 0.0;
  Matrix grad_img;
  Matrix grad_text;
  Matrix grad_roi;
  Matrix grad_text_fine;
};

// global + lambda1 * local + lambda2 * cross, with the global term dropped when
// cfg.use_global is false. Component values are always reported.
HicaOutput hica_loss(const HicaBatch& batch, const LossConfig& cfg);

}  // namespace hialign
