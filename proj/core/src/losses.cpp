#include "hialign/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hialign/errors.hpp"

namespace hialign {

namespace {

// Cosine similarity layer with its backward pass.
struct CosineLayer {
  Matrix a_unit;
  Matrix b_unit;
  std::vector<double> a_norm;
  std::vector<double> b_norm;
  Matrix sims;

  CosineLayer(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
      throw ShapeError("similarity: embedding widths differ (" + a.shape_string() + " vs " + b.shape_string() + ")");
    }
    a_unit = normalize(a, a_norm, "left");
    b_unit = normalize(b, b_norm, "right");
    sims = matmul_nt(a_unit, b_unit);
  }

  static Matrix normalize(const Matrix& m, std::vector<double>& norms, const char* side) {
    Matrix out = m;
    norms.resize(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double n = norm2(m.row(r));
      if (!(n > kNormEpsilon)) {
        throw DegenerateInputError(std::string("degenerate ") + side + " embedding at row " + std::to_string(r));
      }
      norms[r] = n;
      for (double& x : out.row(r)) x /= n;
    }
    return out;
  }

  // d(unit)/d(raw) for one row: (g - (g . u) u) / ||raw||
  static Matrix through_normalization(Matrix grad_unit, const Matrix& unit, const std::vector<double>& norms) {
    for (std::size_t r = 0; r < grad_unit.rows(); ++r) {
      auto g = grad_unit.row(r);
      const auto u = unit.row(r);
      const double radial = dot(g, u);
      for (std::size_t c = 0; c < g.size(); ++c) g[c] = (g[c] - radial * u[c]) / norms[r];
    }
    return grad_unit;
  }

  // grad_sims = dL/dS; returns (dL/da, dL/db).
  std::pair<Matrix, Matrix> backward(const Matrix& grad_sims) const {
    Matrix ga = matmul(grad_sims, b_unit);
    Matrix gb = matmul_tn(grad_sims, a_unit);
    return {through_normalization(std::move(ga), a_unit, a_norm),
            through_normalization(std::move(gb), b_unit, b_norm)};
  }
};

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericError(std::string(what) + ": non-finite loss value");
}

Matrix gather_slot(const Matrix& m, std::size_t rois, std::size_t slot) {
  const std::size_t batch = m.rows() / rois;
  Matrix out(batch, m.cols());
  for (std::size_t i = 0; i < batch; ++i) out.set_row(i, m.row(i * rois + slot));
  return out;
}

void scatter_slot(Matrix& dst, const Matrix& src, std::size_t rois, std::size_t slot) {
  for (std::size_t i = 0; i < src.rows(); ++i) dst.set_row(i * rois + slot, src.row(i));
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("loss: tau must be > 0");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidArgument("loss: lambda weights must be >= 0");
  if (!(delta >= -1.0 && delta <= 1.0)) throw InvalidArgument("loss: delta must lie in [-1, 1]");
}

std::vector<std::pair<std::size_t, std::size_t>> mismatched_pairs(std::span<const std::size_t> labels) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] != labels[j]) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

double cosine_sim(const Matrix& u, const Matrix& v) {
  if (u.size() != v.size()) throw ShapeError("cosine_sim: length mismatch");
  const double nu = norm2(u.values());
  const double nv = norm2(v.values());
  if (!(nu > kNormEpsilon) || !(nv > kNormEpsilon)) throw DegenerateInputError("cosine_sim: degenerate vector");
  return dot(u.values(), v.values()) / (nu * nv);
}

Matrix sim_matrix(const Matrix& a, const Matrix& b) { return CosineLayer(a, b).sims; }

LossOutput infonce_loss(const Matrix& queries, const Matrix& keys, std::span<const std::size_t> targets,
                        double tau, double weight) {
  if (queries.rows() == 0) throw InvalidArgument("infonce: empty batch");
  if (targets.size() != queries.rows()) throw ShapeError("infonce: one target per query row required");
  CosineLayer layer(queries, keys);
  const std::size_t n = queries.rows();
  const std::size_t m = keys.rows();
  Matrix grad_sims(n, m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= m) throw InvalidArgument("infonce: target index out of range");
    const auto s = layer.sims.row(i);
    double peak = s[0] / tau;
    for (std::size_t j = 1; j < m; ++j) peak = std::max(peak, s[j] / tau);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(s[j] / tau - peak);
    const double log_denom = peak + std::log(denom);
    total += log_denom - s[targets[i]] / tau;
    auto g = grad_sims.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp(s[j] / tau - log_denom);
      g[j] = weight * (p - (j == targets[i] ? 1.0 : 0.0)) / tau;
    }
  }
  LossOutput out;
  out.value = weight * total;
  check_finite(out.value, "infonce");
  std::tie(out.grad_img, out.grad_text) = layer.backward(grad_sims);
  return out;
}

LossOutput global_loss(const Matrix& z_img, const Matrix& z_text, const LossConfig& cfg) {
  require_same_shape(z_img, z_text, "global_loss");
  const std::size_t batch = z_img.rows();
  if (batch == 0) throw InvalidArgument("global_loss: empty batch");
  std::vector<std::size_t> targets(batch);
  for (std::size_t i = 0; i < batch; ++i) targets[i] = i;
  return infonce_loss(z_img, z_text, targets, cfg.tau, 1.0 / double(batch));
}

LossOutput local_loss(const Matrix& z_roi, const Matrix& z_text_fine, std::size_t rois, const LossConfig& cfg) {
  require_same_shape(z_roi, z_text_fine, "local_loss");
  if (rois == 0) throw InvalidArgument("local_loss: ROI count must be >= 1");
  if (z_roi.rows() == 0 || z_roi.rows() % rois != 0) {
    throw ShapeError("local_loss: row count " + std::to_string(z_roi.rows()) + " is not a positive multiple of " +
                     std::to_string(rois));
  }
  const std::size_t batch = z_roi.rows() / rois;
  std::vector<std::size_t> targets(batch);
  for (std::size_t i = 0; i < batch; ++i) targets[i] = i;
  const double weight = 1.0 / (double(batch) * double(rois));

  LossOutput out;
  out.grad_img = Matrix(z_roi.rows(), z_roi.cols());
  out.grad_text = Matrix(z_roi.rows(), z_roi.cols());
  for (std::size_t k = 0; k < rois; ++k) {
    LossOutput slot = infonce_loss(gather_slot(z_roi, rois, k), gather_slot(z_text_fine, rois, k), targets,
                                   cfg.tau, weight);
    out.value += slot.value;
    scatter_slot(out.grad_img, slot.grad_img, rois, k);
    scatter_slot(out.grad_text, slot.grad_text, rois, k);
  }
  return out;
}

LossOutput cross_loss(const Matrix& z_img, const Matrix& z_text, std::span<const std::size_t> labels,
                      const LossConfig& cfg) {
  require_same_shape(z_img, z_text, "cross_loss");
  if (labels.size() != z_img.rows()) throw ShapeError("cross_loss: one label per row required");
  CosineLayer layer(z_img, z_text);
  const auto pairs = mismatched_pairs(labels);
  LossOutput out;
  if (pairs.empty()) {
    out.grad_img = Matrix(z_img.rows(), z_img.cols());
    out.grad_text = Matrix(z_text.rows(), z_text.cols());
    return out;
  }
  const double inv = 1.0 / double(pairs.size());
  Matrix grad_sims(z_img.rows(), z_text.rows());
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    const double excess = layer.sims(i, j) - cfg.delta;
    if (excess > 0.0) {
      total += excess;
      grad_sims(i, j) = inv;
    }
  }
  out.value = total * inv;
  check_finite(out.value, "cross_loss");
  std::tie(out.grad_img, out.grad_text) = layer.backward(grad_sims);
  return out;
}

HicaOutput hica_loss(const HicaBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const LossOutput g = global_loss(batch.z_img, batch.z_text, cfg);
  const LossOutput l = local_loss(batch.z_roi, batch.z_text_fine, batch.rois, cfg);
  const LossOutput c = cross_loss(batch.z_img, batch.z_text, batch.labels, cfg);
  if (batch.z_roi.rows() != batch.z_img.rows() * batch.rois) {
    throw ShapeError("hica_loss: ROI rows must equal batch size times ROI count");
  }
  const double wg = cfg.global_weight();

  HicaOutput out;
  out.global = g.value;
  out.local = l.value;
  out.cross = c.value;
  out.value = wg * g.value + cfg.lambda1 * l.value + cfg.lambda2 * c.value;
  out.grad_img = g.grad_img * wg + c.grad_img * cfg.lambda2;
  out.grad_text = g.grad_text * wg + c.grad_text * cfg.lambda2;
  out.grad_roi = l.grad_img * cfg.lambda1;
  out.grad_text_fine = l.grad_text * cfg.lambda1;
  check_finite(out.value, "hica_loss");
  return out;
}

}  // namespace hialign
