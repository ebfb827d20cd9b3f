#include "hialign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hialign/errors.hpp"
#include "hialign/io.hpp"
#include "json_fields.hpp"

namespace hialign {

namespace {

// Re-throws e with a prefix while keeping its concrete type.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ShapeError& e) {
    throw ShapeError(context + ": " + e.what());
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(context + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(context + ": " + e.what());
  } catch (const Error& e) {
    throw Error(context + ": " + e.what());
  }
}

std::string epoch_context(const char* stage, std::size_t epoch) {
  return std::string(stage) + " epoch " + std::to_string(epoch);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.set_row(i, m.row(rows[i]));
  return out;
}

struct EpochAccumulator {
  double total = 0.0, global = 0.0, local = 0.0, cross = 0.0, grad_norm = 0.0;
  std::size_t steps = 0;

  EpochRecord finish(const std::string& stage, std::size_t epoch) const {
    const double n = steps == 0 ? 1.0 : double(steps);
    return {stage, epoch, total / n, global / n, local / n, cross / n, grad_norm / n};
  }
};

// Step both encoders after joint clipping; frozen encoders are neither
// clipped against nor updated.
double apply_update(Encoder& image, Encoder& text, EncoderGrads& gi, EncoderGrads& gt, OptimState& si,
                    OptimState& st, const TrainConfig& cfg) {
  std::vector<EncoderGrads*> active;
  if (!cfg.freeze_image) active.push_back(&gi);
  if (!cfg.freeze_text) active.push_back(&gt);
  const double norm = clip_gradients(active, cfg.clip_norm);
  if (!cfg.freeze_image) adam_step(image.params, gi.params, si);
  if (!cfg.freeze_text) adam_step(text.params, gt.params, st);
  return norm;
}

struct SupportTensors {
  Matrix global;      // N x p
  Matrix rois;        // (N*K) x p
  Matrix coarse;      // N x q, descriptor of each sample's class
  Matrix fine;        // (N*K) x q
  Labels labels;
  std::size_t rois_per_sample = 1;
};

SupportTensors stack_support(const std::vector<Sample>& support, const DescriptorSet& descriptors) {
  if (support.empty()) throw InvalidArgument("stage2: support set is empty");
  SupportTensors t;
  const std::size_t k = support.front().rois.rows();
  t.rois_per_sample = k;
  std::vector<Matrix> g, r, c, f;
  for (const auto& s : support) {
    if (s.label >= descriptors.class_count()) {
      throw InvalidArgument("stage2: no descriptor for class " + std::to_string(s.label));
    }
    if (s.rois.rows() != k) throw ShapeError("stage2: inconsistent ROI count in support set");
    const auto& d = descriptors.classes[s.label];
    if (d.fine.rows() != k) throw ShapeError("stage2: fine descriptor count differs from ROI count");
    g.push_back(s.global);
    r.push_back(s.rois);
    c.push_back(d.coarse);
    f.push_back(d.fine);
    t.labels.push_back(s.label);
  }
  t.global = vstack(g);
  t.rois = vstack(r);
  t.coarse = vstack(c);
  t.fine = vstack(f);
  return t;
}

std::vector<std::size_t> expand_rois(std::span<const std::size_t> batch, std::size_t k) {
  std::vector<std::size_t> rows;
  rows.reserve(batch.size() * k);
  for (auto i : batch) {
    for (std::size_t j = 0; j < k; ++j) rows.push_back(i * k + j);
  }
  return rows;
}

std::size_t effective_batch(const TrainConfig& cfg, const Labels& labels) {
  if (cfg.batch_size != 0) return cfg.batch_size;
  std::vector<std::size_t> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  return std::size_t(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
}

template <typename StepFn>
Stage2Result run_stage2(const Encoder& image, const Encoder& text, const std::vector<Sample>& support,
                        const TrainConfig& cfg, const Stage2Options& opts, const char* stage, StepFn&& step) {
  cfg.validate();
  Stage2Result res{image, text, {}, OptimState::for_encoder(image, cfg), OptimState::for_encoder(text, cfg), {}};
  if (cfg.stage2_epochs == 0) return res;
  if (support.empty()) throw InvalidArgument("stage2: support set is empty");
  Labels labels;
  for (const auto& s : support) labels.push_back(s.label);
  const std::size_t batch_size = effective_batch(cfg, labels);
  Rng rng = Rng(cfg.seed).derive("stage2/batches");
  for (std::size_t epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
    EpochAccumulator acc;
    try {
      for (const auto& batch : assemble_batches(support, batch_size, rng)) {
        step(res, batch, acc);
        if (opts.record_trajectory) res.trajectory.emplace_back(res.image, res.text);
      }
    } catch (const Error&) {
      rethrow_with_context(epoch_context(stage, epoch));
    }
    res.log.records.push_back(acc.finish(stage, epoch));
  }
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  if (stage1_batch_size == 0) throw InvalidArgument("train: stage1_batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("train: learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("train: epsilon must be > 0");
  if (!(clip_norm > 0.0)) throw InvalidArgument("train: clip_norm must be > 0");
  if (text_copies == 0) throw InvalidArgument("train: text_copies must be >= 1");
}

OptimState OptimState::for_encoder(const Encoder& enc, const TrainConfig& cfg) {
  OptimState s;
  for (const auto& p : enc.params) {
    s.first_moment.emplace_back(p.rows(), p.cols());
    s.second_moment.emplace_back(p.rows(), p.cols());
  }
  s.learning_rate = cfg.learning_rate;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.epsilon = cfg.epsilon;
  return s;
}

void TrainLog::append(const TrainLog& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "stage,epoch,total,global,local,cross,grad_norm\n";
  for (const auto& r : records) {
    out << r.stage << ',' << r.epoch << ',' << format_double(r.total) << ',' << format_double(r.global) << ','
        << format_double(r.local) << ',' << format_double(r.cross) << ',' << format_double(r.grad_norm) << '\n';
  }
  return out.str();
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, OptimState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and state lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    require_same_shape(params[i], state.first_moment[i], "adam_step state");
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    const auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double gradient_norm(const std::vector<const EncoderGrads*>& grads) {
  double sq = 0.0;
  for (const auto* g : grads) {
    for (const auto& m : g->params) {
      for (double x : m.values()) sq += x * x;
    }
  }
  return std::sqrt(sq);
}

double clip_gradients(std::vector<EncoderGrads*> grads, double max_norm) {
  std::vector<const EncoderGrads*> view(grads.begin(), grads.end());
  const double norm = gradient_norm(view);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return norm;
  std::vector<EncoderGrads> original;
  for (auto* g : grads) original.push_back(*g);
  double scale = max_norm / norm;
  for (;;) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (std::size_t j = 0; j < grads[i]->params.size(); ++j) grads[i]->params[j] = original[i].params[j] * scale;
    }
    if (gradient_norm(view) <= max_norm) break;
    scale = std::nextafter(scale, 0.0);
  }
  return norm;
}

std::vector<std::vector<std::size_t>> assemble_batches(const std::vector<Sample>& support, std::size_t batch_size,
                                                       Rng& rng) {
  if (batch_size == 0) throw InvalidArgument("batch size must be >= 1");
  std::size_t classes = 0;
  for (const auto& s : support) classes = std::max(classes, s.label + 1);
  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < support.size(); ++i) pools[support[i].label].push_back(i);
  for (auto& pool : pools) rng.shuffle(std::span<std::size_t>(pool));

  std::vector<std::size_t> order;
  order.reserve(support.size());
  std::vector<std::size_t> cursor(classes, 0);
  std::vector<std::size_t> class_order(classes);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  while (order.size() < support.size()) {
    rng.shuffle(std::span<std::size_t>(class_order));
    for (auto c : class_order) {
      if (cursor[c] < pools[c].size()) order.push_back(pools[c][cursor[c]++]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
  }
  return batches;
}

Stage1Result stage1_pretrain(const Encoder& image, const Encoder& text, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  Stage1Result res{image, text, {}, {}};
  if (cfg.stage1_epochs == 0) return res;
  if (ds.samples.empty()) throw InvalidArgument("stage1: dataset is empty");
  const Rng master(cfg.seed);

  const Matrix features = ds.global_features();
  KMeansOptions km;
  km.k = cfg.clusters == 0 ? ds.class_count : cfg.clusters;
  km.restarts = cfg.kmeans_restarts;
  km.max_iter = cfg.kmeans_max_iter;
  try {
    res.clusters = kmeans(features, km, master.derive("stage1/kmeans"));
  } catch (const Error&) {
    rethrow_with_context("stage1 clustering");
  }
  const auto& pseudo = res.clusters.assignments;

  // Descriptor corpus: every coarse and fine row, plus fixed perturbed copies.
  std::vector<Matrix> rows;
  for (const auto& d : ds.descriptors.classes) {
    rows.push_back(d.coarse);
    rows.push_back(d.fine);
  }
  const Matrix clean = vstack(rows);
  Rng noise_rng = master.derive("stage1/text-noise");
  std::vector<Matrix> copies;
  for (std::size_t r = 0; r < cfg.text_copies; ++r) {
    Matrix c = clean;
    for (double& x : c.values()) x += cfg.text_noise * noise_rng.normal();
    copies.push_back(std::move(c));
  }

  OptimState image_state = OptimState::for_encoder(image, cfg);
  OptimState text_state = OptimState::for_encoder(text, cfg);
  Rng batch_rng = master.derive("stage1/image-batches");
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double tau = cfg.loss.tau;

  for (std::size_t epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    try {
      if (!cfg.freeze_image) {
        EpochAccumulator acc;
        batch_rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.stage1_batch_size) {
          const std::size_t end = std::min(order.size(), start + cfg.stage1_batch_size);
          const std::span<const std::size_t> idx(order.data() + start, end - start);
          const Matrix x = gather_rows(features, idx);
          std::vector<std::size_t> targets;
          for (auto i : idx) targets.push_back(pseudo[i]);
          const Matrix z = forward(res.image, x);
          const Matrix protos = forward(res.image, res.clusters.centroids);
          const LossOutput out = infonce_loss(z, protos, targets, tau, 1.0 / double(idx.size()));
          EncoderGrads g = backward(res.image, x, out.grad_img);
          g += backward(res.image, res.clusters.centroids, out.grad_text);
          const double norm = clip_gradients({&g}, cfg.clip_norm);
          adam_step(res.image.params, g.params, image_state);
          acc.total += out.value;
          acc.global += out.value;
          acc.grad_norm += norm;
          ++acc.steps;
        }
        res.log.records.push_back(acc.finish("stage1_image", epoch));
      }
      if (!cfg.freeze_text) {
        EpochAccumulator acc;
        for (const auto& copy : copies) {
          const Matrix z_clean = forward(res.text, clean);
          const Matrix z_copy = forward(res.text, copy);
          const LossOutput out = global_loss(z_clean, z_copy, cfg.loss);
          EncoderGrads g = backward(res.text, clean, out.grad_img);
          g += backward(res.text, copy, out.grad_text);
          const double norm = clip_gradients({&g}, cfg.clip_norm);
          adam_step(res.text.params, g.params, text_state);
          acc.total += out.value;
          acc.global += out.value;
          acc.grad_norm += norm;
          ++acc.steps;
        }
        res.log.records.push_back(acc.finish("stage1_text", epoch));
      }
    } catch (const Error&) {
      rethrow_with_context(epoch_context("stage1", epoch));
    }
  }
  return res;
}

Stage2Result stage2_align(const Encoder& image, const Encoder& text, const std::vector<Sample>& support,
                          const DescriptorSet& descriptors, const TrainConfig& cfg, const Stage2Options& opts) {
  const SupportTensors t = stack_support(support, descriptors);
  return run_stage2(image, text, support, cfg, opts, "stage2",
                    [&](Stage2Result& res, std::span<const std::size_t> batch, EpochAccumulator& acc) {
                      const auto roi_rows = expand_rois(batch, t.rois_per_sample);
                      const Matrix xg = gather_rows(t.global, batch);
                      const Matrix xr = gather_rows(t.rois, roi_rows);
                      const Matrix tc = gather_rows(t.coarse, batch);
                      const Matrix tf = gather_rows(t.fine, roi_rows);
                      HicaBatch hb;
                      hb.z_img = forward(res.image, xg);
                      hb.z_roi = forward(res.image, xr);
                      hb.z_text = forward(res.text, tc);
                      hb.z_text_fine = forward(res.text, tf);
                      for (auto i : batch) hb.labels.push_back(t.labels[i]);
                      hb.rois = t.rois_per_sample;
                      const HicaOutput out = hica_loss(hb, cfg.loss);

                      EncoderGrads gi = backward(res.image, xg, out.grad_img);
                      gi += backward(res.image, xr, out.grad_roi);
                      EncoderGrads gt = backward(res.text, tc, out.grad_text);
                      gt += backward(res.text, tf, out.grad_text_fine);
                      acc.grad_norm +=
                          apply_update(res.image, res.text, gi, gt, res.image_state, res.text_state, cfg);
                      acc.total += out.value;
                      acc.global += out.global;
                      acc.local += out.local;
                      acc.cross += out.cross;
                      ++acc.steps;
                    });
}

Stage2Result train_global_only(const Encoder& image, const Encoder& text, const std::vector<Sample>& support,
                               const DescriptorSet& descriptors, const TrainConfig& cfg, const Stage2Options& opts) {
  const SupportTensors t = stack_support(support, descriptors);
  return run_stage2(image, text, support, cfg, opts, "global_only",
                    [&](Stage2Result& res, std::span<const std::size_t> batch, EpochAccumulator& acc) {
                      const Matrix xg = gather_rows(t.global, batch);
                      const Matrix tc = gather_rows(t.coarse, batch);
                      const LossOutput out = global_loss(forward(res.image, xg), forward(res.text, tc), cfg.loss);
                      EncoderGrads gi = backward(res.image, xg, out.grad_img);
                      EncoderGrads gt = backward(res.text, tc, out.grad_text);
                      acc.grad_norm +=
                          apply_update(res.image, res.text, gi, gt, res.image_state, res.text_state, cfg);
                      acc.total += out.value;
                      acc.global += out.value;
                      ++acc.steps;
                    });
}

nlohmann::json optim_state_to_json(const OptimState& state) {
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < state.first_moment.size(); ++i) {
    m.push_back(state.first_moment[i].data());
    v.push_back(state.second_moment[i].data());
    shapes.push_back({state.first_moment[i].rows(), state.first_moment[i].cols()});
  }
  return {{"step", state.step},         {"learning_rate", state.learning_rate},
          {"beta1", state.beta1},       {"beta2", state.beta2},
          {"epsilon", state.epsilon},   {"shapes", std::move(shapes)},
          {"first_moment", std::move(m)}, {"second_moment", std::move(v)}};
}

OptimState optim_state_from_json(const nlohmann::json& j) {
  try {
    OptimState s;
    s.step = j.at("step").get<std::size_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    const auto& shapes = j.at("shapes");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const auto r = shapes[i].at(0).get<std::size_t>();
      const auto c = shapes[i].at(1).get<std::size_t>();
      s.first_moment.emplace_back(r, c, j.at("first_moment").at(i).get<std::vector<double>>());
      s.second_moment.emplace_back(r, c, j.at("second_moment").at(i).get<std::vector<double>>());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed optimizer state JSON: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("optimizer state: ") + e.what());
  }
}

nlohmann::json loss_config_to_json(const LossConfig& cfg) {
  return {{"tau", cfg.tau},
          {"lambda1", cfg.lambda1},
          {"lambda2", cfg.lambda2},
          {"delta", cfg.delta},
          {"use_global", cfg.use_global}};
}

void loss_config_from_json(const nlohmann::json& j, LossConfig& cfg, const std::string& path) {
  detail::FieldReader r(j, path);
  r.optional("tau", cfg.tau);
  r.optional("lambda1", cfg.lambda1);
  r.optional("lambda2", cfg.lambda2);
  r.optional("delta", cfg.delta);
  r.optional("use_global", cfg.use_global);
  r.finish();
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"stage1_epochs", cfg.stage1_epochs},
          {"stage2_epochs", cfg.stage2_epochs},
          {"batch_size", cfg.batch_size},
          {"stage1_batch_size", cfg.stage1_batch_size},
          {"learning_rate", cfg.learning_rate},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},
          {"clip_norm", cfg.clip_norm},
          {"clusters", cfg.clusters},
          {"kmeans_restarts", cfg.kmeans_restarts},
          {"kmeans_max_iter", cfg.kmeans_max_iter},
          {"text_noise", cfg.text_noise},
          {"text_copies", cfg.text_copies},
          {"freeze_image", cfg.freeze_image},
          {"freeze_text", cfg.freeze_text}};
}

void train_config_from_json(const nlohmann::json& j, TrainConfig& cfg, const std::string& path) {
  detail::FieldReader r(j, path);
  r.optional("stage1_epochs", cfg.stage1_epochs);
  r.optional("stage2_epochs", cfg.stage2_epochs);
  r.optional("batch_size", cfg.batch_size);
  r.optional("stage1_batch_size", cfg.stage1_batch_size);
  r.optional("learning_rate", cfg.learning_rate);
  r.optional("beta1", cfg.beta1);
  r.optional("beta2", cfg.beta2);
  r.optional("epsilon", cfg.epsilon);
  r.optional("clip_norm", cfg.clip_norm);
  r.optional("clusters", cfg.clusters);
  r.optional("kmeans_restarts", cfg.kmeans_restarts);
  r.optional("kmeans_max_iter", cfg.kmeans_max_iter);
  r.optional("text_noise", cfg.text_noise);
  r.optional("text_copies", cfg.text_copies);
  r.optional("freeze_image", cfg.freeze_image);
  r.optional("freeze_text", cfg.freeze_text);
  r.finish();
}

}  // namespace hialign
