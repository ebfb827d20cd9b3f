#include "hialign/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hialign/errors.hpp"
#include "json_fields.hpp"

namespace hialign {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = scale * rng.normal();
  return m;
}

Matrix random_unit(std::size_t dim, Rng& rng) {
  for (;;) {
    Matrix v = gaussian(1, dim, 1.0, rng);
    if (norm2(v.values()) > 1e-6) return l2_normalize(v);
  }
}

Matrix add_noise(const Matrix& base, double sigma, Rng& rng) {
  Matrix out = base;
  if (sigma == 0.0) return out;
  for (double& x : out.values()) x += sigma * rng.normal();
  return out;
}

std::vector<double> flat(const Matrix& m) { return m.data(); }

Matrix from_flat(const nlohmann::json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  auto values = j.get<std::vector<double>>();
  if (values.size() != rows * cols) {
    throw ConfigError("dataset: '" + what + "' has " + std::to_string(values.size()) + " values, expected " +
                      std::to_string(rows * cols));
  }
  return Matrix(rows, cols, std::move(values));
}

}  // namespace

void DatasetSpec::validate() const {
  if (class_count < 1 || per_class < 1 || rois < 1 || image_dim < 1 || text_dim < 1) {
    throw InvalidArgument("dataset: counts and dimensions must be >= 1");
  }
  if (!(noise_sigma >= 0.0) || !(separability >= 0.0) || !(descriptor_noise >= 0.0)) {
    throw InvalidArgument("dataset: noise scales and separability must be >= 0");
  }
  if (!(confusable_fraction >= 0.0 && confusable_fraction <= 1.0)) {
    throw InvalidArgument("dataset: confusable_fraction must lie in [0, 1]");
  }
}

Matrix Dataset::global_features() const {
  const std::size_t dim = samples.empty() ? spec.image_dim : samples.front().global.cols();
  Matrix out(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) out.set_row(i, samples[i].global.row(0));
  return out;
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::string to_string(CorruptionMode mode) {
  return mode == CorruptionMode::append_irrelevant ? "append_irrelevant" : "random_replace";
}

CorruptionMode corruption_mode_from_string(const std::string& name) {
  if (name == "append_irrelevant") return CorruptionMode::append_irrelevant;
  if (name == "random_replace") return CorruptionMode::random_replace;
  throw ConfigError("unknown corruption mode '" + name + "'");
}

std::size_t ceil_count(double fraction, std::size_t n) {
  const double raw = fraction * double(n);
  const double snapped = std::round(raw);
  return static_cast<std::size_t>(std::abs(raw - snapped) < 1e-9 ? snapped : std::ceil(raw));
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const Rng master(spec.seed);
  Rng proto_rng = master.derive("prototypes");
  Rng proj_rng = master.derive("projection");
  Rng desc_rng = master.derive("descriptors");
  Rng sample_rng = master.derive("samples");

  const std::size_t classes = spec.class_count;
  std::vector<Matrix> global_proto;
  std::vector<Matrix> roi_proto;  // K x p per class
  for (std::size_t c = 0; c < classes; ++c) {
    global_proto.push_back(random_unit(spec.image_dim, proto_rng) * spec.separability);
    Matrix rois(spec.rois, spec.image_dim);
    for (std::size_t k = 0; k < spec.rois; ++k) {
      rois.set_row(k, (random_unit(spec.image_dim, proto_rng) * spec.separability).row(0));
    }
    roi_proto.push_back(std::move(rois));
  }
  const std::size_t pair_count = classes / 2;
  const auto confusable = static_cast<std::size_t>(std::lround(spec.confusable_fraction * double(pair_count)));
  for (std::size_t m = 0; m < confusable; ++m) global_proto[2 * m + 1] = global_proto[2 * m];

  // Image prototype space -> text space; stands in for semantic relatedness.
  const Matrix projection = gaussian(spec.image_dim, spec.text_dim, 1.0 / std::sqrt(double(spec.image_dim)), proj_rng);

  Dataset ds;
  ds.spec = spec;
  ds.class_count = classes;
  ds.rois = spec.rois;
  ds.original_class.resize(classes);
  std::iota(ds.original_class.begin(), ds.original_class.end(), std::size_t{0});
  for (std::size_t c = 0; c < classes; ++c) {
    ClassDescriptor d;
    d.coarse = add_noise(matmul(global_proto[c], projection), spec.descriptor_noise, desc_rng);
    d.fine = add_noise(matmul(roi_proto[c], projection), spec.descriptor_noise, desc_rng);
    ds.descriptors.classes.push_back(std::move(d));
  }
  ds.samples.reserve(classes * spec.per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t n = 0; n < spec.per_class; ++n) {
      Sample s;
      s.global = add_noise(global_proto[c], spec.noise_sigma, sample_rng);
      s.rois = add_noise(roi_proto[c], spec.noise_sigma, sample_rng);
      s.label = c;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Episode sample_episode(const Dataset& ds, std::size_t k_shot, std::size_t query_per_class, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
  Episode ep;
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    auto& pool = by_class[c];
    if (k_shot + query_per_class > pool.size()) {
      throw InvalidArgument("sample_episode: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                            " samples, need " + std::to_string(k_shot + query_per_class));
    }
    rng.shuffle(std::span<std::size_t>(pool));
    ep.support_index.insert(ep.support_index.end(), pool.begin(), pool.begin() + std::ptrdiff_t(k_shot));
    ep.query_index.insert(ep.query_index.end(), pool.begin() + std::ptrdiff_t(k_shot),
                          pool.begin() + std::ptrdiff_t(k_shot + query_per_class));
  }
  for (auto i : ep.support_index) ep.support.push_back(ds.samples[i]);
  for (auto i : ep.query_index) ep.query.push_back(ds.samples[i]);
  return ep;
}

DescriptorSet corrupt_descriptors(const DescriptorSet& descriptors, double noise_rate, CorruptionMode mode,
                                  Rng& rng) {
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
    throw InvalidArgument("corrupt_descriptors: noise_rate must lie in [0, 1]");
  }
  DescriptorSet out = descriptors;
  const std::size_t classes = descriptors.class_count();
  const std::size_t hit = ceil_count(noise_rate, classes);
  if (hit == 0) return out;
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(hit);
  std::sort(order.begin(), order.end());
  for (auto c : order) {
    auto& d = out.classes[c];
    const std::size_t q = d.coarse.cols();
    if (mode == CorruptionMode::append_irrelevant) {
      d.coarse += gaussian(1, q, noise_rate, rng);
      d.fine += gaussian(d.fine.rows(), q, noise_rate, rng);
    } else {
      d.coarse = random_unit(q, rng);
      for (std::size_t k = 0; k < d.fine.rows(); ++k) d.fine.set_row(k, random_unit(q, rng).row(0));
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split_seen_unseen(const Dataset& ds, double unseen_fraction, Rng& rng) {
  if (!(unseen_fraction >= 0.0 && unseen_fraction <= 1.0)) {
    throw InvalidArgument("split_seen_unseen: fraction must lie in [0, 1]");
  }
  const std::size_t classes = ds.class_count;
  const std::size_t unseen_count = ceil_count(unseen_fraction, classes);
  if (unseen_count < 2 || classes - unseen_count < 2) {
    throw InvalidArgument("split_seen_unseen: fraction " + std::to_string(unseen_fraction) + " on " +
                          std::to_string(classes) + " classes leaves fewer than 2 classes on one side");
  }
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> unseen(order.begin(), order.begin() + std::ptrdiff_t(unseen_count));
  std::vector<std::size_t> seen(order.begin() + std::ptrdiff_t(unseen_count), order.end());
  std::sort(unseen.begin(), unseen.end());
  std::sort(seen.begin(), seen.end());

  auto subset = [&](const std::vector<std::size_t>& keep) {
    Dataset out;
    out.spec = ds.spec;
    out.class_count = keep.size();
    out.rois = ds.rois;
    std::vector<std::size_t> remap(classes, classes);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      remap[keep[i]] = i;
      out.original_class.push_back(ds.original_class[keep[i]]);
      out.descriptors.classes.push_back(ds.descriptors.classes[keep[i]]);
    }
    for (const auto& s : ds.samples) {
      if (remap[s.label] == classes) continue;
      Sample copy = s;
      copy.label = remap[s.label];
      out.samples.push_back(std::move(copy));
    }
    return out;
  };
  return {subset(seen), subset(unseen)};
}

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec) {
  return {{"class_count", spec.class_count},
          {"per_class", spec.per_class},
          {"rois", spec.rois},
          {"image_dim", spec.image_dim},
          {"text_dim", spec.text_dim},
          {"noise_sigma", spec.noise_sigma},
          {"separability", spec.separability},
          {"confusable_fraction", spec.confusable_fraction},
          {"descriptor_noise", spec.descriptor_noise},
          {"seed", spec.seed}};
}

void dataset_spec_from_json(const nlohmann::json& j, DatasetSpec& spec, const std::string& path) {
  detail::FieldReader r(j, path);
  r.required("class_count", spec.class_count);
  r.required("per_class", spec.per_class);
  r.optional("rois", spec.rois);
  r.optional("image_dim", spec.image_dim);
  r.optional("text_dim", spec.text_dim);
  r.optional("noise_sigma", spec.noise_sigma);
  r.optional("separability", spec.separability);
  r.optional("confusable_fraction", spec.confusable_fraction);
  r.optional("descriptor_noise", spec.descriptor_noise);
  r.optional("seed", spec.seed);
  r.finish();
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    samples.push_back({{"global", flat(s.global)}, {"rois", flat(s.rois)}, {"label", s.label}});
  }
  nlohmann::json coarse = nlohmann::json::array();
  nlohmann::json fine = nlohmann::json::array();
  for (const auto& d : ds.descriptors.classes) {
    coarse.push_back(flat(d.coarse));
    fine.push_back(flat(d.fine));
  }
  return {{"spec", dataset_spec_to_json(ds.spec)},
          {"class_count", ds.class_count},
          {"rois", ds.rois},
          {"original_class", ds.original_class},
          {"samples", std::move(samples)},
          {"descriptors", {{"coarse", std::move(coarse)}, {"fine", std::move(fine)}}}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    Dataset ds;
    dataset_spec_from_json(j.at("spec"), ds.spec, "spec");
    ds.class_count = j.at("class_count").get<std::size_t>();
    ds.rois = j.at("rois").get<std::size_t>();
    ds.original_class = j.at("original_class").get<std::vector<std::size_t>>();
    const std::size_t p = ds.spec.image_dim;
    const std::size_t q = ds.spec.text_dim;
    for (const auto& s : j.at("samples")) {
      Sample sample;
      sample.global = from_flat(s.at("global"), 1, p, "samples.global");
      sample.rois = from_flat(s.at("rois"), ds.rois, p, "samples.rois");
      sample.label = s.at("label").get<std::size_t>();
      if (sample.label >= ds.class_count) throw ConfigError("dataset: sample label out of range");
      ds.samples.push_back(std::move(sample));
    }
    const auto& coarse = j.at("descriptors").at("coarse");
    const auto& fine = j.at("descriptors").at("fine");
    if (coarse.size() != ds.class_count || fine.size() != ds.class_count) {
      throw ConfigError("dataset: descriptor count does not match class_count");
    }
    for (std::size_t c = 0; c < ds.class_count; ++c) {
      ds.descriptors.classes.push_back(
          {from_flat(coarse[c], 1, q, "descriptors.coarse"), from_flat(fine[c], ds.rois, q, "descriptors.fine")});
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset JSON: ") + e.what());
  }
}

}  // namespace hialign
