#include "hialign/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "hialign/errors.hpp"

namespace hialign {

namespace {

std::vector<Matrix> unit_rows_per_class(const Encoder& text, const DescriptorSet& descriptors, bool fine) {
  std::vector<Matrix> out;
  for (std::size_t c = 0; c < descriptors.class_count(); ++c) {
    const auto& d = descriptors.classes[c];
    try {
      out.push_back(l2_normalize_rows(forward(text, fine ? d.fine : d.coarse)));
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("descriptor of class " + std::to_string(c) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::size_t argmax_lowest(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

std::vector<Prediction> classify(const Encoder& image, const Encoder& text, const std::vector<Sample>& samples,
                                 const DescriptorSet& descriptors, const ClassifyOptions& opts) {
  if (descriptors.class_count() == 0) throw InvalidArgument("classify: no class descriptors");
  if (!(opts.roi_weight >= 0.0)) throw InvalidArgument("classify: roi_weight must be >= 0");
  const bool use_rois = opts.roi_weight > 0.0;
  const auto coarse = unit_rows_per_class(text, descriptors, false);
  const auto fine = use_rois ? unit_rows_per_class(text, descriptors, true) : std::vector<Matrix>{};

  std::vector<Prediction> preds;
  preds.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Matrix z_img, z_roi;
    try {
      z_img = l2_normalize_rows(forward(image, samples[i].global));
      if (use_rois) z_roi = l2_normalize_rows(forward(image, samples[i].rois));
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("classify: sample " + std::to_string(i) + ": " + e.what());
    }
    Prediction p;
    p.index = i;
    p.scores.resize(descriptors.class_count());
    for (std::size_t c = 0; c < descriptors.class_count(); ++c) {
      double score = dot(z_img.row(0), coarse[c].row(0));
      if (use_rois) {
        if (fine[c].rows() != z_roi.rows()) throw ShapeError("classify: ROI count differs from fine descriptors");
        double local = 0.0;
        for (std::size_t k = 0; k < z_roi.rows(); ++k) local += dot(z_roi.row(k), fine[c].row(k));
        local /= double(z_roi.rows());
        score = (score + opts.roi_weight * local) / (1.0 + opts.roi_weight);
      }
      p.scores[c] = score;
    }
    p.predicted = argmax_lowest(p.scores);
    preds.push_back(std::move(p));
  }
  return preds;
}

double accuracy(const std::vector<Prediction>& preds, std::span<const std::size_t> labels) {
  if (preds.empty()) throw InvalidArgument("accuracy: empty input");
  if (preds.size() != labels.size()) throw InvalidArgument("accuracy: prediction and label counts differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].predicted == labels[i] ? 1 : 0;
  return double(correct) / double(preds.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with tied groups sharing their mean rank; ranks are
  // kept doubled so everything stays an exact integer.
  std::uint64_t positives = 0;
  std::uint64_t rank_sum_x2 = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const std::uint64_t mean_rank_x2 = std::uint64_t(start + 1 + end);
    for (std::size_t t = start; t < end; ++t) {
      if (labels[order[t]] != 0) {
        ++positives;
        rank_sum_x2 += mean_rank_x2;
      }
    }
    start = end;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("auc: both label polarities are required");
  // 2U = rank_sum_x2 - P(P+1)
  const std::uint64_t u_x2 = rank_sum_x2 - positives * (positives + 1);
  return double(u_x2) / (2.0 * double(positives) * double(negatives));
}

double multiclass_auc(const std::vector<Prediction>& preds, std::span<const std::size_t> labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw InvalidArgument("multiclass_auc: need equal, non-empty prediction and label lists");
  }
  const std::size_t classes = preds.front().scores.size();
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> column(preds.size());
  std::vector<int> binary(preds.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      column[i] = preds[i].scores[c];
      binary[i] = labels[i] == c ? 1 : 0;
      pos += std::size_t(binary[i]);
    }
    if (pos == 0 || pos == preds.size()) continue;
    total += auc(column, binary);
    ++used;
  }
  if (used == 0) throw InvalidArgument("multiclass_auc: at least two classes must be present in labels");
  return total / double(used);
}

MetricsReport evaluate(const Encoder& image, const Encoder& text, const std::vector<Sample>& samples,
                       const DescriptorSet& descriptors, const ClassifyOptions& opts, const std::string& variant) {
  const auto preds = classify(image, text, samples, descriptors, opts);
  std::vector<std::size_t> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  MetricsReport r;
  r.variant = variant;
  r.accuracy = accuracy(preds, labels);
  r.auc = multiclass_auc(preds, labels);
  r.n_samples = samples.size();
  std::vector<std::size_t> hits(descriptors.class_count(), 0), totals(descriptors.class_count(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++totals[labels[i]];
    hits[labels[i]] += preds[i].predicted == labels[i] ? 1 : 0;
  }
  for (std::size_t c = 0; c < totals.size(); ++c) {
    r.per_class_accuracy.push_back(totals[c] == 0 ? 0.0 : double(hits[c]) / double(totals[c]));
  }
  return r;
}

}  // namespace hialign
