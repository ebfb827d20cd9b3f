#include "hialign/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <map>

#include "hialign/errors.hpp"

namespace hialign {

namespace {

double assign_all(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(points.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assignments[i] = best;
    inertia += best_d;
  }
  return inertia;
}

double total_inertia(const Matrix& points, const Matrix& centroids, const std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    inertia += squared_distance(points.row(i), centroids.row(assignments[i]));
  }
  return inertia;
}

// Moves each empty cluster's centroid onto the point farthest from its own
// centroid (taken only from clusters that can spare a member).
void repair_empty(const Matrix& points, Matrix& centroids, std::vector<std::size_t>& assignments) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = points.rows();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assignments[i]] < 2) continue;
      const double d = squared_distance(points.row(i), centroids.row(assignments[i]));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == points.rows()) continue;
    --counts[assignments[far]];
    assignments[far] = c;
    counts[c] = 1;
    centroids.set_row(c, points.row(far));
  }
}

void recompute_centroid(const Matrix& points, const std::vector<std::size_t>& assignments, std::size_t c,
                        Matrix& centroids) {
  auto row = centroids.row(c);
  std::fill(row.begin(), row.end(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    if (assignments[i] != c) continue;
    ++count;
    const auto src = points.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += src[j];
  }
  for (double& x : row) x /= double(count);
}

// Hartigan's single-point moves: relocate a point whenever that lowers the
// total inertia once both affected means are updated. Escapes Lloyd fixed
// points that are not local minima under single moves.
bool hartigan_pass(const Matrix& points, Matrix& centroids, std::vector<std::size_t>& assignments) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  bool moved = false;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::size_t from = assignments[i];
    if (counts[from] < 2) continue;
    const double n_from = double(counts[from]);
    const double removal_gain = n_from / (n_from - 1.0) * squared_distance(points.row(i), centroids.row(from));
    std::size_t best = from;
    double best_cost = removal_gain;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == from) continue;
      const double n_to = double(counts[c]);
      const double cost = n_to / (n_to + 1.0) * squared_distance(points.row(i), centroids.row(c));
      if (cost < best_cost * (1.0 - 1e-12)) {
        best_cost = cost;
        best = c;
      }
    }
    if (best == from) continue;
    assignments[i] = best;
    --counts[from];
    ++counts[best];
    recompute_centroid(points, assignments, from, centroids);
    recompute_centroid(points, assignments, best, centroids);
    moved = true;
  }
  return moved;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  centroids.set_row(0, points.row(rng.uniform_index(n)));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), centroids.row(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    centroids.set_row(c, points.row(pick));
  }
  return centroids;
}

void check_inputs(const Matrix& points, const KMeansOptions& opts) {
  if (opts.k == 0) throw InvalidArgument("kmeans: k must be >= 1");
  if (opts.k > points.rows()) {
    throw InvalidArgument("kmeans: k = " + std::to_string(opts.k) + " exceeds point count " +
                          std::to_string(points.rows()));
  }
  if (!points.all_finite()) throw InvalidArgument("kmeans: points must be finite");
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

KMeansResult kmeans_single(const Matrix& points, const KMeansOptions& opts, Rng& rng) {
  check_inputs(points, opts);
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  KMeansResult res;
  res.centroids = seed_plus_plus(points, opts.k, rng);
  res.assignments.assign(n, 0);

  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    assign_all(points, res.centroids, res.assignments);
    repair_empty(points, res.centroids, res.assignments);
    res.inertia_history.push_back(total_inertia(points, res.centroids, res.assignments));
    ++res.iterations;

    Matrix sums(opts.k, d);
    std::vector<std::size_t> counts(opts.k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(res.assignments[i]);
      const auto src = points.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      ++counts[res.assignments[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < opts.k; ++c) {
      if (counts[c] == 0) continue;
      auto row = sums.row(c);
      for (double& x : row) x /= double(counts[c]);
      shift = std::max(shift, squared_distance(row, res.centroids.row(c)));
      res.centroids.set_row(c, row);
    }
    if (std::sqrt(shift) < opts.tol) break;
  }

  for (std::size_t pass = 0; pass < opts.max_iter; ++pass) {
    if (!hartigan_pass(points, res.centroids, res.assignments)) break;
    res.inertia_history.push_back(total_inertia(points, res.centroids, res.assignments));
  }

  res.inertia = assign_all(points, res.centroids, res.assignments);
  res.inertia_history.push_back(res.inertia);
  return res;
}

KMeansResult kmeans(const Matrix& points, const KMeansOptions& opts, const Rng& rng) {
  check_inputs(points, opts);
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng stream = rng.split(r);
    KMeansResult res = kmeans_single(points, opts, stream);
    if (r == 0 || res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

double cluster_purity(std::span<const std::size_t> assignments, std::span<const std::size_t> labels) {
  if (assignments.size() != labels.size() || assignments.empty()) {
    throw InvalidArgument("cluster_purity: need equal, non-empty inputs");
  }
  std::map<std::size_t, std::map<std::size_t, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[assignments[i]][labels[i]];
  std::size_t hits = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t top = 0;
    for (const auto& [label, count] : counts) top = std::max(top, count);
    hits += top;
  }
  return double(hits) / double(labels.size());
}

}  // namespace hialign
