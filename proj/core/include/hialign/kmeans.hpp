#pragma once

#include <cstddef>
#include <vector>

#include "hialign/matrix.hpp"
#include "hialign/rng.hpp"

namespace hialign {

struct KMeansOptions {
  std::size_t k = 2;
  std::size_t max_iter = 100;
  double tol = 1e-8;       // stop once the largest centroid shift falls below this
  std::size_t restarts = 5;  // best-of-R, lowest inertia wins
};

struct KMeansResult {
  Matrix centroids;                      // k x d
  std::vector<std::size_t> assignments;  // one per point
  double inertia = 0.0;                  // sum of squared distances to assigned centroid
  // Inertia after every Lloyd assignment step and Hartigan pass of the
  // winning restart.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding and best-of-R restarts, followed
// by Hartigan single-point refinement.
// Restart r draws from rng.split(r); ties on inertia go to the lowest r.
// Empty clusters are repaired by moving their centroid onto the point
// farthest from its current centroid.
KMeansResult kmeans(const Matrix& points, const KMeansOptions& opts, const Rng& rng);

// Single Lloyd + Hartigan run from k-means++ seeds.
KMeansResult kmeans_single(const Matrix& points, const KMeansOptions& opts, Rng& rng);

double squared_distance(std::span<const double> a, std::span<const double> b);

// Fraction of points whose cluster's majority true label matches their own.
double cluster_purity(std::span<const std::size_t> assignments, std::span<const std::size_t> labels);

}  // namespace hialign
