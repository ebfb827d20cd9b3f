#include <doctest.h>

#include <set>

#include "hialign/errors.hpp"
#include "hialign/kmeans.hpp"
#include "oracles.hpp"

using namespace hialign;

namespace {

// Two blobs of n points around (0, 0) and (10, 10), per-coordinate noise U(-0.5, 0.5).
Matrix two_blobs(std::size_t n, Rng& rng, std::vector<std::size_t>& labels) {
  Matrix pts(2 * n, 2);
  labels.clear();
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const double center = i < n ? 0.0 : 10.0;
    pts(i, 0) = center + rng.uniform(-0.5, 0.5);
    pts(i, 1) = center + rng.uniform(-0.5, 0.5);
    labels.push_back(i < n ? 0 : 1);
  }
  return pts;
}

}  // namespace

TEST_CASE("k = 1 gives the mean") {
  const Matrix pts{{0, 0}, {2, 4}, {4, 2}};
  const KMeansResult r = kmeans(pts, {.k = 1}, Rng(1));
  CHECK(r.centroids(0, 0) == doctest::Approx(2.0));
  CHECK(r.centroids(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("k = N gives zero inertia") {
  Rng rng(2);
  const Matrix pts = oracle::random_matrix(6, 3, rng);
  const KMeansResult r = kmeans(pts, {.k = 6}, Rng(2));
  CHECK(r.inertia == 0.0);
  CHECK(std::set<std::size_t>(r.assignments.begin(), r.assignments.end()).size() == 6);
}

TEST_CASE("invalid k") {
  const Matrix pts{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(kmeans(pts, {.k = 0}, Rng(1)), InvalidArgument);
  CHECK_THROWS_AS(kmeans(pts, {.k = 3}, Rng(1)), InvalidArgument);
}

TEST_CASE("two well separated blobs are recovered exactly") {
  Rng rng(3);
  std::vector<std::size_t> labels;
  const Matrix pts = two_blobs(10, rng, labels);
  const KMeansResult r = kmeans(pts, {.k = 2}, Rng(4));
  CHECK(cluster_purity(r.assignments, labels) == 1.0);

  Matrix sub(8, 2);
  std::vector<std::size_t> sub_labels;
  for (std::size_t i = 0; i < 8; ++i) {
    const std::size_t src = i < 4 ? i : 10 + i;
    sub.set_row(i, pts.row(src));
    sub_labels.push_back(labels[src]);
  }
  std::vector<int> mask;
  const double best = oracle::best_two_partition_inertia(sub, &mask);
  const KMeansResult rs = kmeans(sub, {.k = 2}, Rng(5));
  CHECK(rs.inertia == doctest::Approx(best).epsilon(1e-12));
  for (std::size_t i = 0; i < 8; ++i) CHECK((rs.assignments[i] == rs.assignments[0]) == (mask[i] == mask[0]));
}

TEST_CASE("inertia within 1.05x of the exhaustive optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const std::size_t n = 4 + rng.uniform_index(7);  // 4..10
    const Matrix pts = oracle::random_matrix(n, 2, rng, -3.0, 3.0);
    const double best = oracle::best_two_partition_inertia(pts);
    const KMeansResult r = kmeans(pts, {.k = 2, .restarts = 5}, Rng(seed));
    CHECK(r.inertia <= 1.05 * best + 1e-12);
  }
}

TEST_CASE("inertia never increases across iterations") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(200 + seed);
    const Matrix pts = oracle::random_matrix(40, 3, rng);
    Rng stream(seed);
    const KMeansResult r = kmeans_single(pts, {.k = 4}, stream);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
    }
  }
}

TEST_CASE("deterministic under a fixed seed") {
  Rng rng(7);
  const Matrix pts = oracle::random_matrix(30, 3, rng);
  const KMeansResult a = kmeans(pts, {.k = 3}, Rng(8));
  const KMeansResult b = kmeans(pts, {.k = 3}, Rng(8));
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("empty clusters are repaired") {
  // A tight clump plus one outlier: seeds often land inside the clump.
  Matrix pts{{0.0}, {1e-3}, {2e-3}, {3e-3}, {4e-3}, {1.0}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const KMeansResult r = kmeans(pts, {.k = 3, .restarts = 1}, Rng(seed));
    std::set<std::size_t> used(r.assignments.begin(), r.assignments.end());
    CHECK(used.size() == 3);
  }
}

TEST_CASE("purity") {
  const std::vector<std::size_t> a{0, 0, 1, 1}, l{5, 5, 5, 6};
  CHECK(cluster_purity(a, l) == 0.75);
  CHECK_THROWS_AS(cluster_purity(a, std::vector<std::size_t>{}), InvalidArgument);
}
