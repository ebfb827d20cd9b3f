#include <doctest.h>

#include <algorithm>
#include <set>

#include "hialign/errors.hpp"
#include "hialign/kmeans.hpp"
#include "hialign/synthdata.hpp"

using namespace hialign;

namespace {

DatasetSpec small_spec(std::uint64_t seed) {
  DatasetSpec s;
  s.class_count = 4;
  s.per_class = 20;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("default spec gives 200 balanced samples") {
  const Dataset ds = generate_dataset(DatasetSpec{});
  CHECK(ds.samples.size() == 200);
  std::vector<int> counts(4, 0);
  for (const auto& s : ds.samples) {
    ++counts[s.label];
    CHECK(s.rois.rows() == 3);
    CHECK(s.global.all_finite());
  }
  CHECK(counts == std::vector<int>{50, 50, 50, 50});
  CHECK(ds.descriptors.class_count() == 4);
  for (const auto& d : ds.descriptors.classes) CHECK(d.fine.rows() == 3);
}

TEST_CASE("zero noise makes every sample of a class identical") {
  DatasetSpec spec = small_spec(1);
  spec.noise_sigma = 0.0;
  const Dataset ds = generate_dataset(spec);
  for (const auto& s : ds.samples) {
    const auto& first = *std::find_if(ds.samples.begin(), ds.samples.end(),
                                      [&](const Sample& o) { return o.label == s.label; });
    CHECK(s == first);
  }
}

TEST_CASE("generation is deterministic") {
  CHECK(generate_dataset(small_spec(5)) == generate_dataset(small_spec(5)));
  CHECK(!(generate_dataset(small_spec(5)) == generate_dataset(small_spec(6))));
}

TEST_CASE("invalid specs") {
  DatasetSpec spec = small_spec(1);
  spec.class_count = 0;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidArgument);
  spec = small_spec(1);
  spec.confusable_fraction = 1.5;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidArgument);
}

TEST_CASE("confusable pairs share a global prototype") {
  DatasetSpec spec = small_spec(2);
  spec.noise_sigma = 0.0;
  spec.confusable_fraction = 0.5;  // one of the two pairs
  const Dataset ds = generate_dataset(spec);
  const auto first_of = [&](std::size_t c) {
    return *std::find_if(ds.samples.begin(), ds.samples.end(), [&](const Sample& s) { return s.label == c; });
  };
  CHECK(first_of(0).global == first_of(1).global);
  CHECK(!(first_of(0).rois == first_of(1).rois));
  CHECK(!(first_of(2).global == first_of(3).global));
}

TEST_CASE("separability statistic") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DatasetSpec spec = small_spec(seed);
    spec.confusable_fraction = 0.0;
    spec.separability = 3.0;
    spec.noise_sigma = 0.3;
    const Dataset ds = generate_dataset(spec);
    double within = 0, between = 0;
    std::size_t nw = 0, nb = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      for (std::size_t j = i + 1; j < ds.samples.size(); ++j) {
        const double d = std::sqrt(squared_distance(ds.samples[i].global.row(0), ds.samples[j].global.row(0)));
        if (ds.samples[i].label == ds.samples[j].label) within += d, ++nw;
        else between += d, ++nb;
      }
    }
    CHECK(within / double(nw) < between / double(nb));
  }
}

TEST_CASE("episodes") {
  const Dataset ds = generate_dataset(small_spec(3));
  Rng rng(1);
  const Episode one = sample_episode(ds, 1, 5, rng);
  CHECK(one.support.size() == 4);
  CHECK(one.query.size() == 20);

  const Episode e = sample_episode(ds, 5, 10, rng);
  std::vector<int> per_class(4, 0);
  for (const auto& s : e.support) ++per_class[s.label];
  CHECK(per_class == std::vector<int>{5, 5, 5, 5});
  std::set<std::size_t> support(e.support_index.begin(), e.support_index.end());
  for (auto q : e.query_index) CHECK(support.count(q) == 0);
  for (std::size_t i = 0; i < e.support.size(); ++i) CHECK(e.support[i] == ds.samples[e.support_index[i]]);

  CHECK_THROWS_AS(sample_episode(ds, 15, 10, rng), InvalidArgument);

  int distinct = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng a(2 * trial + 1000), b(2 * trial + 1001);
    distinct += sample_episode(ds, 1, 1, a).support_index != sample_episode(ds, 1, 1, b).support_index;
  }
  CHECK(distinct >= 99);

  Rng r1(9), r2(9);
  CHECK(sample_episode(ds, 3, 4, r1).query_index == sample_episode(ds, 3, 4, r2).query_index);
}

TEST_CASE("descriptor corruption") {
  const Dataset ds = generate_dataset(small_spec(4));
  for (auto mode : {CorruptionMode::append_irrelevant, CorruptionMode::random_replace}) {
    Rng rng(1);
    CHECK(corrupt_descriptors(ds.descriptors, 0.0, mode, rng) == ds.descriptors);
    const DescriptorSet half = corrupt_descriptors(ds.descriptors, 0.5, mode, rng);
    int changed = 0;
    for (std::size_t c = 0; c < 4; ++c) changed += !(half.classes[c] == ds.descriptors.classes[c]);
    CHECK(changed == 2);
    CHECK_THROWS_AS(corrupt_descriptors(ds.descriptors, 1.5, mode, rng), InvalidArgument);
  }
  Rng rng(2);
  const DescriptorSet all = corrupt_descriptors(ds.descriptors, 1.0, CorruptionMode::random_replace, rng);
  for (std::size_t c = 0; c < 4; ++c) CHECK(!(all.classes[c].coarse == ds.descriptors.classes[c].coarse));
  Rng a(3), b(3);
  CHECK(corrupt_descriptors(ds.descriptors, 0.6, CorruptionMode::append_irrelevant, a) ==
        corrupt_descriptors(ds.descriptors, 0.6, CorruptionMode::append_irrelevant, b));
  CHECK(corruption_mode_from_string(to_string(CorruptionMode::random_replace)) == CorruptionMode::random_replace);
}

TEST_CASE("ceil_count") {
  CHECK(ceil_count(0.3, 10) == 3);
  CHECK(ceil_count(0.5, 4) == 2);
  CHECK(ceil_count(0.6, 4) == 3);
  CHECK(ceil_count(1.0, 4) == 4);
  CHECK(ceil_count(0.0, 4) == 0);
}

TEST_CASE("seen/unseen split") {
  DatasetSpec spec = small_spec(5);
  Rng rng(1);
  const Dataset ds = generate_dataset(spec);
  const auto [seen, unseen] = split_seen_unseen(ds, 0.5, rng);
  CHECK(seen.class_count == 2);
  CHECK(unseen.class_count == 2);
  std::set<std::size_t> all;
  for (auto c : seen.original_class) all.insert(c);
  for (auto c : unseen.original_class) CHECK(all.insert(c).second);
  CHECK(all == std::set<std::size_t>{0, 1, 2, 3});
  CHECK(seen.samples.size() + unseen.samples.size() == ds.samples.size());
  for (const auto& s : unseen.samples) CHECK(s.label < 2);
  CHECK(std::is_sorted(unseen.original_class.begin(), unseen.original_class.end()));

  spec.class_count = 10;
  const Dataset ten = generate_dataset(spec);
  const auto [seen10, unseen10] = split_seen_unseen(ten, 0.3, rng);
  CHECK(seen10.class_count == 7);
  CHECK(unseen10.class_count == 3);

  CHECK_THROWS_AS(split_seen_unseen(ds, 0.9, rng), InvalidArgument);
  Rng a(4), b(4);
  CHECK(split_seen_unseen(ten, 0.5, a) == split_seen_unseen(ten, 0.5, b));
}

TEST_CASE("json round trip") {
  const Dataset ds = generate_dataset(small_spec(6));
  CHECK(dataset_from_json(nlohmann::json::parse(dataset_to_json(ds).dump())) == ds);
  Rng rng(1);
  const auto [seen, unseen] = split_seen_unseen(ds, 0.5, rng);
  CHECK(dataset_from_json(nlohmann::json::parse(dataset_to_json(unseen).dump())) == unseen);

  DatasetSpec spec;
  dataset_spec_from_json(dataset_spec_to_json(small_spec(9)), spec, "dataset");
  CHECK(spec == small_spec(9));
}
