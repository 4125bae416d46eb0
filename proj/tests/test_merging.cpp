#include "c2m3/merging.hpp"

#include "testing.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace c2m3;
using c2m3::testing::copies_with_perms;
using c2m3::testing::error_code_of;
using c2m3::testing::random_dataset;
using c2m3::testing::random_mlp;
using c2m3::testing::random_perms;

namespace {

double max_logit_diff(const MlpParams& a, const MlpParams& b, const Matrix& x) {
  return (logits(a, x) - logits(b, x)).cwiseAbs().maxCoeff();
}

// Planted triple that joint Frank-Wolfe recovers from the identity init.
std::vector<MlpParams> planted_triple(MlpParams* base_out) {
  const MlpParams base = random_mlp({5, 14, 10, 3}, 9);
  if (base_out) *base_out = base;
  return copies_with_perms(base, 3, 500);
}

}  // namespace

TEST(NaiveMerge, ElementwiseMean) {
  const MlpParams a = random_mlp({3, 5, 2}, 1);
  const MlpParams b = random_mlp({3, 5, 2}, 2);
  const std::vector<MlpParams> pair{a, b};
  const MlpParams got = naive_merge(pair);
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const Matrix want = (a.layers[k].weight + b.layers[k].weight) / 2.0;
    EXPECT_LT((got.layers[k].weight - want).cwiseAbs().maxCoeff(), 1e-15);
  }
  const std::vector<MlpParams> same(3, a);
  EXPECT_EQ(naive_merge(same), a);
  MlpParams neg = a;
  for (Layer& l : neg.layers) {
    l.weight = -l.weight;
    l.bias = -l.bias;
  }
  const std::vector<MlpParams> opposite{a, neg};
  EXPECT_EQ(flatten(naive_merge(opposite)).cwiseAbs().maxCoeff(), 0.0);
  const std::vector<MlpParams> mismatched{a, random_mlp({3, 4, 2}, 3)};
  EXPECT_EQ(error_code_of([&] { naive_merge(mismatched); }), ErrorCode::kShapeMismatch);
}

TEST(MapToUniverse, PreservesFunctionAndInvertsPlanting) {
  const MlpParams m = random_mlp({4, 9, 7, 3}, 4);
  const PermutationSet perms = random_perms(m, 5);
  const Dataset d = random_dataset(30, 4, 3, 6);
  EXPECT_LT(max_logit_diff(m, map_to_universe(m, perms), d.features), 1e-12);
  EXPECT_EQ(map_to_universe(apply_permutations(m, perms), perms), m);
}

TEST(C2m3Merge, IdenticalModelsMergeToThemselves) {
  const MlpParams m = random_mlp({3, 6, 6, 2}, 7);
  const std::vector<MlpParams> copies(3, m);
  const C2m3Merge r = c2m3_merge(copies);
  EXPECT_EQ(r.merged, m);
  for (const PermutationSet& ps : r.match.perms) {
    for (const Permutation& p : ps) EXPECT_TRUE(p.is_identity());
  }
}

TEST(C2m3Merge, PlantedTripleMatchesBaseFunction) {
  MlpParams base;
  const std::vector<MlpParams> models = planted_triple(&base);
  const C2m3Merge r = c2m3_merge(models);
  const Dataset d = random_dataset(64, 5, 3, 8);
  EXPECT_LE(max_logit_diff(r.merged, base, d.features), 1e-9);
  const Metrics got = loss_and_accuracy(r.merged, d);
  const Metrics want = loss_and_accuracy(base, d);
  EXPECT_NEAR(got.loss, want.loss, 1e-9);
}

TEST(MergeSubset, FullSubsetEqualsFullMerge) {
  std::vector<MlpParams> models;
  for (std::uint64_t p = 0; p < 4; ++p) models.push_back(random_mlp({3, 7, 5, 2}, 30 + p));
  const C2m3Merge full = c2m3_merge(models);
  const std::vector<int> all{0, 1, 2, 3};
  EXPECT_EQ(merge_subset(models, full.match, all), full.merged);
  EXPECT_EQ(merge_in_universe(models, full.match), full.merged);
  const std::vector<int> one{2};
  EXPECT_EQ(merge_subset(models, full.match, one),
            map_to_universe(models[2], full.match.perms[2]));
  const std::vector<int> bad{4};
  EXPECT_EQ(error_code_of([&] { merge_subset(models, full.match, bad); }),
            ErrorCode::kInvalidInput);
  const std::vector<int> empty;
  EXPECT_EQ(error_code_of([&] { merge_subset(models, full.match, empty); }),
            ErrorCode::kInvalidInput);
}

TEST(MergeMany, IdenticalModelsOnePass) {
  const MlpParams m = random_mlp({3, 6, 2}, 11);
  const std::vector<MlpParams> copies(3, m);
  const MergeManyResult r = merge_many(copies, 0);
  EXPECT_EQ(r.merged, m);
  EXPECT_EQ(r.passes, 1);
  EXPECT_TRUE(r.converged);
}

TEST(MergeMany, PlantedTripleMatchesBase) {
  MlpParams base;
  const std::vector<MlpParams> models = planted_triple(&base);
  const MergeManyResult r = merge_many(models, 3);
  const Dataset d = random_dataset(64, 5, 3, 8);
  EXPECT_LE(max_logit_diff(r.merged, base, d.features), 1e-9);
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.aligned.size(), 3u);
}

TEST(MergeMany, DeterministicForSeed) {
  std::vector<MlpParams> models;
  for (std::uint64_t p = 0; p < 3; ++p) models.push_back(random_mlp({3, 8, 8, 2}, 40 + p));
  EXPECT_EQ(merge_many(models, 5).merged, merge_many(models, 5).merged);
  EXPECT_EQ(error_code_of([&] { merge_many(std::span(models).first(1), 0); }),
            ErrorCode::kInvalidInput);
}

TEST(CollectStats, ZeroModelAndSingleSample) {
  const MlpParams zero = MlpParams::zeros({3, 4, 5, 2});
  const Dataset d = random_dataset(10, 3, 2, 1);
  const ActivationStats s = collect_stats(zero, d);
  ASSERT_EQ(s.mean.size(), 2u);
  for (std::size_t h = 0; h < 2; ++h) {
    EXPECT_EQ(s.mean[h].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.std[h].cwiseAbs().maxCoeff(), 0.0);
  }
  const std::vector<int> first{0};
  const ActivationStats one = collect_stats(random_mlp({3, 4, 2}, 2), d.subset(first));
  EXPECT_EQ(one.std[0].cwiseAbs().maxCoeff(), 0.0);
  Dataset empty;
  empty.features = Matrix(0, 3);
  EXPECT_EQ(error_code_of([&] { collect_stats(zero, empty); }), ErrorCode::kInvalidInput);
}

TEST(CollectStats, HandComputed) {
  MlpParams m = MlpParams::zeros({1, 2, 1});
  m.layers[0].weight << 1,
                        -2;
  m.layers[0].bias << 0, 1;
  Dataset d;
  d.features.resize(3, 1);
  d.features << 1, 2, 3;
  d.labels = {0, 0, 0};
  // Pre-activations: neuron 0 -> {1, 2, 3}, neuron 1 -> {-1, -3, -5}.
  const ActivationStats s = collect_stats(m, d);
  EXPECT_NEAR(s.mean[0](0), 2.0, 1e-15);
  EXPECT_NEAR(s.mean[0](1), -3.0, 1e-15);
  EXPECT_NEAR(s.std[0](0), std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.std[0](1), std::sqrt(8.0 / 3.0), 1e-15);
}

TEST(Repair, MatchesTargetStatistics) {
  std::vector<MlpParams> endpoints;
  for (std::uint64_t p = 0; p < 3; ++p) endpoints.push_back(random_mlp({4, 8, 6, 2}, 50 + p));
  const MlpParams merged = naive_merge(endpoints);
  const Dataset d = random_dataset(80, 4, 2, 9);
  const RepairResult r = repair(merged, endpoints, d);
  EXPECT_TRUE(r.warnings.empty());

  const ActivationStats got = collect_stats(r.model, d);
  for (std::size_t h = 0; h < got.mean.size(); ++h) {
    Vector mean_target = Vector::Zero(got.mean[h].size());
    Vector std_target = Vector::Zero(got.mean[h].size());
    for (const MlpParams& e : endpoints) {
      const ActivationStats s = collect_stats(e, d);
      mean_target += s.mean[h] / 3.0;
      std_target += s.std[h] / 3.0;
    }
    EXPECT_LT((got.mean[h] - mean_target).cwiseAbs().maxCoeff(), 1e-10) << "layer " << h;
    EXPECT_LT((got.std[h] - std_target).cwiseAbs().maxCoeff(), 1e-10) << "layer " << h;
  }
  // The output layer is untouched.
  EXPECT_EQ(r.model.layers.back().weight, merged.layers.back().weight);
  EXPECT_EQ(r.model.layers.back().bias, merged.layers.back().bias);
}

TEST(Repair, FixedPointWhenStatsAlreadyMatch) {
  const MlpParams m = random_mlp({3, 6, 6, 2}, 12);
  const std::vector<MlpParams> endpoints{m};
  const Dataset d = random_dataset(40, 3, 2, 13);
  EXPECT_EQ(repair(m, endpoints, d).model, m);
}

TEST(Repair, DegenerateNeuronWarnsAndKeepsGainOne) {
  MlpParams m = random_mlp({3, 5, 2}, 14);
  m.layers[0].weight.row(2).setZero();
  m.layers[0].bias(2) = 0.25;
  const std::vector<MlpParams> endpoints{m, random_mlp({3, 5, 2}, 15)};
  const Dataset d = random_dataset(40, 3, 2, 16);
  const RepairResult r = repair(m, endpoints, d);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("neuron 2"), std::string::npos);
  EXPECT_EQ(r.model.layers[0].weight.row(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Repair, RejectsBadInput) {
  const MlpParams m = random_mlp({3, 5, 2}, 1);
  const Dataset d = random_dataset(10, 3, 2, 1);
  EXPECT_EQ(error_code_of([&] { repair(m, std::vector<MlpParams>{}, d); }),
            ErrorCode::kInvalidInput);
  const std::vector<MlpParams> other{random_mlp({3, 4, 2}, 2)};
  EXPECT_EQ(error_code_of([&] { repair(m, other, d); }), ErrorCode::kShapeMismatch);
}
