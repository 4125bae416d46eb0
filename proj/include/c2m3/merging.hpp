#pragma once

#include "c2m3/matching.hpp"

#include <string>
#include <vector>

namespace c2m3 {

// W_h <- P_h^T W_h P_{h-1}, b_h <- P_h^T b_h. Function-preserving.
MlpParams map_to_universe(const MlpParams& m, const PermutationSet& perms);

struct C2m3Merge {
  MlpParams merged;
  UniverseMatch match;
};

// Joint Frank-Wolfe matching, then the unweighted mean of the models in
// universe coordinates.
C2m3Merge c2m3_merge(std::span<const MlpParams> models, const MatchConfig& config = {});

// Mean of the universe images of an existing joint match.
MlpParams merge_in_universe(std::span<const MlpParams> models, const UniverseMatch& match);

// Mean over `subset` only; permutations still come from the joint match.
MlpParams merge_subset(std::span<const MlpParams> models, const UniverseMatch& match,
                       std::span<const int> subset);

std::vector<MlpParams> universe_models(std::span<const MlpParams> models,
                                       const UniverseMatch& match);

// Elementwise mean of the raw weights.
MlpParams naive_merge(std::span<const MlpParams> models);

struct MergeManyResult {
  MlpParams merged;
  std::vector<MlpParams> aligned;  // the models after their final permutation
  int passes = 0;
  bool converged = false;
};

// Repeatedly aligns each model (in a seeded random order) to the mean of the
// others with coordinate descent, until one pass changes no permutation.
MergeManyResult merge_many(std::span<const MlpParams> models, std::uint64_t seed,
                           int max_outer_iters = 100);

struct ActivationStats {
  std::vector<Vector> mean;  // per hidden group, pre-activation means
  std::vector<Vector> std;   // population standard deviations
};

ActivationStats collect_stats(const MlpParams& m, const Dataset& data);

struct RepairResult {
  MlpParams model;
  std::vector<std::string> warnings;  // degenerate neurons
};

// Rescales each hidden neuron of `merged` so its pre-activation mean/std
// equal the uniform average of the endpoints' statistics. Layers are fixed
// input to output, re-measuring the merged model after each one.
inline constexpr double kRepairMinStd = 1e-12;
RepairResult repair(const MlpParams& merged, std::span<const MlpParams> endpoints,
                    const Dataset& data);

}  // namespace c2m3
