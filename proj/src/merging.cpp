#include "c2m3/merging.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace c2m3 {

MlpParams map_to_universe(const MlpParams& m, const PermutationSet& perms) {
  return apply_permutations(m, invert(perms));
}

std::vector<MlpParams> universe_models(std::span<const MlpParams> models,
                                       const UniverseMatch& match) {
  if (static_cast<int>(models.size()) != match.num_models()) {
    fail(ErrorCode::kShapeMismatch, "match covers " + std::to_string(match.num_models()) +
                                        " models, got " + std::to_string(models.size()));
  }
  std::vector<MlpParams> out;
  for (std::size_t p = 0; p < models.size(); ++p) {
    out.push_back(map_to_universe(models[p], match.perms[p]));
  }
  return out;
}

MlpParams merge_in_universe(std::span<const MlpParams> models, const UniverseMatch& match) {
  return mean(universe_models(models, match));
}

C2m3Merge c2m3_merge(std::span<const MlpParams> models, const MatchConfig& config) {
  C2m3Merge result;
  result.match = fw_match_multi(models, config);
  result.merged = merge_in_universe(models, result.match);
  return result;
}

MlpParams merge_subset(std::span<const MlpParams> models, const UniverseMatch& match,
                       std::span<const int> subset) {
  if (subset.empty()) fail(ErrorCode::kInvalidInput, "merge_subset: empty subset");
  std::set<int> seen;
  for (int i : subset) {
    if (i < 0 || i >= static_cast<int>(models.size())) {
      fail(ErrorCode::kInvalidInput, "merge_subset: index " + std::to_string(i) +
                                         " out of range");
    }
    if (!seen.insert(i).second) {
      fail(ErrorCode::kInvalidInput, "merge_subset: duplicate index " + std::to_string(i));
    }
  }
  const std::vector<MlpParams> mapped = universe_models(models, match);
  std::vector<MlpParams> chosen;
  for (int i : subset) chosen.push_back(mapped[static_cast<std::size_t>(i)]);
  return mean(chosen);
}

MlpParams naive_merge(std::span<const MlpParams> models) {
  if (models.empty()) fail(ErrorCode::kInvalidInput, "naive_merge: no models");
  return mean(models);
}

MergeManyResult merge_many(std::span<const MlpParams> models, std::uint64_t seed,
                           int max_outer_iters) {
  if (models.size() < 2) fail(ErrorCode::kInvalidInput, "merge_many: need >= 2 models");
  if (max_outer_iters < 1) fail(ErrorCode::kInvalidInput, "merge_many: max_outer_iters < 1");
  for (const MlpParams& m : models) check_same_architecture(models.front(), m, "merge_many");

  MergeManyResult result;
  result.aligned.assign(models.begin(), models.end());
  std::vector<int> order(models.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);

  for (int pass = 1; pass <= max_outer_iters; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    bool changed = false;
    for (int i : order) {
      std::vector<MlpParams> others;
      for (std::size_t j = 0; j < result.aligned.size(); ++j) {
        if (static_cast<int>(j) != i) others.push_back(result.aligned[j]);
      }
      const MlpParams reference = mean(others);
      MlpParams& target = result.aligned[static_cast<std::size_t>(i)];
      const PairwiseMatch match = coordinate_descent_match(reference, target, rng());
      bool identity = true;
      for (const Permutation& p : match.perms) identity = identity && p.is_identity();
      if (!identity) {
        target = apply_permutations(target, match.perms);
        changed = true;
      }
    }
    result.passes = pass;
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.merged = mean(result.aligned);
  return result;
}

namespace {

void population_stats(const Matrix& pre, Vector& mean_out, Vector& std_out) {
  const double m = static_cast<double>(pre.rows());
  mean_out = pre.colwise().sum().transpose() / m;
  std_out.resize(pre.cols());
  for (Eigen::Index c = 0; c < pre.cols(); ++c) {
    const double var = (pre.col(c).array() - mean_out(c)).square().sum() / m;
    std_out(c) = std::sqrt(var);
  }
}

}  // namespace

ActivationStats collect_stats(const MlpParams& m, const Dataset& data) {
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "collect_stats: empty dataset");
  const ForwardPass pass = forward(m, data.features);
  ActivationStats stats;
  for (const Matrix& pre : pass.pre_activations) {
    Vector mu, sigma;
    population_stats(pre, mu, sigma);
    stats.mean.push_back(std::move(mu));
    stats.std.push_back(std::move(sigma));
  }
  return stats;
}

RepairResult repair(const MlpParams& merged, std::span<const MlpParams> endpoints,
                    const Dataset& data) {
  if (endpoints.empty()) fail(ErrorCode::kInvalidInput, "repair: no endpoints");
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "repair: empty dataset");
  merged.validate();
  for (const MlpParams& e : endpoints) check_same_architecture(merged, e, "repair");

  // Target statistics: uniform average over endpoints.
  ActivationStats target = collect_stats(endpoints.front(), data);
  for (std::size_t e = 1; e < endpoints.size(); ++e) {
    const ActivationStats s = collect_stats(endpoints[e], data);
    for (std::size_t h = 0; h < target.mean.size(); ++h) {
      target.mean[h] += s.mean[h];
      target.std[h] += s.std[h];
    }
  }
  const double inv = 1.0 / static_cast<double>(endpoints.size());
  for (std::size_t h = 0; h < target.mean.size(); ++h) {
    target.mean[h] *= inv;
    target.std[h] *= inv;
  }

  RepairResult result;
  result.model = merged;
  for (int h = 0; h < merged.num_hidden(); ++h) {
    const auto hh = static_cast<std::size_t>(h);
    // Layers before h are already corrected, so measure afresh.
    const ForwardPass pass = forward(result.model, data.features);
    Vector mu, sigma;
    population_stats(pass.pre_activations[hh], mu, sigma);
    Layer& layer = result.model.layers[hh];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      double gain = target.std[hh](r) / sigma(r);
      if (sigma(r) < kRepairMinStd || target.std[hh](r) < kRepairMinStd) {
        gain = 1.0;
        result.warnings.push_back("layer " + std::to_string(h) + " neuron " +
                                  std::to_string(r) + ": degenerate std, gain set to 1");
      }
      layer.weight.row(r) *= gain;
      layer.bias(r) = gain * layer.bias(r) + (target.mean[hh](r) - gain * mu(r));
    }
  }
  return result;
}

}  // namespace c2m3
