#pragma once

// Interpolation curves and loss barriers, cycle error, weight and
// representation similarity, and pairwise merge matrices.

#include "c2m3/merging.hpp"

#include <functional>
#include <map>
#include <utility>

namespace c2m3 {

MlpParams interpolate(const MlpParams& a, const MlpParams& b, double lambda);

inline constexpr int kDefaultBarrierGrid = 25;

struct BarrierCurve {
  std::vector<double> lambdas;
  std::vector<double> losses;
  std::vector<double> accuracies;
  // max over the grid of the loss minus the mean endpoint loss. The grid max
  // is a lower bound on the continuous maximum.
  double barrier = 0.0;
};

// Uniform grid of `grid_size` points including 0 and 1.
BarrierCurve loss_barrier(const MlpParams& a, const MlpParams& b, const Dataset& data,
                          int grid_size = kDefaultBarrierGrid);

struct BarrierReport {
  BarrierCurve train;
  BarrierCurve test;
};

BarrierReport barrier_report(const MlpParams& a, const MlpParams& b, const Dataset& train,
                             const Dataset& test, int grid_size = kDefaultBarrierGrid);

// Supplies P^{pq}: the permutations that align model q onto model p.
using PairwiseMaps = std::function<PermutationSet(int p, int q)>;

// Keyed by (p, q) with p < q holding P^{pq}; reversed lookups use inverses.
using PairwiseMatchTable = std::map<std::pair<int, int>, PermutationSet>;

PairwiseMaps pairwise_maps(const UniverseMatch& match);
PairwiseMaps pairwise_maps(const PairwiseMatchTable& table);

// `cycle` lists model indices and must end where it starts, e.g. {0,1,2,0}.
// The pairwise maps along it are composed into one permutation per layer
// (integer arithmetic), applied to the start model, and the l2 norm of the
// parameter change is returned. A single-element cycle {p} is trivial.
double cycle_error(std::span<const MlpParams> models, const PairwiseMaps& maps,
                   std::span<const int> cycle);

// Linear CKA with the biased HSIC estimator, rows are samples. Throws
// kNumerical when either input has zero centered variance.
double cka(const Matrix& x, const Matrix& y);

struct WeightSimilarity {
  double cosine = 0.0;
  double euclidean = 0.0;
};

WeightSimilarity weight_similarity(const MlpParams& a, const MlpParams& b);

struct PairSimilarity {
  int p = 0;
  int q = 0;
  WeightSimilarity before;
  WeightSimilarity after;
  std::vector<double> cka_before;        // per hidden group
  std::vector<double> cka_after;
  std::vector<double> repr_dist_before;  // ||H^p - H^q||_F per hidden group
  std::vector<double> repr_dist_after;
};

struct SimilarityReport {
  std::vector<PairSimilarity> pairs;  // p < q
  int probe_size = 0;
};

inline constexpr int kProbeSize = 512;

// Seeded selection of up to `size` rows, order-preserving.
Dataset probe_batch(const Dataset& data, std::uint64_t seed, int size = kProbeSize);

// Representations are post-ReLU hidden outputs on `probe`.
SimilarityReport similarity_report(std::span<const MlpParams> models,
                                   const UniverseMatch& match, const Dataset& probe);

struct MergeMatrix {
  Matrix before;  // midpoints of the raw models
  Matrix after;   // midpoints in the universe
};

// Accuracy of each pair's lambda = 0.5 midpoint; the diagonal holds the
// individual models' accuracies.
MergeMatrix pairwise_merge_matrix(std::span<const MlpParams> models,
                                  const UniverseMatch& match, const Dataset& data);

}  // namespace c2m3
