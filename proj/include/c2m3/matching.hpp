#pragma once

// Weight matching: pairwise and n-way (universe) Frank-Wolfe over the
// Birkhoff polytope, and the layer-wise coordinate descent baseline.
//
// Layer indices here are hidden group indices h in [0, L-1): the permutation
// of group h acts on the rows of layer h and the columns of layer h+1. The
// input and output sides are fixed to the identity.

#include "c2m3/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace c2m3 {

enum class InitStrategy { kIdentity, kBarycenter, kSinkhorn };

const char* to_string(InitStrategy s);
InitStrategy parse_init_strategy(const std::string& name);

struct MatchConfig {
  InitStrategy init = InitStrategy::kIdentity;
  int max_iters = 100;
  double rel_tol = 1e-6;
  // Number of sub-intervals scanned for sign changes of the line-search
  // polynomial's derivative.
  int line_search_grid = 65;
  // Only consumed by the Sinkhorn initialization and by coordinate descent.
  std::uint64_t seed = 0;
  // Include bias inner products in objective and gradients.
  bool use_bias = true;

  void validate() const;
};

struct MatchTrace {
  std::vector<double> objective;  // entry 0 is the objective at the init
  std::vector<double> steps;      // accepted step size per iteration
  bool converged = false;
  int iterations = 0;
};

// perms map model B onto model A: apply_permutations(b, perms) is aligned
// with a.
struct PairwiseMatch {
  PermutationSet perms;
  MatchTrace trace;
  double objective = 0.0;  // at the final hard permutations
};

// perms[p][h] maps the universe onto model p, so map_to_universe(model p)
// applies its inverse. Pairwise maps factor through the universe and are
// cycle-consistent by construction.
struct UniverseMatch {
  std::vector<PermutationSet> perms;
  MatchTrace trace;
  double objective = 0.0;

  int num_models() const { return static_cast<int>(perms.size()); }
  // P^{pq} = P^p (P^q)^T per group: aligns model q onto model p.
  PermutationSet pairwise(int p, int q) const;
};

using SoftPerms = std::vector<Matrix>;

SoftPerms to_matrices(const PermutationSet& perms);

// sum_h <W_h^A, P_h W_h^B P_{h-1}^T> + <b_h^A, P_h b_h^B>. Accepts hard or
// relaxed (doubly stochastic) permutations.
double pairwise_objective(const MlpParams& a, const MlpParams& b,
                          std::span<const Matrix> perms, bool use_bias = true);
double pairwise_objective(const MlpParams& a, const MlpParams& b,
                          const PermutationSet& perms, bool use_bias = true);

// Gradient with respect to P_layer:
//   W_l^A P_{l-1} (W_l^B)^T + (W_{l+1}^A)^T P_{l+1} W_{l+1}^B + b_l^A (b_l^B)^T
Matrix pairwise_gradient(const MlpParams& a, const MlpParams& b,
                         std::span<const Matrix> perms, int layer,
                         bool use_bias = true);

PairwiseMatch fw_match_pair(const MlpParams& a, const MlpParams& b,
                            const MatchConfig& config = {});

// sum over ordered pairs p != q of sum_h <Ŵ_h^p, Ŵ_h^q> (+ bias terms), where
// Ŵ_h^p = (P_h^p)^T W_h^p P_{h-1}^p is model p expressed in the universe.
double multi_objective(std::span<const MlpParams> models,
                       const std::vector<SoftPerms>& perms, bool use_bias = true);
double multi_objective(std::span<const MlpParams> models,
                       const std::vector<PermutationSet>& perms,
                       bool use_bias = true);

// Gradient with respect to P_layer^model: for each partner q the row and
// column contributions, plus the same two again from the mirrored (q, p)
// term of the ordered sum, plus the bias contribution b^p (b^q)^T P^q.
Matrix multi_gradient(std::span<const MlpParams> models,
                      const std::vector<SoftPerms>& perms, int model, int layer,
                      bool use_bias = true);

UniverseMatch fw_match_multi(std::span<const MlpParams> models,
                             const MatchConfig& config = {});

// Layer-at-a-time LAP sweeps over hard permutations, starting from the
// identity, visiting hidden groups in a freshly shuffled order every sweep.
// Stops when a full sweep changes nothing (or after kCoordinateDescentSweeps,
// with converged == false).
inline constexpr int kCoordinateDescentSweeps = 500;
PairwiseMatch coordinate_descent_match(const MlpParams& a, const MlpParams& b,
                                       std::uint64_t seed, bool use_bias = true);

std::vector<DoublyStochastic> init_permutations(InitStrategy strategy,
                                                const std::vector<int>& spec,
                                                std::uint64_t seed);

}  // namespace c2m3
