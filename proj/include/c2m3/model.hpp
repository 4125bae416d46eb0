#pragma once

// ReLU MLP parameters, forward/loss evaluation and neuron permutations.
//
// Layer h maps d_h -> d_{h+1}: weight is d_{h+1} x d_h, bias has d_{h+1}
// entries. Hidden unit group h (0-based, h < L-1) is the output of layer h
// and the input of layer h+1; a PermutationSet has one entry per group.

#include "c2m3/perm.hpp"

#include <span>
#include <string>
#include <vector>

namespace c2m3 {

struct Layer {
  Matrix weight;
  Vector bias;
};

struct MlpParams {
  std::vector<Layer> layers;

  static MlpParams zeros(const std::vector<int>& dims);

  std::vector<int> dims() const;
  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_hidden() const { return num_layers() - 1; }
  std::size_t num_parameters() const;

  // Throws kShapeMismatch / kInvalidInput when shapes do not chain or an
  // entry is non-finite.
  void validate() const;

  friend bool operator==(const MlpParams& a, const MlpParams& b);
};

using PermutationSet = std::vector<Permutation>;

// Sizes of the permutable hidden groups, d_1 .. d_{L-1}. Input and output
// dimensions are never permuted.
std::vector<int> perm_spec(const MlpParams& m);
PermutationSet identity_perms(const MlpParams& m);
PermutationSet invert(const PermutationSet& perms);

void check_same_architecture(const MlpParams& a, const MlpParams& b,
                             const char* context);
void check_perm_sizes(const MlpParams& m, const PermutationSet& perms);

// W_h <- P_h W_h P_{h-1}^T and b_h <- P_h b_h, with P_{-1} = P_{L-1} = I.
// The result computes exactly the same function as `m`.
MlpParams apply_permutations(const MlpParams& m, const PermutationSet& perms);

// Elementwise arithmetic over identically shaped parameter sets.
MlpParams lerp(const MlpParams& a, const MlpParams& b, double lambda);
MlpParams mean(std::span<const MlpParams> models);
MlpParams scaled(const MlpParams& m, double s);
Vector flatten(const MlpParams& m);
// sum_h ||W_h||_F^2 + ||b_h||^2
double squared_norm(const MlpParams& m);

struct Dataset {
  Matrix features;          // M x d_0
  std::vector<int> labels;  // M entries in [0, C)
  std::string name;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int num_classes() const;
  Dataset subset(std::span<const int> rows) const;
};

struct ForwardPass {
  Matrix logits;                       // M x d_L
  std::vector<Matrix> pre_activations; // per hidden group, M x d_h
  std::vector<Matrix> hidden;          // post-ReLU, M x d_h
};

// Rows of `x` are samples.
ForwardPass forward(const MlpParams& m, const Matrix& x);
Matrix logits(const MlpParams& m, const Matrix& x);

struct Metrics {
  double loss = 0.0;      // mean cross-entropy
  double accuracy = 0.0;  // fraction with argmax == label
};

// Mean negative log-softmax of the true class, computed with the usual
// max-shift. Argmax ties resolve to the lowest class index.
Metrics loss_and_accuracy(const MlpParams& m, const Dataset& data);

}  // namespace c2m3
