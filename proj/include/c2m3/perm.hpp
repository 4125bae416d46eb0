#pragma once

// Permutations, doubly stochastic matrices, linear assignment and Sinkhorn
// normalization.
//
// Matrix convention: a Permutation p of size N corresponds to the 0/1 matrix
// P with P(i, p[i]) = 1. Hence (P X).row(i) == X.row(p[i]) and
// <M, P> == sum_i M(i, p[i]).

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace c2m3 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDoublyStochasticTol = 1e-8;

class Permutation {
 public:
  Permutation() = default;
  // Throws kInvalidInput unless `map` is a bijection on {0..N-1}.
  explicit Permutation(std::vector<int> map);

  static Permutation identity(int n);

  int size() const { return static_cast<int>(map_.size()); }
  int operator[](int i) const { return map_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& map() const { return map_; }

  bool is_identity() const;
  Matrix matrix() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> map_;
};

// Matrix of the result is P * Q.
Permutation compose(const Permutation& p, const Permutation& q);
Permutation invert(const Permutation& p);

// Rows of `x` reordered so that result.row(i) == x.row(p[i]), i.e. P * x.
Matrix permute_rows(const Permutation& p, const Matrix& x);
Vector permute_rows(const Permutation& p, const Vector& x);
// x * P^T, i.e. result.col(j) == x.col(p[j]).
Matrix permute_cols_transposed(const Matrix& x, const Permutation& p);

// sum_i profit(i, p[i]), accumulated in row order.
double assignment_value(const Matrix& profit, const Permutation& p);

// Exact maximizer of sum_i profit(i, p[i]). Shortest augmenting path on the
// negated profit, followed by a pass that selects the lexicographically
// smallest assignment among all optimal ones.
Permutation lap_maximize(const Matrix& profit);

class DoublyStochastic {
 public:
  // Throws kInvalidInput if `m` is not square, has an entry below -tol, or a
  // row/column sum further than tol from one.
  explicit DoublyStochastic(Matrix m, double tol = kDoublyStochasticTol);

  static DoublyStochastic identity(int n);
  static DoublyStochastic barycenter(int n);

  const Matrix& matrix() const { return m_; }
  double tol() const { return tol_; }
  int size() const { return static_cast<int>(m_.rows()); }

 private:
  Matrix m_;
  double tol_;
};

bool is_doubly_stochastic(const Matrix& m, double tol = kDoublyStochasticTol);
// Largest |row sum - 1| or |col sum - 1|.
double stochastic_deviation(const Matrix& m);

// LAP-maximizes <soft, P>. A matrix that already is a permutation matrix
// comes back as that permutation.
Permutation project_to_permutation(const DoublyStochastic& soft);

struct SinkhornResult {
  Matrix matrix;
  bool converged = false;
  int sweeps = 0;
  double deviation = 0.0;
};

// Alternating row/column normalization of a strictly positive matrix. Entries
// are clamped at zero after each sweep. Non-convergence is reported via
// `converged`, not thrown.
SinkhornResult sinkhorn_knopp(const Matrix& m, int max_iters = 1000,
                              double tol = kDoublyStochasticTol);

}  // namespace c2m3
