#include "c2m3/perm.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace c2m3 {

Permutation::Permutation(std::vector<int> map) : map_(std::move(map)) {
  const int n = size();
  std::vector<char> seen(map_.size(), 0);
  for (int v : map_) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) {
      fail(ErrorCode::kInvalidInput,
           "permutation map is not a bijection on 0.." + std::to_string(n - 1));
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> map(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) map[static_cast<std::size_t>(i)] = i;
  return Permutation(std::move(map));
}

bool Permutation::is_identity() const {
  for (int i = 0; i < size(); ++i) {
    if ((*this)[i] != i) return false;
  }
  return true;
}

Matrix Permutation::matrix() const {
  Matrix m = Matrix::Zero(size(), size());
  for (int i = 0; i < size(); ++i) m(i, (*this)[i]) = 1.0;
  return m;
}

Permutation compose(const Permutation& p, const Permutation& q) {
  if (p.size() != q.size()) {
    fail(ErrorCode::kShapeMismatch, "compose: permutation sizes differ (" +
                                        std::to_string(p.size()) + " vs " +
                                        std::to_string(q.size()) + ")");
  }
  // (PQ)(i, k) = 1 iff k == q[p[i]].
  std::vector<int> map(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) map[static_cast<std::size_t>(i)] = q[p[i]];
  return Permutation(std::move(map));
}

Permutation invert(const Permutation& p) {
  std::vector<int> map(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) map[static_cast<std::size_t>(p[i])] = i;
  return Permutation(std::move(map));
}

Matrix permute_rows(const Permutation& p, const Matrix& x) {
  if (x.rows() != p.size()) {
    fail(ErrorCode::kShapeMismatch, "permute_rows: size mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < p.size(); ++i) out.row(i) = x.row(p[i]);
  return out;
}

Vector permute_rows(const Permutation& p, const Vector& x) {
  if (x.size() != p.size()) {
    fail(ErrorCode::kShapeMismatch, "permute_rows: size mismatch");
  }
  Vector out(x.size());
  for (int i = 0; i < p.size(); ++i) out(i) = x(p[i]);
  return out;
}

Matrix permute_cols_transposed(const Matrix& x, const Permutation& p) {
  if (x.cols() != p.size()) {
    fail(ErrorCode::kShapeMismatch, "permute_cols: size mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (int j = 0; j < p.size(); ++j) out.col(j) = x.col(p[j]);
  return out;
}

double assignment_value(const Matrix& profit, const Permutation& p) {
  double total = 0.0;
  for (int i = 0; i < p.size(); ++i) total += profit(i, p[i]);
  return total;
}

namespace {

void check_profit(const Matrix& profit) {
  if (profit.rows() != profit.cols()) {
    fail(ErrorCode::kInvalidInput, "lap_maximize: profit matrix is " +
                                       std::to_string(profit.rows()) + "x" +
                                       std::to_string(profit.cols()) +
                                       ", expected square");
  }
  if (!profit.allFinite()) {
    fail(ErrorCode::kInvalidInput, "lap_maximize: non-finite profit entry");
  }
}

// Among all perfect matchings of the tight (zero reduced cost) subgraph, pick
// the lexicographically smallest column vector. `col` holds an optimal
// assignment on entry and is rewritten in place.
void lexicographic_refine(const std::vector<std::vector<char>>& tight,
                          std::vector<int>& col) {
  const int n = static_cast<int>(col.size());
  std::vector<int> row_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) row_of[col[i]] = i;

  std::vector<char> locked_col(static_cast<std::size_t>(n), 0);
  std::vector<char> visited(static_cast<std::size_t>(n));
  std::vector<int> via(static_cast<std::size_t>(n));
  std::vector<int> queue;
  queue.reserve(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const int c0 = col[i];
    for (int j = 0; j < c0; ++j) {
      if (locked_col[j] || !tight[i][j]) continue;
      // i takes j; the current owner of j must reach c0 through tight edges
      // on unlocked columns.
      const int start = row_of[j];
      std::fill(visited.begin(), visited.end(), 0);
      queue.clear();
      queue.push_back(start);
      bool found = false;
      for (std::size_t head = 0; head < queue.size() && !found; ++head) {
        const int r = queue[head];
        for (int c = 0; c < n; ++c) {
          if (c == j || visited[c] || locked_col[c] || !tight[r][c]) continue;
          visited[c] = 1;
          via[c] = r;
          if (c == c0) {
            found = true;
            break;
          }
          queue.push_back(row_of[c]);
        }
      }
      if (!found) continue;
      int c = c0;
      while (true) {
        const int r = via[c];
        const int prev = col[r];
        col[r] = c;
        row_of[c] = r;
        if (r == start) break;
        c = prev;
      }
      col[i] = j;
      row_of[j] = i;
      break;
    }
    locked_col[col[i]] = 1;
  }
}

}  // namespace

Permutation lap_maximize(const Matrix& profit) {
  check_profit(profit);
  const int n = static_cast<int>(profit.rows());
  if (n == 0) return Permutation();

  // Shortest augmenting path with row/column potentials on cost = -profit
  // (1-based internally, index 0 is the virtual source column).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  auto cost = [&](int i, int j) { return -profit(i - 1, j - 1); };

  for (int i = 1; i <= n; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> col(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) col[owner[j] - 1] = j - 1;

  const double scale = 1.0 + profit.cwiseAbs().maxCoeff();
  const double eps = 1e-11 * scale * n;
  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      tight[i - 1][j - 1] = (cost(i, j) - u[i] - v[j]) <= eps;
    }
  }
  lexicographic_refine(tight, col);
  return Permutation(std::move(col));
}

DoublyStochastic::DoublyStochastic(Matrix m, double tol)
    : m_(std::move(m)), tol_(tol) {
  if (tol_ < 0.0) fail(ErrorCode::kInvalidInput, "negative tolerance");
  if (m_.rows() != m_.cols()) {
    fail(ErrorCode::kInvalidInput, "doubly stochastic matrix must be square");
  }
  if (!is_doubly_stochastic(m_, tol_)) {
    fail(ErrorCode::kInvalidInput,
         "matrix is not doubly stochastic within tol " + std::to_string(tol_));
  }
}

DoublyStochastic DoublyStochastic::identity(int n) {
  return DoublyStochastic(Matrix::Identity(n, n));
}

DoublyStochastic DoublyStochastic::barycenter(int n) {
  return DoublyStochastic(Matrix::Constant(n, n, 1.0 / n));
}

double stochastic_deviation(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const double rows = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double cols = (m.colwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(rows, cols);
}

bool is_doubly_stochastic(const Matrix& m, double tol) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if (m.size() == 0) return true;
  if (m.minCoeff() < -tol) return false;
  return stochastic_deviation(m) <= tol;
}

Permutation project_to_permutation(const DoublyStochastic& soft) {
  return lap_maximize(soft.matrix());
}

SinkhornResult sinkhorn_knopp(const Matrix& m, int max_iters, double tol) {
  if (max_iters < 1) fail(ErrorCode::kInvalidInput, "sinkhorn: max_iters < 1");
  if (m.rows() != m.cols()) {
    fail(ErrorCode::kInvalidInput, "sinkhorn: matrix must be square");
  }
  if (!m.allFinite() || (m.size() > 0 && m.minCoeff() <= 0.0)) {
    fail(ErrorCode::kInvalidInput, "sinkhorn: entries must be finite and > 0");
  }
  SinkhornResult result;
  result.matrix = m;
  Matrix& x = result.matrix;
  for (int sweep = 1; sweep <= max_iters; ++sweep) {
    const Vector row_sums = x.rowwise().sum();
    for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) /= row_sums(i);
    const Eigen::RowVectorXd col_sums = x.colwise().sum();
    for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) /= col_sums(j);
    x = x.cwiseMax(0.0);
    result.sweeps = sweep;
    result.deviation = stochastic_deviation(x);
    if (result.deviation < tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace c2m3
