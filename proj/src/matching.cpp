#include "c2m3/matching.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>

namespace c2m3 {

const char* to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::kIdentity: return "identity";
    case InitStrategy::kBarycenter: return "barycenter";
    case InitStrategy::kSinkhorn: return "sinkhorn";
  }
  return "unknown";
}

InitStrategy parse_init_strategy(const std::string& name) {
  if (name == "identity") return InitStrategy::kIdentity;
  if (name == "barycenter") return InitStrategy::kBarycenter;
  if (name == "sinkhorn") return InitStrategy::kSinkhorn;
  fail(ErrorCode::kInvalidInput, "unknown init strategy \"" + name + "\"");
}

void MatchConfig::validate() const {
  if (max_iters < 1) fail(ErrorCode::kInvalidInput, "max_iters must be >= 1");
  if (!(rel_tol > 0.0)) fail(ErrorCode::kInvalidInput, "rel_tol must be > 0");
  if (line_search_grid < 1) fail(ErrorCode::kInvalidInput, "line_search_grid must be >= 1");
}

PermutationSet UniverseMatch::pairwise(int p, int q) const {
  if (p < 0 || q < 0 || p >= num_models() || q >= num_models()) {
    fail(ErrorCode::kInvalidInput, "universe match: model index out of range");
  }
  const PermutationSet& pp = perms[static_cast<std::size_t>(p)];
  const PermutationSet& pq = perms[static_cast<std::size_t>(q)];
  PermutationSet out;
  for (std::size_t h = 0; h < pp.size(); ++h) out.push_back(compose(pp[h], invert(pq[h])));
  return out;
}

SoftPerms to_matrices(const PermutationSet& perms) {
  SoftPerms out;
  out.reserve(perms.size());
  for (const Permutation& p : perms) out.push_back(p.matrix());
  return out;
}

namespace {

double inner(const Matrix& x, const Matrix& y) { return (x.array() * y.array()).sum(); }
double inner(const Vector& x, const Vector& y) { return x.dot(y); }

// Group k's permutation, or nullptr for the fixed input/output identities.
const Matrix* group(std::span<const Matrix> perms, int k) {
  if (k < 0 || k >= static_cast<int>(perms.size())) return nullptr;
  return &perms[static_cast<std::size_t>(k)];
}

void check_soft_perms(const MlpParams& m, std::span<const Matrix> perms) {
  const std::vector<int> spec = perm_spec(m);
  if (perms.size() != spec.size()) {
    fail(ErrorCode::kShapeMismatch, "expected " + std::to_string(spec.size()) +
                                        " hidden permutations, got " +
                                        std::to_string(perms.size()));
  }
  for (std::size_t h = 0; h < spec.size(); ++h) {
    if (perms[h].rows() != spec[h] || perms[h].cols() != spec[h]) {
      fail(ErrorCode::kShapeMismatch,
           "permutation matrix " + std::to_string(h) + " does not match width " +
               std::to_string(spec[h]));
    }
  }
}

void check_models(std::span<const MlpParams> models) {
  if (models.size() < 2) fail(ErrorCode::kInvalidInput, "need at least two models");
  for (std::size_t i = 0; i < models.size(); ++i) {
    models[i].validate();
    check_same_architecture(models.front(), models[i], "matching");
  }
}

void check_layer(const MlpParams& m, int layer) {
  if (layer < 0 || layer >= m.num_hidden()) {
    fail(ErrorCode::kInvalidInput, "hidden layer index " + std::to_string(layer) +
                                       " out of range [0, " +
                                       std::to_string(m.num_hidden()) + ")");
  }
}

// Model p in universe coordinates: U_k = R_k^T W_k C_k, Ub_k = R_k^T b_k.
struct UniverseImage {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

UniverseImage universe_image(const MlpParams& m, std::span<const Matrix> perms) {
  UniverseImage img;
  for (int k = 0; k < m.num_layers(); ++k) {
    const Layer& layer = m.layers[static_cast<std::size_t>(k)];
    const Matrix* rows = group(perms, k);
    const Matrix* cols = group(perms, k - 1);
    Matrix w = cols ? Matrix(layer.weight * *cols) : layer.weight;
    Vector b = layer.bias;
    if (rows) {
      w = rows->transpose() * w;
      b = rows->transpose() * b;
    }
    img.weights.push_back(std::move(w));
    img.biases.push_back(std::move(b));
  }
  return img;
}

double image_inner(const UniverseImage& x, const UniverseImage& y, bool use_bias) {
  double total = 0.0;
  for (std::size_t k = 0; k < x.weights.size(); ++k) {
    total += inner(x.weights[k], y.weights[k]);
    if (use_bias) total += inner(x.biases[k], y.biases[k]);
  }
  return total;
}

double multi_objective_from_images(const std::vector<UniverseImage>& images,
                                   bool use_bias) {
  double total = 0.0;
  for (std::size_t p = 0; p < images.size(); ++p) {
    for (std::size_t q = p + 1; q < images.size(); ++q) {
      total += image_inner(images[p], images[q], use_bias);
    }
  }
  // Ordered pairs: every unordered pair appears twice.
  return 2.0 * total;
}

// Maximizer of the polynomial with coefficients c (ascending) over [0, 1].
double maximize_polynomial(const Vector& c, int grid) {
  auto value = [&](double x) {
    double v = 0.0;
    for (Eigen::Index i = c.size() - 1; i >= 0; --i) v = v * x + c(i);
    return v;
  };
  auto slope = [&](double x) {
    double v = 0.0;
    for (Eigen::Index i = c.size() - 1; i >= 1; --i) v = v * x + static_cast<double>(i) * c(i);
    return v;
  };
  std::vector<double> candidates = {0.0, 1.0};
  double x0 = 0.0;
  double s0 = slope(x0);
  for (int g = 1; g <= grid; ++g) {
    const double x1 = static_cast<double>(g) / grid;
    const double s1 = slope(x1);
    if (s0 == 0.0) {
      candidates.push_back(x0);
    } else if ((s0 > 0.0) != (s1 > 0.0) && s1 != 0.0) {
      double lo = x0, hi = x1, slo = s0;
      for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double sm = slope(mid);
        if ((sm > 0.0) == (slo > 0.0)) {
          lo = mid;
          slo = sm;
        } else {
          hi = mid;
        }
      }
      candidates.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    s0 = s1;
  }
  double best = 0.0;
  double best_value = value(0.0);
  for (double x : candidates) {
    const double v = value(x);
    if (v > best_value || (v == best_value && x < best)) {
      best = x;
      best_value = v;
    }
  }
  return best;
}

// Along the segment the objective is a polynomial of known degree in the
// step size; interpolate it exactly from degree+1 equispaced samples.
double exact_line_search(const std::function<double(double)>& f, int degree, int grid) {
  const int n = degree + 1;
  Matrix vandermonde(n, n);
  Vector values(n);
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / degree;
    double power = 1.0;
    for (int j = 0; j < n; ++j) {
      vandermonde(i, j) = power;
      power *= x;
    }
    values(i) = f(x);
  }
  const Vector coeffs = vandermonde.fullPivLu().solve(values);
  return maximize_polynomial(coeffs, grid);
}

// Clamp rounding negatives and pull row/column sums back to one.
void renormalize(Matrix& m) {
  if (m.minCoeff() >= 0.0 && stochastic_deviation(m) <= 1e-13) return;
  m = m.cwiseMax(0.0);
  for (int sweep = 0; sweep < 50 && stochastic_deviation(m) > 1e-14; ++sweep) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
    for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) /= m.col(j).sum();
  }
}

SoftPerms step(const SoftPerms& current, const SoftPerms& vertex, double alpha) {
  SoftPerms out(current.size());
  for (std::size_t h = 0; h < current.size(); ++h) {
    out[h] = (1.0 - alpha) * current[h] + alpha * vertex[h];
  }
  return out;
}

PermutationSet project_all(const SoftPerms& soft) {
  PermutationSet out;
  for (const Matrix& m : soft) {
    Matrix cleaned = m;
    renormalize(cleaned);
    out.push_back(project_to_permutation(DoublyStochastic(std::move(cleaned))));
  }
  return out;
}

SoftPerms initial_soft(const MatchConfig& config, const std::vector<int>& spec,
                       std::uint64_t seed) {
  SoftPerms soft;
  for (const DoublyStochastic& ds : init_permutations(config.init, spec, seed)) {
    soft.push_back(ds.matrix());
  }
  return soft;
}

// Shared Frank-Wolfe driver over a flat list of relaxed permutations.
// `objective` and `gradients` see the full list; `degree` is the polynomial
// degree of the objective along a segment.
struct FrankWolfeResult {
  SoftPerms soft;
  MatchTrace trace;
};

FrankWolfeResult frank_wolfe(SoftPerms soft,
                             const std::function<double(const SoftPerms&)>& objective,
                             const std::function<SoftPerms(const SoftPerms&)>& gradients,
                             int degree, const MatchConfig& config) {
  FrankWolfeResult result;
  MatchTrace& trace = result.trace;
  double f = objective(soft);
  if (!std::isfinite(f)) fail(ErrorCode::kNumerical, "non-finite matching objective");
  trace.objective.push_back(f);

  for (int it = 1; it <= config.max_iters; ++it) {
    const SoftPerms grads = gradients(soft);
    SoftPerms vertex;
    vertex.reserve(grads.size());
    for (const Matrix& g : grads) vertex.push_back(lap_maximize(g).matrix());

    const double alpha = exact_line_search(
        [&](double a) { return objective(step(soft, vertex, a)); }, degree,
        config.line_search_grid);
    if (alpha < 1e-12) {
      trace.converged = true;
      break;
    }
    SoftPerms next = step(soft, vertex, alpha);
    if (it % 10 == 0) {
      for (Matrix& m : next) renormalize(m);
    }
    const double f_next = objective(next);
    if (!std::isfinite(f_next)) fail(ErrorCode::kNumerical, "non-finite matching objective");
    if (f_next < f) {
      // Rounding made the best step a (tiny) loss: we are at a stationary point.
      trace.converged = true;
      break;
    }
    soft = std::move(next);
    trace.iterations = it;
    trace.objective.push_back(f_next);
    trace.steps.push_back(alpha);
    const double gain = (f_next - f) / std::max(1.0, std::abs(f));
    f = f_next;
    if (gain < config.rel_tol) {
      trace.converged = true;
      break;
    }
  }
  result.soft = std::move(soft);
  return result;
}

}  // namespace

double pairwise_objective(const MlpParams& a, const MlpParams& b,
                          std::span<const Matrix> perms, bool use_bias) {
  check_same_architecture(a, b, "pairwise_objective");
  check_soft_perms(a, perms);
  double total = 0.0;
  for (int k = 0; k < a.num_layers(); ++k) {
    const Layer& la = a.layers[static_cast<std::size_t>(k)];
    const Layer& lb = b.layers[static_cast<std::size_t>(k)];
    const Matrix* rows = group(perms, k);
    const Matrix* cols = group(perms, k - 1);
    Matrix w = cols ? Matrix(lb.weight * cols->transpose()) : lb.weight;
    Vector bias = lb.bias;
    if (rows) {
      w = *rows * w;
      bias = *rows * bias;
    }
    total += inner(la.weight, w);
    if (use_bias) total += inner(la.bias, bias);
  }
  return total;
}

double pairwise_objective(const MlpParams& a, const MlpParams& b,
                          const PermutationSet& perms, bool use_bias) {
  return pairwise_objective(a, b, to_matrices(perms), use_bias);
}

Matrix pairwise_gradient(const MlpParams& a, const MlpParams& b,
                         std::span<const Matrix> perms, int layer, bool use_bias) {
  check_same_architecture(a, b, "pairwise_gradient");
  check_layer(a, layer);
  check_soft_perms(a, perms);
  const auto h = static_cast<std::size_t>(layer);
  const Layer& a_in = a.layers[h];
  const Layer& b_in = b.layers[h];
  const Layer& a_out = a.layers[h + 1];
  const Layer& b_out = b.layers[h + 1];

  const Matrix* prev = group(perms, layer - 1);
  const Matrix* next = group(perms, layer + 1);
  // From permuting the rows of layer h.
  Matrix g = prev ? Matrix(a_in.weight * *prev * b_in.weight.transpose())
                  : Matrix(a_in.weight * b_in.weight.transpose());
  // From permuting the columns of layer h+1.
  g += next ? Matrix(a_out.weight.transpose() * *next * b_out.weight)
            : Matrix(a_out.weight.transpose() * b_out.weight);
  if (use_bias) g += a_in.bias * b_in.bias.transpose();
  return g;
}

PairwiseMatch fw_match_pair(const MlpParams& a, const MlpParams& b,
                            const MatchConfig& config) {
  config.validate();
  a.validate();
  b.validate();
  check_same_architecture(a, b, "fw_match_pair");
  const std::vector<int> spec = perm_spec(a);

  auto objective = [&](const SoftPerms& p) {
    return pairwise_objective(a, b, p, config.use_bias);
  };
  auto gradients = [&](const SoftPerms& p) {
    SoftPerms g;
    for (int h = 0; h < static_cast<int>(spec.size()); ++h) {
      g.push_back(pairwise_gradient(a, b, p, h, config.use_bias));
    }
    return g;
  };
  FrankWolfeResult fw =
      frank_wolfe(initial_soft(config, spec, config.seed), objective, gradients, 2, config);

  PairwiseMatch match;
  match.perms = project_all(fw.soft);
  match.trace = std::move(fw.trace);
  match.objective = pairwise_objective(a, b, match.perms, config.use_bias);
  return match;
}

double multi_objective(std::span<const MlpParams> models,
                       const std::vector<SoftPerms>& perms, bool use_bias) {
  check_models(models);
  if (perms.size() != models.size()) {
    fail(ErrorCode::kShapeMismatch, "one permutation stack per model is required");
  }
  std::vector<UniverseImage> images;
  for (std::size_t p = 0; p < models.size(); ++p) {
    check_soft_perms(models[p], perms[p]);
    images.push_back(universe_image(models[p], perms[p]));
  }
  return multi_objective_from_images(images, use_bias);
}

double multi_objective(std::span<const MlpParams> models,
                       const std::vector<PermutationSet>& perms, bool use_bias) {
  std::vector<SoftPerms> soft;
  for (const PermutationSet& p : perms) soft.push_back(to_matrices(p));
  return multi_objective(models, soft, use_bias);
}

Matrix multi_gradient(std::span<const MlpParams> models,
                      const std::vector<SoftPerms>& perms, int model, int layer,
                      bool use_bias) {
  check_models(models);
  if (perms.size() != models.size()) {
    fail(ErrorCode::kShapeMismatch, "one permutation stack per model is required");
  }
  if (model < 0 || model >= static_cast<int>(models.size())) {
    fail(ErrorCode::kInvalidInput, "model index out of range");
  }
  check_layer(models.front(), layer);
  for (std::size_t p = 0; p < models.size(); ++p) check_soft_perms(models[p], perms[p]);

  const auto p = static_cast<std::size_t>(model);
  const auto h = static_cast<std::size_t>(layer);
  const MlpParams& mp = models[p];
  const Matrix* prev_p = group(perms[p], layer - 1);
  const Matrix* next_p = group(perms[p], layer + 1);
  const Matrix w_in = prev_p ? Matrix(mp.layers[h].weight * *prev_p) : mp.layers[h].weight;
  const Matrix w_out = next_p ? Matrix(mp.layers[h + 1].weight.transpose() * *next_p)
                              : Matrix(mp.layers[h + 1].weight.transpose());

  const int width = static_cast<int>(mp.layers[h].weight.rows());
  Matrix g = Matrix::Zero(width, width);
  for (std::size_t q = 0; q < models.size(); ++q) {
    if (q == p) continue;
    const MlpParams& mq = models[q];
    const Matrix& pq = perms[q][h];
    const Matrix* prev_q = group(perms[q], layer - 1);
    const Matrix* next_q = group(perms[q], layer + 1);
    // rows: W^p_l P^p_{l-1} (P^q_{l-1})^T (W^q_l)^T P^q_l
    const Matrix wq_in = prev_q ? Matrix(mq.layers[h].weight * *prev_q) : mq.layers[h].weight;
    const Matrix rows = w_in * wq_in.transpose() * pq;
    // cols: (W^p_{l+1})^T P^p_{l+1} (P^q_{l+1})^T W^q_{l+1} P^q_l
    const Matrix wq_out = next_q ? Matrix(next_q->transpose() * mq.layers[h + 1].weight)
                                 : mq.layers[h + 1].weight;
    const Matrix cols = w_out * wq_out * pq;
    // The mirrored (q, p) term of the ordered sum is the same inner product,
    // so it contributes rows and cols once more.
    g += 2.0 * (rows + cols);
    if (use_bias) {
      g += 2.0 * (mp.layers[h].bias * (mq.layers[h].bias.transpose() * pq));
    }
  }
  return g;
}

UniverseMatch fw_match_multi(std::span<const MlpParams> models,
                             const MatchConfig& config) {
  config.validate();
  check_models(models);
  const std::vector<int> spec = perm_spec(models.front());
  const std::size_t n = models.size();
  const std::size_t groups = spec.size();
  const int num_layers = models.front().num_layers();

  // The n per-model stacks are concatenated: entry p * groups + h.
  auto unflatten = [&](const SoftPerms& flat, std::size_t p) {
    return std::span<const Matrix>(flat.data() + p * groups, groups);
  };
  auto images_of = [&](const SoftPerms& flat) {
    std::vector<UniverseImage> images;
    for (std::size_t p = 0; p < n; ++p) images.push_back(universe_image(models[p], unflatten(flat, p)));
    return images;
  };
  auto objective = [&](const SoftPerms& flat) {
    return multi_objective_from_images(images_of(flat), config.use_bias);
  };
  // Same contributions as multi_gradient, with the partner sums shared
  // through S_k = sum_q U_k^q.
  auto gradients = [&](const SoftPerms& flat) {
    const std::vector<UniverseImage> images = images_of(flat);
    std::vector<Matrix> sum_w(static_cast<std::size_t>(num_layers));
    std::vector<Vector> sum_b(static_cast<std::size_t>(num_layers));
    for (int k = 0; k < num_layers; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      sum_w[kk] = images[0].weights[kk];
      sum_b[kk] = images[0].biases[kk];
      for (std::size_t q = 1; q < n; ++q) {
        sum_w[kk] += images[q].weights[kk];
        sum_b[kk] += images[q].biases[kk];
      }
    }
    SoftPerms grads;
    for (std::size_t p = 0; p < n; ++p) {
      const std::span<const Matrix> perms = unflatten(flat, p);
      for (std::size_t h = 0; h < groups; ++h) {
        const int l = static_cast<int>(h);
        const MlpParams& mp = models[p];
        const Matrix* prev = group(perms, l - 1);
        const Matrix* next = group(perms, l + 1);
        const Matrix others_in = sum_w[h] - images[p].weights[h];
        const Matrix others_out = sum_w[h + 1] - images[p].weights[h + 1];
        Matrix g = prev ? Matrix(mp.layers[h].weight * *prev * others_in.transpose())
                        : Matrix(mp.layers[h].weight * others_in.transpose());
        g += next ? Matrix(mp.layers[h + 1].weight.transpose() * *next * others_out)
                  : Matrix(mp.layers[h + 1].weight.transpose() * others_out);
        if (config.use_bias) {
          g += mp.layers[h].bias * (sum_b[h] - images[p].biases[h]).transpose();
        }
        grads.push_back(2.0 * g);
      }
    }
    return grads;
  };

  SoftPerms init;
  std::mt19937_64 rng(config.seed);
  for (std::size_t p = 0; p < n; ++p) {
    SoftPerms stack = initial_soft(config, spec, rng());
    for (Matrix& m : stack) init.push_back(std::move(m));
  }
  FrankWolfeResult fw = frank_wolfe(std::move(init), objective, gradients, 4, config);

  UniverseMatch match;
  const PermutationSet flat = project_all(fw.soft);
  for (std::size_t p = 0; p < n; ++p) {
    match.perms.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(p * groups),
                             flat.begin() + static_cast<std::ptrdiff_t>((p + 1) * groups));
  }
  match.trace = std::move(fw.trace);
  match.objective = multi_objective(models, match.perms, config.use_bias);
  return match;
}

PairwiseMatch coordinate_descent_match(const MlpParams& a, const MlpParams& b,
                                       std::uint64_t seed, bool use_bias) {
  a.validate();
  b.validate();
  check_same_architecture(a, b, "coordinate_descent_match");
  PairwiseMatch match;
  match.perms = identity_perms(a);
  SoftPerms hard = to_matrices(match.perms);
  std::mt19937_64 rng(seed);
  std::vector<int> order(static_cast<std::size_t>(a.num_hidden()));
  std::iota(order.begin(), order.end(), 0);

  match.trace.objective.push_back(pairwise_objective(a, b, hard, use_bias));
  for (int sweep = 1; sweep <= kCoordinateDescentSweeps; ++sweep) {
    std::shuffle(order.begin(), order.end(), rng);
    bool changed = false;
    for (int h : order) {
      const auto hh = static_cast<std::size_t>(h);
      const Matrix g = pairwise_gradient(a, b, hard, h, use_bias);
      const Permutation candidate = lap_maximize(g);
      const double old_value = assignment_value(g, match.perms[hh]);
      const double new_value = assignment_value(g, candidate);
      // Accept strict improvements only so ties cannot cycle.
      if (candidate != match.perms[hh] && new_value > old_value + 1e-12 * (1.0 + std::abs(old_value))) {
        match.perms[hh] = candidate;
        hard[hh] = candidate.matrix();
        changed = true;
      }
    }
    match.trace.iterations = sweep;
    match.trace.objective.push_back(pairwise_objective(a, b, hard, use_bias));
    if (!changed) {
      match.trace.converged = true;
      break;
    }
  }
  match.objective = match.trace.objective.back();
  return match;
}

std::vector<DoublyStochastic> init_permutations(InitStrategy strategy,
                                                const std::vector<int>& spec,
                                                std::uint64_t seed) {
  std::vector<DoublyStochastic> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int n : spec) {
    if (n < 1) fail(ErrorCode::kInvalidInput, "permutation sizes must be positive");
    switch (strategy) {
      case InitStrategy::kIdentity:
        out.push_back(DoublyStochastic::identity(n));
        break;
      case InitStrategy::kBarycenter:
        out.push_back(DoublyStochastic::barycenter(n));
        break;
      case InitStrategy::kSinkhorn: {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) m(i, j) = std::exp(gauss(rng));
        }
        SinkhornResult s = sinkhorn_knopp(m);
        const double tol = std::max(kDoublyStochasticTol, 2.0 * s.deviation);
        out.push_back(DoublyStochastic(std::move(s.matrix), tol));
        break;
      }
    }
  }
  return out;
}

}  // namespace c2m3
