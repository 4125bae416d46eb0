#include "c2m3/evaluation.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace c2m3 {

MlpParams interpolate(const MlpParams& a, const MlpParams& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    fail(ErrorCode::kInvalidInput, "interpolate: lambda must lie in [0, 1]");
  }
  if (lambda == 0.0) return a;
  if (lambda == 1.0) {
    check_same_architecture(a, b, "interpolate");
    return b;
  }
  return lerp(a, b, lambda);
}

BarrierCurve loss_barrier(const MlpParams& a, const MlpParams& b, const Dataset& data,
                          int grid_size) {
  if (grid_size < 2) fail(ErrorCode::kInvalidInput, "barrier grid needs >= 2 points");
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "barrier: empty dataset");
  check_same_architecture(a, b, "loss_barrier");
  BarrierCurve curve;
  for (int i = 0; i < grid_size; ++i) {
    const double lambda = static_cast<double>(i) / (grid_size - 1);
    const Metrics m = loss_and_accuracy(interpolate(a, b, lambda), data);
    curve.lambdas.push_back(lambda);
    curve.losses.push_back(m.loss);
    curve.accuracies.push_back(m.accuracy);
  }
  const double peak = *std::max_element(curve.losses.begin(), curve.losses.end());
  curve.barrier = peak - 0.5 * (curve.losses.front() + curve.losses.back());
  return curve;
}

BarrierReport barrier_report(const MlpParams& a, const MlpParams& b, const Dataset& train,
                             const Dataset& test, int grid_size) {
  return {loss_barrier(a, b, train, grid_size), loss_barrier(a, b, test, grid_size)};
}

PairwiseMaps pairwise_maps(const UniverseMatch& match) {
  return [match](int p, int q) { return match.pairwise(p, q); };
}

PairwiseMaps pairwise_maps(const PairwiseMatchTable& table) {
  return [table](int p, int q) {
    if (auto it = table.find({p, q}); it != table.end()) return it->second;
    if (auto it = table.find({q, p}); it != table.end()) return invert(it->second);
    fail(ErrorCode::kInvalidInput, "no pairwise match between models " +
                                       std::to_string(p) + " and " + std::to_string(q));
  };
}

double cycle_error(std::span<const MlpParams> models, const PairwiseMaps& maps,
                   std::span<const int> cycle) {
  if (cycle.empty()) fail(ErrorCode::kInvalidInput, "cycle_error: empty cycle");
  for (int i : cycle) {
    if (i < 0 || i >= static_cast<int>(models.size())) {
      fail(ErrorCode::kInvalidInput, "cycle_error: model index out of range");
    }
  }
  if (cycle.front() != cycle.back()) {
    fail(ErrorCode::kInvalidInput, "cycle_error: cycle must end at its start model");
  }
  const MlpParams& start = models[static_cast<std::size_t>(cycle.front())];
  PermutationSet composed = identity_perms(start);
  // Walking p0 -> p1 -> ... -> p0 gives P^{p0 pk} ... P^{p2 p1} P^{p1 p0}.
  for (std::size_t i = 0; i + 1 < cycle.size(); ++i) {
    const PermutationSet step = maps(cycle[i + 1], cycle[i]);
    check_perm_sizes(start, step);
    for (std::size_t h = 0; h < composed.size(); ++h) composed[h] = compose(step[h], composed[h]);
  }
  const MlpParams moved = apply_permutations(start, composed);
  return (flatten(moved) - flatten(start)).norm();
}

double cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) fail(ErrorCode::kShapeMismatch, "cka: row counts differ");
  if (x.rows() < 2) fail(ErrorCode::kInvalidInput, "cka: need at least two samples");
  // Linear kernels; tr(K H L H) with H = I - 11^T/M equals
  // ||Xc^T Yc||_F^2 for column-centered Xc, Yc. The (M-1)^2 normalizers of
  // HSIC cancel in the ratio but are kept for clarity.
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  const double norm = std::pow(static_cast<double>(x.rows() - 1), 2);
  const double hsic_xy = (xc.transpose() * yc).squaredNorm() / norm;
  const double hsic_xx = (xc.transpose() * xc).squaredNorm() / norm;
  const double hsic_yy = (yc.transpose() * yc).squaredNorm() / norm;
  if (!(hsic_xx > 0.0) || !(hsic_yy > 0.0)) {
    fail(ErrorCode::kNumerical, "cka: zero-variance representation, similarity undefined");
  }
  return hsic_xy / std::sqrt(hsic_xx * hsic_yy);
}

WeightSimilarity weight_similarity(const MlpParams& a, const MlpParams& b) {
  check_same_architecture(a, b, "weight_similarity");
  const Vector u = flatten(a);
  const Vector v = flatten(b);
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    fail(ErrorCode::kNumerical, "weight_similarity: zero-norm model has no cosine");
  }
  WeightSimilarity s;
  s.cosine = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  s.euclidean = (u - v).norm();
  return s;
}

Dataset probe_batch(const Dataset& data, std::uint64_t seed, int size) {
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "probe_batch: empty dataset");
  if (size < 1) fail(ErrorCode::kInvalidInput, "probe_batch: size must be >= 1");
  if (data.size() <= size) return data;
  std::vector<int> rows(static_cast<std::size_t>(data.size()));
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(size));
  std::sort(rows.begin(), rows.end());
  Dataset probe = data.subset(rows);
  probe.name = data.name + "-probe";
  return probe;
}

SimilarityReport similarity_report(std::span<const MlpParams> models,
                                   const UniverseMatch& match, const Dataset& probe) {
  const std::vector<MlpParams> mapped = universe_models(models, match);
  std::vector<ForwardPass> raw, uni;
  for (std::size_t p = 0; p < models.size(); ++p) {
    raw.push_back(forward(models[p], probe.features));
    uni.push_back(forward(mapped[p], probe.features));
  }
  SimilarityReport report;
  report.probe_size = probe.size();
  for (int p = 0; p < static_cast<int>(models.size()); ++p) {
    for (int q = p + 1; q < static_cast<int>(models.size()); ++q) {
      const auto pp = static_cast<std::size_t>(p);
      const auto qq = static_cast<std::size_t>(q);
      PairSimilarity s;
      s.p = p;
      s.q = q;
      s.before = weight_similarity(models[pp], models[qq]);
      s.after = weight_similarity(mapped[pp], mapped[qq]);
      for (std::size_t h = 0; h < raw[pp].hidden.size(); ++h) {
        s.cka_before.push_back(cka(raw[pp].hidden[h], raw[qq].hidden[h]));
        s.cka_after.push_back(cka(uni[pp].hidden[h], uni[qq].hidden[h]));
        s.repr_dist_before.push_back((raw[pp].hidden[h] - raw[qq].hidden[h]).norm());
        s.repr_dist_after.push_back((uni[pp].hidden[h] - uni[qq].hidden[h]).norm());
      }
      report.pairs.push_back(std::move(s));
    }
  }
  return report;
}

MergeMatrix pairwise_merge_matrix(std::span<const MlpParams> models,
                                  const UniverseMatch& match, const Dataset& data) {
  if (models.size() < 2) fail(ErrorCode::kInvalidInput, "merge matrix needs >= 2 models");
  const std::vector<MlpParams> mapped = universe_models(models, match);
  const auto n = static_cast<Eigen::Index>(models.size());
  MergeMatrix out{Matrix(n, n), Matrix(n, n)};
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      const auto pp = static_cast<std::size_t>(p);
      const auto qq = static_cast<std::size_t>(q);
      if (p == q) {
        out.before(p, q) = loss_and_accuracy(models[pp], data).accuracy;
        out.after(p, q) = loss_and_accuracy(mapped[pp], data).accuracy;
      } else {
        out.before(p, q) = loss_and_accuracy(lerp(models[pp], models[qq], 0.5), data).accuracy;
        out.after(p, q) = loss_and_accuracy(lerp(mapped[pp], mapped[qq], 0.5), data).accuracy;
      }
    }
  }
  return out;
}

}  // namespace c2m3
