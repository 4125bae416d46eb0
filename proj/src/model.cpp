#include "c2m3/model.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace c2m3 {

MlpParams MlpParams::zeros(const std::vector<int>& dims) {
  if (dims.size() < 2) {
    fail(ErrorCode::kInvalidInput, "an MLP needs at least input and output dims");
  }
  MlpParams m;
  for (std::size_t h = 0; h + 1 < dims.size(); ++h) {
    if (dims[h] < 1 || dims[h + 1] < 1) {
      fail(ErrorCode::kInvalidInput, "layer dims must be positive");
    }
    m.layers.push_back({Matrix::Zero(dims[h + 1], dims[h]), Vector::Zero(dims[h + 1])});
  }
  return m;
}

std::vector<int> MlpParams::dims() const {
  std::vector<int> d;
  if (layers.empty()) return d;
  d.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const Layer& layer : layers) d.push_back(static_cast<int>(layer.weight.rows()));
  return d;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const Layer& layer : layers) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) fail(ErrorCode::kInvalidInput, "model has no layers");
  for (std::size_t h = 0; h < layers.size(); ++h) {
    const Layer& layer = layers[h];
    const std::string where = "layer " + std::to_string(h);
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1) {
      fail(ErrorCode::kShapeMismatch, where + ": empty weight matrix");
    }
    if (layer.bias.size() != layer.weight.rows()) {
      fail(ErrorCode::kShapeMismatch, where + ": bias length " +
                                          std::to_string(layer.bias.size()) +
                                          " != weight rows " +
                                          std::to_string(layer.weight.rows()));
    }
    if (h > 0 && layer.weight.cols() != layers[h - 1].weight.rows()) {
      fail(ErrorCode::kShapeMismatch, where + ": weight columns do not match "
                                              "previous layer outputs");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      fail(ErrorCode::kInvalidInput, where + ": non-finite parameter");
    }
  }
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t h = 0; h < a.layers.size(); ++h) {
    const Layer& x = a.layers[h];
    const Layer& y = b.layers[h];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
        x.bias.size() != y.bias.size()) {
      return false;
    }
    if (x.weight != y.weight || x.bias != y.bias) return false;
  }
  return true;
}

std::vector<int> perm_spec(const MlpParams& m) {
  std::vector<int> sizes;
  for (int h = 0; h < m.num_hidden(); ++h) {
    sizes.push_back(static_cast<int>(m.layers[static_cast<std::size_t>(h)].weight.rows()));
  }
  return sizes;
}

PermutationSet identity_perms(const MlpParams& m) {
  PermutationSet perms;
  for (int n : perm_spec(m)) perms.push_back(Permutation::identity(n));
  return perms;
}

PermutationSet invert(const PermutationSet& perms) {
  PermutationSet out;
  out.reserve(perms.size());
  for (const Permutation& p : perms) out.push_back(invert(p));
  return out;
}

void check_same_architecture(const MlpParams& a, const MlpParams& b,
                             const char* context) {
  if (a.dims() != b.dims()) {
    fail(ErrorCode::kShapeMismatch,
         std::string(context) + ": models have different architectures");
  }
}

void check_perm_sizes(const MlpParams& m, const PermutationSet& perms) {
  const std::vector<int> spec = perm_spec(m);
  if (perms.size() != spec.size()) {
    fail(ErrorCode::kShapeMismatch, "expected " + std::to_string(spec.size()) +
                                        " hidden permutations, got " +
                                        std::to_string(perms.size()));
  }
  for (std::size_t h = 0; h < spec.size(); ++h) {
    if (perms[h].size() != spec[h]) {
      fail(ErrorCode::kShapeMismatch,
           "permutation " + std::to_string(h) + " has size " +
               std::to_string(perms[h].size()) + ", hidden width is " +
               std::to_string(spec[h]));
    }
  }
}

MlpParams apply_permutations(const MlpParams& m, const PermutationSet& perms) {
  check_perm_sizes(m, perms);
  MlpParams out;
  out.layers.reserve(m.layers.size());
  for (int h = 0; h < m.num_layers(); ++h) {
    const Layer& layer = m.layers[static_cast<std::size_t>(h)];
    Layer permuted = layer;
    if (h < m.num_hidden()) {
      const Permutation& p = perms[static_cast<std::size_t>(h)];
      permuted.weight = permute_rows(p, permuted.weight);
      permuted.bias = permute_rows(p, permuted.bias);
    }
    if (h > 0) {
      permuted.weight = permute_cols_transposed(permuted.weight,
                                                perms[static_cast<std::size_t>(h - 1)]);
    }
    out.layers.push_back(std::move(permuted));
  }
  return out;
}

MlpParams lerp(const MlpParams& a, const MlpParams& b, double lambda) {
  check_same_architecture(a, b, "lerp");
  MlpParams out = a;
  for (std::size_t h = 0; h < a.layers.size(); ++h) {
    // a + lambda (b - a) reproduces a exactly when a == b.
    out.layers[h].weight += lambda * (b.layers[h].weight - a.layers[h].weight);
    out.layers[h].bias += lambda * (b.layers[h].bias - a.layers[h].bias);
  }
  return out;
}

MlpParams mean(std::span<const MlpParams> models) {
  if (models.empty()) fail(ErrorCode::kInvalidInput, "mean of zero models");
  // Running mean m_k = m_{k-1} + (x_k - m_{k-1}) / k: identical inputs come
  // back bit-for-bit.
  MlpParams out = models.front();
  for (std::size_t i = 1; i < models.size(); ++i) {
    check_same_architecture(models.front(), models[i], "mean");
    const double inv = 1.0 / static_cast<double>(i + 1);
    for (std::size_t h = 0; h < out.layers.size(); ++h) {
      out.layers[h].weight += (models[i].layers[h].weight - out.layers[h].weight) * inv;
      out.layers[h].bias += (models[i].layers[h].bias - out.layers[h].bias) * inv;
    }
  }
  return out;
}

MlpParams scaled(const MlpParams& m, double s) {
  MlpParams out = m;
  for (Layer& layer : out.layers) {
    layer.weight *= s;
    layer.bias *= s;
  }
  return out;
}

Vector flatten(const MlpParams& m) {
  Vector v(static_cast<Eigen::Index>(m.num_parameters()));
  Eigen::Index k = 0;
  for (const Layer& layer : m.layers) {
    // Row-major order, matching the bundle format.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) v(k++) = layer.weight(r, c);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) v(k++) = layer.bias(r);
  }
  return v;
}

double squared_norm(const MlpParams& m) {
  double total = 0.0;
  for (const Layer& layer : m.layers) {
    total += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  }
  return total;
}

int Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  out.name = name;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= size()) {
      fail(ErrorCode::kInvalidInput, "dataset subset: row index out of range");
    }
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

ForwardPass forward(const MlpParams& m, const Matrix& x) {
  if (m.layers.empty()) fail(ErrorCode::kInvalidInput, "forward: empty model");
  if (x.cols() != m.layers.front().weight.cols()) {
    fail(ErrorCode::kShapeMismatch, "forward: input has " + std::to_string(x.cols()) +
                                        " features, model expects " +
                                        std::to_string(m.layers.front().weight.cols()));
  }
  ForwardPass pass;
  Matrix z = x;
  for (int h = 0; h < m.num_layers(); ++h) {
    const Layer& layer = m.layers[static_cast<std::size_t>(h)];
    Matrix pre = z * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (h + 1 == m.num_layers()) {
      pass.logits = std::move(pre);
      break;
    }
    z = pre.cwiseMax(0.0);
    pass.pre_activations.push_back(std::move(pre));
    pass.hidden.push_back(z);
  }
  return pass;
}

Matrix logits(const MlpParams& m, const Matrix& x) { return forward(m, x).logits; }

Metrics loss_and_accuracy(const MlpParams& m, const Dataset& data) {
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "loss: empty dataset");
  if (static_cast<std::size_t>(data.size()) != data.labels.size()) {
    fail(ErrorCode::kShapeMismatch, "loss: label count does not match features");
  }
  const Matrix out = logits(m, data.features);
  double loss = 0.0;
  int correct = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const int label = data.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= out.cols()) {
      fail(ErrorCode::kInvalidInput, "loss: label " + std::to_string(label) +
                                         " out of range for " +
                                         std::to_string(out.cols()) + " classes");
    }
    Eigen::Index best = 0;
    const double top = out.row(i).maxCoeff(&best);
    const double lse = top + std::log((out.row(i).array() - top).exp().sum());
    loss += lse - out(i, label);
    if (best == label) ++correct;
  }
  Metrics metrics;
  metrics.loss = loss / static_cast<double>(out.rows());
  metrics.accuracy = static_cast<double>(correct) / static_cast<double>(out.rows());
  return metrics;
}

}  // namespace c2m3
