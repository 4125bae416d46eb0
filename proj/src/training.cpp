#include "c2m3/training.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace c2m3 {

const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kGaussianBlobs: return "blobs";
    case SyntheticKind::kSpirals: return "spirals";
  }
  return "unknown";
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "blobs" || name == "gaussian_blobs") return SyntheticKind::kGaussianBlobs;
  if (name == "spirals") return SyntheticKind::kSpirals;
  fail(ErrorCode::kInvalidInput, "unknown synthetic dataset \"" + name + "\"");
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) fail(ErrorCode::kInvalidInput, "n_classes must be >= 2");
  if (n_samples < n_classes) fail(ErrorCode::kInvalidInput, "n_samples must be >= n_classes");
  if (input_dim < 1) fail(ErrorCode::kInvalidInput, "input_dim must be >= 1");
  if (kind == SyntheticKind::kSpirals && input_dim != 2) {
    fail(ErrorCode::kInvalidInput, "spirals are two-dimensional (input_dim must be 2)");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    fail(ErrorCode::kInvalidInput, "noise must be finite and >= 0");
  }
}

Split make_dataset(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix centers(spec.n_classes, spec.input_dim);
  if (spec.kind == SyntheticKind::kGaussianBlobs) {
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      for (Eigen::Index d = 0; d < centers.cols(); ++d) centers(c, d) = 3.0 * gauss(rng);
    }
  }

  Matrix features(spec.n_samples, spec.input_dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(spec.n_samples));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    const int count = spec.n_samples / spec.n_classes + (c < spec.n_samples % spec.n_classes ? 1 : 0);
    for (int i = 0; i < count; ++i, ++row) {
      if (spec.kind == SyntheticKind::kGaussianBlobs) {
        for (int d = 0; d < spec.input_dim; ++d) {
          features(row, d) = centers(c, d) + spec.noise * gauss(rng);
        }
      } else {
        // Arm c of an n-armed spiral, 1.5 turns from the center outwards.
        const double t = (static_cast<double>(i) + 0.5) / count;
        const double radius = 0.1 + 0.9 * t;
        const double angle = 2.0 * std::numbers::pi * c / spec.n_classes + 3.0 * std::numbers::pi * t;
        features(row, 0) = radius * std::cos(angle) + spec.noise * gauss(rng);
        features(row, 1) = radius * std::sin(angle) + spec.noise * gauss(rng);
      }
      labels.push_back(c);
    }
  }

  // Stratified 80/20 split over a seeded shuffle.
  std::vector<int> order(static_cast<std::size_t>(spec.n_samples));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> class_total(static_cast<std::size_t>(spec.n_classes), 0);
  for (int label : labels) ++class_total[static_cast<std::size_t>(label)];
  std::vector<int> class_train(static_cast<std::size_t>(spec.n_classes), 0);
  std::vector<int> train_rows, test_rows;
  for (int r : order) {
    const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(r)]);
    const int quota = static_cast<int>(std::lround(0.8 * class_total[c]));
    if (class_train[c] < quota) {
      ++class_train[c];
      train_rows.push_back(r);
    } else {
      test_rows.push_back(r);
    }
  }

  Dataset all{features, labels, to_string(spec.kind)};
  Split split{all.subset(train_rows), all.subset(test_rows)};
  split.train.name = all.name + "-train";
  split.test.name = all.name + "-test";

  const Eigen::RowVectorXd mu = split.train.features.colwise().mean();
  Eigen::RowVectorXd sigma(mu.size());
  for (Eigen::Index d = 0; d < mu.size(); ++d) {
    const double var = (split.train.features.col(d).array() - mu(d)).square().mean();
    sigma(d) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  for (Dataset* part : {&split.train, &split.test}) {
    if (part->size() == 0) continue;
    part->features = (part->features.rowwise() - mu).array().rowwise() / sigma.array();
  }
  return split;
}

void TrainConfig::validate() const {
  if (epochs < 0) fail(ErrorCode::kInvalidInput, "epochs must be >= 0");
  if (batch_size < 1) fail(ErrorCode::kInvalidInput, "batch_size must be >= 1");
  if (!(lr > 0.0)) fail(ErrorCode::kInvalidInput, "lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::kInvalidInput, "momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kInvalidInput, "weight_decay must be >= 0");
  if (!(init_scale > 0.0)) fail(ErrorCode::kInvalidInput, "init_scale must be > 0");
}

MlpParams init_mlp(const std::vector<int>& dims, std::uint64_t seed, double init_scale) {
  MlpParams m = MlpParams::zeros(dims);
  std::mt19937_64 rng(seed);
  for (Layer& layer : m.layers) {
    const double s = init_scale / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> uniform(-s, s);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = uniform(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = uniform(rng);
  }
  return m;
}

MlpParams train_mlp(const Dataset& data, const std::vector<int>& dims,
                    const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dims.empty() || dims.front() != data.dim()) {
    fail(ErrorCode::kInvalidInput, "first dim must equal the feature dimension (" +
                                       std::to_string(data.dim()) + ")");
  }
  if (dims.back() < data.num_classes()) {
    fail(ErrorCode::kInvalidInput, "last dim must cover all " +
                                       std::to_string(data.num_classes()) + " classes");
  }
  return train_from(init_mlp(dims, config.seed, config.init_scale), data, config, on_epoch);
}

MlpParams train_from(const MlpParams& init, const Dataset& data, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  init.validate();
  if (data.size() == 0) fail(ErrorCode::kInvalidInput, "training on an empty dataset");
  if (init.dims().front() != data.dim()) {
    fail(ErrorCode::kShapeMismatch, "model input width does not match the dataset");
  }
  const int classes = init.dims().back();
  for (int label : data.labels) {
    if (label < 0 || label >= classes) fail(ErrorCode::kInvalidInput, "label out of range");
  }

  MlpParams m = init;
  const int depth = m.num_layers();
  std::vector<Layer> velocity;
  for (const Layer& layer : m.layers) {
    velocity.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vector::Zero(layer.bias.size())});
  }
  // Shuffling stream is decorrelated from the init stream of the same seed.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> inputs(static_cast<std::size_t>(depth));
  std::vector<Matrix> pre(static_cast<std::size_t>(depth));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto rows = static_cast<Eigen::Index>(end - start);
      Matrix x(rows, data.dim());
      for (Eigen::Index i = 0; i < rows; ++i) {
        x.row(i) = data.features.row(order[start + static_cast<std::size_t>(i)]);
      }

      for (int k = 0; k < depth; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        inputs[kk] = k == 0 ? x : Matrix(pre[kk - 1].cwiseMax(0.0));
        pre[kk] = inputs[kk] * m.layers[kk].weight.transpose();
        pre[kk].rowwise() += m.layers[kk].bias.transpose();
      }

      // Softmax cross-entropy; delta = (softmax - onehot) / batch.
      Matrix delta = pre.back();
      double batch_loss = 0.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double top = delta.row(i).maxCoeff();
        delta.row(i) = (delta.row(i).array() - top).exp();
        const double z = delta.row(i).sum();
        delta.row(i) /= z;
        const int label = data.labels[static_cast<std::size_t>(order[start + static_cast<std::size_t>(i)])];
        batch_loss += -std::log(std::max(delta(i, label), 1e-300));
        delta(i, label) -= 1.0;
      }
      delta /= static_cast<double>(rows);
      epoch_loss += batch_loss / static_cast<double>(rows);
      ++batches;

      for (int k = depth - 1; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        Matrix grad_w = delta.transpose() * inputs[kk];
        Vector grad_b = delta.colwise().sum().transpose();
        if (k > 0) {
          Matrix back = delta * m.layers[kk].weight;
          delta = (pre[kk - 1].array() > 0.0).select(back, 0.0);
        }
        Layer& layer = m.layers[kk];
        Layer& vel = velocity[kk];
        grad_w += config.weight_decay * layer.weight;
        grad_b += config.weight_decay * layer.bias;
        vel.weight = config.momentum * vel.weight + grad_w;
        vel.bias = config.momentum * vel.bias + grad_b;
        layer.weight -= config.lr * vel.weight;
        layer.bias -= config.lr * vel.bias;
      }
    }
    const double mean_loss = epoch_loss / std::max(1, batches);
    if (!std::isfinite(mean_loss) || !std::isfinite(flatten(m).squaredNorm())) {
      fail(ErrorCode::kTraining, "training diverged at epoch " + std::to_string(epoch));
    }
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return m;
}

}  // namespace c2m3
