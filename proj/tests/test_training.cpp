#include "c2m3/training.hpp"

#include "testing.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace c2m3;
using c2m3::testing::error_code_of;

namespace {

SyntheticSpec small_spirals(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = 400;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(Synthetic, SplitSizesAndClassBalance) {
  for (SyntheticKind kind : {SyntheticKind::kSpirals, SyntheticKind::kGaussianBlobs}) {
    SyntheticSpec spec = small_spirals(1);
    spec.kind = kind;
    spec.n_classes = 3;
    const Split s = make_dataset(spec);
    // Each class is split 80/20 on its own, so rounding can move one row.
    EXPECT_NEAR(s.train.size(), 320, 1);
    EXPECT_EQ(s.train.size() + s.test.size(), 400);
    EXPECT_EQ(s.train.dim(), 2);
    std::vector<int> counts(3, 0);
    for (int y : s.train.labels) ++counts[static_cast<std::size_t>(y)];
    for (int y : s.test.labels) ++counts[static_cast<std::size_t>(y)];
    for (int c : counts) EXPECT_GE(c, 133);
  }
}

TEST(Synthetic, TrainSplitIsStandardized) {
  const Split s = make_dataset(small_spirals(2));
  const Vector mean = s.train.features.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
  const Matrix centered = s.train.features.rowwise() - mean.transpose();
  const Vector var = centered.colwise().squaredNorm() / static_cast<double>(s.train.size());
  EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  const Split a = make_dataset(small_spirals(3));
  const Split b = make_dataset(small_spirals(3));
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(make_dataset(small_spirals(4)).train.features, a.train.features);
}

TEST(Synthetic, BlobsAcceptHigherDimensions) {
  SyntheticSpec spec = small_spirals(5);
  spec.kind = SyntheticKind::kGaussianBlobs;
  spec.input_dim = 6;
  EXPECT_EQ(make_dataset(spec).train.dim(), 6);
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec spec = small_spirals(0);
  spec.n_classes = 1;
  EXPECT_EQ(error_code_of([&] { make_dataset(spec); }), ErrorCode::kInvalidInput);
  spec = small_spirals(0);
  spec.input_dim = 3;  // spirals are planar
  EXPECT_EQ(error_code_of([&] { make_dataset(spec); }), ErrorCode::kInvalidInput);
  spec = small_spirals(0);
  spec.noise = -1.0;
  EXPECT_EQ(error_code_of([&] { make_dataset(spec); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(parse_synthetic_kind("spirals"), SyntheticKind::kSpirals);
  EXPECT_EQ(error_code_of([] { parse_synthetic_kind("moons"); }), ErrorCode::kInvalidInput);
}

TEST(InitMlp, UniformWithinFanInBound) {
  const MlpParams m = init_mlp({4, 16, 9, 3}, 7, 1.0);
  for (const Layer& l : m.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.bias.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(l.weight.cwiseAbs().maxCoeff(), 0.5 * bound);
  }
  EXPECT_EQ(init_mlp({4, 16, 3}, 7), init_mlp({4, 16, 3}, 7));
  EXPECT_NE(init_mlp({4, 16, 3}, 7), init_mlp({4, 16, 3}, 8));
}

TEST(Training, BitwiseDeterministic) {
  const Split s = make_dataset(small_spirals(6));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 11;
  const MlpParams a = train_mlp(s.train, {2, 16, 2}, cfg);
  const MlpParams b = train_mlp(s.train, {2, 16, 2}, cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 12;
  EXPECT_NE(train_mlp(s.train, {2, 16, 2}, cfg), a);
}

TEST(Training, LearnsSpirals) {
  SyntheticSpec spec;
  spec.seed = 1;
  const Split s = make_dataset(spec);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.seed = 1;
  std::vector<double> losses;
  const MlpParams m =
      train_mlp(s.train, {2, 64, 64, 2}, cfg, [&](int, double loss) { losses.push_back(loss); });
  ASSERT_EQ(losses.size(), 100u);
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  EXPECT_GE(loss_and_accuracy(m, s.test).accuracy, 0.9);
}

TEST(Training, NoiselessBlobsAreFitExactly) {
  SyntheticSpec spec = small_spirals(9);
  spec.kind = SyntheticKind::kGaussianBlobs;
  spec.n_classes = 3;
  spec.noise = 0.0;
  const Split s = make_dataset(spec);
  TrainConfig cfg;
  cfg.epochs = 30;
  const MlpParams m = train_mlp(s.train, {2, 16, 3}, cfg);
  EXPECT_EQ(loss_and_accuracy(m, s.train).accuracy, 1.0);
}

TEST(Training, DivergenceIsReported) {
  const Split s = make_dataset(small_spirals(7));
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e6;
  cfg.momentum = 0.99;
  EXPECT_EQ(error_code_of([&] { train_mlp(s.train, {2, 32, 2}, cfg); }), ErrorCode::kTraining);
}

TEST(Training, RejectsBadConfigs) {
  const Split s = make_dataset(small_spirals(8));
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_EQ(error_code_of([&] { train_mlp(s.train, {2, 4, 2}, cfg); }), ErrorCode::kInvalidInput);
  cfg = TrainConfig{};
  cfg.lr = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(error_code_of([&] { train_mlp(s.train, {2, 4, 2}, cfg); }), ErrorCode::kInvalidInput);
  cfg = TrainConfig{};
  EXPECT_EQ(error_code_of([&] { train_mlp(s.train, {3, 4, 2}, cfg); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([&] { train_from(init_mlp({3, 4, 2}, 0), s.train, cfg); }),
            ErrorCode::kShapeMismatch);
}
