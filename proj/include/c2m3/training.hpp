#pragma once

// Synthetic datasets and deterministic minibatch SGD for the MLP family.

#include "c2m3/model.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace c2m3 {

enum class SyntheticKind { kGaussianBlobs, kSpirals };

const char* to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kSpirals;
  int n_samples = 1000;
  int n_classes = 2;
  int input_dim = 2;  // spirals are planar
  double noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

// Class-balanced generation, seeded 80/20 split, features standardized with
// the train split's (population) statistics.
Split make_dataset(const SyntheticSpec& spec);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  // Weights and biases start uniform in [-s, s], s = init_scale / sqrt(fan_in).
  double init_scale = 1.0;

  void validate() const;
};

MlpParams init_mlp(const std::vector<int>& dims, std::uint64_t seed, double init_scale = 1.0);

// Called after every epoch with the epoch index (0-based) and mean minibatch
// loss.
using EpochCallback = std::function<void(int epoch, double loss)>;

// Fresh seeded initialization followed by train_from.
MlpParams train_mlp(const Dataset& data, const std::vector<int>& dims,
                    const TrainConfig& config, const EpochCallback& on_epoch = {});

// SGD with momentum and L2 weight decay from `init`. Shuffling is seeded by
// config.seed. Throws kTraining with the epoch index if the loss stops being
// finite.
MlpParams train_from(const MlpParams& init, const Dataset& data, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

}  // namespace c2m3
