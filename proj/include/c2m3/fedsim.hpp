#pragma once

// In-process federated learning simulation: FedAvg versus universe-space
// aggregation with REPAIR.

#include "c2m3/merging.hpp"
#include "c2m3/training.hpp"

#include <string>

namespace c2m3 {

enum class Aggregator { kFedAvg, kC2m3 };

const char* to_string(Aggregator a);
Aggregator parse_aggregator(const std::string& name);

struct FedConfig {
  int n_clients = 5;
  int rounds = 10;
  int local_epochs = 5;
  // Round one starts every client from the same seeded model; otherwise each
  // client draws its own initialization.
  bool same_init = false;
  Aggregator aggregator = Aggregator::kC2m3;
  std::uint64_t partition_seed = 0;
  std::uint64_t init_seed = 0;
  // Seeds the server-side probe subset used by REPAIR. REPAIR is skipped in
  // rounds whose match is all identity, leaving the plain average.
  std::uint64_t probe_seed = 0;
  int probe_size = 256;
  bool repair = true;
  TrainConfig train;  // epochs is ignored, local_epochs applies
  MatchConfig match;

  void validate() const;
};

// Seeded IID shuffle-and-split; shard sizes differ by at most one.
std::vector<Dataset> partition_data(const Dataset& data, int n_clients, std::uint64_t seed);

struct RoundMetrics {
  int round = 0;  // 1-based
  double accuracy = 0.0;
  double loss = 0.0;
  // c2m3 only: whether every matched permutation was the identity.
  bool identity_perms = false;
};

struct FedRun {
  std::vector<RoundMetrics> rounds;
  MlpParams global;
  // Aggregate produced by round one (before any later training).
  MlpParams first_round_global;
};

FedRun run_simulation(const Dataset& train, const Dataset& test, const std::vector<int>& dims,
                      const FedConfig& config);

// "round,aggregator,accuracy,loss" rows.
std::string round_table_csv(const FedRun& run, Aggregator aggregator, bool header = true);

}  // namespace c2m3
