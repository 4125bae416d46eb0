#include "c2m3/fedsim.hpp"

#include "c2m3/error.hpp"
#include "c2m3/evaluation.hpp"
#include "c2m3/io.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace c2m3 {

const char* to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kFedAvg: return "fedavg";
    case Aggregator::kC2m3: return "c2m3";
  }
  return "unknown";
}

Aggregator parse_aggregator(const std::string& name) {
  if (name == "fedavg") return Aggregator::kFedAvg;
  if (name == "c2m3") return Aggregator::kC2m3;
  fail(ErrorCode::kInvalidInput, "unknown aggregator \"" + name + "\"");
}

void FedConfig::validate() const {
  if (n_clients < 2) fail(ErrorCode::kInvalidInput, "n_clients must be >= 2");
  if (rounds < 1) fail(ErrorCode::kInvalidInput, "rounds must be >= 1");
  if (local_epochs < 0) fail(ErrorCode::kInvalidInput, "local_epochs must be >= 0");
  if (probe_size < 1) fail(ErrorCode::kInvalidInput, "probe_size must be >= 1");
  train.validate();
  match.validate();
}

std::vector<Dataset> partition_data(const Dataset& data, int n_clients, std::uint64_t seed) {
  if (n_clients < 1) fail(ErrorCode::kInvalidInput, "partition: n_clients must be >= 1");
  if (data.size() < n_clients) {
    fail(ErrorCode::kInvalidInput, "partition: " + std::to_string(data.size()) +
                                       " samples cannot cover " +
                                       std::to_string(n_clients) + " clients");
  }
  if (n_clients == 1) return {data};
  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Dataset> shards;
  std::size_t start = 0;
  for (int c = 0; c < n_clients; ++c) {
    const std::size_t count = static_cast<std::size_t>(data.size() / n_clients +
                                                       (c < data.size() % n_clients ? 1 : 0));
    Dataset shard = data.subset(std::span<const int>(order.data() + start, count));
    shard.name = data.name + "-client" + std::to_string(c);
    shards.push_back(std::move(shard));
    start += count;
  }
  return shards;
}

FedRun run_simulation(const Dataset& train, const Dataset& test, const std::vector<int>& dims,
                      const FedConfig& config) {
  config.validate();
  const std::vector<Dataset> shards = partition_data(train, config.n_clients, config.partition_seed);
  const Dataset probe = probe_batch(train, config.probe_seed, config.probe_size);

  std::vector<MlpParams> starts;
  for (int c = 0; c < config.n_clients; ++c) {
    const std::uint64_t seed = config.same_init ? config.init_seed
                                                : config.init_seed + static_cast<std::uint64_t>(c);
    starts.push_back(init_mlp(dims, seed, config.train.init_scale));
  }

  FedRun run;
  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<MlpParams> clients;
    for (int c = 0; c < config.n_clients; ++c) {
      TrainConfig local = config.train;
      local.epochs = config.local_epochs;
      local.seed = config.train.seed + static_cast<std::uint64_t>(round) * 1000003ULL +
                   static_cast<std::uint64_t>(c);
      const MlpParams& from = round == 1 ? starts[static_cast<std::size_t>(c)] : run.global;
      clients.push_back(train_from(from, shards[static_cast<std::size_t>(c)], local));
    }

    RoundMetrics metrics;
    metrics.round = round;
    if (config.aggregator == Aggregator::kFedAvg) {
      run.global = naive_merge(clients);
    } else {
      const C2m3Merge merged = c2m3_merge(clients, config.match);
      metrics.identity_perms = true;
      for (const PermutationSet& stack : merged.match.perms) {
        for (const Permutation& p : stack) metrics.identity_perms = metrics.identity_perms && p.is_identity();
      }
      run.global = merged.merged;
      // All-identity matches fall back to plain averaging.
      if (config.repair && !metrics.identity_perms) {
        const std::vector<MlpParams> endpoints = universe_models(clients, merged.match);
        run.global = repair(run.global, endpoints, probe).model;
      }
    }
    if (round == 1) run.first_round_global = run.global;
    const Metrics m = loss_and_accuracy(run.global, test);
    metrics.accuracy = m.accuracy;
    metrics.loss = m.loss;
    run.rounds.push_back(metrics);
  }
  return run;
}

std::string round_table_csv(const FedRun& run, Aggregator aggregator, bool header) {
  std::string out = header ? "round,aggregator,accuracy,loss\n" : "";
  for (const RoundMetrics& r : run.rounds) {
    out += std::to_string(r.round) + "," + to_string(aggregator) + "," +
           format_double(r.accuracy) + "," + format_double(r.loss) + "\n";
  }
  return out;
}

}  // namespace c2m3
