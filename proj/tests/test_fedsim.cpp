#include "c2m3/fedsim.hpp"

#include "testing.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace c2m3;
using c2m3::testing::error_code_of;

namespace {

Split spirals(int n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  return make_dataset(spec);
}

FedConfig quick_config(Aggregator aggregator) {
  FedConfig cfg;
  cfg.n_clients = 2;
  cfg.rounds = 1;
  cfg.local_epochs = 2;
  cfg.aggregator = aggregator;
  cfg.probe_size = 64;
  return cfg;
}

const std::vector<int> kDims{2, 16, 16, 2};

}  // namespace

TEST(Partition, CoversEveryRowOnceWithBalancedSizes) {
  Dataset d;
  d.features.resize(23, 1);
  for (int i = 0; i < 23; ++i) {
    d.features(i, 0) = i;
    d.labels.push_back(i % 2);
  }
  const std::vector<Dataset> shards = partition_data(d, 5, 3);
  ASSERT_EQ(shards.size(), 5u);
  std::multiset<double> seen;
  int smallest = 1 << 30;
  int largest = 0;
  for (const Dataset& s : shards) {
    smallest = std::min(smallest, s.size());
    largest = std::max(largest, s.size());
    for (int i = 0; i < s.size(); ++i) {
      seen.insert(s.features(i, 0));
      EXPECT_EQ(s.labels[static_cast<std::size_t>(i)], static_cast<int>(s.features(i, 0)) % 2);
    }
  }
  EXPECT_LE(largest - smallest, 1);
  EXPECT_EQ(seen.size(), 23u);
  EXPECT_EQ(std::set<double>(seen.begin(), seen.end()).size(), 23u);
  EXPECT_EQ(partition_data(d, 5, 3)[2].features, shards[2].features);
  EXPECT_EQ(error_code_of([&] { partition_data(d, 24, 0); }), ErrorCode::kInvalidInput);
}

TEST(FedConfig, Validation) {
  FedConfig cfg;
  cfg.n_clients = 0;
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidInput);
  cfg = FedConfig{};
  cfg.rounds = 0;
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(parse_aggregator("fedavg"), Aggregator::kFedAvg);
  EXPECT_EQ(parse_aggregator("c2m3"), Aggregator::kC2m3);
  EXPECT_EQ(error_code_of([] { parse_aggregator("fedprox"); }), ErrorCode::kInvalidInput);
}

TEST(FedSim, FedAvgWithoutLocalTrainingAveragesInits) {
  const Split s = spirals(200, 1);
  FedConfig cfg = quick_config(Aggregator::kFedAvg);
  cfg.n_clients = 3;
  cfg.local_epochs = 0;
  cfg.init_seed = 7;
  const FedRun run = run_simulation(s.train, s.test, kDims, cfg);
  const std::vector<MlpParams> inits{init_mlp(kDims, 7), init_mlp(kDims, 8), init_mlp(kDims, 9)};
  EXPECT_EQ(run.first_round_global, naive_merge(inits));
}

TEST(FedSim, C2m3WithoutLocalTrainingMergesInUniverse) {
  const Split s = spirals(200, 2);
  FedConfig cfg = quick_config(Aggregator::kC2m3);
  cfg.local_epochs = 0;
  cfg.repair = false;
  cfg.init_seed = 3;
  const FedRun run = run_simulation(s.train, s.test, kDims, cfg);
  const std::vector<MlpParams> inits{init_mlp(kDims, 3), init_mlp(kDims, 4)};
  EXPECT_EQ(run.first_round_global, c2m3_merge(inits).merged);
}

TEST(FedSim, SameInitFallsBackToFedAvg) {
  const Split s = spirals(300, 3);
  FedConfig c2 = quick_config(Aggregator::kC2m3);
  c2.same_init = true;
  FedConfig avg = c2;
  avg.aggregator = Aggregator::kFedAvg;
  const FedRun a = run_simulation(s.train, s.test, kDims, c2);
  const FedRun b = run_simulation(s.train, s.test, kDims, avg);
  ASSERT_EQ(a.rounds.size(), 1u);
  EXPECT_TRUE(a.rounds[0].identity_perms);
  EXPECT_EQ(a.first_round_global, b.first_round_global);
  EXPECT_EQ(a.rounds[0].accuracy, b.rounds[0].accuracy);
  EXPECT_EQ(a.rounds[0].loss, b.rounds[0].loss);
}

TEST(FedSim, DeterministicRoundTable) {
  const Split s = spirals(200, 4);
  FedConfig cfg = quick_config(Aggregator::kC2m3);
  cfg.rounds = 2;
  const FedRun a = run_simulation(s.train, s.test, kDims, cfg);
  const FedRun b = run_simulation(s.train, s.test, kDims, cfg);
  EXPECT_EQ(a.global, b.global);
  const std::string csv = round_table_csv(a, Aggregator::kC2m3);
  EXPECT_EQ(csv, round_table_csv(b, Aggregator::kC2m3));
  EXPECT_EQ(csv.rfind("round,aggregator,accuracy,loss\n1,c2m3,", 0), 0u) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(round_table_csv(a, Aggregator::kC2m3, false).rfind("1,c2m3,", 0), 0u);
}
