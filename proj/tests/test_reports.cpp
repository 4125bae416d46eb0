#include "c2m3/reports.hpp"

#include "testing.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

using namespace c2m3;
using c2m3::testing::copies_with_perms;
using c2m3::testing::error_code_of;
using c2m3::testing::random_dataset;
using c2m3::testing::random_mlp;

namespace {

std::vector<std::string> lines_of(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Every ordering of every subset of size >= 2, rotated so the smallest index
// leads, collected as a set.
std::set<std::vector<int>> brute_force_cycles(int n) {
  std::set<std::vector<int>> out;
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) members.push_back(i);
    }
    if (members.size() < 2) continue;
    do {
      if (members.front() != *std::min_element(members.begin(), members.end())) continue;
      std::vector<int> cycle = members;
      cycle.push_back(members.front());
      out.insert(cycle);
    } while (std::next_permutation(members.begin(), members.end()));
  }
  return out;
}

UniverseMatch small_universe(std::vector<MlpParams>* models) {
  for (std::uint64_t p = 0; p < 3; ++p) models->push_back(random_mlp({3, 6, 5, 2}, 10 + p));
  return fw_match_multi(*models);
}

}  // namespace

TEST(MatchJson, UniverseRoundTrip) {
  std::vector<MlpParams> models;
  MatchRecord record;
  record.mode = MatchRecord::Mode::kUniverse;
  record.universe = small_universe(&models);
  record.config.max_iters = 40;
  record.config.init = InitStrategy::kSinkhorn;
  record.ids = {"a.json", "b.json", "c.json"};
  record.cycle_error = 0.0;
  const json doc = match_to_json(record, json{{"tool", "test"}});
  EXPECT_EQ(doc.at("format"), "c2m3-perms/v1");
  EXPECT_EQ(doc.at("layers").size(), 6u);
  EXPECT_EQ(doc.at("provenance").at("tool"), "test");

  const MatchRecord back = match_from_json(json::parse(doc.dump()));
  EXPECT_EQ(back.mode, MatchRecord::Mode::kUniverse);
  EXPECT_EQ(back.universe.perms, record.universe.perms);
  EXPECT_EQ(back.universe.objective, record.universe.objective);
  EXPECT_EQ(back.universe.trace.objective, record.universe.trace.objective);
  EXPECT_EQ(back.universe.trace.steps, record.universe.trace.steps);
  EXPECT_EQ(back.universe.trace.converged, record.universe.trace.converged);
  EXPECT_EQ(back.config.max_iters, 40);
  EXPECT_EQ(back.config.init, InitStrategy::kSinkhorn);
  EXPECT_EQ(back.ids, record.ids);
  ASSERT_TRUE(back.cycle_error.has_value());
  EXPECT_EQ(*back.cycle_error, 0.0);
  EXPECT_EQ(match_to_json(back, json{{"tool", "test"}}), doc);
}

TEST(MatchJson, PairwiseRoundTripAndMaps) {
  const MlpParams a = random_mlp({3, 6, 5, 2}, 20);
  const MlpParams b = random_mlp({3, 6, 5, 2}, 21);
  MatchRecord record;
  record.pairwise = fw_match_pair(a, b);
  const json doc = match_to_json(record);
  for (const json& entry : doc.at("layers")) EXPECT_EQ(entry.at("model"), 1);
  const MatchRecord back = match_from_json(doc);
  EXPECT_EQ(back.pairwise.perms, record.pairwise.perms);
  EXPECT_EQ(back.num_models(), 2);
  EXPECT_EQ(back.maps()(0, 1), record.pairwise.perms);
}

TEST(MatchJson, RejectsMalformedDocuments) {
  std::vector<MlpParams> models;
  MatchRecord record;
  record.mode = MatchRecord::Mode::kUniverse;
  record.universe = small_universe(&models);
  const json good = match_to_json(record);

  json bad = good;
  bad["format"] = "c2m3-perms/v0";
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
  bad = good;
  bad["mode"] = "sideways";
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
  bad = good;
  bad["layers"].push_back(bad["layers"][0]);
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
  bad = good;
  bad["layers"].erase(bad["layers"].begin() + 1);
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
  bad = good;
  bad["models"].push_back("extra");
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
  bad = good;
  bad["layers"][0]["map"] = json::array({0, 0, 1, 2, 3, 4});
  EXPECT_NE(error_code_of([&] { match_from_json(bad); }), static_cast<ErrorCode>(-1));
  bad = good;
  bad.erase("trace");
  EXPECT_EQ(error_code_of([&] { match_from_json(bad); }), ErrorCode::kParse);
}

TEST(Cycles, EnumerationMatchesBruteForce) {
  for (int n = 1; n <= 5; ++n) {
    const std::vector<std::vector<int>> got = enumerate_cycles(n);
    const std::set<std::vector<int>> want = brute_force_cycles(n);
    EXPECT_EQ(std::set<std::vector<int>>(got.begin(), got.end()), want) << "n=" << n;
    EXPECT_EQ(got.size(), want.size()) << "duplicates for n=" << n;
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LE(got[i - 1].size(), got[i].size());
  }
  // Three models: 3 two-cycles and 2 three-cycles.
  EXPECT_EQ(enumerate_cycles(3).size(), 5u);
}

TEST(CycleReport, UniverseRowsAreZero) {
  std::vector<MlpParams> models;
  const UniverseMatch u = small_universe(&models);
  const Report r = cycle_error_report(models, pairwise_maps(u));
  const std::vector<std::string> lines = lines_of(r.csv);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "cycle,length,error");
  EXPECT_EQ(lines[1], "0-1-0,2,0");
  EXPECT_EQ(r.doc.at("max_error"), 0.0);
  EXPECT_EQ(r.doc.at("rows").size(), 5u);
}

TEST(BarrierReport, CsvMirrorsCurve) {
  const MlpParams a = random_mlp({3, 5, 2}, 30);
  const Dataset d = random_dataset(20, 3, 2, 31);
  const BarrierCurve c = loss_barrier(a, a, d, 3);
  const Report r = barrier_csv_report(c);
  const std::vector<std::string> lines = lines_of(r.csv);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "lambda,loss,accuracy");
  EXPECT_EQ(lines[2].rfind("0.5,", 0), 0u);
  EXPECT_EQ(r.doc.at("barrier"), 0.0);
}

TEST(SimilarityCsv, CkaOnlyKeepsCkaRows) {
  const std::vector<MlpParams> models = copies_with_perms(random_mlp({3, 6, 5, 2}, 40), 2, 41);
  const UniverseMatch u = fw_match_multi(models);
  const SimilarityReport rep = similarity_report(models, u, random_dataset(30, 3, 2, 42));
  const Report full = similarity_csv_report(rep, false);
  const Report cka_only = similarity_csv_report(rep, true);
  EXPECT_EQ(lines_of(full.csv).front(), "row,col,metric,stage,value");
  // One pair: 4 weight rows plus 4 per hidden group.
  EXPECT_EQ(lines_of(full.csv).size(), 1u + 4u + 8u);
  const std::vector<std::string> only = lines_of(cka_only.csv);
  ASSERT_EQ(only.size(), 1u + 4u);
  for (std::size_t i = 1; i < only.size(); ++i) {
    EXPECT_NE(only[i].find(",cka_layer"), std::string::npos) << only[i];
  }
  EXPECT_EQ(cka_only.doc.at("probe_size"), 30);
}

TEST(AccuracyReport, OneRowPerModel) {
  const std::vector<MlpParams> models{random_mlp({3, 4, 2}, 50), random_mlp({3, 4, 2}, 51)};
  const Dataset d = random_dataset(20, 3, 2, 52);
  const std::vector<std::string> lines = lines_of(accuracy_report(models, d).csv);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "model,loss,accuracy");
  const Metrics m = loss_and_accuracy(models[1], d);
  EXPECT_EQ(lines[2], "1," + format_double(m.loss) + "," + format_double(m.accuracy));
}

TEST(MergeMatrixCsv, RowsForEveryCell) {
  MergeMatrix m;
  m.before = Matrix::Constant(2, 2, 0.5);
  m.after = Matrix::Constant(2, 2, 0.75);
  const std::vector<std::string> lines = lines_of(merge_matrix_csv_report(m).csv);
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[1], "0,0,accuracy,before,0.5");
  EXPECT_EQ(lines[2], "0,0,accuracy,after,0.75");
}
