#pragma once

// JSON/CSV encodings of matches and evaluation reports.

#include "c2m3/evaluation.hpp"
#include "c2m3/fedsim.hpp"
#include "c2m3/io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace c2m3 {

// A stored match: either pairwise (one permutation stack aligning model 1
// onto model 0) or a universe match over n models.
struct MatchRecord {
  enum class Mode { kPairwise, kUniverse };

  Mode mode = Mode::kPairwise;
  std::string matcher = "frank-wolfe";  // or "coord-descent"
  PairwiseMatch pairwise;
  UniverseMatch universe;
  MatchConfig config;
  std::vector<std::string> ids;
  std::optional<double> cycle_error;

  int num_models() const { return mode == Mode::kUniverse ? universe.num_models() : 2; }
  double objective() const {
    return mode == Mode::kUniverse ? universe.objective : pairwise.objective;
  }
  const MatchTrace& trace() const {
    return mode == Mode::kUniverse ? universe.trace : pairwise.trace;
  }
  PairwiseMaps maps() const;
};

// {"format":"c2m3-perms/v1","mode":...,"models":[ids],"layers":[{"model","layer","map"}],
//  "trace":{"objective":[..],"steps":[..]}, ...}. Layer indices are 0-based
// hidden groups; pairwise records list model 1 (the permuted one).
json match_to_json(const MatchRecord& record, const json& provenance = json::object());
MatchRecord match_from_json(const json& doc);

json config_to_json(const MatchConfig& config);
json train_config_to_json(const TrainConfig& config);

struct Report {
  std::string csv;
  json doc;
};

Report barrier_csv_report(const BarrierCurve& curve);
Report similarity_csv_report(const SimilarityReport& report, bool cka_only);
Report merge_matrix_csv_report(const MergeMatrix& matrix);

// Every cycle over distinct models of length 2..n (closing back to the
// start), each listed once with its smallest index first.
std::vector<std::vector<int>> enumerate_cycles(int n_models);

Report cycle_error_report(std::span<const MlpParams> models, const PairwiseMaps& maps);
Report accuracy_report(std::span<const MlpParams> models, const Dataset& data);
Report fedsim_report(const FedRun& run, const FedConfig& config);

}  // namespace c2m3
