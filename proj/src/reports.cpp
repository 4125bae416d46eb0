#include "c2m3/reports.hpp"

#include "c2m3/error.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace c2m3 {

PairwiseMaps MatchRecord::maps() const {
  if (mode == Mode::kUniverse) return pairwise_maps(universe);
  PairwiseMatchTable table;
  table[{0, 1}] = pairwise.perms;
  return pairwise_maps(table);
}

json config_to_json(const MatchConfig& config) {
  return {{"init", to_string(config.init)},
          {"max_iters", config.max_iters},
          {"rel_tol", config.rel_tol},
          {"line_search_grid", config.line_search_grid},
          {"seed", config.seed},
          {"use_bias", config.use_bias}};
}

json train_config_to_json(const TrainConfig& config) {
  return {{"epochs", config.epochs},         {"batch_size", config.batch_size},
          {"lr", config.lr},                 {"momentum", config.momentum},
          {"weight_decay", config.weight_decay}, {"init_scale", config.init_scale},
          {"seed", config.seed}};
}

namespace {

json trace_to_json(const MatchTrace& trace) {
  return {{"objective", trace.objective},
          {"steps", trace.steps},
          {"converged", trace.converged},
          {"iterations", trace.iterations}};
}

MatchTrace trace_from_json(const json& doc) {
  MatchTrace trace;
  if (!doc.is_object()) fail(ErrorCode::kParse, "\"trace\" must be an object");
  try {
    trace.objective = doc.at("objective").get<std::vector<double>>();
    trace.steps = doc.at("steps").get<std::vector<double>>();
    trace.converged = doc.value("converged", false);
    trace.iterations = doc.value("iterations", static_cast<int>(trace.steps.size()));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed trace: ") + e.what());
  }
  return trace;
}

void append_stack(json& layers, int model, const PermutationSet& stack) {
  for (std::size_t h = 0; h < stack.size(); ++h) {
    layers.push_back({{"model", model}, {"layer", static_cast<int>(h)}, {"map", stack[h].map()}});
  }
}

}  // namespace

json match_to_json(const MatchRecord& record, const json& provenance) {
  json doc;
  doc["format"] = kPermsFormat;
  doc["mode"] = record.mode == MatchRecord::Mode::kUniverse ? "universe" : "pairwise";
  doc["matcher"] = record.matcher;
  std::vector<std::string> ids = record.ids;
  if (ids.empty()) {
    for (int i = 0; i < record.num_models(); ++i) ids.push_back(std::to_string(i));
  }
  doc["models"] = ids;
  json layers = json::array();
  if (record.mode == MatchRecord::Mode::kUniverse) {
    for (int p = 0; p < record.universe.num_models(); ++p) {
      append_stack(layers, p, record.universe.perms[static_cast<std::size_t>(p)]);
    }
  } else {
    append_stack(layers, 1, record.pairwise.perms);
  }
  doc["layers"] = std::move(layers);
  doc["objective"] = record.objective();
  doc["trace"] = trace_to_json(record.trace());
  doc["config"] = config_to_json(record.config);
  if (record.cycle_error) doc["cycle_error"] = *record.cycle_error;
  doc["provenance"] = provenance;
  return doc;
}

MatchRecord match_from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", std::string()) != kPermsFormat) {
    fail(ErrorCode::kParse, "not a c2m3-perms/v1 document");
  }
  MatchRecord record;
  try {
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "universe") {
      record.mode = MatchRecord::Mode::kUniverse;
    } else if (mode == "pairwise") {
      record.mode = MatchRecord::Mode::kPairwise;
    } else {
      fail(ErrorCode::kParse, "unknown match mode \"" + mode + "\"");
    }
    record.matcher = doc.value("matcher", std::string("frank-wolfe"));
    record.ids = doc.at("models").get<std::vector<std::string>>();

    // Collect (model, layer) -> permutation.
    std::map<std::pair<int, int>, Permutation> entries;
    int max_model = -1, max_layer = -1;
    for (const json& entry : doc.at("layers")) {
      const int model = entry.at("model").get<int>();
      const int layer = entry.at("layer").get<int>();
      if (model < 0 || layer < 0) fail(ErrorCode::kParse, "negative model or layer index");
      Permutation p(entry.at("map").get<std::vector<int>>());
      if (!entries.emplace(std::make_pair(model, layer), std::move(p)).second) {
        fail(ErrorCode::kParse, "duplicate permutation entry");
      }
      max_model = std::max(max_model, model);
      max_layer = std::max(max_layer, layer);
    }
    auto stack_of = [&](int model) {
      PermutationSet stack;
      for (int h = 0; h <= max_layer; ++h) {
        auto it = entries.find({model, h});
        if (it == entries.end()) {
          fail(ErrorCode::kParse, "missing permutation for model " + std::to_string(model) +
                                      " layer " + std::to_string(h));
        }
        stack.push_back(it->second);
      }
      return stack;
    };
    const MatchTrace trace = trace_from_json(doc.at("trace"));
    const double objective = doc.value("objective", 0.0);
    if (record.mode == MatchRecord::Mode::kUniverse) {
      if (static_cast<int>(record.ids.size()) != max_model + 1) {
        fail(ErrorCode::kParse, "\"models\" does not match the permuted model count");
      }
      for (int p = 0; p <= max_model; ++p) record.universe.perms.push_back(stack_of(p));
      record.universe.trace = trace;
      record.universe.objective = objective;
    } else {
      if (record.ids.size() != 2 || max_model != 1) {
        fail(ErrorCode::kParse, "pairwise records hold exactly two models");
      }
      record.pairwise.perms = stack_of(1);
      record.pairwise.trace = trace;
      record.pairwise.objective = objective;
    }
    if (doc.contains("config")) {
      const json& c = doc.at("config");
      record.config.init = parse_init_strategy(c.value("init", std::string("identity")));
      record.config.max_iters = c.value("max_iters", record.config.max_iters);
      record.config.rel_tol = c.value("rel_tol", record.config.rel_tol);
      record.config.line_search_grid = c.value("line_search_grid", record.config.line_search_grid);
      record.config.seed = c.value("seed", record.config.seed);
      record.config.use_bias = c.value("use_bias", record.config.use_bias);
    }
    if (doc.contains("cycle_error")) record.cycle_error = doc.at("cycle_error").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed perms document: ") + e.what());
  }
  return record;
}

Report barrier_csv_report(const BarrierCurve& curve) {
  Report r;
  r.csv = "lambda,loss,accuracy\n";
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) {
    r.csv += format_double(curve.lambdas[i]) + "," + format_double(curve.losses[i]) + "," +
             format_double(curve.accuracies[i]) + "\n";
  }
  r.doc = {{"lambdas", curve.lambdas},
           {"losses", curve.losses},
           {"accuracies", curve.accuracies},
           {"barrier", curve.barrier}};
  return r;
}

namespace {

void similarity_row(std::string& csv, json& rows, int p, int q, const std::string& metric,
                    const char* stage, double value) {
  csv += std::to_string(p) + "," + std::to_string(q) + "," + metric + "," + stage + "," +
         format_double(value) + "\n";
  rows.push_back({{"row", p}, {"col", q}, {"metric", metric}, {"stage", stage}, {"value", value}});
}

}  // namespace

Report similarity_csv_report(const SimilarityReport& report, bool cka_only) {
  Report r;
  r.csv = "row,col,metric,stage,value\n";
  json rows = json::array();
  for (const PairSimilarity& s : report.pairs) {
    if (!cka_only) {
      similarity_row(r.csv, rows, s.p, s.q, "cosine", "before", s.before.cosine);
      similarity_row(r.csv, rows, s.p, s.q, "cosine", "after", s.after.cosine);
      similarity_row(r.csv, rows, s.p, s.q, "euclidean", "before", s.before.euclidean);
      similarity_row(r.csv, rows, s.p, s.q, "euclidean", "after", s.after.euclidean);
    }
    for (std::size_t h = 0; h < s.cka_before.size(); ++h) {
      const std::string layer = std::to_string(h);
      similarity_row(r.csv, rows, s.p, s.q, "cka_layer" + layer, "before", s.cka_before[h]);
      similarity_row(r.csv, rows, s.p, s.q, "cka_layer" + layer, "after", s.cka_after[h]);
      if (!cka_only) {
        similarity_row(r.csv, rows, s.p, s.q, "repr_dist_layer" + layer, "before",
                       s.repr_dist_before[h]);
        similarity_row(r.csv, rows, s.p, s.q, "repr_dist_layer" + layer, "after",
                       s.repr_dist_after[h]);
      }
    }
  }
  r.doc = {{"probe_size", report.probe_size}, {"rows", std::move(rows)}};
  return r;
}

Report merge_matrix_csv_report(const MergeMatrix& matrix) {
  Report r;
  r.csv = "row,col,metric,stage,value\n";
  json rows = json::array();
  for (Eigen::Index p = 0; p < matrix.before.rows(); ++p) {
    for (Eigen::Index q = 0; q < matrix.before.cols(); ++q) {
      similarity_row(r.csv, rows, static_cast<int>(p), static_cast<int>(q), "accuracy",
                     "before", matrix.before(p, q));
      similarity_row(r.csv, rows, static_cast<int>(p), static_cast<int>(q), "accuracy",
                     "after", matrix.after(p, q));
    }
  }
  r.doc = {{"rows", std::move(rows)}};
  return r;
}

std::vector<std::vector<int>> enumerate_cycles(int n_models) {
  std::vector<std::vector<int>> cycles;
  std::vector<int> path;
  std::vector<char> used(static_cast<std::size_t>(std::max(0, n_models)), 0);
  std::function<void(int)> extend = [&](int start) {
    if (path.size() >= 2) {
      std::vector<int> cycle = path;
      cycle.push_back(start);
      cycles.push_back(std::move(cycle));
    }
    for (int next = start + 1; next < n_models; ++next) {
      if (used[static_cast<std::size_t>(next)]) continue;
      used[static_cast<std::size_t>(next)] = 1;
      path.push_back(next);
      extend(start);
      path.pop_back();
      used[static_cast<std::size_t>(next)] = 0;
    }
  };
  for (int start = 0; start < n_models; ++start) {
    path = {start};
    extend(start);
  }
  std::stable_sort(cycles.begin(), cycles.end(),
                   [](const auto& a, const auto& b) { return a.size() < b.size(); });
  return cycles;
}

Report cycle_error_report(std::span<const MlpParams> models, const PairwiseMaps& maps) {
  Report r;
  r.csv = "cycle,length,error\n";
  json rows = json::array();
  double worst = 0.0;
  for (const std::vector<int>& cycle : enumerate_cycles(static_cast<int>(models.size()))) {
    const double err = cycle_error(models, maps, cycle);
    std::string name;
    for (std::size_t i = 0; i < cycle.size(); ++i) name += (i ? "-" : "") + std::to_string(cycle[i]);
    const int length = static_cast<int>(cycle.size()) - 1;
    r.csv += name + "," + std::to_string(length) + "," + format_double(err) + "\n";
    rows.push_back({{"cycle", cycle}, {"length", length}, {"error", err}});
    worst = std::max(worst, err);
  }
  r.doc = {{"rows", std::move(rows)}, {"max_error", worst}};
  return r;
}

Report accuracy_report(std::span<const MlpParams> models, const Dataset& data) {
  Report r;
  r.csv = "model,loss,accuracy\n";
  json rows = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Metrics m = loss_and_accuracy(models[i], data);
    r.csv += std::to_string(i) + "," + format_double(m.loss) + "," + format_double(m.accuracy) + "\n";
    rows.push_back({{"model", i}, {"loss", m.loss}, {"accuracy", m.accuracy}});
  }
  r.doc = {{"rows", std::move(rows)}};
  return r;
}

Report fedsim_report(const FedRun& run, const FedConfig& config) {
  Report r;
  r.csv = round_table_csv(run, config.aggregator);
  json rounds = json::array();
  for (const RoundMetrics& m : run.rounds) {
    json row = {{"round", m.round}, {"accuracy", m.accuracy}, {"loss", m.loss}};
    if (config.aggregator == Aggregator::kC2m3) row["identity_perms"] = m.identity_perms;
    rounds.push_back(std::move(row));
  }
  r.doc = {{"config",
            {{"n_clients", config.n_clients},
             {"rounds", config.rounds},
             {"local_epochs", config.local_epochs},
             {"same_init", config.same_init},
             {"aggregator", to_string(config.aggregator)},
             {"partition_seed", config.partition_seed},
             {"init_seed", config.init_seed},
             {"probe_seed", config.probe_seed},
             {"probe_size", config.probe_size},
             {"repair", config.aggregator == Aggregator::kC2m3 && config.repair},
             {"train", train_config_to_json(config.train)},
             {"match", config_to_json(config.match)}}},
           {"rounds", std::move(rounds)}};
  return r;
}

}  // namespace c2m3
