// c2m3: train, match, merge, evaluate and simulate federated aggregation of
// MLPs from the command line. Everything goes through the C interface.

#include "c2m3/c2m3.h"

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;

// Runtime failure: reported on stderr, exit code 1.
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(c2m3_status status, const std::string& what) {
  if (status != C2M3_OK) {
    throw RuntimeError(what + ": " + c2m3_status_name(status) + ": " + c2m3_last_error());
  }
}

struct ModelDeleter {
  void operator()(c2m3_model* m) const { c2m3_model_free(m); }
};
struct DatasetDeleter {
  void operator()(c2m3_dataset* d) const { c2m3_dataset_free(d); }
};
struct MatchDeleter {
  void operator()(c2m3_match* m) const { c2m3_match_free(m); }
};
struct StringDeleter {
  void operator()(char* s) const { c2m3_string_free(s); }
};

using ModelPtr = std::unique_ptr<c2m3_model, ModelDeleter>;
using DatasetPtr = std::unique_ptr<c2m3_dataset, DatasetDeleter>;
using MatchPtr = std::unique_ptr<c2m3_match, MatchDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) {
  StringPtr owned(s);
  return owned ? std::string(owned.get()) : std::string();
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw CLI::ValidationError(flag, "expected comma-separated integers, got \"" + text + "\"");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

std::vector<int> parse_dims(const std::string& text) {
  std::vector<int> dims = parse_int_list(text, "--dims");
  if (dims.size() < 2) throw CLI::ValidationError("--dims", "need at least input and output");
  for (int d : dims) {
    if (d < 1) throw CLI::ValidationError("--dims", "dimensions must be positive");
  }
  return dims;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw RuntimeError("cannot write " + path);
}

json provenance(const std::string& command, std::uint64_t seed) {
  return {{"tool", "c2m3"}, {"version", c2m3_version()}, {"command", command}, {"seed", seed}};
}

ModelPtr load_model(const std::string& path) {
  c2m3_model* m = nullptr;
  check(c2m3_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

std::vector<ModelPtr> load_models(const std::vector<std::string>& paths) {
  std::vector<ModelPtr> models;
  for (const std::string& p : paths) models.push_back(load_model(p));
  return models;
}

std::vector<const c2m3_model*> raw(const std::vector<ModelPtr>& models) {
  std::vector<const c2m3_model*> out;
  for (const ModelPtr& m : models) out.push_back(m.get());
  return out;
}

void save_model(const c2m3_model* model, const std::string& path, const json& prov) {
  char* text = nullptr;
  check(c2m3_model_to_json(model, &text), "serializing model");
  json doc = json::parse(take(text));
  doc["provenance"] = prov;
  write_text(path, doc.dump() + "\n");
}

// Dataset selection shared by several subcommands: a synthetic spec or CSV
// files.
struct DataOptions {
  std::string spec = "spirals";
  std::string csv;
  std::string test_csv;
  std::string label = "label";
  int samples = 1000;
  int classes = 2;
  int input_dim = 2;
  double noise = 0.05;
  std::uint64_t data_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--spec", spec, "synthetic dataset: spirals | blobs")
        ->check(CLI::IsMember({"spirals", "blobs", "gaussian_blobs"}));
    app->add_option("--data", csv, "training CSV (overrides --spec)");
    app->add_option("--test-data", test_csv, "test CSV (defaults to --data)");
    app->add_option("--label-column", label, "CSV label column");
    app->add_option("--samples", samples, "synthetic sample count")->check(CLI::PositiveNumber);
    app->add_option("--classes", classes, "synthetic class count")->check(CLI::PositiveNumber);
    app->add_option("--input-dim", input_dim, "synthetic feature count")->check(CLI::PositiveNumber);
    app->add_option("--noise", noise, "synthetic noise level")->check(CLI::NonNegativeNumber);
    app->add_option("--data-seed", data_seed, "synthetic data and split seed");
  }

  std::pair<DatasetPtr, DatasetPtr> load() const {
    c2m3_dataset* train = nullptr;
    c2m3_dataset* test = nullptr;
    if (!csv.empty()) {
      check(c2m3_dataset_load_csv(csv.c_str(), label.c_str(), &train), "loading " + csv);
      DatasetPtr tr(train);
      const std::string& tpath = test_csv.empty() ? csv : test_csv;
      check(c2m3_dataset_load_csv(tpath.c_str(), label.c_str(), &test), "loading " + tpath);
      return {std::move(tr), DatasetPtr(test)};
    }
    c2m3_synthetic_spec s;
    c2m3_synthetic_spec_default(&s);
    s.kind = spec.c_str();
    s.n_samples = samples;
    s.n_classes = classes;
    s.input_dim = input_dim;
    s.noise = noise;
    s.seed = data_seed;
    check(c2m3_dataset_make_synthetic(&s, &train, &test), "generating dataset");
    return {DatasetPtr(train), DatasetPtr(test)};
  }

  json describe() const {
    if (!csv.empty()) return {{"csv", csv}, {"test_csv", test_csv.empty() ? csv : test_csv}};
    return {{"spec", spec}, {"samples", samples}, {"classes", classes},
            {"input_dim", input_dim}, {"noise", noise}, {"data_seed", data_seed}};
  }
};

struct TrainOptions {
  c2m3_train_config config{};

  TrainOptions() { c2m3_train_config_default(&config); }

  void add(CLI::App* app, bool with_epochs) {
    if (with_epochs) app->add_option("--epochs", config.epochs)->check(CLI::NonNegativeNumber);
    app->add_option("--batch-size", config.batch_size)->check(CLI::PositiveNumber);
    app->add_option("--lr", config.lr)->check(CLI::PositiveNumber);
    app->add_option("--momentum", config.momentum)->check(CLI::Range(0.0, 1.0));
    app->add_option("--weight-decay", config.weight_decay)->check(CLI::NonNegativeNumber);
    app->add_option("--init-scale", config.init_scale)->check(CLI::PositiveNumber);
  }
};

struct MatchOptions {
  c2m3_match_config config{};
  std::string mode = "pair";
  std::string init = "identity";
  bool no_bias = false;

  MatchOptions() { c2m3_match_config_default(&config); }

  void add(CLI::App* app, bool with_mode) {
    if (with_mode) {
      app->add_option("--mode", mode, "pair | universe | coord-descent")
          ->check(CLI::IsMember({"pair", "universe", "coord-descent"}));
    }
    app->add_option("--init", init, "identity | barycenter | sinkhorn")
        ->check(CLI::IsMember({"identity", "barycenter", "sinkhorn"}));
    app->add_option("--max-iters", config.max_iters, "Frank-Wolfe iteration cap")
        ->check(CLI::PositiveNumber);
    app->add_option("--tol", config.rel_tol, "relative objective tolerance")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--line-search-grid", config.line_search_grid)->check(CLI::PositiveNumber);
    app->add_flag("--no-bias", no_bias, "ignore biases while matching");
  }

  c2m3_match_config resolve(std::uint64_t seed) const {
    c2m3_match_config c = config;
    c.mode = mode == "universe"        ? C2M3_MATCH_UNIVERSE
             : mode == "coord-descent" ? C2M3_MATCH_COORD_DESCENT
                                       : C2M3_MATCH_PAIR;
    c.init = init == "barycenter" ? C2M3_INIT_BARYCENTER
             : init == "sinkhorn" ? C2M3_INIT_SINKHORN
                                  : C2M3_INIT_IDENTITY;
    c.use_bias = no_bias ? 0 : 1;
    c.seed = seed;
    return c;
  }
};

// ---- train

struct TrainCommand {
  DataOptions data;
  TrainOptions train;
  std::string dims;
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("train", "train an MLP on a synthetic or CSV dataset");
    sub->set_config("--config");
    data.add(sub);
    train.add(sub, true);
    sub->add_option("--dims", dims, "layer widths, e.g. 2,64,64,32,2")->required();
    sub->add_option("--seed", seed, "initialization and shuffling seed");
    sub->add_option("--out", out, "model bundle path")->required();
    sub->callback([this] { run(); });
  }

  void run() {
    const std::vector<int> d = parse_dims(dims);
    auto [tr, te] = data.load();
    c2m3_train_config c = train.config;
    c.seed = seed;
    c2m3_model* m = nullptr;
    check(c2m3_model_train(tr.get(), d.data(), d.size(), &c, &m), "training");
    ModelPtr model(m);
    double train_loss = 0, train_acc = 0, test_loss = 0, test_acc = 0;
    check(c2m3_model_evaluate(model.get(), tr.get(), &train_loss, &train_acc), "evaluating");
    check(c2m3_model_evaluate(model.get(), te.get(), &test_loss, &test_acc), "evaluating");
    json prov = provenance("train", seed);
    prov["data"] = data.describe();
    prov["dims"] = d;
    prov["train"] = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
                     {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
                     {"init_scale", c.init_scale}};
    save_model(model.get(), out, prov);
    std::printf("train loss %.6f acc %.4f | test loss %.6f acc %.4f\n", train_loss, train_acc,
                test_loss, test_acc);
  }
};

// ---- match

struct MatchCommand {
  MatchOptions match;
  std::vector<std::string> models;
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("match", "find neuron permutations between models");
    sub->set_config("--config");
    sub->add_option("models", models, "model bundles")->required()->expected(2, -1);
    match.add(sub, true);
    sub->add_option("--seed", seed, "seed for sinkhorn init and coordinate descent");
    sub->add_option("--out", out, "perms JSON path (stdout if omitted)");
    sub->callback([this] { run(); });
  }

  void run() {
    const std::vector<ModelPtr> ms = load_models(models);
    const std::vector<const c2m3_model*> ptrs = raw(ms);
    const c2m3_match_config c = match.resolve(seed);
    c2m3_match* handle = nullptr;
    check(c2m3_match_models(ptrs.data(), ptrs.size(), &c, &handle), "matching");
    MatchPtr result(handle);
    std::vector<const char*> ids;
    for (const std::string& m : models) ids.push_back(m.c_str());
    char* text = nullptr;
    check(c2m3_match_to_json(result.get(), ids.data(), &text), "encoding match");
    json doc = json::parse(take(text));
    doc["provenance"] = provenance("match", seed);
    write_text(out, doc.dump(2) + "\n");
    if (!out.empty()) std::printf("objective %.17g\n", c2m3_match_objective(result.get()));
  }
};

// ---- merge

struct MergeCommand {
  MatchOptions match;
  DataOptions data;
  std::vector<std::string> models;
  std::string strategy = "c2m3";
  std::string perms;
  std::string subset;
  bool do_repair = false;
  std::uint64_t seed = 0;
  int max_outer_iters = 100;
  std::string out;
  std::string report_path;

  void add(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("merge", "merge models into one");
    sub->set_config("--config");
    sub->add_option("models", models, "model bundles")->required()->expected(1, -1);
    sub->add_option("--strategy", strategy, "naive | c2m3 | merge-many")
        ->check(CLI::IsMember({"naive", "c2m3", "merge-many"}));
    sub->add_option("--perms", perms, "precomputed perms JSON (c2m3 strategy)");
    sub->add_option("--subset", subset, "merge only these model indices, e.g. 0,2,4");
    sub->add_flag("--repair", do_repair, "apply REPAIR on the training split of the data");
    data.add(sub);
    match.add(sub, false);
    sub->add_option("--seed", seed, "matching and merge-many seed");
    sub->add_option("--outer-iters", max_outer_iters, "merge-many pass cap")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "merged model path")->required();
    sub->add_option("--report", report_path, "merge summary JSON path");
    sub->callback([this] { run(); });
  }

  void run() {
    std::vector<int> indices;
    if (!subset.empty()) indices = parse_int_list(subset, "--subset");
    const std::vector<ModelPtr> ms = load_models(models);
    const std::vector<const c2m3_model*> ptrs = raw(ms);

    c2m3_merge_config c;
    c2m3_merge_config_default(&c);
    c.strategy = strategy == "naive"        ? C2M3_MERGE_NAIVE
                 : strategy == "merge-many" ? C2M3_MERGE_MANY
                                            : C2M3_MERGE_C2M3;
    c.match = match.resolve(seed);
    c.match.mode = C2M3_MATCH_UNIVERSE;
    c.seed = seed;
    c.max_outer_iters = max_outer_iters;
    if (!indices.empty()) {
      c.subset = indices.data();
      c.subset_len = indices.size();
    }
    DatasetPtr train, test;
    if (do_repair) {
      std::tie(train, test) = data.load();
      c.repair_data = train.get();
    }
    MatchPtr given;
    if (!perms.empty()) {
      c2m3_match* h = nullptr;
      check(c2m3_match_load(perms.c_str(), &h), "loading perms");
      given.reset(h);
    }
    c2m3_model* merged = nullptr;
    char* summary = nullptr;
    check(c2m3_merge(ptrs.data(), ptrs.size(), &c, given.get(), &merged, &summary), "merging");
    ModelPtr result(merged);
    json report = json::parse(take(summary));
    json prov = provenance("merge", seed);
    prov["models"] = models;
    if (!perms.empty()) prov["perms"] = perms;
    if (do_repair) prov["data"] = data.describe();
    save_model(result.get(), out, prov);
    report["provenance"] = prov;
    if (!report_path.empty()) write_text(report_path, report.dump(2) + "\n");
    if (do_repair && test) {
      double loss = 0, acc = 0;
      check(c2m3_model_evaluate(result.get(), test.get(), &loss, &acc), "evaluating");
      std::printf("test loss %.6f acc %.4f\n", loss, acc);
    }
  }
};

// ---- eval

struct EvalCommand {
  DataOptions data;
  std::vector<std::string> models;
  std::string report = "accuracy";
  std::string perms;
  std::string split = "test";
  c2m3_eval_options options{};
  std::uint64_t seed = 0;
  std::string csv_path;
  std::string json_path;

  EvalCommand() { c2m3_eval_options_default(&options); }

  void add(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("eval", "evaluation reports as CSV and JSON");
    sub->set_config("--config");
    sub->add_option("models", models, "model bundles")->required()->expected(1, -1);
    sub->add_option("--report", report,
                    "barrier | similarity | cka | perf-matrix | cycle-error | accuracy")
        ->check(CLI::IsMember(
            {"barrier", "similarity", "cka", "perf-matrix", "cycle-error", "accuracy"}));
    sub->add_option("--perms", perms, "perms JSON aligning the models");
    sub->add_option("--split", split, "dataset split for single-split reports: train | test")
        ->check(CLI::IsMember({"train", "test"}));
    data.add(sub);
    sub->add_option("--grid", options.grid, "barrier grid points")->check(CLI::Range(2, 100000));
    sub->add_option("--probe-seed", options.probe_seed, "probe batch seed");
    sub->add_option("--probe-size", options.probe_size, "probe batch size")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "recorded in the provenance block");
    sub->add_option("--csv", csv_path, "CSV output path (stdout if omitted)");
    sub->add_option("--json", json_path, "JSON output path");
    sub->callback([this] { run(); });
  }

  void run() {
    const std::vector<ModelPtr> ms = load_models(models);
    const std::vector<const c2m3_model*> ptrs = raw(ms);
    MatchPtr match;
    if (!perms.empty()) {
      c2m3_match* h = nullptr;
      check(c2m3_match_load(perms.c_str(), &h), "loading perms");
      match.reset(h);
    }
    DatasetPtr train, test;
    if (report != "cycle-error") std::tie(train, test) = data.load();

    c2m3_report_kind kind = C2M3_REPORT_ACCURACY;
    const c2m3_dataset* primary = split == "train" ? train.get() : test.get();
    const c2m3_dataset* secondary = nullptr;
    if (report == "barrier") {
      kind = C2M3_REPORT_BARRIER;
      primary = train.get();
      secondary = test.get();
    } else if (report == "similarity") {
      kind = C2M3_REPORT_SIMILARITY;
    } else if (report == "cka") {
      kind = C2M3_REPORT_CKA;
    } else if (report == "perf-matrix") {
      kind = C2M3_REPORT_PERF_MATRIX;
    } else if (report == "cycle-error") {
      kind = C2M3_REPORT_CYCLE_ERROR;
    }
    char* csv = nullptr;
    char* doc = nullptr;
    check(c2m3_eval_report(kind, ptrs.data(), ptrs.size(), match.get(), primary, secondary,
                           &options, &csv, &doc),
          report + " report");
    const std::string csv_text = take(csv);
    json out = {{"report", report}, {"models", models}, {"result", json::parse(take(doc))}};
    json prov = provenance("eval", seed);
    if (report != "cycle-error") prov["data"] = data.describe();
    if (!perms.empty()) prov["perms"] = perms;
    prov["probe_seed"] = options.probe_seed;
    out["provenance"] = prov;
    write_text(csv_path, csv_text);
    if (!json_path.empty()) write_text(json_path, out.dump(2) + "\n");
  }
};

// ---- fedsim

struct FedsimCommand {
  DataOptions data;
  TrainOptions train;
  MatchOptions match;
  c2m3_fed_config config{};
  std::string dims = "2,64,64,32,2";
  std::string aggregator = "both";
  bool same_init = false;
  bool no_repair = false;
  std::uint64_t seed = 0;
  std::string csv_path;
  std::string json_path;
  CLI::Option* partition_opt = nullptr;
  CLI::Option* init_opt = nullptr;
  CLI::Option* probe_opt = nullptr;

  FedsimCommand() { c2m3_fed_config_default(&config); }

  void add(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("fedsim", "federated simulation: fedavg vs c2m3");
    sub->set_config("--config");
    data.add(sub);
    train.add(sub, false);
    match.add(sub, false);
    sub->add_option("--dims", dims, "layer widths");
    sub->add_option("--clients", config.n_clients, "number of clients")
        ->check(CLI::Range(2, 100000));
    sub->add_option("--rounds", config.rounds, "communication rounds")
        ->check(CLI::Range(1, 100000));
    sub->add_option("--local-epochs", config.local_epochs, "local epochs per round")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--same-init", same_init, "all clients start from one initialization");
    sub->add_option("--aggregator", aggregator, "fedavg | c2m3 | both")
        ->check(CLI::IsMember({"fedavg", "c2m3", "both"}));
    sub->add_flag("--no-repair", no_repair, "skip REPAIR after c2m3 aggregation");
    sub->add_option("--seed", seed, "local training seed; default for the other seeds");
    partition_opt = sub->add_option("--partition-seed", config.partition_seed);
    init_opt = sub->add_option("--init-seed", config.init_seed);
    probe_opt = sub->add_option("--probe-seed", config.probe_seed);
    sub->add_option("--probe-size", config.probe_size)->check(CLI::PositiveNumber);
    sub->add_option("--csv", csv_path, "round table path (stdout if omitted)");
    sub->add_option("--json", json_path, "JSON output path");
    sub->callback([this] { run(); });
  }

  void run() {
    const std::vector<int> d = parse_dims(dims);
    auto [tr, te] = data.load();
    c2m3_fed_config c = config;
    if (!partition_opt->count()) c.partition_seed = seed;
    if (!init_opt->count()) c.init_seed = seed;
    if (!probe_opt->count()) c.probe_seed = seed;
    c.same_init = same_init ? 1 : 0;
    c.repair = no_repair ? 0 : 1;
    c.train = train.config;
    c.train.seed = seed;
    c.match = match.resolve(seed);
    c.match.mode = C2M3_MATCH_UNIVERSE;

    std::vector<std::string> aggregators;
    if (aggregator == "both") {
      aggregators = {"fedavg", "c2m3"};
    } else {
      aggregators = {aggregator};
    }
    std::string table;
    json runs = json::array();
    for (const std::string& a : aggregators) {
      c.aggregator = a.c_str();
      char* csv = nullptr;
      char* doc = nullptr;
      check(c2m3_fedsim_run(tr.get(), te.get(), d.data(), d.size(), &c, &csv, &doc),
            "fedsim " + a);
      std::string rows = take(csv);
      if (!table.empty()) rows = rows.substr(rows.find('\n') + 1);
      table += rows;
      runs.push_back(json::parse(take(doc)));
    }
    write_text(csv_path, table);
    if (!json_path.empty()) {
      json prov = provenance("fedsim", seed);
      prov["data"] = data.describe();
      prov["dims"] = d;
      write_text(json_path, json({{"runs", runs}, {"provenance", prov}}).dump(2) + "\n");
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistent multi-model merging of MLPs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", c2m3_version());

  TrainCommand train;
  MatchCommand match;
  MergeCommand merge;
  EvalCommand eval;
  FedsimCommand fedsim;
  train.add(app);
  match.add(app);
  merge.add(app);
  eval.add(app);
  fedsim.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const RuntimeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
