#include "c2m3/c2m3.h"

#include "c2m3/error.hpp"
#include "c2m3/evaluation.hpp"
#include "c2m3/fedsim.hpp"
#include "c2m3/io.hpp"
#include "c2m3/reports.hpp"
#include "c2m3/training.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

struct c2m3_model {
  c2m3::MlpParams params;
};

struct c2m3_dataset {
  c2m3::Dataset data;
};

struct c2m3_match {
  c2m3::MatchRecord record;
};

namespace {

thread_local std::string g_last_error;

constexpr int kMaxCycleModels = 6;

c2m3_status to_status(c2m3::ErrorCode code) {
  switch (code) {
    case c2m3::ErrorCode::kInvalidInput: return C2M3_ERR_INVALID_ARGUMENT;
    case c2m3::ErrorCode::kShapeMismatch: return C2M3_ERR_SHAPE_MISMATCH;
    case c2m3::ErrorCode::kParse: return C2M3_ERR_PARSE;
    case c2m3::ErrorCode::kIo: return C2M3_ERR_IO;
    case c2m3::ErrorCode::kNumerical: return C2M3_ERR_NUMERICAL;
    case c2m3::ErrorCode::kTraining: return C2M3_ERR_TRAINING;
  }
  return C2M3_ERR_INTERNAL;
}

template <typename F>
c2m3_status guarded(F&& body) {
  try {
    body();
    return C2M3_OK;
  } catch (const c2m3::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return C2M3_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) c2m3::fail(c2m3::ErrorCode::kInvalidInput, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<int> dims_from(const int* dims, size_t n_dims) {
  require(dims != nullptr || n_dims == 0, "dims is NULL");
  return std::vector<int>(dims, dims + n_dims);
}

std::vector<c2m3::MlpParams> models_from(const c2m3_model* const* models, size_t n) {
  require(models != nullptr || n == 0, "models is NULL");
  std::vector<c2m3::MlpParams> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    require(models[i] != nullptr, "model handle is NULL");
    out.push_back(models[i]->params);
  }
  return out;
}

c2m3::TrainConfig train_config_from(const c2m3_train_config& c) {
  c2m3::TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.lr = c.lr;
  t.momentum = c.momentum;
  t.weight_decay = c.weight_decay;
  t.init_scale = c.init_scale;
  t.seed = c.seed;
  return t;
}

c2m3::MatchConfig match_config_from(const c2m3_match_config& c) {
  c2m3::MatchConfig m;
  switch (c.init) {
    case C2M3_INIT_IDENTITY: m.init = c2m3::InitStrategy::kIdentity; break;
    case C2M3_INIT_BARYCENTER: m.init = c2m3::InitStrategy::kBarycenter; break;
    case C2M3_INIT_SINKHORN: m.init = c2m3::InitStrategy::kSinkhorn; break;
    default: c2m3::fail(c2m3::ErrorCode::kInvalidInput, "unknown init strategy");
  }
  m.max_iters = c.max_iters;
  m.rel_tol = c.rel_tol;
  m.line_search_grid = c.line_search_grid;
  m.seed = c.seed;
  m.use_bias = c.use_bias != 0;
  m.validate();
  return m;
}

std::vector<std::string> ids_from(const char* const* ids, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(ids && ids[i] ? std::string(ids[i]) : std::to_string(i));
  }
  return out;
}

// Identity universe: every model is already expressed in the shared space.
c2m3::UniverseMatch identity_universe(std::span<const c2m3::MlpParams> models) {
  c2m3::UniverseMatch u;
  for (const c2m3::MlpParams& m : models) u.perms.push_back(c2m3::identity_perms(m));
  return u;
}

c2m3::UniverseMatch universe_or_identity(const c2m3_match* match,
                                         std::span<const c2m3::MlpParams> models) {
  if (!match) return identity_universe(models);
  require(match->record.mode == c2m3::MatchRecord::Mode::kUniverse,
          "this report needs a universe match");
  return match->record.universe;
}

}  // namespace

extern "C" {

const char* c2m3_version(void) { return "1.0.0"; }

const char* c2m3_last_error(void) { return g_last_error.c_str(); }

const char* c2m3_status_name(c2m3_status status) {
  switch (status) {
    case C2M3_OK: return "ok";
    case C2M3_ERR_INVALID_ARGUMENT: return "invalid argument";
    case C2M3_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case C2M3_ERR_PARSE: return "parse error";
    case C2M3_ERR_IO: return "i/o error";
    case C2M3_ERR_NUMERICAL: return "numerical error";
    case C2M3_ERR_TRAINING: return "training error";
    case C2M3_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void c2m3_string_free(char* s) { std::free(s); }

// ---- datasets

void c2m3_synthetic_spec_default(c2m3_synthetic_spec* spec) {
  if (!spec) return;
  const c2m3::SyntheticSpec d;
  spec->kind = "spirals";
  spec->n_samples = d.n_samples;
  spec->n_classes = d.n_classes;
  spec->input_dim = d.input_dim;
  spec->noise = d.noise;
  spec->seed = d.seed;
}

c2m3_status c2m3_dataset_make_synthetic(const c2m3_synthetic_spec* spec, c2m3_dataset** train,
                                        c2m3_dataset** test) {
  return guarded([&] {
    require(spec && spec->kind && train && test, "NULL argument");
    c2m3::SyntheticSpec s;
    s.kind = c2m3::parse_synthetic_kind(spec->kind);
    s.n_samples = spec->n_samples;
    s.n_classes = spec->n_classes;
    s.input_dim = spec->input_dim;
    s.noise = spec->noise;
    s.seed = spec->seed;
    c2m3::Split split = c2m3::make_dataset(s);
    auto tr = std::make_unique<c2m3_dataset>(c2m3_dataset{std::move(split.train)});
    auto te = std::make_unique<c2m3_dataset>(c2m3_dataset{std::move(split.test)});
    *train = tr.release();
    *test = te.release();
  });
}

c2m3_status c2m3_dataset_load_csv(const char* path, const char* label_column,
                                  c2m3_dataset** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = new c2m3_dataset{c2m3::load_csv_dataset(path, label_column ? label_column : "label")};
  });
}

c2m3_status c2m3_dataset_save_csv(const c2m3_dataset* data, const char* path,
                                  const char* label_column) {
  return guarded([&] {
    require(data && path, "NULL argument");
    c2m3::save_csv_dataset(data->data, path, label_column ? label_column : "label");
  });
}

int c2m3_dataset_size(const c2m3_dataset* data) { return data ? data->data.size() : 0; }

int c2m3_dataset_dim(const c2m3_dataset* data) { return data ? data->data.dim() : 0; }

int c2m3_dataset_num_classes(const c2m3_dataset* data) {
  return data ? data->data.num_classes() : 0;
}

void c2m3_dataset_free(c2m3_dataset* data) { delete data; }

// ---- models

void c2m3_train_config_default(c2m3_train_config* config) {
  if (!config) return;
  const c2m3::TrainConfig d;
  config->epochs = d.epochs;
  config->batch_size = d.batch_size;
  config->lr = d.lr;
  config->momentum = d.momentum;
  config->weight_decay = d.weight_decay;
  config->init_scale = d.init_scale;
  config->seed = d.seed;
}

c2m3_status c2m3_model_train(const c2m3_dataset* data, const int* dims, size_t n_dims,
                             const c2m3_train_config* config, c2m3_model** out) {
  return guarded([&] {
    require(data && config && out, "NULL argument");
    c2m3::MlpParams m =
        c2m3::train_mlp(data->data, dims_from(dims, n_dims), train_config_from(*config));
    *out = new c2m3_model{std::move(m)};
  });
}

c2m3_status c2m3_model_load(const char* path, c2m3_model** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = new c2m3_model{c2m3::load_model(path)};
  });
}

c2m3_status c2m3_model_save(const c2m3_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "NULL argument");
    c2m3::save_model(model->params, path);
  });
}

c2m3_status c2m3_model_from_json(const char* text, c2m3_model** out) {
  return guarded([&] {
    require(text && out, "NULL argument");
    *out = new c2m3_model{c2m3::deserialize(text)};
  });
}

c2m3_status c2m3_model_to_json(const c2m3_model* model, char** out) {
  return guarded([&] {
    require(model && out, "NULL argument");
    *out = dup_string(c2m3::serialize(model->params));
  });
}

c2m3_status c2m3_model_dims(const c2m3_model* model, int* dims, size_t capacity,
                            size_t* count) {
  return guarded([&] {
    require(model && count, "NULL argument");
    const std::vector<int> d = model->params.dims();
    *count = d.size();
    for (size_t i = 0; i < d.size() && i < capacity; ++i) dims[i] = d[i];
  });
}

c2m3_status c2m3_model_evaluate(const c2m3_model* model, const c2m3_dataset* data,
                                double* loss, double* accuracy) {
  return guarded([&] {
    require(model && data, "NULL argument");
    const c2m3::Metrics m = c2m3::loss_and_accuracy(model->params, data->data);
    if (loss) *loss = m.loss;
    if (accuracy) *accuracy = m.accuracy;
  });
}

int c2m3_model_equal(const c2m3_model* a, const c2m3_model* b) {
  if (!a || !b) return 0;
  return a->params == b->params ? 1 : 0;
}

void c2m3_model_free(c2m3_model* model) { delete model; }

// ---- matching

void c2m3_match_config_default(c2m3_match_config* config) {
  if (!config) return;
  const c2m3::MatchConfig d;
  config->mode = C2M3_MATCH_PAIR;
  config->init = C2M3_INIT_IDENTITY;
  config->max_iters = d.max_iters;
  config->rel_tol = d.rel_tol;
  config->line_search_grid = d.line_search_grid;
  config->seed = d.seed;
  config->use_bias = d.use_bias ? 1 : 0;
}

c2m3_status c2m3_match_models(const c2m3_model* const* models, size_t n,
                              const c2m3_match_config* config, c2m3_match** out) {
  return guarded([&] {
    require(config && out, "NULL argument");
    const std::vector<c2m3::MlpParams> ms = models_from(models, n);
    require(ms.size() >= 2, "matching needs at least two models");
    for (const c2m3::MlpParams& m : ms) c2m3::check_same_architecture(ms.front(), m, "match");

    c2m3::MatchRecord record;
    record.config = match_config_from(*config);
    switch (config->mode) {
      case C2M3_MATCH_PAIR:
        require(ms.size() == 2, "pair mode takes exactly two models");
        record.mode = c2m3::MatchRecord::Mode::kPairwise;
        record.pairwise = c2m3::fw_match_pair(ms[0], ms[1], record.config);
        break;
      case C2M3_MATCH_COORD_DESCENT:
        require(ms.size() == 2, "coord-descent mode takes exactly two models");
        record.mode = c2m3::MatchRecord::Mode::kPairwise;
        record.matcher = "coord-descent";
        record.pairwise = c2m3::coordinate_descent_match(ms[0], ms[1], record.config.seed,
                                                         record.config.use_bias);
        break;
      case C2M3_MATCH_UNIVERSE:
        record.mode = c2m3::MatchRecord::Mode::kUniverse;
        record.universe = c2m3::fw_match_multi(ms, record.config);
        if (ms.size() <= kMaxCycleModels) {
          record.cycle_error =
              c2m3::cycle_error_report(ms, record.maps()).doc.at("max_error").get<double>();
        }
        break;
      default:
        c2m3::fail(c2m3::ErrorCode::kInvalidInput, "unknown match mode");
    }
    record.ids = ids_from(nullptr, record.num_models());
    *out = new c2m3_match{std::move(record)};
  });
}

double c2m3_match_objective(const c2m3_match* match) {
  return match ? match->record.objective() : 0.0;
}

int c2m3_match_is_universe(const c2m3_match* match) {
  return match && match->record.mode == c2m3::MatchRecord::Mode::kUniverse ? 1 : 0;
}

int c2m3_match_num_models(const c2m3_match* match) {
  return match ? match->record.num_models() : 0;
}

c2m3_status c2m3_match_to_json(const c2m3_match* match, const char* const* ids, char** out) {
  return guarded([&] {
    require(match && out, "NULL argument");
    c2m3::MatchRecord record = match->record;
    if (ids) record.ids = ids_from(ids, record.num_models());
    *out = dup_string(c2m3::match_to_json(record).dump(2));
  });
}

c2m3_status c2m3_match_from_json(const char* text, c2m3_match** out) {
  return guarded([&] {
    require(text && out, "NULL argument");
    c2m3::json doc;
    try {
      doc = c2m3::json::parse(text);
    } catch (const c2m3::json::parse_error& e) {
      c2m3::fail(c2m3::ErrorCode::kParse, std::string("malformed perms document: ") + e.what());
    }
    *out = new c2m3_match{c2m3::match_from_json(doc)};
  });
}

c2m3_status c2m3_match_load(const char* path, c2m3_match** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    const std::string text = c2m3::read_file(path);
    if (c2m3_match_from_json(text.c_str(), out) != C2M3_OK) {
      const std::string msg = std::string(path) + ": " + g_last_error;
      c2m3::fail(c2m3::ErrorCode::kParse, msg);
    }
  });
}

c2m3_status c2m3_match_save(const c2m3_match* match, const char* const* ids, const char* path) {
  return guarded([&] {
    require(match && path, "NULL argument");
    c2m3::MatchRecord record = match->record;
    if (ids) record.ids = ids_from(ids, record.num_models());
    c2m3::write_file(path, c2m3::match_to_json(record).dump(2) + "\n");
  });
}

c2m3_status c2m3_match_cycle_error(const c2m3_match* match, const c2m3_model* const* models,
                                   size_t n, const int* cycle, size_t cycle_len, double* out) {
  return guarded([&] {
    require(match && cycle && out, "NULL argument");
    const std::vector<c2m3::MlpParams> ms = models_from(models, n);
    require(static_cast<int>(ms.size()) == match->record.num_models(),
            "model count does not match the match");
    *out = c2m3::cycle_error(ms, match->record.maps(),
                             std::span<const int>(cycle, cycle_len));
  });
}

void c2m3_match_free(c2m3_match* match) { delete match; }

// ---- merging

void c2m3_merge_config_default(c2m3_merge_config* config) {
  if (!config) return;
  config->strategy = C2M3_MERGE_C2M3;
  c2m3_match_config_default(&config->match);
  config->match.mode = C2M3_MATCH_UNIVERSE;
  config->seed = 0;
  config->max_outer_iters = 100;
  config->subset = nullptr;
  config->subset_len = 0;
  config->repair_data = nullptr;
}

c2m3_status c2m3_merge(const c2m3_model* const* models, size_t n,
                       const c2m3_merge_config* config, const c2m3_match* match,
                       c2m3_model** out, char** report) {
  return guarded([&] {
    require(config && out, "NULL argument");
    const std::vector<c2m3::MlpParams> ms = models_from(models, n);
    require(!ms.empty(), "merge needs at least one model");
    require(config->subset == nullptr || config->strategy == C2M3_MERGE_C2M3,
            "subsets are only supported by the c2m3 strategy");

    c2m3::json summary;
    c2m3::MlpParams merged;
    std::vector<c2m3::MlpParams> endpoints;
    switch (config->strategy) {
      case C2M3_MERGE_NAIVE:
        summary["strategy"] = "naive";
        merged = c2m3::naive_merge(ms);
        endpoints = ms;
        break;
      case C2M3_MERGE_MANY: {
        summary["strategy"] = "merge-many";
        const c2m3::MergeManyResult r = c2m3::merge_many(ms, config->seed, config->max_outer_iters);
        merged = r.merged;
        endpoints = r.aligned;
        summary["passes"] = r.passes;
        summary["converged"] = r.converged;
        break;
      }
      case C2M3_MERGE_C2M3: {
        summary["strategy"] = "c2m3";
        if (match && match->record.mode == c2m3::MatchRecord::Mode::kPairwise) {
          require(ms.size() == 2 && config->subset == nullptr,
                  "a pairwise match merges exactly two models");
          endpoints = {ms[0], c2m3::apply_permutations(ms[1], match->record.pairwise.perms)};
          merged = c2m3::mean(endpoints);
          summary["objective"] = match->record.objective();
          break;
        }
        c2m3::UniverseMatch universe;
        if (match) {
          universe = match->record.universe;
        } else if (ms.size() == 1) {
          universe = identity_universe(ms);
        } else {
          universe = c2m3::fw_match_multi(ms, match_config_from(config->match));
        }
        std::vector<c2m3::MlpParams> mapped = c2m3::universe_models(ms, universe);
        if (config->subset) {
          const std::span<const int> subset(config->subset, config->subset_len);
          merged = c2m3::merge_subset(ms, universe, subset);
          std::vector<c2m3::MlpParams> chosen;
          for (int i : subset) chosen.push_back(mapped[static_cast<size_t>(i)]);
          endpoints = std::move(chosen);
          summary["subset"] = std::vector<int>(subset.begin(), subset.end());
        } else {
          merged = c2m3::mean(mapped);
          endpoints = std::move(mapped);
        }
        summary["objective"] = universe.objective;
        break;
      }
      default:
        c2m3::fail(c2m3::ErrorCode::kInvalidInput, "unknown merge strategy");
    }
    summary["repair"] = config->repair_data != nullptr;
    if (config->repair_data) {
      c2m3::RepairResult r = c2m3::repair(merged, endpoints, config->repair_data->data);
      merged = std::move(r.model);
      summary["repair_warnings"] = r.warnings;
    }
    summary["num_models"] = ms.size();
    auto result = std::make_unique<c2m3_model>(c2m3_model{std::move(merged)});
    if (report) *report = dup_string(summary.dump(2));
    *out = result.release();
  });
}

// ---- evaluation

void c2m3_eval_options_default(c2m3_eval_options* options) {
  if (!options) return;
  options->grid = c2m3::kDefaultBarrierGrid;
  options->probe_seed = 0;
  options->probe_size = c2m3::kProbeSize;
}

c2m3_status c2m3_eval_report(c2m3_report_kind kind, const c2m3_model* const* models, size_t n,
                             const c2m3_match* match, const c2m3_dataset* data,
                             const c2m3_dataset* data2, const c2m3_eval_options* options,
                             char** csv, char** json) {
  return guarded([&] {
    c2m3_eval_options opts;
    c2m3_eval_options_default(&opts);
    if (options) opts = *options;
    const std::vector<c2m3::MlpParams> ms = models_from(models, n);
    require(!ms.empty(), "no models given");
    for (const c2m3::MlpParams& m : ms) c2m3::check_same_architecture(ms.front(), m, "eval");
    if (match) {
      require(match->record.num_models() == static_cast<int>(ms.size()),
              "model count does not match the match");
    }
    auto need_data = [&] { require(data != nullptr, "this report needs a dataset"); };

    c2m3::Report report;
    switch (kind) {
      case C2M3_REPORT_BARRIER: {
        require(ms.size() == 2, "barrier takes exactly two models");
        need_data();
        c2m3::MlpParams b = ms[1];
        if (match) b = c2m3::apply_permutations(b, match->record.maps()(0, 1));
        const c2m3::BarrierCurve train = c2m3::loss_barrier(ms[0], b, data->data, opts.grid);
        report = c2m3::barrier_csv_report(train);
        report.doc = {{"aligned", match != nullptr}, {"train", report.doc}};
        if (data2) {
          report.doc["test"] =
              c2m3::barrier_csv_report(c2m3::loss_barrier(ms[0], b, data2->data, opts.grid)).doc;
        }
        break;
      }
      case C2M3_REPORT_SIMILARITY:
      case C2M3_REPORT_CKA: {
        need_data();
        const c2m3::Dataset probe = c2m3::probe_batch(data->data, opts.probe_seed, opts.probe_size);
        const c2m3::SimilarityReport s =
            c2m3::similarity_report(ms, universe_or_identity(match, ms), probe);
        report = c2m3::similarity_csv_report(s, kind == C2M3_REPORT_CKA);
        break;
      }
      case C2M3_REPORT_PERF_MATRIX:
        need_data();
        report = c2m3::merge_matrix_csv_report(
            c2m3::pairwise_merge_matrix(ms, universe_or_identity(match, ms), data->data));
        break;
      case C2M3_REPORT_CYCLE_ERROR:
        require(match != nullptr, "cycle error needs a match");
        report = c2m3::cycle_error_report(ms, match->record.maps());
        break;
      case C2M3_REPORT_ACCURACY:
        need_data();
        report = c2m3::accuracy_report(ms, data->data);
        break;
      default:
        c2m3::fail(c2m3::ErrorCode::kInvalidInput, "unknown report kind");
    }
    char* csv_out = csv ? dup_string(report.csv) : nullptr;
    if (json) {
      try {
        *json = dup_string(report.doc.dump(2));
      } catch (...) {
        std::free(csv_out);
        throw;
      }
    }
    if (csv) *csv = csv_out;
  });
}

// ---- federated simulation

void c2m3_fed_config_default(c2m3_fed_config* config) {
  if (!config) return;
  const c2m3::FedConfig d;
  config->n_clients = d.n_clients;
  config->rounds = d.rounds;
  config->local_epochs = d.local_epochs;
  config->same_init = d.same_init ? 1 : 0;
  config->aggregator = "c2m3";
  config->partition_seed = d.partition_seed;
  config->init_seed = d.init_seed;
  config->probe_seed = d.probe_seed;
  config->probe_size = d.probe_size;
  config->repair = d.repair ? 1 : 0;
  c2m3_train_config_default(&config->train);
  c2m3_match_config_default(&config->match);
  config->match.mode = C2M3_MATCH_UNIVERSE;
}

c2m3_status c2m3_fedsim_run(const c2m3_dataset* train, const c2m3_dataset* test,
                            const int* dims, size_t n_dims, const c2m3_fed_config* config,
                            char** csv, char** json) {
  return guarded([&] {
    require(train && test && config && config->aggregator, "NULL argument");
    c2m3::FedConfig fc;
    fc.n_clients = config->n_clients;
    fc.rounds = config->rounds;
    fc.local_epochs = config->local_epochs;
    fc.same_init = config->same_init != 0;
    fc.aggregator = c2m3::parse_aggregator(config->aggregator);
    fc.partition_seed = config->partition_seed;
    fc.init_seed = config->init_seed;
    fc.probe_seed = config->probe_seed;
    fc.probe_size = config->probe_size;
    fc.repair = config->repair != 0;
    fc.train = train_config_from(config->train);
    fc.match = match_config_from(config->match);
    const c2m3::FedRun run =
        c2m3::run_simulation(train->data, test->data, dims_from(dims, n_dims), fc);
    const c2m3::Report report = c2m3::fedsim_report(run, fc);
    char* csv_out = csv ? dup_string(report.csv) : nullptr;
    if (json) {
      try {
        *json = dup_string(report.doc.dump(2));
      } catch (...) {
        std::free(csv_out);
        throw;
      }
    }
    if (csv) *csv = csv_out;
  });
}

}  // extern "C"
