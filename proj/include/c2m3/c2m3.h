/*
 * C interface to the c2m3 model matching and merging library.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns a c2m3_status; on
 * failure c2m3_last_error() describes the problem (thread-local, valid until
 * the next failing call on the same thread). Strings returned through char**
 * out-parameters are heap allocated and released with c2m3_string_free.
 */
#ifndef C2M3_C2M3_H
#define C2M3_C2M3_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(C2M3_BUILDING_LIBRARY)
#    define C2M3_API __declspec(dllexport)
#  else
#    define C2M3_API __declspec(dllimport)
#  endif
#else
#  define C2M3_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum c2m3_status {
  C2M3_OK = 0,
  C2M3_ERR_INVALID_ARGUMENT = 1,
  C2M3_ERR_SHAPE_MISMATCH = 2,
  C2M3_ERR_PARSE = 3,
  C2M3_ERR_IO = 4,
  C2M3_ERR_NUMERICAL = 5,
  C2M3_ERR_TRAINING = 6,
  C2M3_ERR_INTERNAL = 7
} c2m3_status;

typedef struct c2m3_model c2m3_model;
typedef struct c2m3_dataset c2m3_dataset;
typedef struct c2m3_match c2m3_match;

C2M3_API const char* c2m3_version(void);
C2M3_API const char* c2m3_last_error(void);
C2M3_API const char* c2m3_status_name(c2m3_status status);
C2M3_API void c2m3_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct c2m3_synthetic_spec {
  const char* kind; /* "spirals" | "blobs" */
  int n_samples;
  int n_classes;
  int input_dim;
  double noise;
  uint64_t seed;
} c2m3_synthetic_spec;

C2M3_API void c2m3_synthetic_spec_default(c2m3_synthetic_spec* spec);
C2M3_API c2m3_status c2m3_dataset_make_synthetic(const c2m3_synthetic_spec* spec,
                                                 c2m3_dataset** train,
                                                 c2m3_dataset** test);
C2M3_API c2m3_status c2m3_dataset_load_csv(const char* path, const char* label_column,
                                           c2m3_dataset** out);
C2M3_API c2m3_status c2m3_dataset_save_csv(const c2m3_dataset* data, const char* path,
                                           const char* label_column);
C2M3_API int c2m3_dataset_size(const c2m3_dataset* data);
C2M3_API int c2m3_dataset_dim(const c2m3_dataset* data);
C2M3_API int c2m3_dataset_num_classes(const c2m3_dataset* data);
C2M3_API void c2m3_dataset_free(c2m3_dataset* data);

/* ---- models ------------------------------------------------------------ */

typedef struct c2m3_train_config {
  int epochs;
  int batch_size;
  double lr;
  double momentum;
  double weight_decay;
  double init_scale;
  uint64_t seed;
} c2m3_train_config;

C2M3_API void c2m3_train_config_default(c2m3_train_config* config);
C2M3_API c2m3_status c2m3_model_train(const c2m3_dataset* data, const int* dims,
                                      size_t n_dims, const c2m3_train_config* config,
                                      c2m3_model** out);
C2M3_API c2m3_status c2m3_model_load(const char* path, c2m3_model** out);
C2M3_API c2m3_status c2m3_model_save(const c2m3_model* model, const char* path);
C2M3_API c2m3_status c2m3_model_from_json(const char* text, c2m3_model** out);
C2M3_API c2m3_status c2m3_model_to_json(const c2m3_model* model, char** out);
/* Writes up to `capacity` dims into `dims`; `count` receives L + 1. */
C2M3_API c2m3_status c2m3_model_dims(const c2m3_model* model, int* dims, size_t capacity,
                                     size_t* count);
C2M3_API c2m3_status c2m3_model_evaluate(const c2m3_model* model, const c2m3_dataset* data,
                                         double* loss, double* accuracy);
/* 1 if both models have identical shapes and bit-identical parameters. */
C2M3_API int c2m3_model_equal(const c2m3_model* a, const c2m3_model* b);
C2M3_API void c2m3_model_free(c2m3_model* model);

/* ---- matching ---------------------------------------------------------- */

typedef enum c2m3_match_mode {
  C2M3_MATCH_PAIR = 0,          /* pairwise Frank-Wolfe, models[1] onto models[0] */
  C2M3_MATCH_UNIVERSE = 1,      /* joint Frank-Wolfe over all models */
  C2M3_MATCH_COORD_DESCENT = 2  /* layer-wise baseline, models[1] onto models[0] */
} c2m3_match_mode;

typedef enum c2m3_init {
  C2M3_INIT_IDENTITY = 0,
  C2M3_INIT_BARYCENTER = 1,
  C2M3_INIT_SINKHORN = 2
} c2m3_init;

typedef struct c2m3_match_config {
  c2m3_match_mode mode;
  c2m3_init init;
  int max_iters;
  double rel_tol;
  int line_search_grid;
  uint64_t seed;
  int use_bias;
} c2m3_match_config;

C2M3_API void c2m3_match_config_default(c2m3_match_config* config);
/* Universe matches over at most 6 models also record the largest cycle error
 * over every cycle of distinct models. */
C2M3_API c2m3_status c2m3_match_models(const c2m3_model* const* models, size_t n,
                                       const c2m3_match_config* config, c2m3_match** out);
C2M3_API double c2m3_match_objective(const c2m3_match* match);
C2M3_API int c2m3_match_is_universe(const c2m3_match* match);
C2M3_API int c2m3_match_num_models(const c2m3_match* match);
/* ids may be NULL (then "0", "1", ... are used); it has num_models entries. */
C2M3_API c2m3_status c2m3_match_to_json(const c2m3_match* match, const char* const* ids,
                                        char** out);
C2M3_API c2m3_status c2m3_match_from_json(const char* text, c2m3_match** out);
C2M3_API c2m3_status c2m3_match_load(const char* path, c2m3_match** out);
C2M3_API c2m3_status c2m3_match_save(const c2m3_match* match, const char* const* ids,
                                     const char* path);
/* cycle: model indices, first == last. */
C2M3_API c2m3_status c2m3_match_cycle_error(const c2m3_match* match,
                                            const c2m3_model* const* models, size_t n,
                                            const int* cycle, size_t cycle_len, double* out);
C2M3_API void c2m3_match_free(c2m3_match* match);

/* ---- merging ----------------------------------------------------------- */

typedef enum c2m3_merge_strategy {
  C2M3_MERGE_NAIVE = 0,
  C2M3_MERGE_C2M3 = 1,
  C2M3_MERGE_MANY = 2
} c2m3_merge_strategy;

typedef struct c2m3_merge_config {
  c2m3_merge_strategy strategy;
  c2m3_match_config match;      /* used by C2M3_MERGE_C2M3 without a given match */
  uint64_t seed;                /* merge-many order */
  int max_outer_iters;          /* merge-many */
  const int* subset;            /* optional, c2m3 only */
  size_t subset_len;
  const c2m3_dataset* repair_data; /* non-NULL applies REPAIR */
} c2m3_merge_config;

C2M3_API void c2m3_merge_config_default(c2m3_merge_config* config);
/* `match` may be NULL; for C2M3_MERGE_C2M3 a universe match is then computed.
 * `report` (may be NULL) receives a JSON summary of the merge. */
C2M3_API c2m3_status c2m3_merge(const c2m3_model* const* models, size_t n,
                                const c2m3_merge_config* config, const c2m3_match* match,
                                c2m3_model** out, char** report);

/* ---- evaluation -------------------------------------------------------- */

typedef enum c2m3_report_kind {
  C2M3_REPORT_BARRIER = 0,     /* models[0..1]; data = train, data2 = test (optional) */
  C2M3_REPORT_SIMILARITY = 1,  /* needs a universe match; data = probe source */
  C2M3_REPORT_CKA = 2,         /* per-layer CKA only */
  C2M3_REPORT_PERF_MATRIX = 3, /* needs a universe match */
  C2M3_REPORT_CYCLE_ERROR = 4, /* needs a match; all cycles up to length n */
  C2M3_REPORT_ACCURACY = 5     /* per-model loss and accuracy */
} c2m3_report_kind;

typedef struct c2m3_eval_options {
  int grid;            /* barrier grid points */
  uint64_t probe_seed; /* similarity / cka probe batch */
  int probe_size;
} c2m3_eval_options;

C2M3_API void c2m3_eval_options_default(c2m3_eval_options* options);
C2M3_API c2m3_status c2m3_eval_report(c2m3_report_kind kind, const c2m3_model* const* models,
                                      size_t n, const c2m3_match* match,
                                      const c2m3_dataset* data, const c2m3_dataset* data2,
                                      const c2m3_eval_options* options, char** csv,
                                      char** json);

/* ---- federated simulation ---------------------------------------------- */

typedef struct c2m3_fed_config {
  int n_clients;
  int rounds;
  int local_epochs;
  int same_init;
  const char* aggregator; /* "fedavg" | "c2m3" */
  uint64_t partition_seed;
  uint64_t init_seed;
  uint64_t probe_seed;
  int probe_size;
  int repair;
  c2m3_train_config train;
  c2m3_match_config match;
} c2m3_fed_config;

C2M3_API void c2m3_fed_config_default(c2m3_fed_config* config);
/* csv: "round,aggregator,accuracy,loss" rows; json: config echo + rounds. */
C2M3_API c2m3_status c2m3_fedsim_run(const c2m3_dataset* train, const c2m3_dataset* test,
                                     const int* dims, size_t n_dims,
                                     const c2m3_fed_config* config, char** csv, char** json);

#ifdef __cplusplus
}
#endif

#endif /* C2M3_C2M3_H */
