/*
 * C interface to the l4opt library.
 *
 * All functions return an l4_status; on failure a description of the error is
 * available from l4_last_error() on the same thread until the next call.
 * Objects are opaque and owned by the caller, who releases them with the
 * matching *_destroy function. Strings returned through char** out-parameters
 * are released with l4_string_free().
 */
#ifndef L4OPT_L4_H
#define L4OPT_L4_H

#include <stddef.h>
#include <stdint.h>

#if defined(L4_BUILDING_LIBRARY)
#define L4_API __attribute__((visibility("default")))
#else
#define L4_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum l4_status {
  L4_OK = 0,
  L4_ERR_INVALID_ARGUMENT = 1, /* contract violation: bad argument, config or state */
  L4_ERR_DIVERGED = 2,         /* non-finite loss, gradient or parameters */
  L4_ERR_PARSE = 3,            /* malformed input file */
  L4_ERR_IO = 4,
  L4_ERR_NUMERIC = 5,          /* numerical routine failure */
  L4_ERR_INTERNAL = 6
} l4_status;

typedef enum l4_flavor { L4_FLAVOR_MOM = 0, L4_FLAVOR_ADAM = 1 } l4_flavor;

typedef struct l4_config {
  double alpha;
  double gamma;
  double gamma0;
  double tau;
  double epsilon;
  l4_flavor flavor;
  double tau_m; /* momentum timescale */
  double tau_s; /* second-moment timescale (Adam flavor) */
} l4_config;

typedef struct l4_step_record {
  double eta;       /* effective learning rate */
  double loss;
  double lmin_used; /* gamma * Lmin entering the update */
  double gv;        /* g^T v */
} l4_step_record;

typedef struct l4_optimizer l4_optimizer;
typedef struct l4_experiment l4_experiment;

L4_API const char* l4_version(void);
L4_API const char* l4_last_error(void);
L4_API const char* l4_status_name(l4_status status);
L4_API void l4_string_free(char* s);

/* Optimizer */

L4_API void l4_config_default(l4_config* out);
L4_API l4_status l4_optimizer_create(const l4_config* config, size_t dim, l4_optimizer** out);
L4_API void l4_optimizer_destroy(l4_optimizer* opt);
/* Applies one update to params in place. rec may be NULL. */
L4_API l4_status l4_optimizer_step(l4_optimizer* opt, double loss, const double* grad,
                                   double* params, size_t dim, l4_step_record* rec);
L4_API l4_status l4_optimizer_lmin(const l4_optimizer* opt, double* out);
L4_API l4_status l4_optimizer_steps(const l4_optimizer* opt, uint64_t* out);

/* Experiments (JSON configuration, see README) */

L4_API l4_status l4_experiment_parse(const char* json, l4_experiment** out);
L4_API void l4_experiment_destroy(l4_experiment* exp);
L4_API l4_status l4_experiment_set_seed(l4_experiment* exp, uint64_t seed);
L4_API l4_status l4_experiment_set_restarts(l4_experiment* exp, size_t restarts);
/* Canonical JSON form of the parsed experiment. */
L4_API l4_status l4_experiment_to_json(const l4_experiment* exp, char** out);
/* Writes per-run CSVs and summary.json under out_dir; summary_json may be NULL. */
L4_API l4_status l4_experiment_run(const l4_experiment* exp, const char* out_dir,
                                   char** summary_json);
L4_API l4_status l4_experiment_sweep(const l4_experiment* exp, const size_t* sizes, size_t count,
                                     const char* out_dir, char** sweep_json);
/* Writes comparison.csv / comparison.txt; table_text receives the text table. */
L4_API l4_status l4_experiment_compare(const l4_experiment* const* exps, size_t count,
                                       const char* out_dir, char** table_text);

#ifdef __cplusplus
}
#endif

#endif /* L4OPT_L4_H */
