/* C interface to the hgode core. Every function returns an hgode_status;
 * on failure hgode_last_error() holds a message for the calling thread.
 * Matrices are row-major. */
#ifndef HGODE_H
#define HGODE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(HGODE_BUILDING_LIBRARY)
#    define HGODE_API __declspec(dllexport)
#  else
#    define HGODE_API __declspec(dllimport)
#  endif
#else
#  define HGODE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hgode_status {
  HGODE_OK = 0,
  HGODE_INVALID_ARGUMENT = 1,
  HGODE_ZERO_ROW = 2,
  HGODE_POOL_OVERFLOW = 3,
  HGODE_MAX_STEPS_EXCEEDED = 4,
  HGODE_STEP_UNDERFLOW = 5,
  HGODE_INVALID_SCALE = 6,
  HGODE_NON_FINITE_LOSS = 7,
  HGODE_DEGENERATE_CLUSTER = 8,
  HGODE_NOT_IRREDUCIBLE = 9,
  HGODE_NO_CONVERGENCE = 10,
  HGODE_EIGEN_FAILURE = 11,
  HGODE_PARSE_ERROR = 12,
  HGODE_RANGE_ERROR = 13,
  HGODE_IO_ERROR = 14,
  HGODE_PRECONDITION = 15,
  HGODE_INTERNAL = 16
} hgode_status;

typedef struct hgode_config hgode_config;
typedef struct hgode_summary hgode_summary;
typedef struct hgode_force hgode_force;

HGODE_API const char* hgode_version(void);
HGODE_API const char* hgode_last_error(void);
HGODE_API const char* hgode_status_name(hgode_status status);

/* Strings are copied into buf (NUL-terminated, truncated to cap). *needed
 * receives the full length plus one; either may be NULL/0 to query. */

/* ---- configuration ---- */
/* preset may be NULL or "" to use the file's own. */
HGODE_API hgode_status hgode_config_load(const char* path, const char* preset, hgode_config** out);
HGODE_API hgode_status hgode_config_parse(const char* text, const char* preset, hgode_config** out);
HGODE_API hgode_status hgode_config_set_seeds(hgode_config* cfg, const uint64_t* seeds, size_t n);
HGODE_API hgode_status hgode_config_set_output_dir(hgode_config* cfg, const char* dir);
HGODE_API hgode_status hgode_config_set_kind(hgode_config* cfg, const char* kind);
HGODE_API hgode_status hgode_config_set_break_fcrit(hgode_config* cfg, double value);
HGODE_API hgode_status hgode_config_kind(const hgode_config* cfg, char* buf, size_t cap, size_t* needed);
HGODE_API hgode_status hgode_config_serialize(const hgode_config* cfg, char* buf, size_t cap, size_t* needed);
HGODE_API void hgode_config_free(hgode_config* cfg);

/* ---- experiments ---- */
HGODE_API hgode_status hgode_run(const hgode_config* cfg, hgode_summary** out);
HGODE_API hgode_status hgode_summary_passed(const hgode_summary* s, int* passed);
HGODE_API hgode_status hgode_summary_json(const hgode_summary* s, char* buf, size_t cap, size_t* needed);
/* HGODE_INVALID_ARGUMENT if no seed reported the metric. */
HGODE_API hgode_status hgode_summary_metric(const hgode_summary* s, const char* key, double* mean,
                                            double* std, int* count);
HGODE_API void hgode_summary_free(hgode_summary* s);

/* ---- numerics ---- */
HGODE_API hgode_status hgode_critical_force(double lambda, double* out);
/* roots ascending; stability: 0 stable, 1 unstable, 2 semi-stable;
 * regime: 0 bistable, 1 monostable, 2 critical. */
HGODE_API hgode_status hgode_cubic_equilibria(double force, double lambda, double roots[3], int stability[3],
                                              int* n_roots, int* regime);
/* p: n x n row-stochastic. */
HGODE_API hgode_status hgode_stationary_distribution(const double* p, int n, double* pi);
HGODE_API hgode_status hgode_spectral_gap(const double* p, int n, double* gap);

/* ---- force field ---- */
HGODE_API hgode_status hgode_force_init(int hidden, int feature_dim, double scale, uint64_t seed,
                                        hgode_force** out);
HGODE_API hgode_status hgode_force_load(const char* path, hgode_force** out);
HGODE_API hgode_status hgode_force_save(const hgode_force* f, const char* path);
/* h: n_nodes x feature_dim; one output per (src[k], dst[k]) pair. */
HGODE_API hgode_status hgode_force_eval(const hgode_force* f, const double* h, int n_nodes, int feature_dim,
                                        const int* src, const int* dst, size_t n_pairs, double* out);
HGODE_API void hgode_force_free(hgode_force* f);

#ifdef __cplusplus
}
#endif

#endif
