#ifndef RIRL_RIRL_H
#define RIRL_RIRL_H

/* C interface to the rirl library. Every call returns an rirl_status; on
 * failure rirl_last_error() describes the problem for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * rirl_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RIRL_API __declspec(dllexport)
#else
#define RIRL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rirl_status {
  RIRL_OK = 0,
  RIRL_ERR_INTERNAL = 1,
  RIRL_ERR_CONFIG = 2,
  RIRL_ERR_DATA = 3,
  RIRL_ERR_TRAINING = 4,
  RIRL_ERR_EXPLORATION = 5,
  RIRL_ERR_PERSISTENCE = 6,
  RIRL_ERR_SHAPE = 7,
  RIRL_ERR_ESTIMATION = 8,
  RIRL_ERR_REGISTRY = 9,
  RIRL_ERR_ROUTING = 10,
  RIRL_ERR_METRIC = 11,
  RIRL_ERR_PLOT = 12,
  RIRL_ERR_CHECK = 13,
  RIRL_ERR_ARGUMENT = 14
} rirl_status;

typedef struct rirl_config rirl_config;
typedef struct rirl_node_model rirl_node_model;

/* Receives one progress line at a time (no trailing newline). */
typedef void (*rirl_log_fn)(const char* line, void* user);

RIRL_API const char* rirl_version(void);
RIRL_API const char* rirl_status_name(rirl_status status);
/* Message of the last failed call on this thread, "" if none. */
RIRL_API const char* rirl_last_error(void);
RIRL_API void rirl_string_free(char* text);

/* Run configuration with defaults. */
RIRL_API rirl_status rirl_config_new(rirl_config** out);
RIRL_API void rirl_config_free(rirl_config* config);
/* Reads a flat key = value file over the current settings. */
RIRL_API rirl_status rirl_config_load(rirl_config* config, const char* path);
RIRL_API rirl_status rirl_config_set(rirl_config* config, const char* key, const char* value);
RIRL_API rirl_status rirl_config_get(const rirl_config* config, const char* key, char** value);
RIRL_API rirl_status rirl_config_text(const rirl_config* config, char** text);
RIRL_API rirl_status rirl_config_set_log(rirl_config* config, rirl_log_fn fn, void* user);

/* Generates a dataset CSV from a DAG spec; `summary` gets the node summary table as CSV. */
RIRL_API rirl_status rirl_synth(const char* spec_path, int days, uint64_t seed, const char* out_csv, char** summary);
/* Trains one autoencoder per node; `table` gets the node table as CSV. */
RIRL_API rirl_status rirl_init(const rirl_config* config, char** table);
/* `causes` is a comma-separated node list; `row` gets a one-row metric table as CSV. */
RIRL_API rirl_status rirl_edge(const rirl_config* config, const char* causes, const char* effect, char** row);
/* `candidates_path` may be NULL for every forward pair; `edges` gets "cause->effect" lines in selection order. */
RIRL_API rirl_status rirl_explore(const rirl_config* config, const char* candidates_path, const char* run_dir,
                                  char** edges);
/* `format` is "csv" or "svg"; `out_dir` may be NULL for <run_dir>/report. `files` gets one path per line. */
RIRL_API rirl_status rirl_report(const char* run_dir, const char* format, const char* out_dir, char** files);

/* Node models saved by rirl_init. */
RIRL_API rirl_status rirl_node_model_load(const char* path, rirl_node_model** out);
RIRL_API void rirl_node_model_free(rirl_node_model* model);
RIRL_API size_t rirl_node_model_dim(const rirl_node_model* model);
RIRL_API size_t rirl_node_model_latent_dim(const rirl_node_model* model);
/* Encodes one observation (`dim` raw values) taken in `month` (1..12) into `latent`. */
RIRL_API rirl_status rirl_node_model_encode(const rirl_node_model* model, const double* values, size_t dim, int month,
                                            double* latent, size_t latent_dim);
/* Decodes a latent into gated raw values and per-attribute non-zero probabilities. */
RIRL_API rirl_status rirl_node_model_decode(const rirl_node_model* model, const double* latent, size_t latent_dim,
                                            double* values, double* mask_prob, size_t dim);

#ifdef __cplusplus
}
#endif

#endif
