#ifndef CTDG_POISON_H
#define CTDG_POISON_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_IO = 3,
  CP_STATUS_PARSE = 4,
  CP_STATUS_INFEASIBLE = 5,
  CP_STATUS_DIVERGED = 6,
  CP_STATUS_INTERNAL = 7,
  CP_STATUS_PANIC = 8,
} CpStatus;

/**
 * Experiment configuration.
 */
typedef struct CpConfig CpConfig;

/**
 * Interaction graph, possibly carrying adversarial edges.
 */
typedef struct CpGraph CpGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cp_last_error_message(void);

/**
 * New configuration with the fast benchmark defaults.
 */
struct CpConfig *cp_config_new(void);

/**
 * Loads a `section.key = value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CpStatus cp_config_load(const char *path, struct CpConfig **out);

/**
 * Sets one dotted key, e.g. `attack.p` to `0.3`.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum CpStatus cp_config_set(struct CpConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void cp_config_free(struct CpConfig *cfg);

/**
 * Loads or generates the configured graph.
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum CpStatus cp_graph_from_config(const struct CpConfig *cfg, struct CpGraph **out);

/**
 * Loads a `u,v,t[,features]` interaction file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CpStatus cp_graph_load(const char *path, struct CpGraph **out);

/**
 * # Safety
 * `g` must come from this library; `path` must be a NUL-terminated string.
 */
enum CpStatus cp_graph_save(const struct CpGraph *g, const char *path);

/**
 * Number of interactions, 0 for a null handle.
 *
 * # Safety
 * `g` must come from this library or be null.
 */
size_t cp_graph_num_edges(const struct CpGraph *g);

/**
 * Number of adversarial interactions, 0 for a null handle.
 *
 * # Safety
 * `g` must come from this library or be null.
 */
size_t cp_graph_num_adversarial(const struct CpGraph *g);

/**
 * # Safety
 * `g` must come from this library or be null.
 */
void cp_graph_free(struct CpGraph *g);

/**
 * Runs the configured attack on `g` with run seed `seed`. Writes the
 * corrupted graph to `out` and whether all four constraints hold to
 * `compliant` (1 or 0).
 *
 * # Safety
 * Handles must come from this library; output pointers must be valid.
 */
enum CpStatus cp_attack(const struct CpConfig *cfg,
                        const struct CpGraph *g,
                        uint64_t seed,
                        struct CpGraph **out,
                        int32_t *compliant);

/**
 * Runs the full pipeline and writes the mean test MRR over seeds to
 * `mean_test_mrr`.
 *
 * # Safety
 * `cfg` must come from this library; `mean_test_mrr` must be valid.
 */
enum CpStatus cp_run_pipeline(const struct CpConfig *cfg, double *mean_test_mrr);

/**
 * AUROC of `n` scores where `labels[i] != 0` marks an adversarial edge
 * (lower scores should flag adversarial edges).
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; `out` must be valid.
 */
enum CpStatus cp_auroc(const double *scores, const int32_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTDG_POISON_H */
