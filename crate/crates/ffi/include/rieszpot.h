#ifndef RIESZPOT_H
#define RIESZPOT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  RP_EXPERIMENT_HLS = 0,
  RP_EXPERIMENT_HEDBERG = 1,
  RP_EXPERIMENT_NECESSITY = 2,
  RP_EXPERIMENT_MAXIMAL = 3,
} RpExperiment;

typedef enum {
  RP_QUADRATURE_PLAIN = 0,
  RP_QUADRATURE_SELF_CELL = 1,
} RpQuadrature;

typedef enum {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or a rejected spec, kernel, exponent or function.
   */
  RP_STATUS_INVALID_INPUT = 3,
  RP_STATUS_LENGTH_MISMATCH = 4,
  /**
   * The run finished but its hypotheses did not hold.
   */
  RP_STATUS_HYPOTHESES_NOT_MET = 5,
  /**
   * The run finished and a tracked constant grew or a bound failed.
   */
  RP_STATUS_VIOLATED = 6,
  RP_STATUS_INTERNAL = 7,
  RP_STATUS_PANIC = 8,
} RpStatus;

/**
 * A space together with its measure.
 */
typedef struct RpSpace RpSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *rp_last_error(void);

/**
 * Builds a space from a JSON spec with its natural quadrature measure.
 *
 * # Safety
 * `spec_json` must be a nul-terminated string and `out` a valid pointer.
 */
RpStatus rp_space_from_json(const char *spec_json, RpSpace **out);

/**
 * Builds a two-component space from a JSON glue spec, carrying the glued measure.
 *
 * # Safety
 * `spec_json` must be a nul-terminated string and `out` a valid pointer.
 */
RpStatus rp_glue_from_json(const char *spec_json, RpSpace **out);

/**
 * # Safety
 * `space` must come from this library and not be used afterwards; null is ignored.
 */
void rp_space_free(RpSpace *space);

/**
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
RpStatus rp_space_len(const RpSpace *space, size_t *out);

/**
 * Replaces the measure of a plain space by explicit node weights.
 *
 * # Safety
 * `space` must be a live handle and `weights` must point to `n` doubles.
 */
RpStatus rp_space_set_weights(RpSpace *space, const double *weights, size_t n);

/**
 * Applies the potential with kernel `kernel_spec` (e.g. `jalpha:alpha=0.5`) to `f`.
 *
 * # Safety
 * `f` and `out` must each point to `n` doubles, `n` being the node count.
 */
RpStatus rp_potential_apply(const RpSpace *space,
                            const char *kernel_spec,
                            RpQuadrature quadrature,
                            const double *f,
                            size_t n,
                            double *out);

/**
 * Luxemburg norm of `f` for the per-node exponents `p`.
 *
 * # Safety
 * `p` and `f` must each point to `n` doubles and `out` must be valid.
 */
RpStatus rp_luxemburg_norm(const RpSpace *space,
                           const double *p,
                           const double *f,
                           size_t n,
                           double *out);

/**
 * Upper doubling check against `lambda_spec` (e.g. `power(n=1)`).
 *
 * # Safety
 * `holds` and `best_constant` must be valid pointers.
 */
RpStatus rp_check_upper_doubling(const RpSpace *space,
                                 const char *lambda_spec,
                                 bool *holds,
                                 double *best_constant);

/**
 * Runs a verification experiment from a JSON run config and hands back the
 * JSON report, to be released with [`rp_string_free`]. The report is
 * written even when the status is `HypothesesNotMet` or `Violated`.
 *
 * # Safety
 * `config_json` must be a nul-terminated string and `report_out` a valid pointer.
 */
RpStatus rp_verify(RpExperiment experiment, const char *config_json, char **report_out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards; null is ignored.
 */
void rp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIESZPOT_H */
