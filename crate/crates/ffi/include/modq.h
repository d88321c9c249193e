#ifndef MODQ_H
#define MODQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes; `MODQ_STATUS_OK` is zero.
typedef enum ModqStatus {
  MODQ_STATUS_OK = 0,
  MODQ_STATUS_NULL_POINTER = 1,
  MODQ_STATUS_INVALID_ARGUMENT = 2,
  MODQ_STATUS_INVALID_MODEL = 3,
  MODQ_STATUS_PARSE = 4,
  MODQ_STATUS_NUMERICAL = 5,
  MODQ_STATUS_IO = 6,
  MODQ_STATUS_PANIC = 7,
} ModqStatus;

// Semi-Markov environment with optional arrival and service rates.
typedef struct ModqModel ModqModel;

// Limit-law sampler bound to a model and its rates.
typedef struct ModqSampler ModqSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static version string.
const char *modq_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next `modq_*` call on the same thread.
const char *modq_last_error_message(void);

// Built-in modulated model by name, with its rates.
//
// # Safety
// `name` must be a nul-terminated string and `out` a writable pointer.
enum ModqStatus modq_model_builtin(const char *name, struct ModqModel **out);

// Model from JSON text, in the same format as model files.
//
// # Safety
// `json` must be a nul-terminated string and `out` a writable pointer.
enum ModqStatus modq_model_from_json(const char *json, struct ModqModel **out);

// Replaces the rates; both arrays hold one entry per state.
//
// # Safety
// `model` must come from this library; `lambda` and `mu` must point to
// `len` readable doubles.
enum ModqStatus modq_model_set_rates(struct ModqModel *model,
                                     const double *lambda,
                                     const double *mu,
                                     size_t len);

// # Safety
// `model` must come from this library and not be used afterwards. NULL is
// ignored.
void modq_model_free(struct ModqModel *model);

// Number of states, or 0 for NULL.
//
// # Safety
// `model` must be NULL or come from this library.
size_t modq_model_num_states(const struct ModqModel *model);

// `MODQ_STATUS_OK` if the model meets every structural assumption; otherwise
// `MODQ_STATUS_INVALID_MODEL` with the failed clauses in the error message.
//
// # Safety
// `model` must come from this library.
enum ModqStatus modq_model_validate(const struct ModqModel *model);

// Long-run fraction of time in each state, written to `out[0..len]`;
// `len` must equal the number of states.
//
// # Safety
// `model` must come from this library; `out` must hold `len` doubles.
enum ModqStatus modq_model_stationary_time(const struct ModqModel *model, double *out, size_t len);

// Terminal counts of `reps` conditional simulations on `[0, horizon]`.
//
// # Safety
// `model` must come from this library; `out_counts` must hold `reps`
// values.
enum ModqStatus modq_simulate_terminal(const struct ModqModel *model,
                                       uint64_t y0,
                                       double horizon,
                                       size_t reps,
                                       uint64_t seed,
                                       uint64_t *out_counts);

// Builds a limit-law sampler. `depth` of 0 picks the recursion depth per
// state from `epsilon`; `pilot_cycles` of 0 uses the default.
//
// # Safety
// `model` must come from this library; `out` must be writable.
enum ModqStatus modq_sampler_new(const struct ModqModel *model,
                                 double epsilon,
                                 size_t depth,
                                 size_t pilot_cycles,
                                 uint64_t seed,
                                 struct ModqSampler **out);

// # Safety
// `sampler` must come from this library and not be used afterwards. NULL
// is ignored.
void modq_sampler_free(struct ModqSampler *sampler);

// `n` draws `(state, W, count)` from the limit law. Any output array may be
// NULL if not wanted.
//
// # Safety
// `sampler` must come from this library; non-NULL outputs must hold `n`
// values.
enum ModqStatus modq_sampler_draw(const struct ModqSampler *sampler,
                                  size_t n,
                                  uint64_t seed,
                                  size_t *states,
                                  double *w,
                                  uint64_t *counts);

// Estimate of `P[Y >= c]` under the limit law, from `reps` draws.
//
// # Safety
// `sampler` must come from this library; `value` and `std_error` may be
// NULL.
enum ModqStatus modq_exceedance(const struct ModqSampler *sampler,
                                uint64_t c,
                                size_t reps,
                                uint64_t seed,
                                double *value,
                                double *std_error);

// Raw moment `E[Y^n]` of the limit law.
//
// # Safety
// `sampler` must come from this library; `value` and `std_error` may be
// NULL.
enum ModqStatus modq_limit_moment(const struct ModqSampler *sampler,
                                  size_t n,
                                  size_t t_samples,
                                  uint64_t seed,
                                  double *value,
                                  double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODQ_H */
