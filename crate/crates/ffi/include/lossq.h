#ifndef LOSSQ_H
#define LOSSQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LossqStatus {
  LOSSQ_STATUS_OK = 0,
  // A required pointer was null.
  LOSSQ_STATUS_NULL = 1,
  // Bad parameter or unparsable distribution.
  LOSSQ_STATUS_INVALID = 2,
  // The numerics failed for a valid model.
  LOSSQ_STATUS_NUMERIC = 3,
  // A panic was caught at the boundary.
  LOSSQ_STATUS_PANIC = 4,
} LossqStatus;

// Opaque model handle.
typedef struct LossqModel LossqModel;

typedef struct LossqSimEstimate {
  double p_hat;
  double std_error;
  double ci95_halfwidth;
  uint64_t losses;
  uint64_t arrivals_counted;
} LossqSimEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model from a distribution spec such as `"det:a=1"`.
//
// # Safety
// `dist` must be a nul-terminated string and `out` a writable pointer.
enum LossqStatus lossq_model_new(const char *dist,
                                 uintptr_t m,
                                 uintptr_t n,
                                 double mu,
                                 struct LossqModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from `lossq_model_new` and not be used afterwards.
void lossq_model_free(struct LossqModel *model);

// Rescales the arrival process so the load `λ/(mμ)` equals `rho`.
//
// # Safety
// `model` must be a live handle.
enum LossqStatus lossq_model_set_load(struct LossqModel *model, double rho);

// Writes the load `λ/(mμ)`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_model_load(const struct LossqModel *model, double *out);

// Exact loss probability.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_loss_exact(const struct LossqModel *model, double *out);

// Loss probability from the stationary vector of the embedded chain.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_loss_oracle(const struct LossqModel *model, double *out);

// Asymptotic estimate. With `heavy_c < 0` the regime follows from the
// load; otherwise the heavy-traffic estimate with `C = heavy_c` is used.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_loss_asymptotic(const struct LossqModel *model, double heavy_c, double *out);

// Root `σ_m` of the model, or 1 when the load is at least 1.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_sigma_root(const struct LossqModel *model, double *out);

// Simulates the model. `arrivals` counts per replication, warmup included.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum LossqStatus lossq_simulate(const struct LossqModel *model,
                                uint64_t arrivals,
                                uint64_t warmup,
                                uintptr_t replications,
                                uint64_t seed,
                                struct LossqSimEstimate *out);

// Message for the last failure on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *lossq_last_error_message(void);

// Library version as a static string.
const char *lossq_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSSQ_H */
