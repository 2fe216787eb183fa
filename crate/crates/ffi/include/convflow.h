#ifndef CONVFLOW_H
#define CONVFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Seed stream used to initialize parameters of newly created models.
#define CONVFLOW_INIT_STREAM 0

// Result of every fallible call.
typedef enum ConvflowStatus {
  CONVFLOW_STATUS_OK = 0,
  CONVFLOW_STATUS_NULL_POINTER = 1,
  CONVFLOW_STATUS_INVALID_ARGUMENT = 2,
  CONVFLOW_STATUS_DIMENSION_MISMATCH = 3,
  CONVFLOW_STATUS_NOT_INVERTIBLE = 4,
  CONVFLOW_STATUS_NO_CONVERGENCE = 5,
  CONVFLOW_STATUS_INCONSISTENT = 6,
  CONVFLOW_STATUS_DIVERGED = 7,
  CONVFLOW_STATUS_IO = 8,
  CONVFLOW_STATUS_FORMAT = 9,
  CONVFLOW_STATUS_INVARIANT_VIOLATION = 10,
  CONVFLOW_STATUS_PANIC = 11,
} ConvflowStatus;

// Opaque model handle.
typedef struct ConvflowModel ConvflowModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, or NULL if the
// last call succeeded. The pointer stays valid until the next call into
// this library on the same thread.
const char *convflow_last_error_message(void);

// Creates a freshly initialized model from a named preset
// (`synthetic-k8`, `dense-50`, `dense-100`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum ConvflowStatus convflow_model_from_preset(const char *name,
                                               uint64_t seed,
                                               struct ConvflowModel **out);

// Creates a freshly initialized model from a JSON model config document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum ConvflowStatus convflow_model_from_config_json(const char *json,
                                                    uint64_t seed,
                                                    struct ConvflowModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ConvflowStatus convflow_model_load(const char *path, struct ConvflowModel **out);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must come from this library and `path` be a NUL-terminated string.
enum ConvflowStatus convflow_model_save(const struct ConvflowModel *model, const char *path);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void convflow_model_free(struct ConvflowModel *model);

// Dimension of the model, or 0 for NULL.
//
// # Safety
// `model` must be NULL or come from this library.
size_t convflow_model_dim(const struct ConvflowModel *model);

// Number of parameters, or 0 for NULL.
//
// # Safety
// `model` must be NULL or come from this library.
size_t convflow_model_param_count(const struct ConvflowModel *model);

// Copies the flat parameter vector into `out` (length `param_count`).
//
// # Safety
// `out` must point to `len` writable doubles.
enum ConvflowStatus convflow_model_get_params(const struct ConvflowModel *model,
                                              double *out,
                                              size_t len);

// Replaces the flat parameter vector (length `param_count`).
//
// # Safety
// `params` must point to `len` readable doubles.
enum ConvflowStatus convflow_model_set_params(struct ConvflowModel *model,
                                              const double *params,
                                              size_t len);

// Maps `z` (length `dim`) to `out` and writes the total log-determinant.
//
// # Safety
// `z` and `out` must point to `len` doubles; `logdet` may be NULL.
enum ConvflowStatus convflow_model_forward(const struct ConvflowModel *model,
                                           const double *z,
                                           size_t len,
                                           double *out,
                                           double *logdet);

// Inverts the model at `x` (length `dim`). Fails with `NotInvertible` for
// models containing planar or IAF layers.
//
// # Safety
// `x` and `out` must point to `len` doubles.
enum ConvflowStatus convflow_model_inverse(const struct ConvflowModel *model,
                                           const double *x,
                                           size_t len,
                                           double *out);

// Exact log-density of the model at `x` (length `dim`).
//
// # Safety
// `x` must point to `len` doubles and `out` to one writable double.
enum ConvflowStatus convflow_model_log_density(const struct ConvflowModel *model,
                                               const double *x,
                                               size_t len,
                                               double *out);

// Draws `n` samples into `out`, row-major `n × dim` (`len = n · dim`).
//
// # Safety
// `out` must point to `len` writable doubles.
enum ConvflowStatus convflow_model_sample(const struct ConvflowModel *model,
                                          uint64_t seed,
                                          size_t n,
                                          double *out,
                                          size_t len);

// Trains the model in place against energy `"u1"` or `"u2"` (2-d models
// only) and writes the last batch loss to `final_loss` (may be NULL).
// Parameters are left unchanged if training fails.
//
// # Safety
// `energy` must be a NUL-terminated string.
enum ConvflowStatus convflow_model_train(struct ConvflowModel *model,
                                         const char *energy,
                                         size_t steps,
                                         size_t batch,
                                         double lr,
                                         uint64_t seed,
                                         double *final_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVFLOW_H */
