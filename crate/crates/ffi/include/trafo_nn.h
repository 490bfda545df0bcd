#ifndef TRAFO_NN_H
#define TRAFO_NN_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrafoStatus {
  TRAFO_STATUS_OK = 0,
  TRAFO_STATUS_NULL_POINTER = 1,
  TRAFO_STATUS_INVALID_ARGUMENT = 2,
  TRAFO_STATUS_DIMENSION = 3,
  TRAFO_STATUS_INVALID_STATE = 4,
  TRAFO_STATUS_INTEGRITY = 5,
  TRAFO_STATUS_IO = 6,
  TRAFO_STATUS_DIVERGENCE = 7,
  TRAFO_STATUS_PANIC = 8,
} TrafoStatus;

/**
 * Energization environment with the default core model.
 */
typedef struct TrafoEnv TrafoEnv;

/**
 * Loaded network checkpoint.
 */
typedef struct TrafoNetwork TrafoNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
 * to `len - 1` bytes). Returns the full message length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t trafo_last_error_message(char *buf, size_t len);

/**
 * Loads a checkpoint file. On success `*out` owns the network.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum TrafoStatus trafo_network_load(const char *path, struct TrafoNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from [`trafo_network_load`] not yet freed.
 */
void trafo_network_free(struct TrafoNetwork *net);

/**
 * Per-sample input and output element counts.
 *
 * # Safety
 * `net` must be a live handle; `input_len` and `output_len` must be writable.
 */
enum TrafoStatus trafo_network_dims(const struct TrafoNetwork *net,
                                    size_t *input_len,
                                    size_t *output_len);

/**
 * Forward pass over `batch` samples laid out row-major in the network's input shape.
 * `output` receives `batch * output_len` values.
 *
 * # Safety
 * `input` must hold `batch * input_len` doubles and `output` must have room for
 * `output_cap` doubles.
 */
enum TrafoStatus trafo_network_predict(const struct TrafoNetwork *net,
                                       const double *input,
                                       size_t batch,
                                       double *output,
                                       size_t output_cap);

/**
 * Creates an environment with the default core model.
 *
 * # Safety
 * `out` must be writable.
 */
enum TrafoStatus trafo_env_new(uint64_t seed, double flux_max, struct TrafoEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from [`trafo_env_new`] not yet freed.
 */
void trafo_env_free(struct TrafoEnv *env);

/**
 * Starts the next episode and writes its remanent flux to `phi_out[0..3]`.
 *
 * # Safety
 * `env` must be a live handle; `phi_out` must have room for 3 doubles.
 */
enum TrafoStatus trafo_env_reset(struct TrafoEnv *env, double *phi_out);

/**
 * Starts an episode from a given remanent flux.
 *
 * # Safety
 * `env` must be a live handle; `phi` must point to 3 doubles.
 */
enum TrafoStatus trafo_env_reset_to(struct TrafoEnv *env, const double *phi);

/**
 * Closes the breaker at `theta_deg`, ending the episode.
 *
 * # Safety
 * `env` must be a live handle; `i_max` and `reward` must be writable.
 */
enum TrafoStatus trafo_env_step(struct TrafoEnv *env,
                                double theta_deg,
                                double *i_max,
                                double *reward);

/**
 * Peak inrush current (pu) for flux `phi[0..3]` and closing angle `theta_deg`, default core.
 *
 * # Safety
 * `phi` must point to 3 doubles; `out` must be writable.
 */
enum TrafoStatus trafo_peak_inrush(const double *phi, double theta_deg, double *out);

/**
 * Grid search for the closing angle with the lowest peak inrush, default core.
 *
 * # Safety
 * `phi` must point to 3 doubles; `theta_deg` and `i_max` must be writable.
 */
enum TrafoStatus trafo_oracle_best_angle(const double *phi,
                                         double grid_deg,
                                         double *theta_deg,
                                         double *i_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAFO_NN_H */
