#ifndef CPINN_H
#define CPINN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every API call.
 */
typedef enum {
  CpinnStatus_Ok = 0,
  /**
   * Bad argument or validation failure; details via
   * `cpinn_last_error_message`.
   */
  CpinnStatus_InvalidArgument = 1,
  /**
   * Training exceeded the divergence threshold.
   */
  CpinnStatus_Diverged = 2,
  /**
   * File could not be read or written.
   */
  CpinnStatus_Io = 3,
  CpinnStatus_NullPointer = 4,
  /**
   * Out buffer too small.
   */
  CpinnStatus_BufferTooSmall = 5,
  /**
   * Internal failure (a panic was caught).
   */
  CpinnStatus_Internal = 6,
} CpinnStatus;

/**
 * Opaque trained-network handle.
 */
typedef struct CpinnNetwork CpinnNetwork;

/**
 * Opaque manufactured-problem handle.
 */
typedef struct CpinnProblem CpinnProblem;

/**
 * Training options; use `cpinn_train_options_default` to initialize.
 */
typedef struct {
  /**
   * 0 = classical squared loss, 1 = consistent squared loss.
   */
  uint32_t loss_kind;
  /**
   * Mesh size per axis.
   */
  size_t n;
  size_t width;
  size_t depth;
  double step_size;
  double momentum;
  size_t iterations;
  uint64_t seed;
  /**
   * Interior exponent of the consistent loss; `<= 0` applies the
   * dimension rule.
   */
  double gamma;
  /**
   * Nonzero enables the identity skip connections.
   */
  uint8_t use_skip;
  double t_final;
} CpinnTrainOptions;

/**
 * Scalar summary of one training run.
 */
typedef struct {
  double initial_loss;
  double final_loss;
  double final_pinn_loss;
  double final_cpinn_loss;
  double rel_l2_error_percent;
  double wall_secs;
} CpinnRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, do not free.
 */
const char *cpinn_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated).
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes.
 */
CpinnStatus cpinn_last_error_message(char *buf, size_t len);

/**
 * Create a manufactured problem by name (`"u1"` or `"u2"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
CpinnStatus cpinn_problem_new(const char *name, CpinnProblem **out);

/**
 * Release a problem handle; a null pointer is a no-op.
 *
 * # Safety
 * `problem` must come from `cpinn_problem_new` and not be used again.
 */
void cpinn_problem_free(CpinnProblem *problem);

/**
 * Fill `out` with the default training options (consistent loss,
 * N = 15, W = 20, L = 4).
 *
 * # Safety
 * `out` must be writable.
 */
CpinnStatus cpinn_train_options_default(CpinnTrainOptions *out);

/**
 * Train a network; on success `out_net` owns a new handle and
 * `out_summary` (optional) receives the run summary.
 *
 * # Safety
 * All non-null pointers must be valid; `problem` and `options` must
 * outlive the call.
 */
CpinnStatus cpinn_train(const CpinnProblem *problem,
                        const CpinnTrainOptions *options,
                        CpinnNetwork **out_net,
                        CpinnRunSummary *out_summary);

/**
 * Release a network handle; a null pointer is a no-op.
 *
 * # Safety
 * `net` must come from this library and not be used again.
 */
void cpinn_network_free(CpinnNetwork *net);

/**
 * Number of spatial dimensions of the network input.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
CpinnStatus cpinn_network_dim(const CpinnNetwork *net, size_t *out);

/**
 * Flat parameter count.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
CpinnStatus cpinn_network_param_count(const CpinnNetwork *net, size_t *out);

/**
 * Evaluate the network at `(x[0..d], t)`.
 *
 * # Safety
 * `x` must point to `d` readable doubles; `net` must be live.
 */
CpinnStatus cpinn_network_eval(const CpinnNetwork *net,
                               const double *x,
                               size_t d,
                               double t,
                               double *out);

/**
 * Evaluate value, spatial gradient (`out_grad[0..d]`), time derivative,
 * and spatial Laplacian at `(x[0..d], t)`. `out_grad` may be null.
 *
 * # Safety
 * `x` must point to `d` readable doubles and `out_grad`, when non-null,
 * to `d` writable ones.
 */
CpinnStatus cpinn_network_jet(const CpinnNetwork *net,
                              const double *x,
                              size_t d,
                              double t,
                              double *out_value,
                              double *out_grad,
                              double *out_dt,
                              double *out_laplacian);

/**
 * Relative L2 error (percent) of the network against the problem's
 * exact solution, midpoint quadrature with `probe_res` points per axis.
 *
 * # Safety
 * `net` and `problem` must be live handles; `out` must be writable.
 */
CpinnStatus cpinn_relative_l2_error(const CpinnNetwork *net,
                                    const CpinnProblem *problem,
                                    size_t probe_res,
                                    double t_final,
                                    double *out);

/**
 * Evaluate both squared losses of the network on the problem's `N`-mesh
 * data. Either out-pointer may be null.
 *
 * # Safety
 * `net` and `problem` must be live handles; non-null out-pointers must
 * be writable.
 */
CpinnStatus cpinn_losses(const CpinnNetwork *net,
                         const CpinnProblem *problem,
                         size_t n,
                         double *out_pinn,
                         double *out_cpinn);

/**
 * Write the checkpoint (header plus little-endian parameter vector).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `net` must be live.
 */
CpinnStatus cpinn_network_save(const CpinnNetwork *net, const char *path);

/**
 * Load a checkpoint into a new network handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
CpinnStatus cpinn_network_load(const char *path, CpinnNetwork **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPINN_H */
