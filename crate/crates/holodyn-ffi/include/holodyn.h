#ifndef HOLODYN_H
#define HOLODYN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirrored by the CLI exit codes, plus FFI-specific ones.
typedef enum HolodynStatus {
  HOLODYN_STATUS_OK = 0,
  HOLODYN_STATUS_CRITERION_FAILURE = 1,
  HOLODYN_STATUS_SCHEMA_VIOLATION = 2,
  HOLODYN_STATUS_INVARIANT_BREACH = 3,
  HOLODYN_STATUS_NULL_ARGUMENT = 4,
  HOLODYN_STATUS_INVALID_UTF8 = 5,
} HolodynStatus;

// Opaque holonomy handle: a DFS loop holonomy with its eigenphases.
typedef struct HolodynHolonomy HolodynHolonomy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message for the calling thread into `buf` (UTF-8,
// NUL-terminated, truncated to `len` bytes). Returns the full message
// length in bytes, excluding the terminator.
size_t holodyn_last_error_message(char *buf, size_t len);

// Wilson-loop holonomy of the three-level dark-state scenario.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum HolodynStatus holodyn_wilson_loop_dark_state(double theta,
                                                  double kappa,
                                                  size_t steps,
                                                  struct HolodynHolonomy **out);

// Wilson-loop holonomy of the four-level tripod scenario over a circle of
// constant polar angle `theta`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum HolodynStatus holodyn_wilson_loop_tripod_circle(double theta,
                                                     double kappa,
                                                     size_t steps,
                                                     struct HolodynHolonomy **out);

// Dimension of the decoherence-free block the holonomy acts on.
//
// # Safety
// `handle` must come from a `holodyn_wilson_loop_*` call and not be freed.
size_t holodyn_holonomy_dim(const struct HolodynHolonomy *handle);

// Copy the ascending eigenphases (radians, in (-pi, pi]) into `out`.
// `len` must be at least the block dimension.
//
// # Safety
// `handle` must be live; `out` must point to `len` writable doubles.
enum HolodynStatus holodyn_holonomy_phases(const struct HolodynHolonomy *handle,
                                           double *out,
                                           size_t len);

// ||U U^dagger - 1|| for the stored holonomy.
//
// # Safety
// `handle` must be live.
double holodyn_holonomy_unitarity_defect(const struct HolodynHolonomy *handle);

// Release a holonomy handle. NULL is ignored.
//
// # Safety
// `handle` must come from this library and not be freed twice.
void holodyn_holonomy_free(struct HolodynHolonomy *handle);

// ||[U_A, U_B]|| for two tripod loops sharing the base point: a circle at
// `theta` and a petal loop with the given excursions.
//
// # Safety
// `out` must point to a writable double.
enum HolodynStatus holodyn_tripod_commutator_norm(double theta,
                                                  double theta_amp,
                                                  double phi_amp,
                                                  double chi_amp,
                                                  size_t steps,
                                                  double *out);

// Run a JSON config end to end (same contract as `holodyn run`). Writes CSVs
// and a report under `out_dir` (or $HOLODYN_OUT / ./holodyn_out when NULL)
// and returns the CLI exit code as a status.
//
// # Safety
// `config_path` must be a NUL-terminated UTF-8 path; `out_dir` may be NULL.
enum HolodynStatus holodyn_run_config(const char *config_path,
                                      const char *out_dir,
                                      size_t jobs,
                                      uint64_t seed);

// Run the structural invariant suite with the given RNG seed.
enum HolodynStatus holodyn_verify(uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOLODYN_H */
