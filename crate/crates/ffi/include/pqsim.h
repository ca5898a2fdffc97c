#ifndef PQSIM_H
#define PQSIM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. Values 1 to 3 match the command-line exit codes.
 */
enum PqsimStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  PQSIM_STATUS_OK = 0,
  PQSIM_STATUS_CONFIG_ERROR = 1,
  PQSIM_STATUS_NUMERICAL_ERROR = 2,
  PQSIM_STATUS_ACCEPTANCE_FAILURE = 3,
  PQSIM_STATUS_NULL_POINTER = 4,
  PQSIM_STATUS_INVALID_ARGUMENT = 5,
  PQSIM_STATUS_PANIC = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum PqsimStatus PqsimStatus;
#else
typedef int32_t PqsimStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A validated simulation configuration.
 */
typedef struct PqsimConfig PqsimConfig;

/**
 * A finished single-cell simulation.
 */
typedef struct PqsimRun PqsimRun;

/**
 * One time-series sample. `kind` is 0 on the grid, 1 at an event start
 * and 2 at an event end.
 */
typedef struct PqsimSample {
  double t;
  int32_t kind;
  double atom_number;
  double mean_fx;
  double mean_fy;
  double mean_fz;
  double var_fx;
  double var_fy;
  double var_fz;
  double cov_xz;
  double f_par;
  double xi_par2;
  double xi_x2;
  double xi_z2;
  double he_value;
  double xid2;
} PqsimSample;

typedef struct PqsimSummary {
  double initial_atom_number;
  double min_xi_par2;
  double t_min_xi_par2;
  double xi_x2_at_min;
  double xi_z2_at_min;
  double coherence_at_min;
  double min_he_value;
  double min_xid2;
  bool planar_squeezed_at_min;
  bool he_entangled;
  bool xid_entangled;
} PqsimSummary;

/**
 * In-plane moments of a prepared state.
 */
typedef struct PqsimPlanarMoments {
  double mean_fx;
  double mean_fz;
  double var_fx;
  double var_fz;
  double cov_xz;
  double n_at;
} PqsimPlanarMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *pqsim_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *pqsim_version(void);

/**
 * Default configuration. Release with [`pqsim_config_free`].
 */
struct PqsimConfig *pqsim_config_new(void);

/**
 * Parses a TOML configuration into `*out`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
PqsimStatus pqsim_config_from_toml(const char *toml, struct PqsimConfig **out);

/**
 * Applies one `section.key=value` assignment. The config is unchanged
 * if the result does not validate.
 *
 * # Safety
 * `config` must come from this library; `assignment` must be a
 * NUL-terminated string.
 */
PqsimStatus pqsim_config_set(struct PqsimConfig *config, const char *assignment);

/**
 * # Safety
 * `config` must be null or come from this library and not be used again.
 */
void pqsim_config_free(struct PqsimConfig *config);

/**
 * Runs one cell. Release the result with [`pqsim_run_free`].
 *
 * # Safety
 * `config` must come from this library and `out` be writable.
 */
PqsimStatus pqsim_simulate(const struct PqsimConfig *config, struct PqsimRun **out);

/**
 * Number of recorded samples; zero for a null handle.
 *
 * # Safety
 * `run` must be null or come from this library.
 */
size_t pqsim_run_sample_count(const struct PqsimRun *run);

/**
 * # Safety
 * `run` must come from this library and `out` be writable.
 */
PqsimStatus pqsim_run_sample(const struct PqsimRun *run, size_t index, struct PqsimSample *out);

/**
 * # Safety
 * `run` must come from this library and `out` be writable.
 */
PqsimStatus pqsim_run_summary(const struct PqsimRun *run, struct PqsimSummary *out);

/**
 * Writes the series CSV and summary JSON into `dir`.
 *
 * # Safety
 * `run` must come from this library; `dir` must be a NUL-terminated string.
 */
PqsimStatus pqsim_run_write(const struct PqsimRun *run, const char *dir);

/**
 * # Safety
 * `run` must be null or come from this library and not be used again.
 */
void pqsim_run_free(struct PqsimRun *run);

/**
 * Runs a named scenario. `config_toml` and `out_dir` may be null for the
 * scenario defaults and for no file output. `*passed` receives the
 * verdict, and a failed verdict also returns `AcceptanceFailure`.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `passed` may be null.
 */
PqsimStatus pqsim_scenario_run(const char *name,
                               const char *config_toml,
                               const char *out_dir,
                               bool *passed);

/**
 * Phase-estimation variance of a state with its mean spin along +x.
 *
 * # Safety
 * `moments` must be readable and `out` writable.
 */
PqsimStatus pqsim_phase_variance(const struct PqsimPlanarMoments *moments, double phi, double *out);

/**
 * `1/(1 + α₀η) + 2η`.
 *
 * # Safety
 * `out` must be writable.
 */
PqsimStatus pqsim_simple_model_xi2(double alpha0, double eta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PQSIM_H */
