/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef CDD_H
#define CDD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CddCurveKind {
  CDD_CURVE_KIND_AVERAGE = 0,
  CDD_CURVE_KIND_STATE_X = 1,
  CDD_CURVE_KIND_STATE_Y = 2,
  CDD_CURVE_KIND_STATE_Z = 3,
} CddCurveKind;

typedef enum CddProtocol {
  CDD_PROTOCOL_FREE = 0,
  CDD_PROTOCOL_SINGLE_DRIVE = 1,
  CDD_PROTOCOL_DOUBLE_DRIVE = 2,
} CddProtocol;

typedef enum CddPulse {
  CDD_PULSE_CONVENTIONAL = 0,
  CDD_PULSE_SDD = 1,
  CDD_PULSE_CDD = 2,
} CddPulse;

typedef enum CddShiftKind {
  CDD_SHIFT_KIND_RESONANT = 0,
  /**
   * Optimal shift for correlation `param`.
   */
  CDD_SHIFT_KIND_CORRELATED = 1,
  /**
   * As `Correlated` plus the Bloch-Siegert term.
   */
  CDD_SHIFT_KIND_CORRELATED_BS = 2,
  /**
   * Modulation frequency `param` in rad/s.
   */
  CDD_SHIFT_KIND_EXPLICIT = 3,
} CddShiftKind;

typedef enum CddStatus {
  CDD_STATUS_OK = 0,
  CDD_STATUS_INVALID_ARGUMENT = 1,
  CDD_STATUS_CONTRACT_VIOLATION = 2,
  CDD_STATUS_NO_POSITIVE_SOLUTION = 3,
  CDD_STATUS_FIT_FAILURE = 4,
  CDD_STATUS_NUMERICAL = 5,
  CDD_STATUS_CONFIG = 6,
  CDD_STATUS_IO = 7,
  CDD_STATUS_NULL_POINTER = 8,
  CDD_STATUS_PANIC = 9,
} CddStatus;

/**
 * Opaque scenario configuration.
 */
typedef struct CddConfig CddConfig;

/**
 * Opaque sampled fidelity curve.
 */
typedef struct CddCurve CddCurve;

/**
 * Opaque double-drive configuration.
 */
typedef struct CddDrive CddDrive;

typedef struct CddNoiseParams {
  /**
   * Free-evolution dephasing time, s.
   */
  double t2_star;
  /**
   * Correlation time of the detuning noise, s.
   */
  double tau_delta;
  /**
   * Correlation time of the amplitude noise, s.
   */
  double tau_eps;
  /**
   * Relative amplitude noise standard deviation.
   */
  double delta_eps;
  /**
   * Correlation between the two amplitude errors.
   */
  double c;
  uint64_t seed;
} CddNoiseParams;

typedef struct CddSensitivityInputs {
  /**
   * Gyromagnetic ratio, rad/(s·T).
   */
  double gamma;
  double alpha;
  double bright;
  double dark;
  double t2rho;
  double n_ph;
  double tau;
  double dead_time;
  double overhead;
  double decay_p;
  /**
   * Measured contrast; a value ≤ 0 means "use the decay model".
   */
  double contrast;
} CddSensitivityInputs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length plus one, so a
 * caller can size the buffer with a first call passing `len = 0`.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cdd_last_error(char *buf, size_t len);

/**
 * Creates a drive with amplitudes in rad/s.
 *
 * # Safety
 * `out` must be a valid pointer to a writable handle slot.
 */
enum CddStatus cdd_drive_new(double omega1,
                             double omega2,
                             enum CddShiftKind kind,
                             double param,
                             struct CddDrive **out);

/**
 * # Safety
 * `drive` must be null or a handle from [`cdd_drive_new`] not yet freed.
 */
void cdd_drive_free(struct CddDrive *drive);

/**
 * Modulation frequency Ω̃₁ of the second drive, rad/s.
 *
 * # Safety
 * `drive` must be a live handle and `out` writable.
 */
enum CddStatus cdd_drive_modulation(const struct CddDrive *drive, double *out);

/**
 * Dressed-state splitting for relative amplitude errors `eps1`, `eps2`.
 *
 * # Safety
 * `drive` must be a live handle and `out` writable.
 */
enum CddStatus cdd_drive_dressed_gap(const struct CddDrive *drive,
                                     double eps1,
                                     double eps2,
                                     double *out);

/**
 * Modulation frequency that minimizes the gap variance for correlation `c`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CddStatus cdd_optimal_shift(double omega1,
                                 double omega2,
                                 double c,
                                 bool bloch_siegert,
                                 double *out);

/**
 * Ensemble fidelity curve on the default log-spaced grid of `n_samples`
 * points. `envelope` selects the rotation-free estimator.
 *
 * # Safety
 * `drive` and `noise` must be valid pointers and `out` writable.
 */
enum CddStatus cdd_simulate_fidelity(const struct CddDrive *drive,
                                     enum CddProtocol protocol,
                                     const struct CddNoiseParams *noise,
                                     enum CddCurveKind kind,
                                     bool envelope,
                                     double duration,
                                     size_t n_realizations,
                                     size_t n_samples,
                                     struct CddCurve **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `curve` must be null or a live handle.
 */
size_t cdd_curve_len(const struct CddCurve *curve);

/**
 * Time (s), value and standard error of sample `index`.
 *
 * # Safety
 * `curve` must be a live handle; each out-pointer must be writable or null.
 */
enum CddStatus cdd_curve_point(const struct CddCurve *curve,
                               size_t index,
                               double *time,
                               double *value,
                               double *stderr);

/**
 * First crossing of `threshold`; `reached` is false when the curve stays above.
 *
 * # Safety
 * `curve` must be a live handle; `out` and `reached` writable.
 */
enum CddStatus cdd_curve_threshold_time(const struct CddCurve *curve,
                                        double threshold,
                                        double *out,
                                        bool *reached);

/**
 * # Safety
 * `curve` must be null or a handle not yet freed.
 */
void cdd_curve_free(struct CddCurve *curve);

/**
 * π-pulse fidelity under a relative amplitude error `eps` (|eps| ≤ 0.5).
 *
 * # Safety
 * `out` must be writable.
 */
enum CddStatus cdd_pulse_fidelity(enum CddPulse kind, double omega1, double eps, double *out);

/**
 * Shot-noise-limited sensitivity in T/√Hz.
 *
 * # Safety
 * `inputs` must be valid and `out` writable.
 */
enum CddStatus cdd_sensitivity(const struct CddSensitivityInputs *inputs, double *out);

/**
 * Pure-dephasing time from a total coherence time and its relaxation limit.
 *
 * # Safety
 * `out` must be writable.
 */
enum CddStatus cdd_relaxation_free_time(double t_total, double t_limit, double *out);

/**
 * Built-in defaults.
 *
 * # Safety
 * `out` must be writable.
 */
enum CddStatus cdd_config_default(struct CddConfig **out);

/**
 * Parses an INI config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CddStatus cdd_config_load(const char *path, struct CddConfig **out);

/**
 * Applies one `key=value` or `section.key=value` assignment.
 *
 * # Safety
 * `cfg` must be a live handle and `assignment` a NUL-terminated string.
 */
enum CddStatus cdd_config_set(struct CddConfig *cfg, const char *assignment);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void cdd_config_free(struct CddConfig *cfg);

/**
 * Runs the named scenario with `cfg`, writing files to its output directory.
 * `rows` receives the number of summary rows.
 *
 * # Safety
 * `cfg` must be a live handle, `scenario` a NUL-terminated string and
 * `rows` writable or null.
 */
enum CddStatus cdd_run_scenario(const struct CddConfig *cfg, const char *scenario, size_t *rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDD_H */
