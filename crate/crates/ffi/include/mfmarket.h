/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MFMARKET_H
#define MFMARKET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success; the others mirror the library error kinds.
typedef enum MfmStatus {
  MFM_STATUS_OK = 0,
  MFM_STATUS_NULL_POINTER = 1,
  MFM_STATUS_INVALID_PARAMS = 2,
  MFM_STATUS_INVALID_INPUT = 3,
  MFM_STATUS_CONSTRAINT_VIOLATION = 4,
  MFM_STATUS_NON_CRITICAL = 5,
  MFM_STATUS_CRITICAL_DIVERGENCE = 6,
  MFM_STATUS_ORDERED_PHASE = 7,
  MFM_STATUS_INSUFFICIENT_BRANCH = 8,
  MFM_STATUS_NEAR_SINGULAR = 9,
  MFM_STATUS_NON_CONVERGENCE = 10,
  MFM_STATUS_UNSTABLE_STEP = 11,
  MFM_STATUS_CFL_VIOLATION = 12,
  MFM_STATUS_INSUFFICIENT_QUOTES = 13,
  MFM_STATUS_OPTIMIZER_FAILURE = 14,
  MFM_STATUS_BUFFER_TOO_SMALL = 15,
  MFM_STATUS_PANIC = 16,
} MfmStatus;

// Opaque model handle.
typedef struct MfmModel MfmModel;

// Opaque particle-ensemble handle.
typedef struct MfmParticles MfmParticles;

// Parameters of one asset's potential plus the market coupling.
typedef struct MfmParams {
  double mu1;
  double mu2;
  double sigma1;
  double sigma2;
  double a;
  double t;
  double h;
  // Coupling constant.
  double g;
  // External field.
  double field;
} MfmParams;

// Flat calibration output.
typedef struct MfmCalibration {
  double mu1;
  double mu2;
  double sigma1;
  double sigma2;
  double a;
  double t;
  // Mean absolute percentage pricing error, in percent.
  double mape;
  double g;
  double m;
  // 1 when bare parameters exist for `g`.
  uint8_t g_valid;
} MfmCalibration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length plus one.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t mfm_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *mfm_version(void);

// Validates `params` and creates a model.
//
// # Safety
// `params` must be readable and `out` writable.
enum MfmStatus mfm_model_new(const struct MfmParams *params, struct MfmModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`mfm_model_new`] and not be used afterwards.
void mfm_model_free(struct MfmModel *model);

// Potential `V(y)`, zero at its minimum.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_potential(const struct MfmModel *model, double y, double *out);

// Stationary density at `g = 0`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_stationary_pdf(const struct MfmModel *model, double y, double *out);

// Landau free energy `F(m)`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_free_energy(const struct MfmModel *model, double m, double *out);

// Mean return `<y>` under the Boltzmann density for a given market mean `m`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_mean_return(const struct MfmModel *model, double m, double *out);

// Roots of the self-consistency equation in ascending order. `stable[i]`
// is 1 for locally stable roots. Writes the root count to `count`; returns
// `BufferTooSmall` (with `count` set) when `capacity` is insufficient.
//
// # Safety
// `roots` and `stable` must each hold `capacity` elements (or be null when
// `capacity` is 0); `count` must be writable.
enum MfmStatus mfm_model_roots(const struct MfmModel *model,
                               double *roots,
                               uint8_t *stable,
                               size_t capacity,
                               size_t *count);

// Critical volatility of the symmetric potential.
//
// # Safety
// `out` must be writable.
enum MfmStatus mfm_critical_volatility(double mu, double sigma, double t, double g, double *out);

// Susceptibility `dm/dB` of a symmetric model at noise level `h`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_susceptibility(const struct MfmModel *model, double h, double *out);

// European option price with the model's parameters read as effective
// parameters and `t` as the tenor.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_price(const struct MfmModel *model,
                               double spot,
                               double rate,
                               double strike,
                               bool is_call,
                               double *out);

// Closed-form equilibrium market log-return of the model's parameters read
// as effective parameters.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_model_equilibrium_return(const struct MfmModel *model, double *out);

// Coupling estimate `h^2 / (2 sigma_M^2 T)`.
double mfm_estimate_coupling(double sigma1, double sigma2, double h, double t, double delta_sigma2);

// Creates `n` particles at `y0` for the model, with step `dt` and `seed`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum MfmStatus mfm_particles_new(const struct MfmModel *model,
                                 size_t n,
                                 double dt,
                                 uint64_t seed,
                                 double y0,
                                 struct MfmParticles **out);

// Releases a particle ensemble. Null is ignored.
//
// # Safety
// `particles` must come from [`mfm_particles_new`] and not be used afterwards.
void mfm_particles_free(struct MfmParticles *particles);

// Advances the ensemble by `steps` Euler-Maruyama steps.
//
// # Safety
// `particles` must be a live handle.
enum MfmStatus mfm_particles_step(struct MfmParticles *particles, size_t steps);

// Ensemble mean return.
//
// # Safety
// `particles` must be a live handle and `out` writable.
enum MfmStatus mfm_particles_mean(const struct MfmParticles *particles, double *out);

// Copies positions into `buf`, which must hold at least the particle count.
//
// # Safety
// `particles` must be a live handle and `buf` must hold `len` values.
enum MfmStatus mfm_particles_positions(const struct MfmParticles *particles,
                                       double *buf,
                                       size_t len);

// Calibrates to the quotes in `csv_text` (same layout as the CLI input).
// `side` is 0 for calls and 1 for puts.
//
// # Safety
// `csv_text` must be a NUL-terminated string and `out` writable.
enum MfmStatus mfm_calibrate_csv(const char *csv_text,
                                 uint8_t side,
                                 double h,
                                 uint64_t seed,
                                 struct MfmCalibration *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFMARKET_H */
