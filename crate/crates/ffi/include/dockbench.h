/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef DOCKBENCH_H
#define DOCKBENCH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define DOCK_PRESET_SIM2M 0

#define DOCK_PRESET_REAL0P5M 1

// Phase code for ticks before the docking window opens.
#define DOCK_PHASE_NONE -1

#define DOCK_PHASE_APPROACH 0

#define DOCK_PHASE_ALIGN 1

#define DOCK_PHASE_CAPTURE 2

#define DOCK_PHASE_SETTLE 3

#define DOCK_PHASE_SUCCESS 4

#define DOCK_PHASE_ABORTED 5

// Bytes needed for a config digest including the terminating NUL.
#define DOCK_DIGEST_LEN 65

typedef enum {
  DOCK_OUTCOME_SUCCESS = 0,
  DOCK_OUTCOME_TIMEOUT = 1,
  DOCK_OUTCOME_MISALIGNMENT = 2,
  DOCK_OUTCOME_BOUNCE_OFF = 3,
  DOCK_OUTCOME_SAFETY_ABORT = 4,
} DockOutcome;

typedef enum {
  DOCK_STATUS_OK = 0,
  DOCK_STATUS_NULL_POINTER = 1,
  DOCK_STATUS_INVALID_ARGUMENT = 2,
  DOCK_STATUS_CONFIG = 3,
  DOCK_STATUS_SIMULATION = 4,
  DOCK_STATUS_IO = 5,
  DOCK_STATUS_BUFFER_TOO_SMALL = 6,
  DOCK_STATUS_PANIC = 7,
} DockStatus;

// Opaque trial configuration.
typedef struct DockConfig DockConfig;

// Opaque completed trial.
typedef struct DockTrial DockTrial;

// Headline results of a trial. Absent values are NaN.
typedef struct {
  uint64_t seed;
  DockOutcome outcome;
  bool success;
  double time_to_dock;
  double baseline_rms;
  double yaw_rms;
  size_t n_ticks;
} DockTrialSummary;

// Ground truth and guard signals of one tick.
typedef struct {
  double t;
  double p_l[3];
  double v_l[3];
  double psi_l;
  double p_f[3];
  double v_f[3];
  double psi_f;
  int32_t phase;
  double e_b;
  double e_psi;
  double v_rel;
  bool latched;
} DockTick;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dock_version(void);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call into the library from the same thread.
const char *dock_last_error(void);

// Creates a config from a built-in preset.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
DockStatus dock_config_preset(uint32_t preset_code, DockConfig **out);

// Parses a TOML document as overrides on top of a preset.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
DockStatus dock_config_from_toml(const char *toml, uint32_t preset_code, DockConfig **out);

// # Safety
// `cfg` must be a handle from this library or null.
void dock_config_free(DockConfig *cfg);

// # Safety
// `cfg` must be a live config handle.
DockStatus dock_config_set_seed(DockConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a live config handle.
DockStatus dock_config_set_supervisor(DockConfig *cfg, bool enabled);

// Switches sensing, estimation and wind to the noisy campaign profile.
//
// # Safety
// `cfg` must be a live config handle.
DockStatus dock_config_make_noisy(DockConfig *cfg);

// Writes the hex config digest into `buf`, which needs
// [`DOCK_DIGEST_LEN`] bytes.
//
// # Safety
// `cfg` must be a live handle; `buf` must hold `len` writable bytes.
DockStatus dock_config_digest(const DockConfig *cfg, char *buf, size_t len);

// Runs one trial to completion. A failed docking is still `DOCK_STATUS_OK`;
// read the outcome from the summary.
//
// # Safety
// `cfg` must be a live config handle; `out` must be writable.
DockStatus dock_trial_run(const DockConfig *cfg, DockTrial **out);

// # Safety
// `trial` must be a handle from this library or null.
void dock_trial_free(DockTrial *trial);

// # Safety
// `trial` must be a live handle; `out` must be writable.
DockStatus dock_trial_summary(const DockTrial *trial, DockTrialSummary *out);

// Copies tick `index` of the trace.
//
// # Safety
// `trial` must be a live handle; `out` must be writable.
DockStatus dock_trial_tick(const DockTrial *trial, size_t index, DockTick *out);

// Writes the JSON-lines trial log that `dockbench replay` audits.
//
// # Safety
// `trial` must be a live handle; `path` a NUL-terminated string.
DockStatus dock_trial_write_log(const DockTrial *trial, const char *path);

// 95% Wilson score interval for `k` successes in `n` trials.
//
// # Safety
// The three output pointers must be writable.
DockStatus dock_wilson_interval(uint64_t k, uint64_t n, double *estimate, double *lo, double *hi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOCKBENCH_H */
