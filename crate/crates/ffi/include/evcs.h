#ifndef EVCS_H
#define EVCS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvcsStatus {
  EVCS_STATUS_OK = 0,
  EVCS_STATUS_NULL_POINTER = 1,
  EVCS_STATUS_INVALID_ARGUMENT = 2,
  EVCS_STATUS_IO = 3,
  EVCS_STATUS_PARSE = 4,
  EVCS_STATUS_INFEASIBLE = 5,
  EVCS_STATUS_QUOTA_VIOLATION = 6,
  EVCS_STATUS_SOLVER = 7,
  EVCS_STATUS_BUFFER_TOO_SMALL = 8,
  EVCS_STATUS_PANIC = 9,
} EvcsStatus;

/**
 * Per-slot series exposed by an outcome.
 */
typedef enum EvcsSeries {
  EVCS_SERIES_BAND_LOWER = 0,
  EVCS_SERIES_BAND_UPPER = 1,
  EVCS_SERIES_DISPATCH = 2,
  EVCS_SERIES_GRID_POWER = 3,
  EVCS_SERIES_RENEWABLES = 4,
  EVCS_SERIES_QUOTA_BOUGHT = 5,
  EVCS_SERIES_CARBON = 6,
  EVCS_SERIES_COST = 7,
} EvcsSeries;

typedef enum EvcsHUpdate {
  EVCS_H_UPDATE_ANCHORED = 0,
  EVCS_H_UPDATE_RECURSIVE = 1,
} EvcsHUpdate;

/**
 * Opaque run result.
 */
typedef struct EvcsOutcome EvcsOutcome;

/**
 * Opaque scenario handle.
 */
typedef struct EvcsScenario EvcsScenario;

typedef struct EvcsSummary {
  size_t slots;
  size_t evs;
  double flexibility_value;
  double total_cost;
  size_t trades;
  double carbon_max;
  double carbon_final;
  double v2;
  double min_target_margin;
  double aggregation_residual;
  size_t violations;
} EvcsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *evcs_last_error(void);

/**
 * Builds a synthetic scenario. `slots` must be positive.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvcsStatus evcs_scenario_synthetic(uint64_t seed,
                                        size_t evs,
                                        size_t slots,
                                        struct EvcsScenario **out);

/**
 * Loads a scenario from a config file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum EvcsStatus evcs_scenario_load(const char *path, struct EvcsScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void evcs_scenario_free(struct EvcsScenario *s);

/**
 * # Safety
 * `s` must be a live scenario handle.
 */
enum EvcsStatus evcs_scenario_set_v1(struct EvcsScenario *s, double v1);

/**
 * Sets the carbon weight; a negative value restores the default.
 *
 * # Safety
 * `s` must be a live scenario handle.
 */
enum EvcsStatus evcs_scenario_set_v2(struct EvcsScenario *s, double v2);

/**
 * # Safety
 * `s` must be a live scenario handle.
 */
enum EvcsStatus evcs_scenario_set_alpha(struct EvcsScenario *s, double alpha);

/**
 * Runs both stages; `h_update` is an `EvcsHUpdate` value. With
 * `alpha_dispatch` set the aggregate power is pinned to the alpha point of
 * the band.
 *
 * # Safety
 * `s` must be a live scenario handle and `out` writable.
 */
enum EvcsStatus evcs_run(const struct EvcsScenario *s,
                         uint32_t h_update,
                         bool alpha_dispatch,
                         struct EvcsOutcome **out);

/**
 * # Safety
 * `o` must be null or an outcome handle not yet freed.
 */
void evcs_outcome_free(struct EvcsOutcome *o);

/**
 * # Safety
 * `o` must be a live outcome handle and `out` writable.
 */
enum EvcsStatus evcs_outcome_summary(const struct EvcsOutcome *o, struct EvcsSummary *out);

/**
 * Copies the `EvcsSeries` named by `which` into `buf`, which must hold the horizon
 * length. `len` receives the number of slots in every case, so a null
 * `buf` queries the size.
 *
 * # Safety
 * `o` must be a live outcome handle, `len` writable and `buf` null or
 * valid for `cap` writes.
 */
enum EvcsStatus evcs_outcome_series(const struct EvcsOutcome *o,
                                    uint32_t which,
                                    double *buf,
                                    size_t cap,
                                    size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVCS_H */
