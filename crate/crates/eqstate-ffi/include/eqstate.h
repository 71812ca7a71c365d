#ifndef EQSTATE_H
#define EQSTATE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum EqStatus {
  EQ_STATUS_OK = 0,
  EQ_STATUS_NULL_POINTER = 1,
  /**
   * Malformed input: bad JSON, out-of-range argument, buffer too small.
   */
  EQ_STATUS_INVALID_ARGUMENT = 2,
  EQ_STATUS_INVALID_MAP = 3,
  /**
   * A standing hypothesis does not hold.
   */
  EQ_STATUS_HYPOTHESIS = 4,
  /**
   * Iteration did not converge or another numerical failure.
   */
  EQ_STATUS_NUMERICAL = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  EQ_STATUS_PANIC = 6,
} EqStatus;

/**
 * A Markov map.
 */
typedef struct EqMap EqMap;

/**
 * A discretized transfer operator with its leading spectral data.
 */
typedef struct EqModel EqModel;

/**
 * A potential.
 */
typedef struct EqPotential EqPotential;

/**
 * Entropy, potential integral and pressure of the equilibrium state.
 */
typedef struct EqEntropy {
  double entropy;
  double potential_integral;
  double pressure;
  double identity_defect;
} EqEntropy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread; do not free.
 */
const char *eq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eq_version(void);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void eq_string_free(char *s);

/**
 * Build a map from a JSON map description, e.g. `{"kind": "benchmark", "delta0": 0.1}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EqStatus eq_map_from_json(const char *json, struct EqMap **out);

/**
 * The benchmark family with parameter `delta0`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EqStatus eq_map_benchmark(double delta0, struct EqMap **out);

/**
 * # Safety
 * `map` must be null or a live handle.
 */
void eq_map_free(struct EqMap *map);

/**
 * Number of atoms of the map; 0 for a null handle.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
uintptr_t eq_map_num_atoms(const struct EqMap *map);

/**
 * Evaluate the map at `x` in `[0,1)`.
 *
 * # Safety
 * `map` must be a live handle and `out` a valid pointer.
 */
enum EqStatus eq_map_eval(const struct EqMap *map, double x, double *out);

/**
 * Build a potential from JSON, e.g. `{"form": {"kind": "linear", "intercept": 0, "slope": 0.5}, "alpha": 1}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EqStatus eq_potential_from_json(const char *json,
                                     struct EqPotential **out);

/**
 * A potential constant on each atom.
 *
 * # Safety
 * `values` must point to `len` doubles and `out` be a valid pointer.
 */
enum EqStatus eq_potential_per_atom(const double *values, uintptr_t len, struct EqPotential **out);

/**
 * # Safety
 * `p` must be null or a live handle.
 */
void eq_potential_free(struct EqPotential *p);

/**
 * Discretize the transfer operator on cylinders of length `depth` and
 * compute its leading eigendata.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum EqStatus eq_model_new(const struct EqMap *map,
                           const struct EqPotential *potential,
                           uintptr_t depth,
                           struct EqModel **out);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
void eq_model_free(struct EqModel *model);

/**
 * Spectral radius; NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double eq_model_lambda(const struct EqModel *model);

/**
 * Pressure `log lambda`; NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double eq_model_pressure(const struct EqModel *model);

/**
 * Number of cylinders; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t eq_model_len(const struct EqModel *model);

/**
 * Copy the density `h` and the eigenmeasure masses `nu` (per cylinder, in
 * lexicographic word order) into caller buffers of length `len`. Either
 * buffer may be null.
 *
 * # Safety
 * Non-null buffers must hold `len` doubles.
 */
enum EqStatus eq_model_eigendata(const struct EqModel *model, double *h, double *nu, uintptr_t len);

/**
 * Entropy of the equilibrium state and the free-energy identity.
 *
 * # Safety
 * Handles must be live, built from the same potential, and `out` valid.
 */
enum EqStatus eq_entropy(const struct EqModel *model,
                         const struct EqPotential *potential,
                         struct EqEntropy *out);

/**
 * Correlations `C(0..=n_max)` of the observable (JSON, e.g.
 * `{"kind": "sine", "frequency": 1}`) with itself, by quadrature.
 * `out` must hold `n_max + 1` doubles.
 *
 * # Safety
 * Handles must be live; `observable` NUL-terminated; `out` valid for `n_max + 1` doubles.
 */
enum EqStatus eq_correlations(const struct EqMap *map,
                              const struct EqModel *model,
                              const char *observable,
                              uintptr_t n_max,
                              double *out);

/**
 * Check the standing hypotheses for a run configuration given as JSON.
 * Writes the report as a JSON string to `report` (free it with
 * [`eq_string_free`]). A failed hypothesis is not an error here: inspect
 * `route_a` in the report.
 *
 * # Safety
 * `config` must be NUL-terminated and `report` a valid pointer.
 */
enum EqStatus eq_verify_json(const char *config, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EQSTATE_H */
