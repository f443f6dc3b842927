#ifndef CAUSAL_CHANNELS_H
#define CAUSAL_CHANNELS_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>

typedef enum CcStatus {
  CC_STATUS_OK = 0,
  /*
   The call ran but the property it checks does not hold.
   */
  CC_STATUS_FAILED = 1,
  /*
   Null pointer or non-UTF-8 string argument.
   */
  CC_STATUS_INVALID_ARGUMENT = 2,
  /*
   Malformed JSON or a schema violation.
   */
  CC_STATUS_PARSE = 3,
  /*
   Dimension, alphabet, positivity or other precondition error.
   */
  CC_STATUS_DOMAIN = 4,
  /*
   A construction could not be carried out on a valid input.
   */
  CC_STATUS_VERIFICATION = 5,
  CC_STATUS_PANIC = 6,
} CcStatus;

/*
 A completely positive map.
 */
typedef struct CcCpMap CcCpMap;

/*
 A classically conditioned instrument.
 */
typedef struct CcInstrument CcInstrument;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *cc_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void cc_string_free(char *s);

/*
 Library version as a static string.
 */
const char *cc_version(void);

/*
 Parses a CP map from JSON (`{"in_dim", "out_dim", "kraus"}`).

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CcStatus cc_cpmap_from_json(const char *json, struct CcCpMap **out);

/*
 Canonical JSON of a map. Free the result with [`cc_string_free`].

 # Safety
 `map` must be a live handle; `out` must be writable.
 */
enum CcStatus cc_cpmap_to_json(const struct CcCpMap *map, char **out);

/*
 # Safety
 `map` must be null or a handle not yet freed.
 */
void cc_cpmap_free(struct CcCpMap *map);

/*
 Input and output dimensions.

 # Safety
 `map` must be a live handle; the out pointers must be writable.
 */
enum CcStatus cc_cpmap_dims(const struct CcCpMap *map, uintptr_t *in_dim, uintptr_t *out_dim);

/*
 Writes `‖Σ K†K − 𝕀‖_F` to `defect`; returns `Failed` when it exceeds `tol`.

 # Safety
 `map` must be a live handle; `defect` must be writable.
 */
enum CcStatus cc_cpmap_check_tp(const struct CcCpMap *map, double tol, double *defect);

/*
 Frobenius distance between the Choi operators of two maps.

 # Safety
 `a` and `b` must be live handles; `distance` must be writable.
 */
enum CcStatus cc_choi_distance(const struct CcCpMap *a, const struct CcCpMap *b, double *distance);

/*
 Parses an instrument from JSON.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CcStatus cc_instrument_from_json(const char *json, struct CcInstrument **out);

/*
 # Safety
 `inst` must be null or a handle not yet freed.
 */
void cc_instrument_free(struct CcInstrument *inst);

/*
 `Ok` when every conditioning symbol sums to a channel within `tol`.

 # Safety
 `inst` must be a live handle.
 */
enum CcStatus cc_instrument_validate(const struct CcInstrument *inst, double tol);

/*
 Loop composition `Σ_{a,b} A_{a|b} ⊗ B_{b|a}`. The new map handle goes to
 `out` and its TP defect to `tp_defect` (which may be null).

 # Safety
 `alice` and `bob` must be live handles; `out` must be writable.
 */
enum CcStatus cc_compose_loop(const struct CcInstrument *alice,
                              const struct CcInstrument *bob,
                              struct CcCpMap **out,
                              double *tp_defect);

/*
 Runs the nine-state discrimination and writes its JSON report to `report`.

 # Safety
 `report` must be writable.
 */
enum CcStatus cc_discriminate_nine(double tol, char **report);

/*
 Validates a classical process given as JSON. On `Failed`, a violating
 strategy pair is written to `witness` when it is non-null; otherwise
 `*witness` is set to null.

 # Safety
 `json` must be a NUL-terminated string; `witness` must be null or writable.
 */
enum CcStatus cc_procmat_validate_json(const char *json, char **witness);

/*
 Splits a valid classical process into one-way components and writes
 the decomposition as JSON.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CcStatus cc_procmat_decompose_json(const char *json, char **out);

/*
 Runs the full self-test and writes its JSON report.

 # Safety
 `report` must be writable.
 */
enum CcStatus cc_selftest(uint64_t seed, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_CHANNELS_H */
