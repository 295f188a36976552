#ifndef ADVGAME_H
#define ADVGAME_H

/* Generated by cbindgen from advgame-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum AdvStatus {
  ADV_STATUS_OK = 0,
  ADV_STATUS_NULL_POINTER = 1,
  ADV_STATUS_INVALID_ARGUMENT = 2,
  ADV_STATUS_IO = 3,
  ADV_STATUS_PARSE = 4,
  ADV_STATUS_NUMERIC = 5,
} AdvStatus;

// Norm selector for attack budgets.
typedef enum AdvNorm {
  ADV_NORM_L1 = 1,
  ADV_NORM_L2 = 2,
  ADV_NORM_L_INF = 3,
} AdvNorm;

// Opaque attack-network handle.
typedef struct AdvAttack AdvAttack;

// Opaque defense-model handle.
typedef struct AdvDefense AdvDefense;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *advgame_version(void);

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread.
const char *advgame_last_error(void);

// Load a defense checkpoint (`advgame-defense` JSON) into a new handle.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
// A handle returned through `out` must be released with
// [`advgame_defense_free`].
enum AdvStatus advgame_defense_load(const char *path, struct AdvDefense **out);

// Release a defense handle. Passing NULL is a no-op.
//
// # Safety
// `handle` must have come from [`advgame_defense_load`] and must not be
// used afterwards.
void advgame_defense_free(struct AdvDefense *handle);

// Input dimension of a defense model; 0 for a NULL handle.
//
// # Safety
// `handle` must be NULL or a live defense handle.
size_t advgame_defense_input_dim(const struct AdvDefense *handle);

// Output dimension (class count, or 1 for regression); 0 for NULL.
//
// # Safety
// `handle` must be NULL or a live defense handle.
size_t advgame_defense_output_dim(const struct AdvDefense *handle);

// Evaluate the defense on one point, writing logits (or the regression
// prediction) into `out`.
//
// # Safety
// `x` must hold `x_len` readable f64, `out` must hold `out_len` writable
// f64, and `handle` must be a live defense handle.
enum AdvStatus advgame_defense_predict(const struct AdvDefense *handle,
                                       const double *x,
                                       size_t x_len,
                                       double *out,
                                       size_t out_len);

// Predicted class index (classification models only).
//
// # Safety
// As [`advgame_defense_predict`]; `out_class` must be a valid pointer.
enum AdvStatus advgame_defense_predict_class(const struct AdvDefense *handle,
                                             const double *x,
                                             size_t x_len,
                                             size_t *out_class);

// Load an attack-network checkpoint (`advgame-attack` JSON).
//
// # Safety
// As [`advgame_defense_load`]; release with [`advgame_attack_free`].
enum AdvStatus advgame_attack_load(const char *path, struct AdvAttack **out);

// Release an attack handle. Passing NULL is a no-op.
//
// # Safety
// `handle` must have come from [`advgame_attack_load`] and must not be
// used afterwards.
void advgame_attack_free(struct AdvAttack *handle);

// Input dimension of the attack network; 0 for NULL.
//
// # Safety
// `handle` must be NULL or a live attack handle.
size_t advgame_attack_input_dim(const struct AdvAttack *handle);

// Class count of the attack network, or -1 for regression attacks.
//
// # Safety
// `handle` must be NULL or a live attack handle.
int64_t advgame_attack_classes(const struct AdvAttack *handle);

// The trained perturbation `lambda(x, label)`, forward-only (semi-white
// box). For regression attacks the label is ignored.
//
// # Safety
// Buffer contracts as in [`advgame_defense_predict`].
enum AdvStatus advgame_attack_perturbation(const struct AdvAttack *handle,
                                           const double *x,
                                           size_t x_len,
                                           int64_t label,
                                           double *out,
                                           size_t out_len);

// `x + lambda(x, label)`, optionally clipped back into the unit cube.
//
// # Safety
// Buffer contracts as in [`advgame_defense_predict`].
enum AdvStatus advgame_adversarial_example(const struct AdvAttack *handle,
                                           const double *x,
                                           size_t x_len,
                                           int64_t label,
                                           bool clip_input,
                                           double *out,
                                           size_t out_len);

// Single-step signed-gradient attack against a defense (linf budget).
// `label` selects the class for classification models; `target_value`
// supplies the regression target.
//
// # Safety
// Buffer contracts as in [`advgame_defense_predict`].
enum AdvStatus advgame_fgsm(const struct AdvDefense *handle,
                            const double *x,
                            size_t x_len,
                            int64_t label,
                            double target_value,
                            double delta,
                            double *out,
                            size_t out_len);

// Multi-restart projected-gradient attack against a defense.
//
// # Safety
// Buffer contracts as in [`advgame_defense_predict`].
enum AdvStatus advgame_pgd(const struct AdvDefense *handle,
                           const double *x,
                           size_t x_len,
                           int64_t label,
                           double target_value,
                           enum AdvNorm norm,
                           double delta,
                           double gamma,
                           size_t steps,
                           size_t restarts,
                           bool early_stop,
                           uint64_t seed,
                           double *out,
                           size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVGAME_H */
