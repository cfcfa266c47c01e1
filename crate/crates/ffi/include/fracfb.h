#ifndef FRACFB_H
#define FRACFB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>

// Result of every call.
typedef enum FracfbStatus {
  FRACFB_STATUS_OK = 0,
  FRACFB_STATUS_NULL_POINTER = 1,
  FRACFB_STATUS_INVALID_ARGUMENT = 2,
  FRACFB_STATUS_SOLVER_FAILURE = 3,
  FRACFB_STATUS_UNSUPPORTED = 4,
  FRACFB_STATUS_PANIC = 5,
} FracfbStatus;

// A position `(t, w)`.
typedef struct FracfbPosition FracfbPosition;

// A built-in problem.
typedef struct FracfbProblem FracfbProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a built-in problem (`"example-g"`, `"damped"`, `"oscillator"`).
// `g` selects the example multiplier (`"one"`, `"cos"`, `"poly"`) and may be
// null.
//
// # Safety
// `name` and non-null `g` must be NUL-terminated strings; `out` must be
// writable.
enum FracfbStatus fracfb_problem_new(const char *name,
                                     double alpha,
                                     double horizon,
                                     const char *g,
                                     struct FracfbProblem **out_problem);

// # Safety
// `problem` must come from [`fracfb_problem_new`] and not be freed twice.
void fracfb_problem_free(struct FracfbProblem *problem);

// State dimension of the problem.
//
// # Safety
// Pointers must be valid.
enum FracfbStatus fracfb_problem_dim(const struct FracfbProblem *problem, size_t *out_dim);

// Position at time `t` whose history starts at `w0` and has the constant
// Caputo derivative `caputo` (zero if null) on `cells` equal cells.
//
// # Safety
// `w0` and non-null `caputo` must hold `dim` doubles; `out_position` must be
// writable.
enum FracfbStatus fracfb_position_new(const struct FracfbProblem *problem,
                                      double t,
                                      const double *w0,
                                      const double *caputo,
                                      size_t dim,
                                      size_t cells,
                                      struct FracfbPosition **out_position);

// Position from its JSON form `{alpha, T, t, w0, step|breaks, caputo}`.
//
// # Safety
// `json` must be NUL-terminated; `out_position` must be writable.
enum FracfbStatus fracfb_position_from_json(const char *json, struct FracfbPosition **out_position);

// # Safety
// `position` must come from this library and not be freed twice.
void fracfb_position_free(struct FracfbPosition *position);

// Current state `w(t)` written to `out_state` (`dim` doubles).
//
// # Safety
// `out_state` must hold `dim` doubles.
enum FracfbStatus fracfb_position_state(const struct FracfbPosition *position,
                                        double *out_state,
                                        size_t dim);

// Closed-form value of the scalar example.
//
// # Safety
// Pointers must be valid.
enum FracfbStatus fracfb_value_closed_form(const struct FracfbProblem *problem,
                                           const struct FracfbPosition *position,
                                           double *out_value);

// Minimum cost over piecewise-constant controls with `pieces` pieces.
//
// # Safety
// Pointers must be valid.
enum FracfbStatus fracfb_value_bruteforce(const struct FracfbProblem *problem,
                                          const struct FracfbPosition *position,
                                          size_t pieces,
                                          size_t steps,
                                          double *out_value);

// Envelope directional derivative of order α along `f` over the constant
// controls of the grid, with the default active-set tolerance.
//
// # Safety
// `f` must hold `dim` doubles.
enum FracfbStatus fracfb_dderiv(const struct FracfbProblem *problem,
                                const struct FracfbPosition *position,
                                const double *f,
                                size_t dim,
                                size_t mesh,
                                double *out_value);

// Residual of the non-smooth HJB equation for the constant-control
// envelope.
//
// # Safety
// Pointers must be valid.
enum FracfbStatus fracfb_hjb_residual(const struct FracfbProblem *problem,
                                      const struct FracfbPosition *position,
                                      size_t mesh,
                                      double *out_value);

// Feedback run on the uniform partition of diameter at most `diam`, with
// `steps` solver cells in total. `strategy` is `"example"`, `"envelope"` or
// `"constant:<index>"`. Writes the terminal cost and, if `out_state` is
// non-null, the terminal state (`dim` doubles).
//
// # Safety
// `strategy` must be NUL-terminated; non-null `out_state` must hold `dim`
// doubles.
enum FracfbStatus fracfb_simulate(const struct FracfbProblem *problem,
                                  const struct FracfbPosition *position,
                                  const char *strategy,
                                  double diam,
                                  size_t steps,
                                  double *out_cost,
                                  double *out_state,
                                  size_t dim);

// The gamma function.
double fracfb_gamma(double x);

// Mittag-Leffler `E_{α,β}(x)`.
//
// # Safety
// `out_value` must be writable.
enum FracfbStatus fracfb_mittag_leffler(double alpha, double beta, double x, double *out_value);

// Copies the calling thread's last error message (NUL-terminated,
// truncated to `len`) into `buf` and returns the length the full message
// needs including the terminator. Pass a null `buf` to query the length.
//
// # Safety
// Non-null `buf` must hold `len` bytes.
size_t fracfb_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACFB_H */
