/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef COUPON_POLICY_H
#define COUPON_POLICY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define CP_ASSUMPTION_STRICT 0

#define CP_ASSUMPTION_MONOTONE 1

#define CP_ASSUMPTION_PERMISSIVE 2

#define CP_ACTION_LP 0

#define CP_ACTION_HP 1

#define CP_STATE_NONE -1

#define CP_STATE_NORMAL 0

#define CP_STATE_ALERTED 1

#define CP_ESTIMATE_MEAN 0

#define CP_ESTIMATE_MAP 1

typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_VALIDATION = 2,
  CP_STATUS_SOLVER = 3,
  CP_STATUS_IO = 4,
  CP_STATUS_PANIC = 5,
} CpStatus;

/**
 * Cost distributions for noisy feedback.
 */
typedef struct CpDistributions CpDistributions;

/**
 * Discretized distribution over the belief.
 */
typedef struct CpPosterior CpPosterior;

/**
 * Two-state model: alerted-state chain, optional HP chain and costs.
 */
typedef struct CpProblem CpProblem;

typedef struct CpThreshold {
  double tau;
  double kappa;
  /**
   * Stationary belief, NaN when the chain has none.
   */
  double p_f;
  double v_lambda_na;
  double v_lambda_aa;
  double indifference_residual;
  /**
   * 0: lambda_na >= tau, 1: lambda_na < tau.
   */
  int32_t lambda_case;
  /**
   * 0: T(tau) >= tau, 1: T(tau) < tau.
   */
  int32_t branch;
  /**
   * Optimal number of LP offers before HP from lambda_aa; -1 when LP
   * forever is optimal or the case does not use it.
   */
  int64_t n_star;
  bool tie_break;
} CpThreshold;

typedef struct CpCdThreshold {
  double tau;
  double kappa;
  /**
   * Case 1 to 4, or 0 when both chains coincide.
   */
  int32_t case_id;
  double indifference_residual;
  bool tie_break;
} CpCdThreshold;

typedef struct CpCorollary2 {
  double lambda1;
  double lambda2;
  /**
   * NaN when no closed form applies at this lambda_na.
   */
  double closed_form_tau;
  double tau_upper;
} CpCorollary2;

/**
 * Threshold variants for noisy costs. Missing variants are NaN.
 */
typedef struct CpVariants {
  double tau_avg;
  double tau_max;
  double tau_min;
  double tau_r;
} CpVariants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cp_last_error_message(void);

/**
 * Creates a coupon-independent problem.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CpStatus cp_problem_new(double lambda_na,
                             double lambda_aa,
                             uint32_t assumption_code,
                             double c_l,
                             double c_hn,
                             double c_ha,
                             double beta,
                             struct CpProblem **out);

/**
 * Sets the chain followed after an HP offer, making the problem
 * coupon-dependent. Its probabilities must not be below the LP chain's.
 *
 * # Safety
 * `problem` must be a handle from `cp_problem_new`.
 */
enum CpStatus cp_problem_set_hp_chain(struct CpProblem *problem,
                                      double lambda_na,
                                      double lambda_aa);

/**
 * # Safety
 * `problem` must be NULL or a handle from `cp_problem_new` not yet freed.
 */
void cp_problem_free(struct CpProblem *problem);

/**
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_kappa(const struct CpProblem *problem, double *out);

/**
 * Closed-form threshold of the coupon-independent model.
 *
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_solve_threshold(const struct CpProblem *problem, struct CpThreshold *out);

/**
 * Closed-form threshold of the coupon-dependent model. Without an HP chain
 * this equals `cp_solve_threshold`.
 *
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_solve_threshold_cd(const struct CpProblem *problem, struct CpCdThreshold *out);

/**
 * Threshold read off a value-iteration table on `grid` points.
 *
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_oracle_threshold(const struct CpProblem *problem,
                                  uintptr_t grid,
                                  double tol,
                                  double *out);

/**
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_corollary2(const struct CpProblem *problem, struct CpCorollary2 *out);

/**
 * Exact discounted cost from `belief` of the policy "HP iff p <= tau".
 *
 * # Safety
 * `problem` must be a valid handle and `out` writable.
 */
enum CpStatus cp_evaluate_policy(const struct CpProblem *problem,
                                 double tau,
                                 double belief,
                                 double *out);

/**
 * Uniform cost distributions for LP, HP in Normal and HP in Alerted.
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_distributions_new_uniform(double lp_lo,
                                           double lp_hi,
                                           double hn_lo,
                                           double hn_hi,
                                           double ha_lo,
                                           double ha_hi,
                                           struct CpDistributions **out);

/**
 * # Safety
 * `d` must be NULL or a handle not yet freed.
 */
void cp_distributions_free(struct CpDistributions *d);

/**
 * # Safety
 * `d` must be a valid handle and `out` writable.
 */
enum CpStatus cp_likelihood(const struct CpDistributions *d,
                            double cost,
                            uint32_t action_code,
                            double belief,
                            double *out);

/**
 * Threshold variants using the problem's chain and discount. The problem's
 * deterministic costs are ignored.
 *
 * # Safety
 * Handles must be valid and `out` writable.
 */
enum CpStatus cp_threshold_variants(const struct CpProblem *problem,
                                    const struct CpDistributions *d,
                                    double p0,
                                    struct CpVariants *out);

/**
 * MAP state detection after observing `cost` for `action_code`. Writes the
 * detected state (`CP_STATE_NONE` after LP) and the next belief.
 *
 * # Safety
 * Handles must be valid and outputs writable.
 */
enum CpStatus cp_map_state_update(const struct CpProblem *problem,
                                  const struct CpDistributions *d,
                                  double belief,
                                  uint32_t action_code,
                                  double cost,
                                  int32_t *out_state,
                                  double *out_belief);

/**
 * Uniform posterior on `points` grid points.
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_posterior_new_uniform(uintptr_t points, struct CpPosterior **out);

/**
 * Posterior with all mass at the grid point nearest `belief`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_posterior_new_point(uintptr_t points, double belief, struct CpPosterior **out);

/**
 * # Safety
 * `q` must be NULL or a handle not yet freed.
 */
void cp_posterior_free(struct CpPosterior *q);

/**
 * Bayes update in place. On error the posterior is left unchanged.
 *
 * # Safety
 * Handles must be valid.
 */
enum CpStatus cp_posterior_update(struct CpPosterior *q,
                                  const struct CpDistributions *d,
                                  uint32_t action_code,
                                  double cost);

/**
 * Pushes the posterior through the problem's LP transition map.
 *
 * # Safety
 * Handles must be valid.
 */
enum CpStatus cp_posterior_predict(struct CpPosterior *q, const struct CpProblem *problem);

/**
 * # Safety
 * `q` must be a valid handle and `out` writable.
 */
enum CpStatus cp_posterior_estimate(const struct CpPosterior *q, uint32_t mode, double *out);

/**
 * Copies up to `len` cell masses into `buf` and writes the grid size to
 * `out_points`. Pass a NULL `buf` to query the size only.
 *
 * # Safety
 * `q` must be valid; `buf` must be NULL or hold `len` doubles.
 */
enum CpStatus cp_posterior_weights(const struct CpPosterior *q,
                                   double *buf,
                                   uintptr_t len,
                                   uintptr_t *out_points);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COUPON_POLICY_H */
