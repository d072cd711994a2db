#include <math.h>
#include <stdio.h>
#include "coupon_policy.h"

int main(void) {
    CpProblem *p = NULL;
    if (cp_problem_new(0.1, 0.7, CP_ASSUMPTION_MONOTONE, 3.0, 1.0, 12.0, 0.9, &p) != CP_STATUS_OK) return 1;
    CpThreshold t;
    if (cp_solve_threshold(p, &t) != CP_STATUS_OK) return 2;
    if (fabs(t.kappa - 2.0 / 11.0) > 1e-12 || t.tau < t.kappa) return 3;
    cp_problem_free(p);
    if (cp_problem_new(0.9, 0.7, CP_ASSUMPTION_STRICT, 3.0, 1.0, 12.0, 0.9, &p) != CP_STATUS_VALIDATION) return 4;
    if (cp_last_error_message() == NULL) return 5;
    printf("tau=%.6f\n", t.tau);
    return 0;
}
