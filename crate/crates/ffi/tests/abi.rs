use std::ffi::CStr;
use std::ptr;

use coupon_policy_ffi::*;

fn reference() -> *mut CpProblem {
    let mut p = ptr::null_mut();
    let s = unsafe { cp_problem_new(0.1, 0.7, CP_ASSUMPTION_MONOTONE, 3.0, 1.0, 12.0, 0.9, &mut p) };
    assert_eq!(s, CpStatus::Ok);
    p
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cp_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn solve_and_evaluate() {
    let p = reference();
    let mut t = CpThreshold::default();
    assert_eq!(unsafe { cp_solve_threshold(p, &mut t) }, CpStatus::Ok);
    assert!((t.kappa - 2.0 / 11.0).abs() < 1e-12);
    assert!(t.tau >= t.kappa);
    assert_eq!(t.lambda_case, 1);
    let mut oracle = 0.0;
    assert_eq!(unsafe { cp_oracle_threshold(p, 2001, 1e-9, &mut oracle) }, CpStatus::Ok);
    assert!((oracle - t.tau).abs() <= 1e-3);
    let (mut at, mut off) = (0.0, 0.0);
    unsafe {
        cp_evaluate_policy(p, t.tau, 0.2, &mut at);
        cp_evaluate_policy(p, t.kappa, 0.2, &mut off);
    }
    assert!(at <= off + 1e-12);
    let mut cd = CpCdThreshold::default();
    assert_eq!(unsafe { cp_solve_threshold_cd(p, &mut cd) }, CpStatus::Ok);
    assert_eq!(cd.case_id, 0);
    assert!((cd.tau - t.tau).abs() < 1e-12);
    unsafe { cp_problem_free(p) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut p = ptr::null_mut();
    let s = unsafe { cp_problem_new(0.9, 0.7, CP_ASSUMPTION_STRICT, 3.0, 1.0, 12.0, 0.9, &mut p) };
    assert_eq!(s, CpStatus::Validation);
    assert!(p.is_null());
    assert!(last_error().contains("consumer-inertia"));
    let s = unsafe { cp_problem_new(0.2, 0.8, CP_ASSUMPTION_STRICT, 1.0, 1.0, 1.0, 0.9, &mut p) };
    assert_eq!(s, CpStatus::Ok);
    let mut k = 0.0;
    assert_eq!(unsafe { cp_kappa(p, &mut k) }, CpStatus::Validation);
    assert!(last_error().contains("degenerate costs"));
    unsafe { cp_problem_free(p) };
    assert_eq!(unsafe { cp_kappa(ptr::null(), ptr::null_mut()) }, CpStatus::NullPointer);
    assert_eq!(unsafe { cp_problem_new(0.2, 0.8, 7, 3.0, 1.0, 12.0, 0.9, &mut p) }, CpStatus::Validation);

    // No bracket for lambda2 with these costs.
    let s = unsafe { cp_problem_new(0.2, 0.5, CP_ASSUMPTION_MONOTONE, 8.0, 1.0, 12.0, 0.9, &mut p) };
    assert_eq!(s, CpStatus::Ok);
    let mut b = CpCorollary2::default();
    assert_eq!(unsafe { cp_corollary2(p, &mut b) }, CpStatus::Solver);
    unsafe { cp_problem_free(p) };
    unsafe { cp_problem_free(ptr::null_mut()) };
}

#[test]
fn posterior_round_trip() {
    let p = reference();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { cp_distributions_new_uniform(3.0, 9.0, 0.25, 7.75, 6.0, 18.0, &mut d) }, CpStatus::Ok);
    let mut l = 0.0;
    unsafe { cp_likelihood(d, 7.0, CP_ACTION_HP, 0.5, &mut l) };
    assert!((l - (0.5 / 7.5 + 0.5 / 12.0)).abs() < 1e-15);

    let mut q = ptr::null_mut();
    assert_eq!(unsafe { cp_posterior_new_uniform(1001, &mut q) }, CpStatus::Ok);
    let mut mean = 0.0;
    unsafe { cp_posterior_estimate(q, CP_ESTIMATE_MEAN, &mut mean) };
    assert!((mean - 0.5).abs() < 1e-12);
    assert_eq!(unsafe { cp_posterior_update(q, d, CP_ACTION_HP, 15.0) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_posterior_predict(q, p) }, CpStatus::Ok);
    assert_eq!(unsafe { cp_posterior_update(q, d, CP_ACTION_HP, 100.0) }, CpStatus::Solver);

    let mut n = 0usize;
    unsafe { cp_posterior_weights(q, ptr::null_mut(), 0, &mut n) };
    let mut w = vec![0.0; n];
    unsafe { cp_posterior_weights(q, w.as_mut_ptr(), w.len(), &mut n) };
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let (mut state, mut next) = (0, 0.0);
    unsafe { cp_map_state_update(p, d, 0.5, CP_ACTION_HP, 7.0, &mut state, &mut next) };
    assert_eq!(state, CP_STATE_NORMAL);
    assert_eq!(next, 0.1);

    let mut v = CpVariants::default();
    let mut chain = ptr::null_mut();
    unsafe { cp_problem_new(0.2, 0.8, CP_ASSUMPTION_STRICT, 6.0, 4.0, 12.0, 0.9, &mut chain) };
    assert_eq!(unsafe { cp_threshold_variants(chain, d, 0.2, &mut v) }, CpStatus::Ok);
    assert!((v.tau_avg - 0.35385).abs() < 1e-4);
    assert!(v.tau_min.is_nan());

    unsafe {
        cp_posterior_free(q);
        cp_distributions_free(d);
        cp_problem_free(p);
        cp_problem_free(chain);
    }
}

#[test]
fn hp_chain_validation() {
    let p = reference();
    assert_eq!(unsafe { cp_problem_set_hp_chain(p, 0.05, 0.9) }, CpStatus::Validation);
    assert_eq!(unsafe { cp_problem_set_hp_chain(p, 0.3, 0.9) }, CpStatus::Ok);
    let mut oracle = 0.0;
    assert_eq!(unsafe { cp_oracle_threshold(p, 1001, 1e-9, &mut oracle) }, CpStatus::Ok);
    let mut t = CpThreshold::default();
    unsafe { cp_solve_threshold(p, &mut t) };
    assert!(oracle <= t.tau + 2e-3);
    unsafe { cp_problem_free(p) };
}
