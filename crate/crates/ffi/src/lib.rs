//! C ABI for the coupon-policy solvers.
//!
//! Every function returns a `CpStatus`. On failure the message is kept per
//! thread and can be read with `cp_last_error_message`. Objects are opaque
//! handles created by `*_new` functions and released by the matching
//! `*_free`. Panics are caught at the boundary and reported as
//! `CP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coupon_policy::coupon_dependent::{solve_threshold_cd, CouponDependentModel};
use coupon_policy::evaluation::{evaluate_threshold_policy, Dynamics};
use coupon_policy::noisy::{
    bayes_predict, bayes_update, likelihood, map_state_update, point_estimate, threshold_variants, BeliefPosterior,
    CostDistribution, CostDistributions, EstimateMode,
};
use coupon_policy::threshold::{corollary2_bounds, kappa, Branch, LambdaCase};
use coupon_policy::vi::{extract_threshold, solve_dynamics};
use coupon_policy::{solve_threshold, Action, Assumption, ConsumerState, CostModel, Error, ErrorKind, TransitionModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Solver = 3,
    Io = 4,
    Panic = 5,
}

pub const CP_ASSUMPTION_STRICT: u32 = 0;
pub const CP_ASSUMPTION_MONOTONE: u32 = 1;
pub const CP_ASSUMPTION_PERMISSIVE: u32 = 2;

pub const CP_ACTION_LP: u32 = 0;
pub const CP_ACTION_HP: u32 = 1;

pub const CP_STATE_NONE: i32 = -1;
pub const CP_STATE_NORMAL: i32 = 0;
pub const CP_STATE_ALERTED: i32 = 1;

pub const CP_ESTIMATE_MEAN: u32 = 0;
pub const CP_ESTIMATE_MAP: u32 = 1;

/// Two-state model: alerted-state chain, optional HP chain and costs.
pub struct CpProblem {
    chain: TransitionModel,
    hp_chain: Option<TransitionModel>,
    costs: CostModel,
}

/// Cost distributions for noisy feedback.
pub struct CpDistributions {
    inner: CostDistributions,
}

/// Discretized distribution over the belief.
pub struct CpPosterior {
    inner: BeliefPosterior,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CpThreshold {
    pub tau: f64,
    pub kappa: f64,
    /// Stationary belief, NaN when the chain has none.
    pub p_f: f64,
    pub v_lambda_na: f64,
    pub v_lambda_aa: f64,
    pub indifference_residual: f64,
    /// 0: lambda_na >= tau, 1: lambda_na < tau.
    pub lambda_case: i32,
    /// 0: T(tau) >= tau, 1: T(tau) < tau.
    pub branch: i32,
    /// Optimal number of LP offers before HP from lambda_aa; -1 when LP
    /// forever is optimal or the case does not use it.
    pub n_star: i64,
    pub tie_break: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CpCdThreshold {
    pub tau: f64,
    pub kappa: f64,
    /// Case 1 to 4, or 0 when both chains coincide.
    pub case_id: i32,
    pub indifference_residual: f64,
    pub tie_break: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CpCorollary2 {
    pub lambda1: f64,
    pub lambda2: f64,
    /// NaN when no closed form applies at this lambda_na.
    pub closed_form_tau: f64,
    pub tau_upper: f64,
}

/// Threshold variants for noisy costs. Missing variants are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CpVariants {
    pub tau_avg: f64,
    pub tau_max: f64,
    pub tau_min: f64,
    pub tau_r: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F>(f: F) -> CpStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            CpStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Validation => CpStatus::Validation,
                ErrorKind::Solver => CpStatus::Solver,
                ErrorKind::Io => CpStatus::Io,
            }
        }
        Err(_) => {
            set_error("internal panic".to_string());
            CpStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn get_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

fn assumption(code: u32) -> Result<Assumption, Failure> {
    match code {
        CP_ASSUMPTION_STRICT => Ok(Assumption::Strict),
        CP_ASSUMPTION_MONOTONE => Ok(Assumption::Monotone),
        CP_ASSUMPTION_PERMISSIVE => Ok(Assumption::Permissive),
        _ => Err(Error::invalid("assumption", format!("unknown code {code}")).into()),
    }
}

fn action(code: u32) -> Result<Action, Failure> {
    match code {
        CP_ACTION_LP => Ok(Action::Lp),
        CP_ACTION_HP => Ok(Action::Hp),
        _ => Err(Error::invalid("action", format!("unknown code {code}")).into()),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a coupon-independent problem.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_new(
    lambda_na: f64,
    lambda_aa: f64,
    assumption_code: u32,
    c_l: f64,
    c_hn: f64,
    c_ha: f64,
    beta: f64,
    out: *mut *mut CpProblem,
) -> CpStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        *out = ptr::null_mut();
        let chain = TransitionModel::with_assumption(lambda_na, lambda_aa, assumption(assumption_code)?)?;
        let costs = CostModel::new(c_l, c_hn, c_ha, beta)?;
        *out = Box::into_raw(Box::new(CpProblem { chain, hp_chain: None, costs }));
        Ok(())
    })
}

/// Sets the chain followed after an HP offer, making the problem
/// coupon-dependent. Its probabilities must not be below the LP chain's.
///
/// # Safety
/// `problem` must be a handle from `cp_problem_new`.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_set_hp_chain(problem: *mut CpProblem, lambda_na: f64, lambda_aa: f64) -> CpStatus {
    guard(|| {
        let p = get_mut(problem, "problem")?;
        let hp = TransitionModel::monotone(lambda_na, lambda_aa)?;
        CouponDependentModel::new(p.chain, hp)?;
        p.hp_chain = Some(hp);
        Ok(())
    })
}

/// # Safety
/// `problem` must be NULL or a handle from `cp_problem_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_free(problem: *mut CpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_kappa(problem: *const CpProblem, out: *mut f64) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        *get_mut(out, "out")? = kappa(&p.costs)?;
        Ok(())
    })
}

/// Closed-form threshold of the coupon-independent model.
///
/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_solve_threshold(problem: *const CpProblem, out: *mut CpThreshold) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let out = get_mut(out, "out")?;
        let s = solve_threshold(&p.chain, &p.costs)?;
        *out = CpThreshold {
            tau: s.tau,
            kappa: s.kappa,
            p_f: s.p_f.unwrap_or(f64::NAN),
            v_lambda_na: s.v_lambda_na,
            v_lambda_aa: s.v_lambda_aa,
            indifference_residual: s.indifference_residual,
            lambda_case: match s.lambda_case {
                LambdaCase::LambdaNaAboveTau => 0,
                LambdaCase::LambdaNaBelowTau => 1,
            },
            branch: match s.branch {
                Branch::TtauGe => 0,
                Branch::TtauLt => 1,
            },
            n_star: s.n_star.map_or(-1, i64::from),
            tie_break: s.tie_break,
        };
        Ok(())
    })
}

/// Closed-form threshold of the coupon-dependent model. Without an HP chain
/// this equals `cp_solve_threshold`.
///
/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_solve_threshold_cd(problem: *const CpProblem, out: *mut CpCdThreshold) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let out = get_mut(out, "out")?;
        let m = CouponDependentModel::new(p.chain, p.hp_chain.unwrap_or(p.chain))?;
        let s = solve_threshold_cd(&m, &p.costs)?;
        *out = CpCdThreshold {
            tau: s.tau,
            kappa: s.kappa,
            case_id: s.case.map_or(0, i32::from),
            indifference_residual: s.indifference_residual,
            tie_break: s.tie_break,
        };
        Ok(())
    })
}

/// Threshold read off a value-iteration table on `grid` points.
///
/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_oracle_threshold(problem: *const CpProblem, grid: usize, tol: f64, out: *mut f64) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let out = get_mut(out, "out")?;
        let d = match p.hp_chain {
            Some(hp) => Dynamics::coupon_dependent(&p.chain, &hp),
            None => Dynamics::coupon_independent(&p.chain),
        };
        *out = extract_threshold(&solve_dynamics(&d, &p.costs, grid, tol)?)?;
        Ok(())
    })
}

/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_corollary2(problem: *const CpProblem, out: *mut CpCorollary2) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let out = get_mut(out, "out")?;
        let b = corollary2_bounds(&p.chain, &p.costs)?;
        *out = CpCorollary2 {
            lambda1: b.lambda1,
            lambda2: b.lambda2,
            closed_form_tau: b.closed_form_tau.unwrap_or(f64::NAN),
            tau_upper: b.tau_upper,
        };
        Ok(())
    })
}

/// Exact discounted cost from `belief` of the policy "HP iff p <= tau".
///
/// # Safety
/// `problem` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_evaluate_policy(problem: *const CpProblem, tau: f64, belief: f64, out: *mut f64) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let out = get_mut(out, "out")?;
        if !(0.0..=1.0).contains(&belief) {
            return Err(Error::invalid("belief", format!("{belief} is not a probability")).into());
        }
        let d = match p.hp_chain {
            Some(hp) => Dynamics::coupon_dependent(&p.chain, &hp),
            None => Dynamics::coupon_independent(&p.chain),
        };
        *out = evaluate_threshold_policy(&d, &p.costs, tau).value(belief);
        Ok(())
    })
}

/// Uniform cost distributions for LP, HP in Normal and HP in Alerted.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_distributions_new_uniform(
    lp_lo: f64,
    lp_hi: f64,
    hn_lo: f64,
    hn_hi: f64,
    ha_lo: f64,
    ha_hi: f64,
    out: *mut *mut CpDistributions,
) -> CpStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        *out = ptr::null_mut();
        let inner = CostDistributions::new(
            CostDistribution::Uniform { lo: lp_lo, hi: lp_hi },
            CostDistribution::Uniform { lo: hn_lo, hi: hn_hi },
            CostDistribution::Uniform { lo: ha_lo, hi: ha_hi },
        )?;
        *out = Box::into_raw(Box::new(CpDistributions { inner }));
        Ok(())
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_distributions_free(d: *mut CpDistributions) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_likelihood(
    d: *const CpDistributions,
    cost: f64,
    action_code: u32,
    belief: f64,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let d = get(d, "distributions")?;
        *get_mut(out, "out")? = likelihood(cost, action(action_code)?, belief, &d.inner);
        Ok(())
    })
}

/// Threshold variants using the problem's chain and discount. The problem's
/// deterministic costs are ignored.
///
/// # Safety
/// Handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_threshold_variants(
    problem: *const CpProblem,
    d: *const CpDistributions,
    p0: f64,
    out: *mut CpVariants,
) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let d = get(d, "distributions")?;
        let out = get_mut(out, "out")?;
        let v = threshold_variants(&d.inner, &p.chain, p.costs.beta(), p0)?;
        *out = CpVariants {
            tau_avg: v.tau_avg,
            tau_max: v.tau_max.unwrap_or(f64::NAN),
            tau_min: v.tau_min.unwrap_or(f64::NAN),
            tau_r: v.tau_r.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// MAP state detection after observing `cost` for `action_code`. Writes the
/// detected state (`CP_STATE_NONE` after LP) and the next belief.
///
/// # Safety
/// Handles must be valid and outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cp_map_state_update(
    problem: *const CpProblem,
    d: *const CpDistributions,
    belief: f64,
    action_code: u32,
    cost: f64,
    out_state: *mut i32,
    out_belief: *mut f64,
) -> CpStatus {
    guard(|| {
        let p = get(problem, "problem")?;
        let d = get(d, "distributions")?;
        let out_state = get_mut(out_state, "out_state")?;
        let out_belief = get_mut(out_belief, "out_belief")?;
        let (s, next) = map_state_update(belief, action(action_code)?, cost, &p.chain, &d.inner)?;
        *out_state = match s {
            None => CP_STATE_NONE,
            Some(ConsumerState::Normal) => CP_STATE_NORMAL,
            Some(ConsumerState::Alerted) => CP_STATE_ALERTED,
        };
        *out_belief = next;
        Ok(())
    })
}

/// Uniform posterior on `points` grid points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_new_uniform(points: usize, out: *mut *mut CpPosterior) -> CpStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        *out = ptr::null_mut();
        let inner = BeliefPosterior::uniform(points)?;
        *out = Box::into_raw(Box::new(CpPosterior { inner }));
        Ok(())
    })
}

/// Posterior with all mass at the grid point nearest `belief`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_new_point(points: usize, belief: f64, out: *mut *mut CpPosterior) -> CpStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        *out = ptr::null_mut();
        let inner = BeliefPosterior::point_mass(points, belief)?;
        *out = Box::into_raw(Box::new(CpPosterior { inner }));
        Ok(())
    })
}

/// # Safety
/// `q` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_free(q: *mut CpPosterior) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Bayes update in place. On error the posterior is left unchanged.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_update(
    q: *mut CpPosterior,
    d: *const CpDistributions,
    action_code: u32,
    cost: f64,
) -> CpStatus {
    guard(|| {
        let q = get_mut(q, "posterior")?;
        let d = get(d, "distributions")?;
        q.inner = bayes_update(&q.inner, action(action_code)?, cost, &d.inner)?;
        Ok(())
    })
}

/// Pushes the posterior through the problem's LP transition map.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_predict(q: *mut CpPosterior, problem: *const CpProblem) -> CpStatus {
    guard(|| {
        let q = get_mut(q, "posterior")?;
        let p = get(problem, "problem")?;
        q.inner = bayes_predict(&q.inner, &p.chain);
        Ok(())
    })
}

/// # Safety
/// `q` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_estimate(q: *const CpPosterior, mode: u32, out: *mut f64) -> CpStatus {
    guard(|| {
        let q = get(q, "posterior")?;
        let out = get_mut(out, "out")?;
        let mode = match mode {
            CP_ESTIMATE_MEAN => EstimateMode::Mean,
            CP_ESTIMATE_MAP => EstimateMode::Map,
            _ => return Err(Error::invalid("mode", format!("unknown code {mode}")).into()),
        };
        *out = point_estimate(&q.inner, mode);
        Ok(())
    })
}

/// Copies up to `len` cell masses into `buf` and writes the grid size to
/// `out_points`. Pass a NULL `buf` to query the size only.
///
/// # Safety
/// `q` must be valid; `buf` must be NULL or hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_posterior_weights(
    q: *const CpPosterior,
    buf: *mut f64,
    len: usize,
    out_points: *mut usize,
) -> CpStatus {
    guard(|| {
        let q = get(q, "posterior")?;
        let w = q.inner.weights();
        *get_mut(out_points, "out_points")? = w.len();
        if !buf.is_null() {
            let n = len.min(w.len());
            ptr::copy_nonoverlapping(w.as_ptr(), buf, n);
        }
        Ok(())
    })
}
