//! Closed-form optimal threshold for the two-state model.
//!
//! The optimal policy offers HP iff p <= tau. Two facts pin tau down:
//!
//! * the anchor values V(lambda_na), V(lambda_aa) (the beliefs right after an
//!   HP offer), and
//! * the indifference condition V_LP(tau) = V_HP(tau).
//!
//! When lambda_na >= tau every post-HP belief is LP territory and both anchors
//! equal C_L/(1-beta). Otherwise V(lambda_aa) is the best of "n LP offers,
//! then HP" over n >= 0 (the G(n) family), including the n -> infinity limit
//! of LP forever. The indifference condition then has one closed form per
//! sign of T(tau) - tau. All four (anchor case x branch) candidates are
//! computed and the self-consistent one is returned.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{Dynamics, PolicyEvaluation};
use crate::model::{CostModel, TransitionModel};

/// Consistency slack for case conditions.
pub const CASE_TOL: f64 = 1e-9;
/// Truncation level for the G(n) search: beta^n_max <= G_EPS.
pub const G_EPS: f64 = 1e-12;
/// Stop the G(n) search after this many non-improving n.
pub const G_PATIENCE: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// T(tau) >= tau.
    TtauGe,
    /// T(tau) < tau.
    TtauLt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaCase {
    LambdaNaAboveTau,
    LambdaNaBelowTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchors {
    pub v_lambda_na: f64,
    pub v_lambda_aa: f64,
    /// Minimizing n, or `None` when LP forever beats every finite n.
    pub n_star: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub lambda_case: LambdaCase,
    pub branch: Branch,
    pub tau: f64,
    pub consistent: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSolution {
    pub tau: f64,
    pub branch: Branch,
    pub lambda_case: LambdaCase,
    pub v_lambda_na: f64,
    pub v_lambda_aa: f64,
    pub n_star: Option<u32>,
    pub kappa: f64,
    /// Stationary belief; `None` for the identity chain.
    pub p_f: Option<f64>,
    /// |V_LP(tau) - V_HP(tau)| under the returned anchors.
    pub indifference_residual: f64,
    /// More than one candidate was self-consistent.
    pub tie_break: bool,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryBounds {
    pub lambda1: f64,
    pub lambda2: f64,
    pub closed_form_tau: Option<f64>,
    pub tau_upper: f64,
}

/// kappa = (C_L - C_HN) / (C_HA - C_HN): the belief at which HP and LP have
/// equal one-step cost.
pub fn kappa(c: &CostModel) -> Result<f64> {
    let den = c.c_ha() - c.c_hn();
    if den <= 0.0 {
        return Err(Error::DegenerateCosts);
    }
    Ok((c.c_l() - c.c_hn()) / den)
}

/// Number of terms in the G(n) search.
pub fn g_search_limit(beta: f64) -> u32 {
    (G_EPS.ln() / beta.ln()).ceil() as u32
}

/// G(n): value at lambda_aa of offering LP n times and then HP, with the
/// anchors closed under the same rule.
pub fn evaluate_g(n: u32, m: &TransitionModel, c: &CostModel) -> f64 {
    let beta = c.beta();
    let ln = m.lambda_na();
    let t = m.iterate(m.lambda_aa(), n);
    let tbar = 1.0 - t;
    let bn = beta.powi(n as i32);
    let renewal = 1.0 - (1.0 - ln) * beta;
    let c_na = beta * c.hp_cost(ln) / renewal;
    let num = c.c_l() * (1.0 - bn) / (1.0 - beta) + bn * (tbar * (c.c_hn() + c_na) + t * c.c_ha());
    let den = 1.0 - bn * beta * (tbar * ln * beta / renewal + t);
    num / den
}

/// Anchor values V(lambda_na), V(lambda_aa) for the given case.
pub fn value_at_anchors(m: &TransitionModel, c: &CostModel, case: LambdaCase) -> Anchors {
    let beta = c.beta();
    match case {
        LambdaCase::LambdaNaAboveTau => {
            let v = c.lazy_value();
            Anchors { v_lambda_na: v, v_lambda_aa: v, n_star: None }
        }
        LambdaCase::LambdaNaBelowTau => {
            let mut best = c.lazy_value();
            let mut n_star = None;
            let mut stale = 0;
            for n in 0..=g_search_limit(beta) {
                let g = evaluate_g(n, m, c);
                if g < best {
                    best = g;
                    n_star = Some(n);
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= G_PATIENCE {
                        break;
                    }
                }
            }
            let ln = m.lambda_na();
            let v_na = (c.hp_cost(ln) + beta * ln * best) / (1.0 - beta * (1.0 - ln));
            Anchors { v_lambda_na: v_na, v_lambda_aa: best, n_star }
        }
    }
}

fn branch_tau(m: &TransitionModel, c: &CostModel, a: &Anchors, branch: Branch) -> f64 {
    let beta = c.beta();
    let big_a = c.c_hn() + beta * a.v_lambda_na;
    let big_b = c.c_ha() - c.c_hn() + beta * (a.v_lambda_aa - a.v_lambda_na);
    match branch {
        Branch::TtauGe => (c.lazy_value() - big_a) / big_b,
        Branch::TtauLt => {
            (c.c_l() - (1.0 - beta) * big_a + beta * big_b * m.lambda_na())
                / (big_b * (1.0 - beta * m.gap()))
        }
    }
}

fn is_consistent(m: &TransitionModel, tau: f64, case: LambdaCase, branch: Branch) -> bool {
    if !tau.is_finite() || !(-CASE_TOL..=1.0 + CASE_TOL).contains(&tau) {
        return false;
    }
    let lambda_ok = match case {
        LambdaCase::LambdaNaAboveTau => m.lambda_na() >= tau - CASE_TOL,
        LambdaCase::LambdaNaBelowTau => m.lambda_na() < tau + CASE_TOL,
    };
    let t = m.transition(tau);
    let branch_ok = match branch {
        Branch::TtauGe => t >= tau - CASE_TOL,
        Branch::TtauLt => t < tau + CASE_TOL,
    };
    lambda_ok && branch_ok
}

/// |V_LP(tau) - V_HP(tau)| with the given anchors held fixed.
pub fn indifference_residual(m: &TransitionModel, c: &CostModel, tau: f64, a: &Anchors) -> f64 {
    let ev = PolicyEvaluation::with_anchors(
        &Dynamics::coupon_independent(m),
        c,
        tau,
        a.v_lambda_na,
        a.v_lambda_aa,
    );
    (ev.lp_value(tau) - ev.hp_value(tau)).abs()
}

pub fn solve_threshold(m: &TransitionModel, c: &CostModel) -> Result<ThresholdSolution> {
    let k = kappa(c)?;
    let mut candidates = Vec::with_capacity(4);
    let mut anchors_for = Vec::with_capacity(4);
    for case in [LambdaCase::LambdaNaAboveTau, LambdaCase::LambdaNaBelowTau] {
        let a = value_at_anchors(m, c, case);
        for branch in [Branch::TtauGe, Branch::TtauLt] {
            let raw = branch_tau(m, c, &a, branch);
            let consistent = is_consistent(m, raw, case, branch);
            let tau = if raw.is_finite() { raw.clamp(0.0, 1.0) } else { raw };
            let residual = if consistent { indifference_residual(m, c, tau, &a) } else { f64::NAN };
            candidates.push(Candidate { lambda_case: case, branch, tau, consistent, residual });
            anchors_for.push(a);
        }
    }
    let chosen = candidates
        .iter()
        .enumerate()
        .filter(|(_, cand)| cand.consistent)
        .min_by(|(_, x), (_, y)| x.residual.total_cmp(&y.residual))
        .map(|(i, _)| i);
    let Some(i) = chosen else {
        let listing: Vec<String> = candidates
            .iter()
            .map(|cand| format!("{:?}/{:?}: tau={}", cand.lambda_case, cand.branch, cand.tau))
            .collect();
        return Err(Error::NoConsistentCase(listing.join("; ")));
    };
    let n_consistent = candidates.iter().filter(|cand| cand.consistent).count();
    let cand = candidates[i];
    let a = anchors_for[i];
    Ok(ThresholdSolution {
        tau: cand.tau,
        branch: cand.branch,
        lambda_case: cand.lambda_case,
        v_lambda_na: a.v_lambda_na,
        v_lambda_aa: a.v_lambda_aa,
        n_star: a.n_star,
        kappa: k,
        p_f: m.stationary().ok(),
        indifference_residual: cand.residual,
        tie_break: n_consistent > 1,
        candidates,
    })
}

/// HP is optimal at p whenever p <= kappa, whatever the chain.
pub fn corollary1_hp_bound(c: &CostModel, p: f64) -> bool {
    match kappa(c) {
        Ok(k) => p <= k,
        // All three costs equal: HP never loses.
        Err(_) => true,
    }
}

/// Threshold in the middle regime lambda2 < lambda_na < lambda1.
pub fn middle_regime_tau(c: &CostModel, lambda_na: f64) -> f64 {
    let beta = c.beta();
    (beta * (c.c_l() - c.c_ha()) * lambda_na + c.c_l() - c.c_hn())
        / ((1.0 - beta) * c.c_ha() - c.c_hn() + beta * c.c_l())
}

pub fn corollary2_bounds(m: &TransitionModel, c: &CostModel) -> Result<CorollaryBounds> {
    let lambda1 = kappa(c)?;
    let la = m.lambda_aa();
    let h = |x: f64| x / (1.0 - (la - x)) - middle_regime_tau(c, x);
    let (mut lo, mut hi) = (0.0, lambda1);
    let (h_lo, h_hi) = (h(lo), h(hi));
    if !(h_lo.is_finite() && h_hi.is_finite()) || h_lo > 0.0 || h_hi < 0.0 {
        return Err(Error::NoRoot(format!(
            "h(0)={h_lo}, h(lambda1)={h_hi} do not bracket a root on [0, {lambda1}]"
        )));
    }
    let lambda2 = if h_lo == 0.0 {
        0.0
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let ln = m.lambda_na();
    let closed_form_tau = if ln > lambda1 {
        Some(lambda1)
    } else if ln > lambda2 && ln < lambda1 {
        Some(middle_regime_tau(c, ln))
    } else {
        None
    };
    let tau_upper = lambda2 / (1.0 - (la - lambda2));
    Ok(CorollaryBounds { lambda1, lambda2, closed_form_tau, tau_upper })
}
