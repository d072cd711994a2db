//! Exact evaluation of a fixed threshold policy.
//!
//! Under "HP iff p <= tau" the belief path from any x is deterministic until
//! the first HP offer: LP steps move x along T until T^k(x) <= tau, and the
//! HP offer then resets the belief to one of two anchors. So the policy value
//! is a closed expression in the two anchor values, which solve a 2x2 linear
//! system.

use crate::model::{Action, CostModel, TransitionModel};

/// Belief dynamics shared by the coupon-independent and coupon-dependent
/// models: LP moves the belief through `lp`, HP reveals the state and the
/// belief jumps to `hp_na` (was Normal) or `hp_aa` (was Alerted).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    pub lp: TransitionModel,
    pub hp_na: f64,
    pub hp_aa: f64,
}

impl Dynamics {
    pub fn coupon_independent(m: &TransitionModel) -> Self {
        Dynamics { lp: *m, hp_na: m.lambda_na(), hp_aa: m.lambda_aa() }
    }

    pub fn coupon_dependent(lp: &TransitionModel, hp: &TransitionModel) -> Self {
        Dynamics { lp: *lp, hp_na: hp.lambda_na(), hp_aa: hp.lambda_aa() }
    }

    pub fn next_belief(&self, p: f64, u: Action) -> f64 {
        match u {
            Action::Lp => self.lp.transition(p),
            Action::Hp => (1.0 - p) * self.hp_na + p * self.hp_aa,
        }
    }
}

/// Value function of the policy "HP iff p <= tau".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEvaluation {
    pub tau: f64,
    /// Value at the post-HP anchor reached from Normal.
    pub v_hp_na: f64,
    /// Value at the post-HP anchor reached from Alerted.
    pub v_hp_aa: f64,
    dynamics: Dynamics,
    costs: CostModel,
    max_steps: u32,
}

/// Steps after which beta^k is below 1e-17 and the tail is dropped.
fn step_cap(beta: f64) -> u32 {
    ((1e-17f64).ln() / beta.ln()).ceil().min(1e7) as u32
}

/// First k >= 0 with T^k(x) <= tau, and T^k(x). `None` means LP forever
/// (within the discount cap).
fn first_hp(lp: &TransitionModel, x: f64, tau: f64, cap: u32) -> Option<(u32, f64)> {
    let mut q = x;
    for k in 0..=cap {
        if q <= tau {
            return Some((k, q));
        }
        let next = lp.transition(q);
        if next == q {
            return None;
        }
        q = next;
    }
    None
}

/// Affine form value(x) = constant + coef . (v_hp_na, v_hp_aa).
fn affine_value(d: &Dynamics, c: &CostModel, x: f64, tau: f64, cap: u32) -> (f64, [f64; 2]) {
    let beta = c.beta();
    match first_hp(&d.lp, x, tau, cap) {
        None => (c.lazy_value(), [0.0, 0.0]),
        Some((k, q)) => {
            let bk = beta.powi(k as i32);
            let constant = c.c_l() * (1.0 - bk) / (1.0 - beta) + bk * c.hp_cost(q);
            (constant, [bk * beta * (1.0 - q), bk * beta * q])
        }
    }
}

pub fn evaluate_threshold_policy(d: &Dynamics, c: &CostModel, tau: f64) -> PolicyEvaluation {
    let cap = step_cap(c.beta());
    let (kn, cn) = affine_value(d, c, d.hp_na, tau, cap);
    let (ka, ca) = affine_value(d, c, d.hp_aa, tau, cap);
    // (I - M) a = k
    let m00 = 1.0 - cn[0];
    let m01 = -cn[1];
    let m10 = -ca[0];
    let m11 = 1.0 - ca[1];
    let det = m00 * m11 - m01 * m10;
    let v_hp_na = (kn * m11 - m01 * ka) / det;
    let v_hp_aa = (m00 * ka - m10 * kn) / det;
    PolicyEvaluation { tau, v_hp_na, v_hp_aa, dynamics: *d, costs: *c, max_steps: cap }
}

impl PolicyEvaluation {
    /// Threshold policy value with externally supplied anchor values.
    pub fn with_anchors(d: &Dynamics, c: &CostModel, tau: f64, v_hp_na: f64, v_hp_aa: f64) -> Self {
        PolicyEvaluation { tau, v_hp_na, v_hp_aa, dynamics: *d, costs: *c, max_steps: step_cap(c.beta()) }
    }

    /// Value of the policy started at belief p.
    pub fn value(&self, p: f64) -> f64 {
        let (k, coef) = affine_value(&self.dynamics, &self.costs, p, self.tau, self.max_steps);
        k + coef[0] * self.v_hp_na + coef[1] * self.v_hp_aa
    }

    /// Cost of offering HP now and following the policy afterwards.
    pub fn hp_value(&self, p: f64) -> f64 {
        self.costs.hp_cost(p) + self.costs.beta() * ((1.0 - p) * self.v_hp_na + p * self.v_hp_aa)
    }

    /// Cost of offering LP now and following the policy afterwards.
    pub fn lp_value(&self, p: f64) -> f64 {
        self.costs.c_l() + self.costs.beta() * self.value(self.dynamics.lp.transition(p))
    }
}
