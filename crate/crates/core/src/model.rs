//! Two-state consumer model: alerted-state Markov chain, coupon costs and
//! the one-step Bellman backup in time-normalized form.
//!
//! Values are stationary: the cost-to-go at stage t divided by beta^t does
//! not depend on t, so every solver works with a single value function
//! V(p) on beliefs p = P(Alerted).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary slack when validating probabilities.
pub const PROB_TOL: f64 = 1e-12;

/// Validate a probability, snapping values within `PROB_TOL` of the unit
/// interval onto it.
pub fn check_probability(field: &str, x: f64) -> Result<f64> {
    if !x.is_finite() || !(-PROB_TOL..=1.0 + PROB_TOL).contains(&x) {
        return Err(Error::invalid(field, format!("{x} is not a probability in [0, 1]")));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Probability that the consumer is Alerted.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Belief(f64);

impl Belief {
    pub fn new(p: f64) -> Result<Self> {
        check_probability("belief", p).map(Belief)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    /// Generic, low-privacy-risk coupon.
    Lp,
    /// Targeted, high-privacy-risk coupon.
    Hp,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Lp => "LP",
            Action::Hp => "HP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsumerState {
    Normal,
    Alerted,
}

impl ConsumerState {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsumerState::Normal => "normal",
            ConsumerState::Alerted => "alerted",
        }
    }
}

/// How strictly a transition model is validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assumption {
    /// Consumer inertia: lambda_aa >= 0.5, lambda_na <= 0.5,
    /// lambda_na >= 1 - lambda_aa, lambda_na <= lambda_aa.
    #[default]
    Strict,
    /// Only 0 <= lambda_na <= lambda_aa <= 1. The closed forms hold here too.
    Monotone,
    /// Any pair of probabilities. Only the value-iteration oracle is
    /// meaningful on such chains.
    Permissive,
}

/// Alerted-state chain. `lambda_na` = P(Normal -> Alerted),
/// `lambda_aa` = P(Alerted -> Alerted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionModel {
    lambda_na: f64,
    lambda_aa: f64,
}

impl TransitionModel {
    /// Strict constructor enforcing consumer inertia.
    pub fn new(lambda_na: f64, lambda_aa: f64) -> Result<Self> {
        Self::with_assumption(lambda_na, lambda_aa, Assumption::Strict)
    }

    pub fn monotone(lambda_na: f64, lambda_aa: f64) -> Result<Self> {
        Self::with_assumption(lambda_na, lambda_aa, Assumption::Monotone)
    }

    pub fn permissive(lambda_na: f64, lambda_aa: f64) -> Result<Self> {
        Self::with_assumption(lambda_na, lambda_aa, Assumption::Permissive)
    }

    pub fn with_assumption(lambda_na: f64, lambda_aa: f64, assumption: Assumption) -> Result<Self> {
        let na = check_probability("lambda_na", lambda_na)?;
        let aa = check_probability("lambda_aa", lambda_aa)?;
        if assumption != Assumption::Permissive && na > aa + PROB_TOL {
            return Err(Error::InertiaViolated(format!(
                "need lambda_na <= lambda_aa, got lambda_na={na}, lambda_aa={aa}"
            )));
        }
        if assumption == Assumption::Strict {
            if aa < 0.5 - PROB_TOL {
                return Err(Error::InertiaViolated(format!("need lambda_aa >= 0.5, got {aa}")));
            }
            if na > 0.5 + PROB_TOL {
                return Err(Error::InertiaViolated(format!("need lambda_na <= 0.5, got {na}")));
            }
            if na < 1.0 - aa - PROB_TOL {
                return Err(Error::InertiaViolated(format!(
                    "need lambda_na >= 1 - lambda_aa, got lambda_na={na}, lambda_aa={aa}"
                )));
            }
        }
        let aa = if assumption == Assumption::Permissive { aa } else { aa.max(na) };
        Ok(TransitionModel { lambda_na: na, lambda_aa: aa })
    }

    pub fn lambda_na(&self) -> f64 {
        self.lambda_na
    }

    pub fn lambda_aa(&self) -> f64 {
        self.lambda_aa
    }

    /// Contraction factor of T, lambda_aa - lambda_na.
    pub fn gap(&self) -> f64 {
        self.lambda_aa - self.lambda_na
    }

    /// T(p) = (1-p) lambda_na + p lambda_aa.
    pub fn transition(&self, p: f64) -> f64 {
        (1.0 - p) * self.lambda_na + p * self.lambda_aa
    }

    /// T^n(p).
    pub fn iterate(&self, p: f64, n: u32) -> f64 {
        match self.stationary() {
            Ok(pf) => pf + (p - pf) * self.gap().powi(n as i32),
            // lambda_na = 0, lambda_aa = 1: T is the identity.
            Err(_) => p,
        }
    }

    /// Fixed point p_F of T.
    pub fn stationary(&self) -> Result<f64> {
        let den = 1.0 - self.lambda_aa + self.lambda_na;
        if den <= 0.0 {
            return Err(Error::DegenerateChain);
        }
        Ok(self.lambda_na / den)
    }

    /// Probability of being Alerted next step given the current state.
    pub fn alert_probability(&self, state: ConsumerState) -> f64 {
        match state {
            ConsumerState::Normal => self.lambda_na,
            ConsumerState::Alerted => self.lambda_aa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    c_l: f64,
    c_hn: f64,
    c_ha: f64,
    beta: f64,
}

impl CostModel {
    pub fn new(c_l: f64, c_hn: f64, c_ha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("c_l", c_l), ("c_hn", c_hn), ("c_ha", c_ha), ("beta", beta)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} is not finite")));
            }
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", format!("need 0 < beta < 1, got {beta}")));
        }
        if c_hn > c_l {
            return Err(Error::invalid("c_hn", format!("need c_hn <= c_l, got c_hn={c_hn} > c_l={c_l}")));
        }
        if c_l > c_ha {
            return Err(Error::invalid("c_ha", format!("need c_l <= c_ha, got c_l={c_l} > c_ha={c_ha}")));
        }
        Ok(CostModel { c_l, c_hn, c_ha, beta })
    }

    pub fn c_l(&self) -> f64 {
        self.c_l
    }

    pub fn c_hn(&self) -> f64 {
        self.c_hn
    }

    pub fn c_ha(&self) -> f64 {
        self.c_ha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Expected HP cost at belief p.
    pub fn hp_cost(&self, p: f64) -> f64 {
        (1.0 - p) * self.c_hn + p * self.c_ha
    }

    pub fn cost(&self, p: f64, u: Action) -> f64 {
        match u {
            Action::Lp => self.c_l,
            Action::Hp => self.hp_cost(p),
        }
    }

    /// Largest absolute one-step cost.
    pub fn c_max(&self) -> f64 {
        self.c_l.abs().max(self.c_hn.abs()).max(self.c_ha.abs())
    }

    /// Value of offering LP forever.
    pub fn lazy_value(&self) -> f64 {
        self.c_l / (1.0 - self.beta)
    }

    pub fn with_c_l(&self, c_l: f64) -> Result<Self> {
        CostModel::new(c_l, self.c_hn, self.c_ha, self.beta)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        CostModel::new(self.c_l, self.c_hn, self.c_ha, beta)
    }
}

pub fn one_step_transition(p: Belief, m: &TransitionModel) -> Belief {
    Belief(m.transition(p.0).clamp(0.0, 1.0))
}

pub fn stationary_belief(m: &TransitionModel) -> Result<Belief> {
    m.stationary().map(Belief)
}

pub fn instantaneous_cost(p: Belief, u: Action, c: &CostModel) -> f64 {
    c.cost(p.0, u)
}

/// One normalized Bellman backup at belief p under action u.
///
/// HP reveals the state, so the next belief is one of the two chain rows;
/// LP reveals nothing and the belief moves to T(p).
pub fn bellman_backup<F>(p: Belief, u: Action, v_next: F, m: &TransitionModel, c: &CostModel) -> f64
where
    F: Fn(f64) -> f64,
{
    let p = p.0;
    match u {
        Action::Hp => {
            c.hp_cost(p) + c.beta * ((1.0 - p) * v_next(m.lambda_na) + p * v_next(m.lambda_aa))
        }
        Action::Lp => c.c_l + c.beta * v_next(m.transition(p)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(p: f64) -> Belief {
        Belief::new(p).unwrap()
    }

    #[test]
    fn transition_endpoints_and_fixed_point() {
        let m = TransitionModel::new(0.2, 0.8).unwrap();
        assert_eq!(one_step_transition(b(0.0), &m).get(), 0.2);
        assert_eq!(one_step_transition(b(1.0), &m).get(), 0.8);
        assert!((one_step_transition(b(0.5), &m).get() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_examples() {
        let m = TransitionModel::new(0.2, 0.8).unwrap();
        assert!((stationary_belief(&m).unwrap().get() - 0.5).abs() < 1e-15);
        let m = TransitionModel::monotone(0.1, 0.7).unwrap();
        assert!((stationary_belief(&m).unwrap().get() - 0.25).abs() < 1e-15);
        let m = TransitionModel::new(0.0, 1.0).unwrap();
        assert!(matches!(stationary_belief(&m), Err(Error::DegenerateChain)));
    }

    #[test]
    fn instantaneous_cost_examples() {
        let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
        assert!((instantaneous_cost(b(0.3), Action::Hp, &c) - 4.3).abs() < 1e-12);
        assert_eq!(instantaneous_cost(b(0.9), Action::Lp, &c), 3.0);
        assert_eq!(instantaneous_cost(b(0.0), Action::Hp, &c), 1.0);
    }

    #[test]
    fn backup_with_zero_and_constant_continuation() {
        let m = TransitionModel::new(0.2, 0.8).unwrap();
        let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
        for p in [0.0, 0.3, 1.0] {
            for u in [Action::Lp, Action::Hp] {
                let v = bellman_backup(b(p), u, |_| 0.0, &m, &c);
                assert!((v - c.cost(p, u)).abs() < 1e-12);
            }
        }
        let v = bellman_backup(b(0.5), Action::Lp, |_| 7.0, &m, &c);
        assert!((v - (3.0 + 0.9 * 7.0)).abs() < 1e-12);
    }

    #[test]
    fn strict_constructor_rejects_each_inequality() {
        assert!(matches!(TransitionModel::new(0.6, 0.7), Err(Error::InertiaViolated(_))));
        assert!(matches!(TransitionModel::new(0.3, 0.4), Err(Error::InertiaViolated(_))));
        assert!(matches!(TransitionModel::new(0.1, 0.7), Err(Error::InertiaViolated(_))));
        assert!(TransitionModel::monotone(0.1, 0.7).is_ok());
        assert!(matches!(TransitionModel::monotone(0.8, 0.7), Err(Error::InertiaViolated(_))));
        assert!(TransitionModel::permissive(0.8, 0.7).is_ok());
        assert!(TransitionModel::new(1.2, 0.7).is_err());
    }

    #[test]
    fn boundary_slack_snaps_to_unit_interval() {
        let m = TransitionModel::new(0.5 + 1e-13, 1.0 + 1e-13).unwrap();
        assert_eq!(m.lambda_aa(), 1.0);
        assert!(Belief::new(-1e-13).unwrap().get() == 0.0);
        assert!(Belief::new(-1e-9).is_err());
    }

    #[test]
    fn cost_validation() {
        assert!(CostModel::new(3.0, 4.0, 12.0, 0.9).is_err());
        assert!(CostModel::new(13.0, 1.0, 12.0, 0.9).is_err());
        assert!(CostModel::new(3.0, 1.0, 12.0, 1.0).is_err());
        assert!(CostModel::new(3.0, 1.0, 12.0, 0.0).is_err());
        assert!(CostModel::new(f64::NAN, 1.0, 12.0, 0.5).is_err());
    }

    fn monotone_model() -> impl Strategy<Value = TransitionModel> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| {
            let (na, aa) = if a <= b { (a, b) } else { (b, a) };
            TransitionModel::monotone(na, aa).unwrap()
        })
    }

    proptest! {
        #[test]
        fn transition_is_affine_nondecreasing(m in monotone_model(), p in 0.0..=1.0f64, q in 0.0..=1.0f64) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(m.transition(lo) <= m.transition(hi) + 1e-15);
            let mid = 0.5 * (lo + hi);
            let affine = 0.5 * (m.transition(lo) + m.transition(hi));
            prop_assert!((m.transition(mid) - affine).abs() < 1e-14);
        }

        #[test]
        fn iterates_contract_to_stationary(m in monotone_model(), n in 0u32..40) {
            prop_assume!(m.gap() < 1.0);
            let pf = m.stationary().unwrap();
            for i in 0..=20 {
                let p = i as f64 / 20.0;
                let mut x = p;
                for _ in 0..n {
                    x = m.transition(x);
                }
                prop_assert!((x - pf).abs() <= m.gap().powi(n as i32) + 1e-12);
                prop_assert!((m.iterate(p, n) - x).abs() < 1e-12);
            }
        }

        #[test]
        fn hp_cost_affine_increasing(p in 0.0..=1.0f64, q in 0.0..=1.0f64, chn in 0.0..5.0f64, gap in 0.1..20.0f64, s in 0.0..=1.0f64) {
            let c = CostModel::new(chn + s * gap, chn, chn + gap, 0.9).unwrap();
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(c.hp_cost(lo) <= c.hp_cost(hi) + 1e-12);
            prop_assert_eq!(c.cost(lo, Action::Lp), c.cost(hi, Action::Lp));
        }

        #[test]
        fn backup_is_monotone(m in monotone_model(), p in 0.0..=1.0f64, k in 0.0..10.0f64, slope in 0.0..5.0f64, bump in 0.0..3.0f64) {
            let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
            let v = |x: f64| k + slope * x;
            let w = |x: f64| k + slope * x + bump * x * (1.0 - x);
            for u in [Action::Lp, Action::Hp] {
                prop_assert!(bellman_backup(Belief::new(p).unwrap(), u, v, &m, &c)
                    <= bellman_backup(Belief::new(p).unwrap(), u, w, &m, &c) + 1e-12);
            }
        }
    }
}
