//! Noisy cost feedback.
//!
//! Realized costs are random draws from bounded distributions that depend on
//! the action and, for HP, on the hidden state. An HP cost is then only
//! evidence about the state. Two estimators turn that evidence into a belief:
//!
//! * MAP state detection: pick the likelier state and reset the belief to the
//!   matching chain row, as if the state had been revealed.
//! * A Bayesian filter over p itself: reweight by the HP likelihood, then
//!   push the distribution through the affine map T.
//!
//! The posterior is stored as cell masses on a uniform grid. Cell i covers
//! [p_i - h/2, p_i + h/2] clipped to [0, 1], so the two end cells are half
//! width. Sums over cells match the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_threshold_policy, Dynamics};
use crate::model::{Action, ConsumerState, CostModel, TransitionModel};
use crate::threshold::solve_threshold;

pub const DEFAULT_POSTERIOR_GRID: usize = 1001;
const MASS_TOL: f64 = 1e-9;
const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CostDistribution {
    Uniform { lo: f64, hi: f64 },
    Discrete { points: Vec<f64>, masses: Vec<f64> },
}

impl CostDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = CostDistribution::Uniform { lo, hi };
        d.validate("distribution")?;
        Ok(d)
    }

    pub fn point(c: f64) -> Self {
        CostDistribution::Discrete { points: vec![c], masses: vec![1.0] }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            CostDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid(field, format!("uniform needs finite lo < hi, got [{lo}, {hi}]")));
                }
            }
            CostDistribution::Discrete { points, masses } => {
                if points.is_empty() || points.len() != masses.len() {
                    return Err(Error::invalid(field, "discrete needs equally many points and masses"));
                }
                if points.iter().any(|x| !x.is_finite()) || masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return Err(Error::invalid(field, "points must be finite and masses nonnegative"));
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::invalid(field, format!("masses sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Density (uniform) or point mass (discrete) at c.
    pub fn density(&self, c: f64) -> f64 {
        match self {
            CostDistribution::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&c) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            CostDistribution::Discrete { points, masses } => points
                .iter()
                .zip(masses)
                .filter(|(x, _)| (*x - c).abs() <= POINT_TOL * x.abs().max(1.0))
                .map(|(_, m)| m)
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CostDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            CostDistribution::Discrete { points, masses } => points.iter().zip(masses).map(|(x, m)| x * m).sum(),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            CostDistribution::Uniform { lo, .. } => *lo,
            CostDistribution::Discrete { points, masses } => points
                .iter()
                .zip(masses)
                .filter(|(_, m)| **m > 0.0)
                .map(|(x, _)| *x)
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            CostDistribution::Uniform { hi, .. } => *hi,
            CostDistribution::Discrete { points, masses } => points
                .iter()
                .zip(masses)
                .filter(|(_, m)| **m > 0.0)
                .map(|(x, _)| *x)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Inverse CDF at u in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            CostDistribution::Uniform { lo, hi } => lo + (hi - lo) * u,
            CostDistribution::Discrete { points, masses } => {
                let mut acc = 0.0;
                for (x, m) in points.iter().zip(masses) {
                    acc += m;
                    if u < acc {
                        return *x;
                    }
                }
                *points.last().unwrap()
            }
        }
    }
}

/// The LP distribution is shared by both states: an LP cost carries no
/// information about the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistributions {
    pub lp: CostDistribution,
    pub hn: CostDistribution,
    pub ha: CostDistribution,
}

impl CostDistributions {
    pub fn new(lp: CostDistribution, hn: CostDistribution, ha: CostDistribution) -> Result<Self> {
        lp.validate("distributions.lp")?;
        hn.validate("distributions.hn")?;
        ha.validate("distributions.ha")?;
        Ok(CostDistributions { lp, hn, ha })
    }

    pub fn for_outcome(&self, state: ConsumerState, u: Action) -> &CostDistribution {
        match (u, state) {
            (Action::Lp, _) => &self.lp,
            (Action::Hp, ConsumerState::Normal) => &self.hn,
            (Action::Hp, ConsumerState::Alerted) => &self.ha,
        }
    }

    /// Deterministic model with the expected costs.
    pub fn mean_costs(&self, beta: f64) -> Result<CostModel> {
        CostModel::new(self.lp.mean(), self.hn.mean(), self.ha.mean(), beta)
    }
}

/// Likelihood of cost c after action u at belief p.
pub fn likelihood(c: f64, u: Action, p: f64, d: &CostDistributions) -> f64 {
    match u {
        Action::Lp => d.lp.density(c),
        Action::Hp => d.hn.density(c) * (1.0 - p) + d.ha.density(c) * p,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerThreshold {
    pub c_l: f64,
    pub c_hn: f64,
    pub c_ha: f64,
    pub tau: f64,
    /// Worst-case value at p0 over all corners when using this tau.
    pub worst_case_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdVariants {
    /// Threshold for the expected costs.
    pub tau_avg: f64,
    /// Threshold for (max C_L, max C_HN, max C_HA); `None` if that triple
    /// breaks C_HN <= C_L <= C_HA.
    pub tau_max: Option<f64>,
    /// Threshold for (min C_L, max C_HN, min C_HA); `None` if inadmissible.
    pub tau_min: Option<f64>,
    /// Corner threshold with the smallest worst-case cost at p0.
    pub tau_r: Option<f64>,
    pub corners: Vec<CornerThreshold>,
}

fn corner_tau(m: &TransitionModel, c_l: f64, c_hn: f64, c_ha: f64, beta: f64) -> Option<(CostModel, f64)> {
    let c = CostModel::new(c_l, c_hn, c_ha, beta).ok()?;
    let s = solve_threshold(m, &c).ok()?;
    Some((c, s.tau))
}

/// The four threshold variants. `p0` is the initial belief at which the
/// robust variant's worst-case cost is measured.
pub fn threshold_variants(
    d: &CostDistributions,
    m: &TransitionModel,
    beta: f64,
    p0: f64,
) -> Result<ThresholdVariants> {
    let tau_avg = solve_threshold(m, &d.mean_costs(beta)?)?.tau;
    let tau_max = corner_tau(m, d.lp.max(), d.hn.max(), d.ha.max(), beta).map(|x| x.1);
    let tau_min = corner_tau(m, d.lp.min(), d.hn.max(), d.ha.min(), beta).map(|x| x.1);

    let mut corner_costs = Vec::new();
    for c_l in [d.lp.min(), d.lp.max()] {
        for c_hn in [d.hn.min(), d.hn.max()] {
            for c_ha in [d.ha.min(), d.ha.max()] {
                if let Some(x) = corner_tau(m, c_l, c_hn, c_ha, beta) {
                    corner_costs.push(x);
                }
            }
        }
    }
    let dynamics = Dynamics::coupon_independent(m);
    let worst = |tau: f64| {
        corner_costs
            .iter()
            .map(|(c, _)| evaluate_threshold_policy(&dynamics, c, tau).value(p0))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let corners: Vec<CornerThreshold> = corner_costs
        .iter()
        .map(|(c, tau)| CornerThreshold {
            c_l: c.c_l(),
            c_hn: c.c_hn(),
            c_ha: c.c_ha(),
            tau: *tau,
            worst_case_value: worst(*tau),
        })
        .collect();
    let best = corners.iter().map(|c| c.worst_case_value).fold(f64::INFINITY, f64::min);
    // Ties go to the larger threshold.
    let tau_r = corners
        .iter()
        .filter(|c| c.worst_case_value <= best + 1e-9 * best.abs().max(1.0))
        .map(|c| c.tau)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    Ok(ThresholdVariants { tau_avg, tau_max, tau_min, tau_r, corners })
}

/// MAP state estimate after observing `c_prev` for action `u_prev`, and the
/// resulting belief. LP carries no information and the belief moves along T.
pub fn map_state_update(
    p_hat: f64,
    u_prev: Action,
    c_prev: f64,
    m: &TransitionModel,
    d: &CostDistributions,
) -> Result<(Option<ConsumerState>, f64)> {
    match u_prev {
        Action::Lp => Ok((None, m.transition(p_hat))),
        Action::Hp => {
            let f_n = d.hn.density(c_prev);
            let f_a = d.ha.density(c_prev);
            if f_n == 0.0 && f_a == 0.0 {
                return Err(Error::ZeroLikelihood { cost: c_prev });
            }
            // Normal iff f_N (1-p) / (f_A p) > 1; ties go to Alerted.
            let state = if f_n * (1.0 - p_hat) > f_a * p_hat {
                ConsumerState::Normal
            } else {
                ConsumerState::Alerted
            };
            Ok((Some(state), m.alert_probability(state)))
        }
    }
}

/// Discretized distribution over the belief p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefPosterior {
    grid: Vec<f64>,
    widths: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    Mean,
    Map,
}

impl BeliefPosterior {
    fn empty(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("posterior_grid", format!("need at least 2 points, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let widths = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
        Ok(BeliefPosterior { grid, widths, weights: vec![0.0; n] })
    }

    /// Uniform density on [0, 1].
    pub fn uniform(n: usize) -> Result<Self> {
        let mut q = Self::empty(n)?;
        q.weights = q.widths.clone();
        Ok(q)
    }

    /// All mass on the grid point nearest to p.
    pub fn point_mass(n: usize, p: f64) -> Result<Self> {
        let mut q = Self::empty(n)?;
        let i = q.cell_of(p);
        q.weights[i] = 1.0;
        Ok(q)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> f64 {
        self.grid[1]
    }

    /// Density value w_i / width_i at each grid point.
    pub fn density(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.widths).map(|(w, h)| w / h).collect()
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn cell_of(&self, p: f64) -> usize {
        let n = self.grid.len();
        ((p.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize).min(n - 1)
    }

    fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let h = self.step();
        ((self.grid[i] - 0.5 * h).max(0.0), (self.grid[i] + 0.5 * h).min(1.0))
    }

    fn normalize(&mut self, cost: f64) -> Result<()> {
        let total = self.total_mass();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ZeroEvidence { cost });
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(())
    }
}

/// Posterior over the current belief after observing cost `c_prev` for action
/// `u_prev`. LP costs do not depend on p and leave q unchanged.
pub fn bayes_update(q: &BeliefPosterior, u_prev: Action, c_prev: f64, d: &CostDistributions) -> Result<BeliefPosterior> {
    let mut out = q.clone();
    if u_prev == Action::Hp {
        for (w, p) in out.weights.iter_mut().zip(&q.grid) {
            *w *= likelihood(c_prev, Action::Hp, *p, d);
        }
        out.normalize(c_prev)?;
    }
    Ok(out)
}

/// Distribution of T(P) for P ~ q. Each cell's mass is spread uniformly over
/// the image of the cell and re-binned by overlap, which keeps the total mass
/// and never moves mass outside the image. A constant map (lambda_na =
/// lambda_aa) collapses everything to one point.
pub fn bayes_predict(q: &BeliefPosterior, m: &TransitionModel) -> BeliefPosterior {
    let mut out = q.clone();
    out.weights.iter_mut().for_each(|w| *w = 0.0);
    for (i, &w) in q.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (lo, hi) = q.cell_bounds(i);
        let (a, b) = {
            let (x, y) = (m.transition(lo), m.transition(hi));
            (x.min(y), x.max(y))
        };
        if b - a <= 1e-15 {
            let j = out.cell_of(0.5 * (a + b));
            out.weights[j] += w;
            continue;
        }
        for j in out.cell_of(a)..=out.cell_of(b) {
            let (cl, ch) = out.cell_bounds(j);
            let overlap = b.min(ch) - a.max(cl);
            if overlap > 0.0 {
                out.weights[j] += w * overlap / (b - a);
            }
        }
    }
    let total = out.total_mass();
    out.weights.iter_mut().for_each(|w| *w /= total);
    out
}

pub fn point_estimate(q: &BeliefPosterior, mode: EstimateMode) -> f64 {
    match mode {
        EstimateMode::Mean => q.grid.iter().zip(&q.weights).map(|(p, w)| p * w).sum(),
        EstimateMode::Map => {
            let dens = q.density();
            let top = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let i = dens.iter().position(|&x| x >= top - 1e-12 * top.abs()).unwrap_or(0);
            q.grid[i]
        }
    }
}
