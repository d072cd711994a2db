//! Value iteration on a discretized belief interval.
//!
//! This is the brute-force oracle the closed forms are checked against. It
//! shares nothing with `threshold` beyond the model types: the Bellman
//! operator is applied on a uniform grid with linear interpolation for
//! off-grid beliefs, Jacobi style (read one buffer, write the other).

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::Dynamics;
use crate::model::{Action, CostModel, TransitionModel};

pub const DEFAULT_GRID: usize = 2001;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Extra sweeps allowed beyond the contraction bound.
pub const SWEEP_MARGIN: usize = 100;
/// Slack for monotonicity and concavity checks.
pub const STRUCTURE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefGrid {
    points: Vec<f64>,
    step: f64,
}

impl BeliefGrid {
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid", format!("need at least 2 points, got {n}")));
        }
        let step = 1.0 / (n - 1) as f64;
        let points = (0..n).map(|i| i as f64 * step).collect();
        Ok(BeliefGrid { points, step })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Left cell index and weight of the right neighbour for belief x.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.points.len();
        let s = (x.clamp(0.0, 1.0) * (n - 1) as f64).min((n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (i, w) = self.locate(x);
        if w == 0.0 {
            values[i]
        } else {
            (1.0 - w) * values[i] + w * values[i + 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable {
    pub grid: BeliefGrid,
    pub values: Vec<f64>,
    pub actions: Vec<Action>,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub sweeps: usize,
    /// Sup-norm change of every sweep, in order.
    pub residual_history: Vec<f64>,
}

impl ValueTable {
    /// Assemble a table by hand, e.g. for testing the structure checks.
    pub fn from_parts(grid: BeliefGrid, values: Vec<f64>, actions: Vec<Action>) -> Result<Self> {
        if values.len() != grid.len() || actions.len() != grid.len() {
            return Err(Error::invalid("table", "values and actions must match the grid length"));
        }
        Ok(ValueTable { grid, values, actions, residual: 0.0, sweeps: 0, residual_history: Vec::new() })
    }

    pub fn value_at(&self, p: f64) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["p", "value", "action"])?;
        for ((p, v), a) in self.grid.points().iter().zip(&self.values).zip(&self.actions) {
            out.write_record([p.to_string(), v.to_string(), a.as_str().to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sweeps needed for a beta-contraction started at zero to reach `tol`,
/// plus a margin.
pub fn default_max_sweeps(beta: f64, tol: f64, c_max: f64) -> usize {
    if c_max <= 0.0 {
        return SWEEP_MARGIN;
    }
    let bound = (tol * (1.0 - beta) / c_max).ln() / beta.ln();
    bound.max(0.0).ceil() as usize + SWEEP_MARGIN
}

/// HP wins ties, with a relative slack for rounding.
pub fn prefers_hp(hp: f64, lp: f64) -> bool {
    hp <= lp + 1e-12 * lp.abs().max(1.0)
}

/// Value iteration for the two-state model.
pub fn solve_two_state(m: &TransitionModel, c: &CostModel, grid_size: usize, tol: f64) -> Result<ValueTable> {
    solve_dynamics(&Dynamics::coupon_independent(m), c, grid_size, tol)
}

/// Value iteration for any dynamics of the "LP moves along T, HP jumps to an
/// anchor" form.
pub fn solve_dynamics(d: &Dynamics, c: &CostModel, grid_size: usize, tol: f64) -> Result<ValueTable> {
    if grid_size < 101 {
        return Err(Error::invalid("grid", format!("need at least 101 points, got {grid_size}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol", format!("need tol > 0, got {tol}")));
    }
    let grid = BeliefGrid::uniform(grid_size)?;
    let beta = c.beta();
    let lp_stencil: Vec<(usize, f64)> = grid.points().iter().map(|&p| grid.locate(d.lp.transition(p))).collect();
    let max_sweeps = default_max_sweeps(beta, tol, c.c_max());

    let mut prev = vec![0.0; grid_size];
    let mut next = vec![0.0; grid_size];
    let mut history = Vec::new();
    let backups = |v: &[f64], i: usize, p: f64, a_n: f64, a_a: f64| {
        let hp = c.hp_cost(p) + beta * ((1.0 - p) * a_n + p * a_a);
        let (j, w) = lp_stencil[i];
        let cont = if w == 0.0 { v[j] } else { (1.0 - w) * v[j] + w * v[j + 1] };
        (hp, c.c_l() + beta * cont)
    };
    loop {
        let a_n = grid.interpolate(&prev, d.hp_na);
        let a_a = grid.interpolate(&prev, d.hp_aa);
        let points = grid.points();
        next.par_iter_mut().with_min_len(512).enumerate().for_each(|(i, out)| {
            let (hp, lp) = backups(&prev, i, points[i], a_n, a_a);
            *out = hp.min(lp);
        });
        let residual = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(residual);
        std::mem::swap(&mut prev, &mut next);
        if residual <= tol {
            // `next` now holds the iterate that produced `prev`.
            let a_n = grid.interpolate(&next, d.hp_na);
            let a_a = grid.interpolate(&next, d.hp_aa);
            let actions = (0..grid_size)
                .map(|i| {
                    let (hp, lp) = backups(&next, i, grid.points()[i], a_n, a_a);
                    if prefers_hp(hp, lp) {
                        Action::Hp
                    } else {
                        Action::Lp
                    }
                })
                .collect();
            let sweeps = history.len();
            return Ok(ValueTable { grid, values: prev, actions, residual, sweeps, residual_history: history });
        }
        if history.len() >= max_sweeps {
            return Err(Error::NonConvergence { sweeps: history.len(), residual });
        }
    }
}

/// Switching belief of a threshold-shaped table: the midpoint between the
/// last HP point and the first LP point.
pub fn extract_threshold(vt: &ValueTable) -> Result<f64> {
    let n = vt.actions.len();
    let hp_count = vt.actions.iter().take_while(|a| **a == Action::Hp).count();
    if vt.actions[hp_count..].contains(&Action::Hp) {
        return Err(Error::NonThresholdStructure(format!(
            "HP set is not a prefix interval: LP at p={} but HP later",
            vt.grid.points()[hp_count]
        )));
    }
    Ok(match hp_count {
        0 => 0.0,
        k if k == n => 1.0,
        k => 0.5 * (vt.grid.points()[k - 1] + vt.grid.points()[k]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    /// Values nondecreasing along the grid.
    pub monotone: bool,
    /// Discrete second differences nonpositive.
    pub concave: bool,
    /// HP set is an interval anchored at p = 0.
    pub hp_prefix: bool,
    pub max_decrease: f64,
    pub max_second_difference: f64,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.monotone && self.concave && self.hp_prefix
    }
}

pub fn check_structure(vt: &ValueTable) -> StructureReport {
    let v = &vt.values;
    let max_decrease = v.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let max_second_difference =
        v.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::NEG_INFINITY, f64::max);
    StructureReport {
        monotone: max_decrease <= STRUCTURE_SLACK,
        concave: v.len() < 3 || max_second_difference <= STRUCTURE_SLACK,
        hp_prefix: extract_threshold(vt).is_ok(),
        max_decrease,
        max_second_difference,
    }
}

// ---------------------------------------------------------------------------
// Finite horizon

/// Exact value of the m-stage problem from p0, by backward recursion over the
/// reachable beliefs. From p0 these are T^k(p0), T^k(lambda_na) and
/// T^k(lambda_aa), so states are keyed by (stages left, origin, k).
pub fn finite_horizon_check(m: &TransitionModel, c: &CostModel, horizon: u32, p0: f64) -> f64 {
    time_indexed_value(m, c, 0, horizon, p0)
}

/// Stage-t value of the `horizon`-stage problem in the original, time-indexed
/// form where stage-s costs are weighted by beta^s.
pub fn time_indexed_value(m: &TransitionModel, c: &CostModel, t: u32, horizon: u32, p0: f64) -> f64 {
    let mut memo = HashMap::new();
    let origins = [p0, m.lambda_na(), m.lambda_aa()];
    recurse(m, c, &origins, &mut memo, t, horizon, 0, 0)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    m: &TransitionModel,
    c: &CostModel,
    origins: &[f64; 3],
    memo: &mut HashMap<(u32, u32, usize, u32), f64>,
    t: u32,
    left: u32,
    origin: usize,
    k: u32,
) -> f64 {
    if left == 0 {
        return 0.0;
    }
    if let Some(v) = memo.get(&(t, left, origin, k)) {
        return *v;
    }
    let p = m.iterate(origins[origin], k);
    let w = c.beta().powi(t as i32);
    let lp = w * c.c_l() + recurse(m, c, origins, memo, t + 1, left - 1, origin, k + 1);
    let hp = w * c.hp_cost(p)
        + (1.0 - p) * recurse(m, c, origins, memo, t + 1, left - 1, 1, 0)
        + p * recurse(m, c, origins, memo, t + 1, left - 1, 2, 0);
    let v = lp.min(hp);
    memo.insert((t, left, origin, k), v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (TransitionModel, CostModel) {
        (TransitionModel::monotone(0.1, 0.7).unwrap(), CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap())
    }

    #[test]
    fn grid_shape() {
        let g = BeliefGrid::uniform(11).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 1.0);
        assert!((g.step() - 0.1).abs() < 1e-15);
        let v: Vec<f64> = g.points().iter().map(|p| 2.0 * p).collect();
        assert!((g.interpolate(&v, 0.37) - 0.74).abs() < 1e-12);
        assert_eq!(g.interpolate(&v, 1.0), 2.0);
    }

    #[test]
    fn constant_costs_give_constant_value() {
        let m = TransitionModel::new(0.2, 0.8).unwrap();
        let c = CostModel::new(2.0, 2.0, 2.0, 0.9).unwrap();
        let vt = solve_two_state(&m, &c, 201, 1e-10).unwrap();
        assert!(vt.values.iter().all(|v| (v - 20.0).abs() < 1e-8));
        assert!(check_structure(&vt).concave);
    }

    #[test]
    fn reference_fixture() {
        let (m, c) = reference();
        let vt = solve_two_state(&m, &c, 2001, 1e-9).unwrap();
        assert!(vt.values[0] < vt.values[2000]);
        assert!(vt.residual <= 1e-9);
        let tau = extract_threshold(&vt).unwrap();
        assert!((tau - 0.30075).abs() < 1e-9, "tau={tau}");
        assert!(check_structure(&vt).all_pass());
    }

    #[test]
    fn c_l_equal_c_ha_is_all_hp() {
        let m = TransitionModel::new(0.2, 0.8).unwrap();
        let c = CostModel::new(12.0, 1.0, 12.0, 0.9).unwrap();
        let vt = solve_two_state(&m, &c, 501, 1e-9).unwrap();
        assert!(vt.actions.iter().all(|a| *a == Action::Hp));
        assert_eq!(extract_threshold(&vt).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_threshold_tables() {
        let g = BeliefGrid::uniform(5).unwrap();
        let lp = ValueTable::from_parts(g.clone(), vec![0.0; 5], vec![Action::Lp; 5]).unwrap();
        assert_eq!(extract_threshold(&lp).unwrap(), 0.0);
        let mixed = ValueTable::from_parts(
            g,
            vec![0.0; 5],
            vec![Action::Hp, Action::Lp, Action::Hp, Action::Lp, Action::Lp],
        )
        .unwrap();
        assert!(matches!(extract_threshold(&mixed), Err(Error::NonThresholdStructure(_))));
    }

    #[test]
    fn structure_check_rejects_convex_table() {
        let g = BeliefGrid::uniform(11).unwrap();
        let v = g.points().iter().map(|p| p * p).collect();
        let vt = ValueTable::from_parts(g, v, vec![Action::Hp; 11]).unwrap();
        let r = check_structure(&vt);
        assert!(r.monotone && !r.concave);
    }

    #[test]
    fn contraction_of_residuals() {
        let (m, c) = reference();
        let vt = solve_two_state(&m, &c, 1001, 1e-9).unwrap();
        for w in vt.residual_history.windows(2) {
            // Below ~1e-7 the ratio is dominated by rounding in values near 30.
            if w[0] > 1e-7 {
                assert!(w[1] <= (0.9 + 1e-6) * w[0], "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn rejects_small_grid_and_bad_tol() {
        let (m, c) = reference();
        assert!(solve_two_state(&m, &c, 100, 1e-9).is_err());
        assert!(solve_two_state(&m, &c, 201, 0.0).is_err());
    }

    #[test]
    fn one_stage_is_myopic() {
        let (m, c) = reference();
        for p in [0.0, 0.1, 0.5, 1.0] {
            let want = c.c_l().min(c.hp_cost(p));
            assert!((finite_horizon_check(&m, &c, 1, p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn time_shift_scales_by_beta() {
        let (m, c) = reference();
        for h in [1, 3, 8] {
            let v0 = time_indexed_value(&m, &c, 0, h, 0.4);
            let v1 = time_indexed_value(&m, &c, 1, h, 0.4);
            assert!((v1 / v0 - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_horizon_approaches_infinite_horizon() {
        let (m, c) = reference();
        let vt = solve_two_state(&m, &c, 2001, 1e-9).unwrap();
        let tail = c.c_max() * 0.9f64.powi(15) / 0.1;
        for p in [0.0, 0.2, 0.5, 0.9] {
            let v15 = finite_horizon_check(&m, &c, 15, p);
            assert!((vt.value_at(p) - v15).abs() <= tail + 1e-6);
            assert!(v15 <= vt.value_at(p) + 1e-6);
        }
    }
}
