//! Value iteration for the multi-level model on a barycentric simplex grid.
//!
//! States are Normal followed by K alert levels. An HP offer reveals the
//! state, so the belief jumps to the corresponding row of the transition
//! matrix. An LP offer moves the belief to b^T Lambda. Off-grid beliefs are
//! interpolated on the Freudenthal triangulation of the grid, which reduces
//! to linear interpolation when there are two states.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Action;
use crate::vi::{default_max_sweeps, prefers_hp};

/// Largest number of grid points accepted.
pub const MAX_GRID_POINTS: usize = 1_000_000;
const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiStateModel {
    transition: Vec<Vec<f64>>,
    hp_costs: Vec<f64>,
    lp_cost: f64,
    beta: f64,
}

impl MultiStateModel {
    /// `transition[i][j]` = P(next = j | now = i), state 0 is Normal.
    /// `hp_costs` = (C_HN, C_HA1, ..., C_HAK).
    pub fn new(transition: Vec<Vec<f64>>, hp_costs: Vec<f64>, lp_cost: f64, beta: f64) -> Result<Self> {
        let n = transition.len();
        if !(2..=4).contains(&n) {
            return Err(Error::invalid("transition", format!("need 2 to 4 states, got {n}")));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("transition[{i}]"), format!("need {n} entries")));
            }
            if row.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("transition[{i}]"), "entries must lie in [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid(format!("transition[{i}]"), format!("row sums to {s}, not 1")));
            }
        }
        if hp_costs.len() != n {
            return Err(Error::invalid("hp_costs", format!("need {n} costs, got {}", hp_costs.len())));
        }
        if hp_costs.iter().chain([&lp_cost, &beta]).any(|x| !x.is_finite()) {
            return Err(Error::invalid("hp_costs", "costs must be finite"));
        }
        if !(hp_costs[0] <= lp_cost && lp_cost <= hp_costs[1]) || hp_costs[1..].windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("hp_costs", "need C_HN <= C_L <= C_HA1 <= ... <= C_HAK"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", format!("need 0 < beta < 1, got {beta}")));
        }
        Ok(MultiStateModel { transition, hp_costs, lp_cost, beta })
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn hp_costs(&self) -> &[f64] {
        &self.hp_costs
    }

    pub fn lp_cost(&self) -> f64 {
        self.lp_cost
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// b^T Lambda.
    pub fn propagate(&self, b: &[f64]) -> Vec<f64> {
        let n = self.states();
        (0..n).map(|j| (0..n).map(|i| b[i] * self.transition[i][j]).sum()).collect()
    }

    fn c_max(&self) -> f64 {
        self.hp_costs.iter().fold(self.lp_cost.abs(), |a, c| a.max(c.abs()))
    }
}

/// All beliefs whose coordinates are multiples of 1/resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    states: usize,
    resolution: u32,
    counts: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

impl SimplexGrid {
    pub fn new(states: usize, resolution: u32) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("resolution", "must be positive"));
        }
        let size = binomial(resolution as u64 + states as u64 - 1, states as u64 - 1);
        if size > MAX_GRID_POINTS as u64 {
            return Err(Error::invalid(
                "resolution",
                format!("{size} grid points exceed the limit of {MAX_GRID_POINTS}"),
            ));
        }
        let mut counts = Vec::with_capacity(size as usize);
        let mut current = vec![0u32; states];
        compositions(resolution, 0, &mut current, &mut counts);
        let index = counts.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(SimplexGrid { states, resolution, counts, index })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn belief(&self, i: usize) -> Vec<f64> {
        self.counts[i].iter().map(|&c| c as f64 / self.resolution as f64).collect()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Grid vertices and weights of the Freudenthal simplex containing b.
    pub fn stencil(&self, b: &[f64]) -> Vec<(usize, f64)> {
        let n = self.states;
        let m = self.resolution as f64;
        // Cumulative coordinates x_i = M * sum_{k >= i} b_k, nonincreasing.
        let mut x = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            acc += b[i].max(0.0);
            x[i] = m * acc;
        }
        x[0] = m;
        for i in 1..n {
            let r = x[i].round();
            if (x[i] - r).abs() < 1e-9 {
                x[i] = r;
            }
            x[i] = x[i].clamp(0.0, x[i - 1]);
        }
        let base: Vec<f64> = x.iter().map(|v| v.floor()).collect();
        let frac: Vec<f64> = x.iter().zip(&base).map(|(v, f)| v - f).collect();
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

        let mut out = Vec::with_capacity(n);
        let mut vertex = base.clone();
        let mut prev_frac = 1.0;
        let push = |vertex: &[f64], w: f64, out: &mut Vec<(usize, f64)>| {
            if w > 0.0 {
                let counts: Vec<u32> =
                    (0..n).map(|i| (vertex[i] - if i + 1 < n { vertex[i + 1] } else { 0.0 }) as u32).collect();
                let idx = self.index_of(&counts).expect("Freudenthal vertex lies on the grid");
                out.push((idx, w));
            }
        };
        for &k in &order {
            push(&vertex, prev_frac - frac[k], &mut out);
            prev_frac = frac[k];
            vertex[k] += 1.0;
        }
        push(&vertex, prev_frac, &mut out);
        out
    }

    pub fn interpolate(&self, values: &[f64], b: &[f64]) -> f64 {
        self.stencil(b).iter().map(|&(i, w)| w * values[i]).sum()
    }
}

fn compositions(left: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for c in (0..=left).rev() {
        current[pos] = c;
        compositions(left - c, pos + 1, current, out);
    }
}

#[derive(Debug, Clone)]
pub struct MultiValueTable {
    pub grid: SimplexGrid,
    pub values: Vec<f64>,
    pub actions: Vec<Action>,
    pub residual: f64,
    pub sweeps: usize,
    pub residual_history: Vec<f64>,
}

pub fn solve_multistate(m: &MultiStateModel, resolution: u32, tol: f64) -> Result<MultiValueTable> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol", format!("need tol > 0, got {tol}")));
    }
    let grid = SimplexGrid::new(m.states(), resolution)?;
    let n = m.states();
    let beliefs: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.belief(i)).collect();
    let lp_stencils: Vec<Vec<(usize, f64)>> =
        beliefs.par_iter().map(|b| grid.stencil(&m.propagate(b))).collect();
    let row_stencils: Vec<Vec<(usize, f64)>> = m.transition().iter().map(|r| grid.stencil(r)).collect();
    let hp_cost: Vec<f64> =
        beliefs.iter().map(|b| b.iter().zip(m.hp_costs()).map(|(p, c)| p * c).sum()).collect();
    let beta = m.beta();
    let max_sweeps = default_max_sweeps(beta, tol, m.c_max());

    let eval = |v: &[f64], st: &[(usize, f64)]| st.iter().map(|&(i, w)| w * v[i]).sum::<f64>();
    let backups = |v: &[f64], anchors: &[f64], i: usize| {
        let hp = hp_cost[i] + beta * (0..n).map(|s| beliefs[i][s] * anchors[s]).sum::<f64>();
        let lp = m.lp_cost() + beta * eval(v, &lp_stencils[i]);
        (hp, lp)
    };

    let mut prev = vec![0.0; grid.len()];
    let mut next = vec![0.0; grid.len()];
    let mut history = Vec::new();
    loop {
        let anchors: Vec<f64> = row_stencils.iter().map(|st| eval(&prev, st)).collect();
        next.par_iter_mut().with_min_len(256).enumerate().for_each(|(i, out)| {
            let (hp, lp) = backups(&prev, &anchors, i);
            *out = hp.min(lp);
        });
        let residual = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(residual);
        std::mem::swap(&mut prev, &mut next);
        if residual <= tol {
            let anchors: Vec<f64> = row_stencils.iter().map(|st| eval(&next, st)).collect();
            let actions = (0..grid.len())
                .map(|i| {
                    let (hp, lp) = backups(&next, &anchors, i);
                    if prefers_hp(hp, lp) {
                        Action::Hp
                    } else {
                        Action::Lp
                    }
                })
                .collect();
            let sweeps = history.len();
            return Ok(MultiValueTable { grid, values: prev, actions, residual, sweeps, residual_history: history });
        }
        if history.len() >= max_sweeps {
            return Err(Error::NonConvergence { sweeps: history.len(), residual });
        }
    }
}

impl MultiValueTable {
    /// Every grid midpoint of two HP points is HP.
    pub fn hp_region_convex(&self) -> bool {
        let hp: Vec<usize> = (0..self.grid.len()).filter(|&i| self.actions[i] == Action::Hp).collect();
        let counts = self.grid.counts();
        hp.par_iter().enumerate().all(|(a, &i)| {
            let mut mid = vec![0u32; self.grid.states];
            hp[a + 1..].iter().all(|&j| {
                let (ci, cj) = (&counts[i], &counts[j]);
                if ci.iter().zip(cj).any(|(x, y)| (x + y) % 2 == 1) {
                    return true;
                }
                for (k, slot) in mid.iter_mut().enumerate() {
                    *slot = (ci[k] + cj[k]) / 2;
                }
                let idx = self.grid.index_of(&mid).expect("midpoint lies on the grid");
                self.actions[idx] == Action::Hp
            })
        })
    }

    /// Where the HP region sits on the simplex.
    pub fn corner_report(&self) -> CornerReport {
        let r = self.grid.resolution();
        let n = self.grid.states;
        let vertex = |s: usize| {
            let mut c = vec![0u32; n];
            c[s] = r;
            self.grid.index_of(&c).unwrap()
        };
        let normal_vertex_hp = self.actions[vertex(0)] == Action::Hp;
        let alerted_vertices_lp = (1..n).all(|s| self.actions[vertex(s)] == Action::Lp);
        // Moving one grid unit of mass from any alert level to Normal keeps HP.
        let upward_closed = (0..self.grid.len()).filter(|&i| self.actions[i] == Action::Hp).all(|i| {
            let c = &self.grid.counts()[i];
            (1..n).filter(|&s| c[s] > 0).all(|s| {
                let mut d = c.clone();
                d[s] -= 1;
                d[0] += 1;
                self.actions[self.grid.index_of(&d).unwrap()] == Action::Hp
            })
        });
        let hp_points = self.actions.iter().filter(|a| **a == Action::Hp).count();
        CornerReport { normal_vertex_hp, alerted_vertices_lp, upward_closed, hp_points, total_points: self.grid.len() }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.grid.states;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["p_n".to_string()];
        header.extend((1..n).map(|k| format!("p_a{k}")));
        header.extend(["value".to_string(), "action".to_string()]);
        out.write_record(&header)?;
        for i in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.belief(i).iter().map(|p| p.to_string()).collect();
            row.push(self.values[i].to_string());
            row.push(self.actions[i].as_str().to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CornerReport {
    pub normal_vertex_hp: bool,
    pub alerted_vertices_lp: bool,
    pub upward_closed: bool,
    pub hp_points: usize,
    pub total_points: usize,
}

impl CornerReport {
    pub fn in_normal_corner(&self) -> bool {
        self.normal_vertex_hp && self.alerted_vertices_lp && self.upward_closed
    }
}
