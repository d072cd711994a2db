//! Monte Carlo policy evaluation.
//!
//! An episode draws a hidden initial state from p0, then each step the policy
//! picks an action from its belief estimate, pays a cost, updates the
//! estimate and the consumer moves to the next state through the kernel of
//! the chosen action. Costs are summed with discounting.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Dynamics;
use crate::model::{Action, ConsumerState, CostModel, TransitionModel};
use crate::noisy::{
    bayes_predict, bayes_update, map_state_update, point_estimate, BeliefPosterior, CostDistributions, EstimateMode,
    DEFAULT_POSTERIOR_GRID,
};
use crate::rng::{episode_rng, EpisodeWorld};
use crate::threshold::kappa;

/// Tail tolerance, in cost units, for the default horizon.
pub const TAIL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Threshold { tau: f64 },
    Greedy,
    Lazy,
    /// Threshold policy told the true state after every HP offer.
    PerfectInfo { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    ExactBelief,
    MapState,
    BayesMean,
    BayesMap,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::ExactBelief => "exact_belief",
            Estimator::MapState => "map_state",
            Estimator::BayesMean => "bayes_mean",
            Estimator::BayesMap => "bayes_map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub estimator: Estimator,
    /// Column label; derived from kind and estimator when absent.
    #[serde(default)]
    pub label: Option<String>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, estimator: Estimator) -> Self {
        PolicySpec { kind, estimator, label: None }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.kind {
            PolicyKind::Lazy => "lazy".into(),
            PolicyKind::PerfectInfo { .. } => "perfect_info".into(),
            PolicyKind::Greedy => format!("greedy_{}", self.estimator.as_str()),
            PolicyKind::Threshold { .. } => format!("threshold_{}", self.estimator.as_str()),
        }
    }
}

/// Cost feedback: fixed expected costs, or random draws.
#[derive(Debug, Clone, PartialEq)]
pub enum CostSetting {
    Deterministic(CostModel),
    Noisy { distributions: CostDistributions, beta: f64 },
}

impl CostSetting {
    pub fn beta(&self) -> f64 {
        match self {
            CostSetting::Deterministic(c) => c.beta(),
            CostSetting::Noisy { beta, .. } => *beta,
        }
    }

    pub fn c_max(&self) -> f64 {
        match self {
            CostSetting::Deterministic(c) => c.c_max(),
            CostSetting::Noisy { distributions: d, .. } => {
                d.lp.max().abs().max(d.hn.max().abs()).max(d.ha.max().abs())
            }
        }
    }

    /// Expected-cost model, used by the greedy policy.
    pub fn mean_model(&self) -> Result<CostModel> {
        match self {
            CostSetting::Deterministic(c) => Ok(*c),
            CostSetting::Noisy { distributions, beta } => distributions.mean_costs(*beta),
        }
    }

    fn draw(&self, state: ConsumerState, u: Action, q: f64) -> f64 {
        match self {
            CostSetting::Deterministic(c) => match (u, state) {
                (Action::Lp, _) => c.c_l(),
                (Action::Hp, ConsumerState::Normal) => c.c_hn(),
                (Action::Hp, ConsumerState::Alerted) => c.c_ha(),
            },
            CostSetting::Noisy { distributions, .. } => distributions.for_outcome(state, u).quantile(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub episodes: usize,
    /// Steps per episode; `default_horizon` when absent.
    pub horizon: Option<usize>,
    pub seed: u64,
    /// Probability that the initial state is Alerted.
    pub p0: f64,
    /// Whether the estimator starts from p0. If not, point estimators start
    /// at 0.5. Bayesian filters always start from the uniform prior.
    pub p0_known: bool,
    pub posterior_grid: usize,
}

impl SimConfig {
    pub fn new(episodes: usize, seed: u64, p0: f64) -> Self {
        SimConfig { episodes, horizon: None, seed, p0, p0_known: true, posterior_grid: DEFAULT_POSTERIOR_GRID }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::invalid("simulation.episodes", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::invalid("simulation.p0", format!("{} is not a probability", self.p0)));
        }
        if self.horizon == Some(0) {
            return Err(Error::invalid("simulation.horizon", "must be positive"));
        }
        Ok(())
    }
}

/// Smallest horizon whose discounted tail is at most `TAIL_TOLERANCE`.
pub fn default_horizon(beta: f64, c_max: f64) -> usize {
    if c_max <= 0.0 {
        return 1;
    }
    let n = (TAIL_TOLERANCE * (1.0 - beta) / c_max).ln() / beta.ln();
    (n.ceil() as usize).max(1)
}

/// Bound on the discounted cost dropped by stopping after `horizon` steps.
pub fn tail_bound(beta: f64, c_max: f64, horizon: usize) -> f64 {
    beta.powi(horizon as i32) * c_max / (1.0 - beta)
}

/// HP iff the expected HP cost does not exceed C_L, i.e. p <= kappa.
pub fn greedy_action(p: f64, c: &CostModel) -> Action {
    if c.hp_cost(p) <= c.c_l() {
        Action::Hp
    } else {
        Action::Lp
    }
}

fn next_state(d: &Dynamics, state: ConsumerState, u: Action, draw: f64) -> ConsumerState {
    let alert = match u {
        Action::Lp => d.lp.alert_probability(state),
        Action::Hp => match state {
            ConsumerState::Normal => d.hp_na,
            ConsumerState::Alerted => d.hp_aa,
        },
    };
    if draw < alert {
        ConsumerState::Alerted
    } else {
        ConsumerState::Normal
    }
}

fn initial_state(p0: f64, draw: f64) -> ConsumerState {
    if draw < p0 {
        ConsumerState::Alerted
    } else {
        ConsumerState::Normal
    }
}

/// Path of `horizon + 1` states of a single chain.
pub fn simulate_consumer(m: &TransitionModel, initial: ConsumerState, horizon: usize, seed: u64) -> Vec<ConsumerState> {
    use rand::Rng;
    let mut rng = episode_rng(seed, 0);
    let d = Dynamics::coupon_independent(m);
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(initial);
    for _ in 0..horizon {
        let s = *path.last().unwrap();
        path.push(next_state(&d, s, Action::Lp, rng.gen::<f64>()));
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub state: ConsumerState,
    pub belief: f64,
    pub action: Action,
    pub cost: f64,
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub episode: u64,
    pub steps: Vec<StepRecord>,
}

enum Tracker {
    Point(f64),
    Posterior(BeliefPosterior, EstimateMode),
}

struct Runner<'a> {
    policy: &'a PolicySpec,
    d: &'a Dynamics,
    costs: &'a CostSetting,
    tau: f64,
}

impl<'a> Runner<'a> {
    fn new(policy: &'a PolicySpec, d: &'a Dynamics, costs: &'a CostSetting) -> Result<Self> {
        let noisy = matches!(costs, CostSetting::Noisy { .. });
        let uses_estimator = matches!(policy.kind, PolicyKind::Threshold { .. } | PolicyKind::Greedy);
        if uses_estimator {
            match (noisy, policy.estimator) {
                (false, Estimator::ExactBelief) | (true, Estimator::MapState | Estimator::BayesMean | Estimator::BayesMap) => {}
                (false, e) => {
                    return Err(Error::ConfigMismatch(format!(
                        "estimator {} needs noisy cost distributions",
                        e.as_str()
                    )))
                }
                (true, _) => {
                    return Err(Error::ConfigMismatch(
                        "exact_belief needs deterministic costs; use map_state, bayes_mean or bayes_map".into(),
                    ))
                }
            }
        }
        let tau = match policy.kind {
            PolicyKind::Threshold { tau } | PolicyKind::PerfectInfo { tau } => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::invalid("policy.tau", format!("{tau} is not a probability")));
                }
                tau
            }
            PolicyKind::Greedy => kappa(&costs.mean_model()?)?,
            PolicyKind::Lazy => -1.0,
        };
        Ok(Runner { policy, d, costs, tau })
    }

    fn tracker(&self, sim: &SimConfig) -> Result<Tracker> {
        let start = if sim.p0_known { sim.p0 } else { 0.5 };
        let uses_estimator = matches!(self.policy.kind, PolicyKind::Threshold { .. } | PolicyKind::Greedy);
        Ok(match (uses_estimator, self.policy.estimator) {
            (true, Estimator::BayesMean) => {
                Tracker::Posterior(BeliefPosterior::uniform(sim.posterior_grid)?, EstimateMode::Mean)
            }
            (true, Estimator::BayesMap) => {
                Tracker::Posterior(BeliefPosterior::uniform(sim.posterior_grid)?, EstimateMode::Map)
            }
            _ => Tracker::Point(start),
        })
    }

    fn episode(&self, sim: &SimConfig, horizon: usize, world: &EpisodeWorld, episode: u64) -> Result<EpisodeResult> {
        let beta = self.costs.beta();
        let mut tracker = self.tracker(sim)?;
        let mut state = initial_state(sim.p0, world.initial);
        let mut total = 0.0;
        let mut discount = 1.0;
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let belief = match &tracker {
                Tracker::Point(p) => *p,
                Tracker::Posterior(q, mode) => point_estimate(q, *mode),
            };
            let action = if belief <= self.tau { Action::Hp } else { Action::Lp };
            let cost = self.costs.draw(state, action, world.costs[t]);
            total += discount * cost;
            discount *= beta;
            steps.push(StepRecord { step: t, state, belief, action, cost, discounted_cost: total });

            tracker = match tracker {
                Tracker::Point(p) => Tracker::Point(self.update_point(p, state, action, cost)?),
                Tracker::Posterior(q, mode) => {
                    let CostSetting::Noisy { distributions, .. } = self.costs else { unreachable!() };
                    let q = bayes_update(&q, action, cost, distributions)?;
                    Tracker::Posterior(bayes_predict(&q, &self.d.lp), mode)
                }
            };
            state = next_state(self.d, state, action, world.transitions[t]);
        }
        Ok(EpisodeResult { seed: sim.seed, episode, steps })
    }

    fn update_point(&self, p: f64, state: ConsumerState, u: Action, cost: f64) -> Result<f64> {
        let revealed = match (u, state) {
            (Action::Lp, _) => return Ok(self.d.lp.transition(p)),
            (Action::Hp, s) => s,
        };
        let oracle = matches!(self.policy.kind, PolicyKind::PerfectInfo { .. } | PolicyKind::Lazy)
            || matches!(self.costs, CostSetting::Deterministic(_));
        let detected = if oracle {
            revealed
        } else {
            let CostSetting::Noisy { distributions, .. } = self.costs else { unreachable!() };
            // Only the state estimate is used; the coupon-dependent reset
            // below replaces map_state_update's chain-row belief.
            map_state_update(p, u, cost, &self.d.lp, distributions)?.0.unwrap()
        };
        Ok(match detected {
            ConsumerState::Normal => self.d.hp_na,
            ConsumerState::Alerted => self.d.hp_aa,
        })
    }
}

/// One episode with its full trace.
pub fn simulate_episode(
    policy: &PolicySpec,
    sim: &SimConfig,
    d: &Dynamics,
    costs: &CostSetting,
    episode: u64,
) -> Result<EpisodeResult> {
    sim.validate()?;
    let runner = Runner::new(policy, d, costs)?;
    let horizon = sim.horizon.unwrap_or_else(|| default_horizon(costs.beta(), costs.c_max()));
    let world = EpisodeWorld::generate(sim.seed, episode, horizon);
    runner.episode(sim, horizon, &world, episode)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyAggregate {
    pub label: String,
    /// Mean discounted cumulative cost after each step.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Final discounted cost of every episode, in episode order.
    pub finals: Vec<f64>,
}

impl PolicyAggregate {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap()
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().unwrap()
    }
}

/// Runs one policy over all episodes. Episodes run in parallel; the
/// reduction is sequential in episode order, so output is bit-reproducible.
pub fn run_policy(policy: &PolicySpec, sim: &SimConfig, d: &Dynamics, costs: &CostSetting) -> Result<PolicyAggregate> {
    sim.validate()?;
    let runner = Runner::new(policy, d, costs)?;
    let horizon = sim.horizon.unwrap_or_else(|| default_horizon(costs.beta(), costs.c_max()));
    let paths: Vec<Vec<f64>> = (0..sim.episodes as u64)
        .into_par_iter()
        .map(|e| {
            let world = EpisodeWorld::generate(sim.seed, e, horizon);
            let r = runner.episode(sim, horizon, &world, e)?;
            Ok(r.steps.iter().map(|s| s.discounted_cost).collect())
        })
        .collect::<Result<_>>()?;

    let n = paths.len() as f64;
    let mut mean = vec![0.0; horizon];
    let mut stderr = vec![0.0; horizon];
    for t in 0..horizon {
        let m = paths.iter().map(|p| p[t]).sum::<f64>() / n;
        let var = if paths.len() > 1 {
            paths.iter().map(|p| (p[t] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean[t] = m;
        stderr[t] = (var / n).sqrt();
    }
    let finals = paths.iter().map(|p| p[horizon - 1]).collect();
    Ok(PolicyAggregate { label: policy.label(), mean, stderr, finals })
}

pub fn run_policies(
    policies: &[PolicySpec],
    sim: &SimConfig,
    d: &Dynamics,
    costs: &CostSetting,
) -> Result<Vec<PolicyAggregate>> {
    policies.iter().map(|p| run_policy(p, sim, d, costs)).collect()
}

/// Columns: step, then `<label>_mean` and `<label>_stderr` per policy.
pub fn write_aggregate_csv<W: Write>(out: W, aggregates: &[PolicyAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    for a in aggregates {
        header.push(format!("{}_mean", a.label));
        header.push(format!("{}_stderr", a.label));
    }
    w.write_record(&header)?;
    let steps = aggregates.iter().map(|a| a.mean.len()).max().unwrap_or(0);
    for t in 0..steps {
        let mut row = vec![t.to_string()];
        for a in aggregates {
            row.push(format!("{:.12e}", a.mean[t]));
            row.push(format!("{:.12e}", a.stderr[t]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: step, state, belief, action, cost, discounted_cost.
pub fn write_episode_csv<W: Write>(out: W, r: &EpisodeResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "state", "belief", "action", "cost", "discounted_cost"])?;
    for s in &r.steps {
        w.write_record([
            s.step.to_string(),
            s.state.as_str().to_string(),
            format!("{:.12e}", s.belief),
            s.action.as_str().to_string(),
            format!("{:.12e}", s.cost),
            format!("{:.12e}", s.discounted_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}
