//! Experiment configuration files (TOML).
//!
//! One file describes one experiment. Every section is optional at parse
//! time; each command asks for the sections it needs and reports a missing
//! or invalid field by its dotted path.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coupon_dependent::CouponDependentModel;
use crate::error::{Error, Result};
use crate::model::{Assumption, CostModel, TransitionModel};
use crate::noisy::{CostDistribution, CostDistributions, DEFAULT_POSTERIOR_GRID};
use crate::simplex::MultiStateModel;
use crate::sim::{Estimator, SimConfig};
use crate::vi::{DEFAULT_GRID, DEFAULT_TOL};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelSection>,
    pub costs: Option<CostSection>,
    pub distributions: Option<DistributionSection>,
    pub sweep: Option<SweepSection>,
    pub simulation: Option<SimulationSection>,
    pub region: Option<RegionSection>,
    #[serde(default)]
    pub vi: ViSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub lambda_na: f64,
    pub lambda_aa: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda_na: f64,
    pub lambda_aa: f64,
    #[serde(default)]
    pub assumption: Assumption,
    /// Chain followed after an HP offer; coupon-independent when absent.
    pub hp_chain: Option<ChainSection>,
}

impl ModelSection {
    pub fn chain(&self) -> Result<TransitionModel> {
        TransitionModel::with_assumption(self.lambda_na, self.lambda_aa, self.assumption).map_err(|e| prefix("model", e))
    }

    pub fn coupon_dependent(&self) -> Result<Option<CouponDependentModel>> {
        let Some(h) = &self.hp_chain else { return Ok(None) };
        let lp = self.chain()?;
        let hp = TransitionModel::with_assumption(h.lambda_na, h.lambda_aa, self.assumption)
            .map_err(|e| prefix("model.hp_chain", e))?;
        CouponDependentModel::new(lp, hp).map(Some).map_err(|e| prefix("model.hp_chain", e))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub c_l: f64,
    pub c_hn: f64,
    pub c_ha: f64,
    pub beta: f64,
}

impl CostSection {
    pub fn model(&self) -> Result<CostModel> {
        CostModel::new(self.c_l, self.c_hn, self.c_ha, self.beta).map_err(|e| prefix("costs", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub lp: CostDistribution,
    pub hn: CostDistribution,
    pub ha: CostDistribution,
    pub beta: f64,
}

impl DistributionSection {
    pub fn distributions(&self) -> Result<CostDistributions> {
        CostDistributions::new(self.lp.clone(), self.hn.clone(), self.ha.clone())
    }

    pub fn beta(&self) -> Result<f64> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("distributions.beta", format!("need 0 < beta < 1, got {}", self.beta)));
        }
        Ok(self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    LambdaNa,
    LambdaAa,
    HpLambdaNa,
    HpLambdaAa,
    CL,
    CHn,
    CHa,
    Beta,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::LambdaNa => "lambda_na",
            SweepParam::LambdaAa => "lambda_aa",
            SweepParam::HpLambdaNa => "hp_lambda_na",
            SweepParam::HpLambdaAa => "hp_lambda_aa",
            SweepParam::CL => "c_l",
            SweepParam::CHn => "c_hn",
            SweepParam::CHa => "c_ha",
            SweepParam::Beta => "beta",
        }
    }
}

/// Either explicit values or `steps` evenly spaced points on [lo, hi].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub steps: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl Range {
    pub fn values(&self, field: &str) -> Result<Vec<f64>> {
        let v = match (&self.values, self.lo, self.hi, self.steps) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(steps)) => {
                if steps == 1 {
                    vec![lo]
                } else {
                    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
                }
            }
            _ => return Err(Error::invalid(field, "give either `values` or all of `lo`, `hi`, `steps`")),
        };
        if v.is_empty() {
            return Err(Error::invalid(field, "axis is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(field, "axis values must be finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: SweepParam,
    #[serde(flatten)]
    pub range: Range,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<SweepAxis>,
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<(SweepParam, Vec<f64>)>> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid("sweep.axes", format!("need 1 or 2 axes, got {}", self.axes.len())));
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(Error::invalid("sweep.axes", "both axes sweep the same parameter"));
        }
        self.axes
            .iter()
            .enumerate()
            .map(|(i, a)| Ok((a.param, a.range.values(&format!("sweep.axes[{i}]"))?)))
            .collect()
    }
}

/// Threshold used by a simulated policy: a number or a named variant.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TauChoice {
    Value(f64),
    Named(TauName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauName {
    /// Closed-form optimum for deterministic costs, tau_avg for noisy ones.
    Optimal,
    Avg,
    Max,
    Min,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Threshold,
    Greedy,
    Lazy,
    PerfectInfo,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub kind: PolicyName,
    pub tau: Option<TauChoice>,
    #[serde(default)]
    pub estimator: Estimator,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub episodes: usize,
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub p0: f64,
    #[serde(default = "yes")]
    pub p0_known: bool,
    #[serde(default = "default_posterior_grid")]
    pub posterior_grid: usize,
    /// Episode traced by the `estimate` command.
    #[serde(default)]
    pub trace_episode: u64,
    pub policies: Vec<PolicyEntry>,
}

fn yes() -> bool {
    true
}

fn default_posterior_grid() -> usize {
    DEFAULT_POSTERIOR_GRID
}

impl SimulationSection {
    pub fn sim_config(&self) -> Result<SimConfig> {
        if self.policies.is_empty() {
            return Err(Error::invalid("simulation.policies", "no policies given"));
        }
        if self.posterior_grid < 2 {
            return Err(Error::invalid("simulation.posterior_grid", "need at least 2 points"));
        }
        let s = SimConfig {
            episodes: self.episodes,
            horizon: self.horizon,
            seed: self.seed,
            p0: self.p0,
            p0_known: self.p0_known,
            posterior_grid: self.posterior_grid,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    LpOnly,
    Simplex,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexSection {
    pub transition: Vec<Vec<f64>>,
    pub hp_costs: Vec<f64>,
    pub lp_cost: f64,
    pub beta: f64,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
}

fn default_resolution() -> u32 {
    100
}

impl SimplexSection {
    pub fn model(&self) -> Result<MultiStateModel> {
        MultiStateModel::new(self.transition.clone(), self.hp_costs.clone(), self.lp_cost, self.beta)
            .map_err(|e| prefix("region.simplex", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub kind: RegionKind,
    /// LP-only masks: axes and the fixed C_HN and beta.
    pub c_l: Option<Range>,
    pub c_ha: Option<Range>,
    pub c_hn: Option<f64>,
    pub beta: Option<f64>,
    pub simplex: Option<SimplexSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViSection {
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for ViSection {
    fn default() -> Self {
        ViSection { grid: DEFAULT_GRID, tol: DEFAULT_TOL }
    }
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

/// Scalar overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.out {
            self.output.path = Some(p.clone());
        }
        if let (Some(seed), Some(s)) = (o.seed, self.simulation.as_mut()) {
            s.seed = seed;
        }
        if let Some(g) = o.grid {
            self.vi.grid = g;
        }
        if let Some(t) = o.tol {
            self.vi.tol = t;
        }
    }

    pub fn validate_vi(&self) -> Result<()> {
        if self.vi.grid < 101 {
            return Err(Error::invalid("vi.grid", format!("need at least 101 points, got {}", self.vi.grid)));
        }
        if !(self.vi.tol > 0.0 && self.vi.tol.is_finite()) {
            return Err(Error::invalid("vi.tol", "must be positive"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&ModelSection> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    pub fn costs(&self) -> Result<&CostSection> {
        self.costs.as_ref().ok_or_else(|| missing("costs"))
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep"))
    }

    pub fn simulation(&self) -> Result<&SimulationSection> {
        self.simulation.as_ref().ok_or_else(|| missing("simulation"))
    }

    pub fn region(&self) -> Result<&RegionSection> {
        self.region.as_ref().ok_or_else(|| missing("region"))
    }
}

fn missing(section: &str) -> Error {
    Error::invalid(section, "section is required for this command")
}

/// Qualifies a bare field name in a validation error with its section.
fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, message } => Error::invalid(format!("{section}.{field}"), message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
[model]
lambda_na = 0.1
lambda_aa = 0.7
assumption = "monotone"

[costs]
c_l = 3
c_hn = 1
c_ha = 12
beta = 0.9

[sweep]
axes = [{ param = "lambda_na", lo = 0.0, hi = 0.6, steps = 61 }, { param = "lambda_aa", values = [0.5, 0.7, 0.9] }]
"#;

    #[test]
    fn parses_sections() {
        let c = ExperimentConfig::parse(REFERENCE).unwrap();
        assert_eq!(c.model().unwrap().chain().unwrap().lambda_na(), 0.1);
        assert_eq!(c.costs().unwrap().model().unwrap().c_ha(), 12.0);
        let g = c.sweep().unwrap().grid().unwrap();
        assert_eq!(g[0].1.len(), 61);
        assert_eq!(g[1].1, vec![0.5, 0.7, 0.9]);
        assert_eq!(c.vi.grid, DEFAULT_GRID);
    }

    #[test]
    fn field_paths_in_errors() {
        let c = ExperimentConfig::parse("[costs]\nc_l = 3\nc_hn = 1\nc_ha = 12\nbeta = 1.5\n").unwrap();
        let e = c.costs().unwrap().model().unwrap_err();
        assert!(e.to_string().starts_with("costs.beta"), "{e}");
        let e = ExperimentConfig::parse("[sweep]\naxes = [{ param = \"beta\", values = [] }]\n")
            .unwrap()
            .sweep()
            .unwrap()
            .grid()
            .unwrap_err();
        assert!(e.to_string().contains("sweep.axes[0]"), "{e}");
        let e = ExperimentConfig::default().model().unwrap_err();
        assert!(e.to_string().starts_with("model"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::parse("[costs]\nc_x = 1\n").is_err());
    }

    #[test]
    fn policies_and_distributions() {
        let c = ExperimentConfig::parse(
            r#"
[distributions]
lp = { family = "uniform", lo = 3, hi = 9 }
hn = { family = "uniform", lo = 0.25, hi = 7.75 }
ha = { family = "discrete", points = [6, 18], masses = [0.5, 0.5] }
beta = 0.9

[simulation]
episodes = 10
p0 = 0.2
policies = [
  { kind = "threshold", tau = "avg", estimator = "bayes_map" },
  { kind = "threshold", tau = 0.3, estimator = "map_state" },
  { kind = "lazy" },
]
"#,
        )
        .unwrap();
        let s = c.simulation().unwrap();
        assert_eq!(s.policies[0].tau, Some(TauChoice::Named(TauName::Avg)));
        assert_eq!(s.policies[1].tau, Some(TauChoice::Value(0.3)));
        assert!(s.sim_config().unwrap().p0_known);
        assert_eq!(c.distributions.unwrap().distributions().unwrap().ha.mean(), 12.0);
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::parse("[simulation]\nepisodes = 3\np0 = 0.1\npolicies = [{ kind = \"lazy\" }]\n").unwrap();
        c.apply(&Overrides { seed: Some(42), grid: Some(501), ..Default::default() });
        assert_eq!(c.simulation().unwrap().seed, 42);
        assert_eq!(c.vi.grid, 501);
    }
}
