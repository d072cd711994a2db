//! Command implementations behind the `coupon-policy` binary.
//!
//! Each command reads an `ExperimentConfig`, runs the solver or simulator and
//! writes CSV to the configured output path (stdout when none). `threshold`
//! also prints a JSON report on stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PolicyName, RegionKind, SweepParam, TauChoice, TauName};
use crate::coupon_dependent::{lp_only_region, solve_threshold_cd, vi_oracle_cd, CouponDependentModel};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::Dynamics;
use crate::model::{CostModel, TransitionModel};
use crate::noisy::threshold_variants;
use crate::simplex::solve_multistate;
use crate::sim::{
    run_policies, simulate_episode, write_aggregate_csv, write_episode_csv, CostSetting, PolicyKind, PolicySpec,
};
use crate::threshold::{corollary2_bounds, kappa, solve_threshold};
use crate::vi::{extract_threshold, solve_dynamics, solve_two_state};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Threshold,
    Sweep,
    Simulate,
    Region,
    Estimate,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Solver => 3,
        ErrorKind::Io => 4,
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, oracle: bool, stdout: &mut dyn Write) -> Result<()> {
    cfg.validate_vi()?;
    match cmd {
        Command::Threshold => cmd_threshold(cfg, oracle, stdout),
        Command::Sweep => cmd_sweep(cfg, oracle, stdout),
        Command::Simulate => cmd_simulate(cfg, stdout),
        Command::Region => cmd_region(cfg, stdout),
        Command::Estimate => cmd_estimate(cfg, stdout),
    }
}

fn with_output<F>(cfg: &ExperimentConfig, stdout: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match &cfg.output.path {
        Some(p) if p.as_os_str() != "-" => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        _ => f(stdout),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

fn oracle_tau(d: &Dynamics, c: &CostModel, cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let vt = solve_dynamics(d, c, cfg.vi.grid, cfg.vi.tol)?;
    Ok((extract_threshold(&vt)?, vt.grid.step()))
}

/// Threshold, certificate and optional oracle value as a JSON report.
pub fn threshold_report(cfg: &ExperimentConfig, oracle: bool) -> Result<Value> {
    let model = cfg.model()?;
    if cfg.costs.is_none() {
        if let Some(ds) = &cfg.distributions {
            return variants_report(cfg, &model.chain()?, ds);
        }
    }
    let c = cfg.costs()?.model()?;
    let mut report = match model.coupon_dependent()? {
        None => {
            let m = model.chain()?;
            let s = solve_threshold(&m, &c)?;
            let mut r = json!({ "model": "coupon_independent", "tau": s.tau, "kappa": s.kappa });
            r["solution"] = to_value(&s);
            r["corollary2"] = match corollary2_bounds(&m, &c) {
                Ok(b) => to_value(&b),
                Err(e) => json!({ "error": e.to_string() }),
            };
            if oracle {
                let (t, step) = oracle_tau(&Dynamics::coupon_independent(&m), &c, cfg)?;
                r["oracle_tau"] = json!(t);
                r["oracle_grid_step"] = json!(step);
            }
            r
        }
        Some(cd) => {
            let mut r = match solve_threshold_cd(&cd, &c) {
                Ok(s) => {
                    let mut r = json!({ "model": "coupon_dependent", "tau": s.tau, "kappa": s.kappa });
                    r["solution"] = to_value(&s);
                    r
                }
                Err(Error::NoConsistentCase(msg)) if oracle => json!({
                    "model": "coupon_dependent",
                    "tau": Value::Null,
                    "kappa": kappa(&c)?,
                    "closed_form_error": msg,
                }),
                Err(e) => return Err(e),
            };
            if oracle {
                let (t, step) = oracle_tau(&cd.dynamics(), &c, cfg)?;
                r["oracle_tau"] = json!(t);
                r["oracle_grid_step"] = json!(step);
            }
            r
        }
    };
    if let Some(ds) = &cfg.distributions {
        report["variants"] = variants_report(cfg, &model.chain()?, ds)?["variants"].clone();
    }
    Ok(report)
}

fn variant_p0(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.simulation
        .as_ref()
        .map(|s| s.p0)
        .ok_or_else(|| Error::invalid("simulation.p0", "needed to evaluate the robust threshold"))
}

fn variants_report(cfg: &ExperimentConfig, m: &TransitionModel, ds: &crate::config::DistributionSection) -> Result<Value> {
    let v = threshold_variants(&ds.distributions()?, m, ds.beta()?, variant_p0(cfg)?)?;
    let mean = ds.distributions()?.mean_costs(ds.beta()?)?;
    Ok(json!({
        "model": "coupon_independent",
        "tau": v.tau_avg,
        "kappa": kappa(&mean)?,
        "variants": to_value(&v),
    }))
}

pub fn cmd_threshold(cfg: &ExperimentConfig, oracle: bool, stdout: &mut dyn Write) -> Result<()> {
    let report = threshold_report(cfg, oracle)?;
    writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
    if let Some(p) = &cfg.output.path {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["tau", "kappa", "oracle_tau"])?;
        let cell = |k: &str| report.get(k).and_then(Value::as_f64).map(|x| x.to_string()).unwrap_or_default();
        w.write_record([cell("tau"), cell("kappa"), cell("oracle_tau")])?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct PointParams {
    lambda_na: f64,
    lambda_aa: f64,
    hp: Option<(f64, f64)>,
    c_l: f64,
    c_hn: f64,
    c_ha: f64,
    beta: f64,
}

impl PointParams {
    fn set(&mut self, p: SweepParam, x: f64) -> Result<()> {
        match p {
            SweepParam::LambdaNa => self.lambda_na = x,
            SweepParam::LambdaAa => self.lambda_aa = x,
            SweepParam::CL => self.c_l = x,
            SweepParam::CHn => self.c_hn = x,
            SweepParam::CHa => self.c_ha = x,
            SweepParam::Beta => self.beta = x,
            SweepParam::HpLambdaNa | SweepParam::HpLambdaAa => {
                let Some(hp) = self.hp.as_mut() else {
                    return Err(Error::invalid("sweep.axes", "hp_chain axes need a [model.hp_chain] section"));
                };
                if p == SweepParam::HpLambdaNa {
                    hp.0 = x
                } else {
                    hp.1 = x
                }
            }
        }
        Ok(())
    }
}

struct SweepRow {
    tau: f64,
    kappa: f64,
    case: String,
    tau_hat: Option<f64>,
}

fn sweep_point(cfg: &ExperimentConfig, p: &PointParams, oracle: bool) -> Result<SweepRow> {
    let assumption = cfg.model()?.assumption;
    let lp = TransitionModel::with_assumption(p.lambda_na, p.lambda_aa, assumption)?;
    let c = CostModel::new(p.c_l, p.c_hn, p.c_ha, p.beta)?;
    match p.hp {
        None => {
            let s = solve_threshold(&lp, &c)?;
            let tau_hat = if oracle { Some(extract_threshold(&solve_two_state(&lp, &c, cfg.vi.grid, cfg.vi.tol)?)?) } else { None };
            let case = format!("{}/{}", enum_name(&s.lambda_case), enum_name(&s.branch));
            Ok(SweepRow { tau: s.tau, kappa: s.kappa, case, tau_hat })
        }
        Some((na, aa)) => {
            let hp = TransitionModel::with_assumption(na, aa, assumption)?;
            let cd = CouponDependentModel::new(lp, hp)?;
            let tau_hat = if oracle { Some(extract_threshold(&vi_oracle_cd(&cd, &c, cfg.vi.grid, cfg.vi.tol)?)?) } else { None };
            let s = solve_threshold_cd(&cd, &c)?;
            let case = s.case.map_or("independent".to_string(), |k| format!("case{k}"));
            Ok(SweepRow { tau: s.tau, kappa: s.kappa, case, tau_hat })
        }
    }
}

fn enum_name<T: Serialize>(x: &T) -> String {
    to_value(x).as_str().unwrap_or_default().to_string()
}

/// One row per grid point: swept values, tau, kappa, case, tau_hat, status.
/// A grid point whose parameters are invalid or whose solver fails keeps its
/// row with empty numbers and the error in `status`.
pub fn cmd_sweep(cfg: &ExperimentConfig, oracle: bool, stdout: &mut dyn Write) -> Result<()> {
    let axes = cfg.sweep()?.grid()?;
    let model = cfg.model()?;
    let costs = cfg.costs()?;
    let base = PointParams {
        lambda_na: model.lambda_na,
        lambda_aa: model.lambda_aa,
        hp: model.hp_chain.as_ref().map(|h| (h.lambda_na, h.lambda_aa)),
        c_l: costs.c_l,
        c_hn: costs.c_hn,
        c_ha: costs.c_ha,
        beta: costs.beta,
    };
    let outer = &axes[0];
    let inner: Vec<Option<f64>> = match axes.get(1) {
        Some((_, v)) => v.iter().map(|x| Some(*x)).collect(),
        None => vec![None],
    };
    with_output(cfg, stdout, |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = axes.iter().map(|(p, _)| p.as_str()).collect();
        header.extend(["tau", "kappa", "case", "tau_hat", "status"]);
        w.write_record(&header)?;
        for &x in &outer.1 {
            for y in &inner {
                let mut p = base;
                p.set(outer.0, x)?;
                if let (Some(y), Some((param, _))) = (y, axes.get(1)) {
                    p.set(*param, *y)?;
                }
                let mut row: Vec<String> = vec![x.to_string()];
                if let Some(y) = y {
                    row.push(y.to_string());
                }
                match sweep_point(cfg, &p, oracle) {
                    Ok(r) => row.extend([
                        r.tau.to_string(),
                        r.kappa.to_string(),
                        r.case,
                        r.tau_hat.map(|t| t.to_string()).unwrap_or_default(),
                        "ok".to_string(),
                    ]),
                    Err(e) => row.extend([String::new(), String::new(), String::new(), String::new(), e.to_string()]),
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn cost_setting(cfg: &ExperimentConfig) -> Result<CostSetting> {
    match (&cfg.distributions, &cfg.costs) {
        (Some(ds), _) => Ok(CostSetting::Noisy { distributions: ds.distributions()?, beta: ds.beta()? }),
        (None, Some(c)) => Ok(CostSetting::Deterministic(c.model()?)),
        (None, None) => Err(Error::invalid("costs", "simulation needs [costs] or [distributions]")),
    }
}

fn dynamics(cfg: &ExperimentConfig) -> Result<(Dynamics, Option<CouponDependentModel>)> {
    let model = cfg.model()?;
    Ok(match model.coupon_dependent()? {
        Some(cd) => (cd.dynamics(), Some(cd)),
        None => (Dynamics::coupon_independent(&model.chain()?), None),
    })
}

fn resolve_tau(
    choice: Option<&TauChoice>,
    cfg: &ExperimentConfig,
    costs: &CostSetting,
    cd: Option<&CouponDependentModel>,
) -> Result<f64> {
    let name = match choice {
        Some(TauChoice::Value(t)) => return Ok(*t),
        Some(TauChoice::Named(n)) => *n,
        None => TauName::Optimal,
    };
    match (costs, name) {
        (CostSetting::Deterministic(c), TauName::Optimal) => match cd {
            None => Ok(solve_threshold(&cfg.model()?.chain()?, c)?.tau),
            Some(cd) => match solve_threshold_cd(cd, c) {
                Ok(s) => Ok(s.tau),
                Err(Error::NoConsistentCase(_)) => Ok(extract_threshold(&vi_oracle_cd(cd, c, cfg.vi.grid, cfg.vi.tol)?)?),
                Err(e) => Err(e),
            },
        },
        (CostSetting::Deterministic(_), _) => {
            Err(Error::ConfigMismatch("threshold variants need [distributions]".into()))
        }
        (CostSetting::Noisy { .. }, _) if cd.is_some() => Err(Error::ConfigMismatch(
            "threshold variants are defined for coupon-independent models; give tau as a number".into(),
        )),
        (CostSetting::Noisy { distributions, beta }, n) => {
            let v = threshold_variants(distributions, &cfg.model()?.chain()?, *beta, cfg.simulation()?.p0)?;
            let pick = match n {
                TauName::Optimal | TauName::Avg => Some(v.tau_avg),
                TauName::Max => v.tau_max,
                TauName::Min => v.tau_min,
                TauName::Robust => v.tau_r,
            };
            pick.ok_or_else(|| {
                Error::ConfigMismatch(format!("threshold variant {n:?} has no admissible cost corner"))
            })
        }
    }
}

/// Policies of the `[simulation]` section with thresholds resolved.
pub fn resolve_policies(cfg: &ExperimentConfig) -> Result<Vec<PolicySpec>> {
    let sim = cfg.simulation()?;
    let costs = cost_setting(cfg)?;
    let (_, cd) = dynamics(cfg)?;
    sim.policies
        .iter()
        .map(|p| {
            let kind = match p.kind {
                PolicyName::Greedy => PolicyKind::Greedy,
                PolicyName::Lazy => PolicyKind::Lazy,
                PolicyName::Threshold => PolicyKind::Threshold { tau: resolve_tau(p.tau.as_ref(), cfg, &costs, cd.as_ref())? },
                PolicyName::PerfectInfo => {
                    PolicyKind::PerfectInfo { tau: resolve_tau(p.tau.as_ref(), cfg, &costs, cd.as_ref())? }
                }
            };
            Ok(PolicySpec { kind, estimator: p.estimator, label: p.label.clone() })
        })
        .collect()
}

pub fn cmd_simulate(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let sim = cfg.simulation()?.sim_config()?;
    let policies = resolve_policies(cfg)?;
    let mut labels: Vec<String> = policies.iter().map(PolicySpec::label).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("simulation.policies", "policy labels must be unique; set `label`"));
    }
    let (d, _) = dynamics(cfg)?;
    let aggregates = run_policies(&policies, &sim, &d, &cost_setting(cfg)?)?;
    with_output(cfg, stdout, |out| write_aggregate_csv(out, &aggregates))
}

/// Trace of one episode of the first configured policy.
pub fn cmd_estimate(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let section = cfg.simulation()?;
    let sim = section.sim_config()?;
    let policy = resolve_policies(cfg)?.remove(0);
    let (d, _) = dynamics(cfg)?;
    let r = simulate_episode(&policy, &sim, &d, &cost_setting(cfg)?, section.trace_episode)?;
    with_output(cfg, stdout, |out| write_episode_csv(out, &r))
}

pub fn cmd_region(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let region = cfg.region()?;
    match region.kind {
        RegionKind::Simplex => {
            let s = region.simplex.as_ref().ok_or_else(|| Error::invalid("region.simplex", "section is required"))?;
            let table = solve_multistate(&s.model()?, s.resolution, cfg.vi.tol)?;
            with_output(cfg, stdout, |out| table.write_csv(out))
        }
        RegionKind::LpOnly => {
            let model = cfg.model()?;
            let lp = model.chain()?;
            let cd = match model.coupon_dependent()? {
                Some(cd) => cd,
                None => CouponDependentModel::new(lp, lp)?,
            };
            let axis = |r: &Option<crate::config::Range>, name: &str| {
                r.as_ref().ok_or_else(|| Error::invalid(name, "axis is required"))?.values(name)
            };
            let c_l = axis(&region.c_l, "region.c_l")?;
            let c_ha = axis(&region.c_ha, "region.c_ha")?;
            let c_hn = region.c_hn.ok_or_else(|| Error::invalid("region.c_hn", "is required"))?;
            let beta = region.beta.ok_or_else(|| Error::invalid("region.beta", "is required"))?;
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid("region.beta", format!("need 0 < beta < 1, got {beta}")));
            }
            let cells = lp_only_region(&cd, c_hn, beta, &c_l, &c_ha, cfg.vi.grid, cfg.vi.tol)?;
            with_output(cfg, stdout, |out| {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["c_l", "c_ha", "lp_only", "tau", "from_oracle", "lp_only_independent", "tau_independent"])?;
                for c in &cells {
                    w.write_record([
                        c.c_l.to_string(),
                        c.c_ha.to_string(),
                        c.lp_only.to_string(),
                        c.tau.to_string(),
                        c.from_oracle.to_string(),
                        c.lp_only_independent.to_string(),
                        c.tau_independent.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })
        }
    }
}

/// Reads `path`, applies overrides and runs `cmd`. Errors carry their exit
/// code through `exit_code`.
pub fn run_file(
    cmd: Command,
    path: &Path,
    overrides: &crate::config::Overrides,
    oracle: bool,
    stdout: &mut dyn Write,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(overrides);
    run(cmd, &cfg, oracle, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    const BASE: &str = "[model]\nlambda_na = 0.1\nlambda_aa = 0.7\nassumption = \"monotone\"\n\n[costs]\nc_l = 3\nc_hn = 1\nc_ha = 12\nbeta = 0.9\n";

    #[test]
    fn threshold_report_has_certificate() {
        let r = threshold_report(&cfg(BASE), false).unwrap();
        assert!((r["kappa"].as_f64().unwrap() - 2.0 / 11.0).abs() < 1e-12);
        assert!((r["tau"].as_f64().unwrap() - 0.30075).abs() < 1e-3);
        assert_eq!(r["solution"]["branch"], "ttau_lt");
    }

    #[test]
    fn exit_codes_by_kind() {
        let e = threshold_report(&cfg(&BASE.replace("lambda_na = 0.1", "lambda_na = 0.9")), false).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("consumer-inertia"));
        let e = threshold_report(&cfg(&BASE.replace("c_ha = 12", "c_ha = 1").replace("c_l = 3", "c_l = 1")), false)
            .unwrap_err();
        assert!(matches!(e, Error::DegenerateCosts));
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&Error::NoRoot("x".into())), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
    }

    #[test]
    fn sweep_rows_and_status() {
        let c = cfg(&format!("{BASE}\n[sweep]\naxes = [{{ param = \"lambda_na\", values = [0.1, 0.5, 0.8] }}]\n"));
        let mut out = Vec::new();
        cmd_sweep(&c, false, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda_na,tau,kappa,case,tau_hat,status");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",ok"));
        assert!(lines[3].contains("consumer-inertia"));
    }

    #[test]
    fn lazy_only_simulation_is_geometric() {
        let c = cfg(&format!(
            "{BASE}\n[simulation]\nepisodes = 5\nhorizon = 10\nseed = 1\np0 = 0.2\npolicies = [{{ kind = \"lazy\" }}]\n"
        ));
        let mut out = Vec::new();
        cmd_simulate(&c, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!((last[1] - 3.0 * (1.0 - 0.9f64.powi(10)) / 0.1).abs() < 1e-9);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let c = cfg(&format!(
            "{BASE}\n[simulation]\nepisodes = 5\np0 = 0.2\npolicies = [{{ kind = \"lazy\" }}, {{ kind = \"lazy\" }}]\n"
        ));
        assert_eq!(exit_code(&cmd_simulate(&c, &mut Vec::new()).unwrap_err()), 2);
    }
}
