//! Coupon-dependent transitions: an HP offer itself pushes the consumer
//! toward Alerted, so the post-HP chain (lambda'_na, lambda'_aa) differs from
//! the LP chain.
//!
//! The closed form comes in four cases, indexed by the signs of T(tau) - tau
//! and T'(tau) - tau. Each case formula is evaluated and tested for
//! consistency with its own sign pattern. The value-iteration oracle is the
//! ground truth: `cross_check_cd` reports any disagreement as a defect instead
//! of trusting the closed form.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_threshold_policy, Dynamics};
use crate::model::{CostModel, TransitionModel};
use crate::threshold::{kappa, solve_threshold, CASE_TOL};
use crate::vi::{extract_threshold, solve_dynamics, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouponDependentModel {
    lp_chain: TransitionModel,
    hp_chain: TransitionModel,
}

impl CouponDependentModel {
    /// Requires lambda'_na >= lambda_na, lambda'_aa >= lambda_aa and
    /// lambda_aa >= lambda_na within each chain. Equality is allowed so the
    /// coupon-independent model is a special case.
    pub fn new(lp_chain: TransitionModel, hp_chain: TransitionModel) -> Result<Self> {
        for (name, ch) in [("lp_chain", &lp_chain), ("hp_chain", &hp_chain)] {
            if ch.gap() < 0.0 {
                return Err(Error::InertiaViolated(format!("{name}: need lambda_na <= lambda_aa")));
            }
        }
        if hp_chain.lambda_na() < lp_chain.lambda_na() {
            return Err(Error::invalid("hp_chain.lambda_na", "an HP offer must not lower lambda_na"));
        }
        if hp_chain.lambda_aa() < lp_chain.lambda_aa() {
            return Err(Error::invalid("hp_chain.lambda_aa", "an HP offer must not lower lambda_aa"));
        }
        Ok(CouponDependentModel { lp_chain, hp_chain })
    }

    pub fn lp_chain(&self) -> &TransitionModel {
        &self.lp_chain
    }

    pub fn hp_chain(&self) -> &TransitionModel {
        &self.hp_chain
    }

    pub fn is_degenerate(&self) -> bool {
        self.lp_chain == self.hp_chain
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics::coupon_dependent(&self.lp_chain, &self.hp_chain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdCandidate {
    pub case: u8,
    pub tau: f64,
    /// T(tau) - tau under the LP chain.
    pub lp_gap: f64,
    /// T'(tau) - tau under the HP chain.
    pub hp_gap: f64,
    pub consistent: bool,
    /// |V_LP(tau) - V_HP(tau)| for the policy with this threshold.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdSolution {
    pub tau: f64,
    /// Case that fired, or `None` when the chains coincide and the
    /// coupon-independent solver was used.
    pub case: Option<u8>,
    pub kappa: f64,
    pub eta: f64,
    pub eta_hp: f64,
    pub p_f: f64,
    pub p_f_hp: f64,
    pub indifference_residual: f64,
    pub tie_break: bool,
    pub candidates: Vec<CdCandidate>,
}

fn case_formulas(m: &CouponDependentModel, c: &CostModel) -> Result<([f64; 4], f64, f64, f64, f64)> {
    let k = kappa(c)?;
    let beta = c.beta();
    let (lp, hp) = (&m.lp_chain, &m.hp_chain);
    let (d, dp) = (lp.gap(), hp.gap());
    let p_f = lp.stationary().unwrap_or(f64::NAN);
    let p_fp = hp.stationary().unwrap_or(f64::NAN);
    let eta = beta * d / (1.0 - beta * d);
    let etap = beta * dp / (1.0 - beta * dp);
    let g = beta / (1.0 - beta);
    let dd = c.c_ha() - c.c_hn();
    let gain = c.c_l() - c.c_hn();
    let t2 = (gain + p_f * dd * (g - eta) - g * gain) / (dd * (1.0 - eta));
    let t3 = (gain + dd * (g * (p_f - p_fp) - (p_f * eta - p_fp * etap))) / (dd * (etap - eta + 1.0));
    let t4 = (gain * (1.0 + g) - p_fp * dd * (etap - g)) / (dd * (1.0 + etap));
    Ok(([k, t2, t3, t4], eta, etap, p_f, p_fp))
}

fn case_consistent(case: u8, lp_gap: f64, hp_gap: f64) -> bool {
    let ge = |x: f64| x >= -CASE_TOL;
    let lt = |x: f64| x < CASE_TOL;
    match case {
        1 => ge(lp_gap) && ge(hp_gap),
        2 => lt(lp_gap) && ge(hp_gap),
        3 => lt(lp_gap) && lt(hp_gap),
        _ => ge(lp_gap) && lt(hp_gap),
    }
}

fn policy_residual(d: &Dynamics, c: &CostModel, tau: f64) -> f64 {
    let ev = evaluate_threshold_policy(d, c, tau);
    (ev.lp_value(tau) - ev.hp_value(tau)).abs()
}

pub fn solve_threshold_cd(m: &CouponDependentModel, c: &CostModel) -> Result<CdSolution> {
    let (taus, eta, eta_hp, p_f, p_f_hp) = case_formulas(m, c)?;
    let k = taus[0];
    let d = m.dynamics();
    let candidates: Vec<CdCandidate> = taus
        .iter()
        .enumerate()
        .map(|(i, &raw)| {
            let case = i as u8 + 1;
            let lp_gap = m.lp_chain.transition(raw) - raw;
            let hp_gap = m.hp_chain.transition(raw) - raw;
            let in_range = raw.is_finite() && (-CASE_TOL..=1.0 + CASE_TOL).contains(&raw);
            let consistent = in_range && case_consistent(case, lp_gap, hp_gap);
            let tau = if raw.is_finite() { raw.clamp(0.0, 1.0) } else { raw };
            let residual = if consistent { policy_residual(&d, c, tau) } else { f64::NAN };
            CdCandidate { case, tau, lp_gap, hp_gap, consistent, residual }
        })
        .collect();

    if m.is_degenerate() {
        let s = solve_threshold(&m.lp_chain, c)?;
        return Ok(CdSolution {
            tau: s.tau,
            case: None,
            kappa: k,
            eta,
            eta_hp,
            p_f,
            p_f_hp,
            indifference_residual: s.indifference_residual,
            tie_break: s.tie_break,
            candidates,
        });
    }

    let consistent: Vec<&CdCandidate> = candidates.iter().filter(|x| x.consistent).collect();
    let Some(best) = consistent.iter().min_by(|x, y| x.residual.total_cmp(&y.residual)) else {
        let listing: Vec<String> = candidates
            .iter()
            .map(|x| format!("case {}: tau={} (T-tau={:+.3e}, T'-tau={:+.3e})", x.case, x.tau, x.lp_gap, x.hp_gap))
            .collect();
        return Err(Error::NoConsistentCase(listing.join("; ")));
    };
    Ok(CdSolution {
        tau: best.tau,
        case: Some(best.case),
        kappa: k,
        eta,
        eta_hp,
        p_f,
        p_f_hp,
        indifference_residual: best.residual,
        tie_break: consistent.len() > 1,
        candidates: candidates.clone(),
    })
}

/// Value iteration where HP jumps to the HP-chain anchors and LP follows the
/// LP chain.
pub fn vi_oracle_cd(m: &CouponDependentModel, c: &CostModel, grid: usize, tol: f64) -> Result<ValueTable> {
    solve_dynamics(&m.dynamics(), c, grid, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdCrossCheck {
    pub closed_form_tau: Option<f64>,
    pub case: Option<u8>,
    pub oracle_tau: f64,
    pub grid_step: f64,
    /// Set when the closed form and the oracle disagree by more than two
    /// grid steps, or no case is consistent.
    pub defect: Option<String>,
}

pub fn cross_check_cd(m: &CouponDependentModel, c: &CostModel, grid: usize, tol: f64) -> Result<CdCrossCheck> {
    let vt = vi_oracle_cd(m, c, grid, tol)?;
    let oracle_tau = extract_threshold(&vt)?;
    let step = vt.grid.step();
    Ok(match solve_threshold_cd(m, c) {
        Ok(s) => {
            let gap = (s.tau - oracle_tau).abs();
            let defect = (gap > 2.0 * step).then(|| {
                format!("case {:?} gives tau={} but the oracle switches at {oracle_tau}", s.case, s.tau)
            });
            CdCrossCheck { closed_form_tau: Some(s.tau), case: s.case, oracle_tau, grid_step: step, defect }
        }
        Err(Error::NoConsistentCase(msg)) => CdCrossCheck {
            closed_form_tau: None,
            case: None,
            oracle_tau,
            grid_step: step,
            defect: Some(format!("no consistent case: {msg}")),
        },
        Err(e) => return Err(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub c_l: f64,
    pub c_ha: f64,
    pub lp_only: bool,
    pub tau: f64,
    /// True when the coupon-dependent threshold came from the oracle because
    /// no closed-form case was consistent.
    pub from_oracle: bool,
    pub lp_only_independent: bool,
    pub tau_independent: f64,
}

/// Coupon-dependent and coupon-independent LP-only masks over a (C_L, C_HA)
/// grid with C_HN fixed. Pairs violating C_HN <= C_L <= C_HA or with
/// C_HA = C_HN are skipped.
pub fn lp_only_region(
    m: &CouponDependentModel,
    c_hn: f64,
    beta: f64,
    c_l_values: &[f64],
    c_ha_values: &[f64],
    grid: usize,
    tol: f64,
) -> Result<Vec<RegionCell>> {
    let pairs: Vec<(f64, f64)> = c_l_values
        .iter()
        .flat_map(|&l| c_ha_values.iter().map(move |&h| (l, h)))
        .filter(|&(l, h)| c_hn <= l && l <= h && h > c_hn)
        .collect();
    pairs
        .par_iter()
        .map(|&(c_l, c_ha)| {
            let c = CostModel::new(c_l, c_hn, c_ha, beta)?;
            let independent = solve_threshold(m.lp_chain(), &c)?;
            let (tau, from_oracle, lp_only) = match solve_threshold_cd(m, &c) {
                Ok(s) => (s.tau, false, s.tau <= CASE_TOL),
                Err(Error::NoConsistentCase(_)) => {
                    let vt = vi_oracle_cd(m, &c, grid, tol)?;
                    let t = extract_threshold(&vt)?;
                    (t, true, t <= vt.grid.step())
                }
                Err(e) => return Err(e),
            };
            Ok(RegionCell {
                c_l,
                c_ha,
                lp_only,
                tau,
                from_oracle,
                lp_only_independent: independent.tau <= CASE_TOL,
                tau_independent: independent.tau,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cd_model() -> CouponDependentModel {
        CouponDependentModel::new(
            TransitionModel::new(0.2, 0.8).unwrap(),
            TransitionModel::new(0.5, 0.9).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let lp = TransitionModel::new(0.2, 0.8).unwrap();
        assert!(CouponDependentModel::new(lp, TransitionModel::new(0.1, 0.9).unwrap()).is_err());
        assert!(CouponDependentModel::new(lp, TransitionModel::new(0.3, 0.7).unwrap()).is_err());
        assert!(CouponDependentModel::new(lp, lp).is_ok());
    }

    #[test]
    fn degenerate_model_matches_independent_threshold() {
        let lp = TransitionModel::new(0.3, 0.8).unwrap();
        let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
        let m = CouponDependentModel::new(lp, lp).unwrap();
        let s = solve_threshold_cd(&m, &c).unwrap();
        assert!((s.tau - solve_threshold(&lp, &c).unwrap().tau).abs() < 1e-12);
        assert_eq!(s.case, None);
    }

    #[test]
    fn degenerate_oracle_equals_two_state_oracle() {
        let lp = TransitionModel::new(0.3, 0.8).unwrap();
        let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
        let m = CouponDependentModel::new(lp, lp).unwrap();
        let a = vi_oracle_cd(&m, &c, 501, 1e-10).unwrap();
        let b = crate::vi::solve_two_state(&lp, &c, 501, 1e-10).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn c_l_equal_c_ha_oracle() {
        // kappa = 1, yet the oracle does not offer HP everywhere: an HP offer
        // raises future alert probabilities, so LP wins at high beliefs.
        let c = CostModel::new(12.0, 1.0, 12.0, 0.9).unwrap();
        let vt = vi_oracle_cd(&cd_model(), &c, 2001, 1e-9).unwrap();
        let t = extract_threshold(&vt).unwrap();
        assert!((t - 0.8495).abs() < 2e-3, "t={t}");
    }

    #[test]
    fn consistent_case_matches_oracle() {
        // kappa = 4/19 < 0.5, inside the region where a printed case applies.
        let c = CostModel::new(5.0, 1.0, 20.0, 0.9).unwrap();
        let x = cross_check_cd(&cd_model(), &c, 2001, 1e-9).unwrap();
        assert!(x.defect.is_none(), "{x:?}");
        let tau_ind = solve_threshold(cd_model().lp_chain(), &c).unwrap().tau;
        assert!(x.oracle_tau <= tau_ind + 2e-3);
    }

    #[test]
    fn missing_case_is_reported() {
        let c = CostModel::new(15.0, 1.0, 20.0, 0.9).unwrap();
        assert!(matches!(solve_threshold_cd(&cd_model(), &c), Err(Error::NoConsistentCase(_))));
        let x = cross_check_cd(&cd_model(), &c, 1001, 1e-9).unwrap();
        assert!(x.defect.is_some() && x.closed_form_tau.is_none());
    }

    #[test]
    fn region_rows() {
        let cells = lp_only_region(&cd_model(), 1.0, 0.9, &[1.0, 5.0, 12.0], &[1.0, 5.0, 12.0, 20.0], 501, 1e-9).unwrap();
        for cell in &cells {
            if cell.c_l == 1.0 {
                assert!(cell.lp_only && cell.lp_only_independent);
            }
            if cell.c_l == cell.c_ha {
                assert!(!cell.lp_only && !cell.lp_only_independent);
            }
        }
        assert!(cells.iter().all(|c| c.c_ha > 1.0 && c.c_l <= c.c_ha));
    }
}
