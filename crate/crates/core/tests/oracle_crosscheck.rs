//! Closed forms against the value-iteration oracle.

use coupon_policy::coupon_dependent::{solve_threshold_cd, vi_oracle_cd, CouponDependentModel};
use coupon_policy::evaluation::{evaluate_threshold_policy, Dynamics};
use coupon_policy::simplex::{solve_multistate, MultiStateModel};
use coupon_policy::vi::{check_structure, extract_threshold, solve_two_state};
use coupon_policy::{solve_threshold, Action, CostModel, Error, TransitionModel};
use proptest::prelude::*;

fn strict_chain() -> impl Strategy<Value = TransitionModel> {
    (0.5..1.0f64, 0.0..1.0f64).prop_map(|(aa, u)| {
        let lo = 1.0 - aa;
        let hi = aa.min(0.5);
        TransitionModel::new(lo + (hi - lo) * u, aa).unwrap()
    })
}

fn costs() -> impl Strategy<Value = CostModel> {
    (0.0..5.0f64, 0.0..10.0f64, 0.05..20.0f64, 0.5..0.99f64)
        .prop_map(|(hn, a, b, beta)| CostModel::new(hn + a, hn, hn + a + b, beta).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn closed_form_matches_oracle(m in strict_chain(), c in costs()) {
        let s = solve_threshold(&m, &c).unwrap();
        let vt = solve_two_state(&m, &c, 2001, 1e-9).unwrap();
        let tau_hat = extract_threshold(&vt).unwrap();
        prop_assert!((s.tau - tau_hat).abs() <= 2.0 * vt.grid.step(), "tau={} tau_hat={}", s.tau, tau_hat);
        prop_assert!(check_structure(&vt).all_pass());
    }

    #[test]
    fn policy_value_matches_oracle_value(m in strict_chain(), c in costs(), p in 0.0..1.0f64) {
        let s = solve_threshold(&m, &c).unwrap();
        let vt = solve_two_state(&m, &c, 2001, 1e-10).unwrap();
        let exact = evaluate_threshold_policy(&Dynamics::coupon_independent(&m), &c, s.tau).value(p);
        // Interpolation error of a concave function on a 1e-3 grid.
        prop_assert!((exact - vt.value_at(p)).abs() <= 1e-3 * (1.0 + c.lazy_value()), "{} vs {}", exact, vt.value_at(p));
    }

    #[test]
    fn grid_refinement_is_stable(m in strict_chain(), c in costs()) {
        let coarse = solve_two_state(&m, &c, 501, 1e-9).unwrap();
        let fine = solve_two_state(&m, &c, 1001, 1e-9).unwrap();
        let (a, b) = (extract_threshold(&coarse).unwrap(), extract_threshold(&fine).unwrap());
        prop_assert!((a - b).abs() <= coarse.grid.step() + 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn coupon_dependent_oracle_is_threshold_and_lower(
        m in strict_chain(),
        c in costs(),
        dn in 0.0..0.3f64,
        da in 0.0..0.3f64,
    ) {
        let hp_na = (m.lambda_na() + dn).min(1.0);
        let hp = TransitionModel::monotone(hp_na, (m.lambda_aa() + da).min(1.0).max(hp_na)).unwrap();
        let cd = CouponDependentModel::new(m, hp).unwrap();
        let vt = vi_oracle_cd(&cd, &c, 1001, 1e-9).unwrap();
        let tau_cd = extract_threshold(&vt).unwrap();
        let tau = solve_threshold(&m, &c).unwrap().tau;
        prop_assert!(tau_cd <= tau + 2.0 * vt.grid.step(), "tau_cd={} tau={}", tau_cd, tau);
        match solve_threshold_cd(&cd, &c) {
            Ok(s) if !cd.is_degenerate() => prop_assert!(s.case.is_some()),
            Ok(_) | Err(Error::NoConsistentCase(_)) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

fn ordered_costs(k: usize) -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (0.0..3.0f64, 0.0..5.0f64, proptest::collection::vec(0.1..8.0f64, k), 0.5..0.95f64).prop_map(|(hn, a, steps, beta)| {
        let c_l = hn + a;
        let mut hp = vec![hn];
        let mut x = c_l;
        for s in steps {
            x += s;
            hp.push(x);
        }
        (hp, c_l, beta)
    })
}

fn stochastic_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        let mut r: Vec<f64> = v.iter().map(|x| x / s).collect();
        let tail: f64 = r[1..].iter().sum();
        r[0] = 1.0 - tail;
        r
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn multistate_hp_region_is_convex(
        rows in proptest::collection::vec(stochastic_row(3), 3),
        (hp, c_l, beta) in ordered_costs(2),
    ) {
        let m = MultiStateModel::new(rows, hp, c_l, beta).unwrap();
        let t = solve_multistate(&m, 30, 1e-9).unwrap();
        prop_assert!(t.hp_region_convex());
    }
}

#[test]
fn two_state_simplex_matches_two_state_oracle() {
    let chain = TransitionModel::new(0.2, 0.8).unwrap();
    let c = CostModel::new(3.0, 1.0, 12.0, 0.9).unwrap();
    // Simplex coordinates are (p_N, p_A); row i is the next-state law from i.
    let m = MultiStateModel::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![1.0, 12.0], 3.0, 0.9).unwrap();
    let table = solve_multistate(&m, 2000, 1e-10).unwrap();
    let vt = solve_two_state(&chain, &c, 2001, 1e-10).unwrap();
    let mut worst = 0.0f64;
    for i in 0..table.grid.len() {
        let b = table.grid.belief(i);
        worst = worst.max((table.values[i] - vt.value_at(b[1])).abs());
    }
    assert!(worst <= 1e-4, "worst gap {worst}");
    // Single breakpoint along the edge.
    let mut by_p: Vec<(f64, Action)> = (0..table.grid.len()).map(|i| (table.grid.belief(i)[1], table.actions[i])).collect();
    by_p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let switches = by_p.windows(2).filter(|w| w[0].1 != w[1].1).count();
    assert_eq!(switches, 1);
}

#[test]
fn three_state_region_at_default_resolution() {
    let m = MultiStateModel::new(
        vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.2, 0.7]],
        vec![1.0, 10.0, 20.0],
        7.0,
        0.9,
    )
    .unwrap();
    let t = solve_multistate(&m, 100, 1e-9).unwrap();
    assert!(t.hp_region_convex());
    let r = t.corner_report();
    assert!(r.in_normal_corner(), "{r:?}");
    assert!(r.hp_points > 0 && r.hp_points < r.total_points);
}
