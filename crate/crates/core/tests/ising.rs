use std::f64::consts::{LN_2, TAU};
use std::sync::Arc;

use contact_relax::flow::flow_point;
use contact_relax::ising::{
    admissibility_region, admissible_from, compare_scenarios, count_equilibria, dpdq_at_chord,
    equilibrium_branches, fold_magnetization, fold_point, fold_point_by_root_count, free_energy,
    integrate_scenario_one, lambda_a_alpha, make_admissible, phi, phi_prime, r_minus, r_plus,
    r_single, s_branch, scenario_one_limit, scenario_two_limit, scenario_two_state, try_phi, Case,
    IsingCurve, IsingHamiltonian, IsingParams, Perturbation,
};
use contact_relax::legendrian::find_reeb_chords;
use contact_relax::{Error, Legendrian, PhasePoint};
use proptest::prelude::*;

fn params(b: f64, beta: f64, c: f64) -> IsingParams {
    IsingParams::new(b, beta, c).unwrap()
}

#[test]
fn phi_examples() {
    for beta in [0.1, 1.0, 7.0] {
        assert!((phi(beta, 0.0) - LN_2 / beta).abs() < 1e-15);
        assert_eq!(phi_prime(beta, 0.0), 0.0);
        assert_eq!(phi_prime(beta, 1.3), -phi_prime(beta, -1.3));
    }
    assert!((phi(1.0, 50.0) - 50.0).abs() < 1e-12);
    assert!(phi(1.0, 1e6).is_finite());
    assert!(try_phi(0.0, 1.0).is_err());
    assert!(try_phi(-1.0, 1.0).is_err());
}

#[test]
fn free_energy_examples() {
    let p = params(0.0, 0.7, 1.0);
    assert!((free_energy(&p, 0.4, 1.1) + phi(0.7, 1.1)).abs() < 1e-15);
    let p = params(1.5, 0.4, 1.0);
    assert!((free_energy(&p, 0.0, 0.0) + LN_2 / 0.4).abs() < 1e-15);

    let p = params(6.0, 1.0, 1.0);
    let m = r_plus(&p, 0.0).unwrap();
    let h = 1e-6;
    let dfdq = (free_energy(&p, m, h) - free_energy(&p, m, -h)) / (2.0 * h);
    assert!((-dfdq - (6.0 * m).tanh()).abs() < 1e-9);
    assert!(((6.0 * m).tanh() - m).abs() < 1e-10);
}

#[test]
fn classification() {
    assert_eq!(params(0.5, 1.0, 1.0).classify(), Case::A);
    assert_eq!(params(2.0, 0.5, 1.0).classify(), Case::Marginal);
    match params(6.0, 1.0, 1.0).classify() {
        Case::B { fold } => {
            let oracle = fold_point_by_root_count(6.0, 1.0).unwrap();
            assert!((fold - oracle).abs() < 1e-9, "{fold} vs {oracle}");
            let m = fold_magnetization(6.0, 1.0).unwrap();
            assert!((m - (1.0f64 - 1.0 / 6.0).sqrt()).abs() < 1e-15);
            assert_eq!(count_equilibria(6.0, 1.0, 0.5 * fold), 3);
            assert_eq!(count_equilibria(6.0, 1.0, 2.0 * fold), 1);
        }
        other => panic!("expected case B, got {other:?}"),
    }
    assert!(fold_point(0.5, 1.0).is_none());
}

#[test]
fn case_a_branch_is_odd() {
    let p = params(0.5, 1.0, 1.0);
    assert_eq!(r_single(&p, 0.0), 0.0);
    let br = equilibrium_branches(&p, -4.0, 4.0).unwrap();
    assert!(br.max_residual(&p) <= 1e-10);
    for (i, &q) in br.q.iter().enumerate() {
        let r = br.r_plus[i].unwrap();
        assert!((r + r_single(&p, -q)).abs() <= 1e-10);
        assert!(br.s[i].is_none());
    }
}

#[test]
fn case_b_branches() {
    let p = params(6.0, 1.0, 1.0);
    let fold = fold_point(6.0, 1.0).unwrap();
    let br = equilibrium_branches(&p, -8.0, 8.0).unwrap();
    assert!(br.max_residual(&p) <= 1e-10);
    let mut last_s = f64::INFINITY;
    for (i, &q) in br.q.iter().enumerate() {
        assert_eq!(br.r_plus[i].is_some(), q >= -fold);
        assert_eq!(br.r_minus[i].is_some(), q <= fold);
        if let (Some(rm), Some(rp)) = (br.r_minus[i], r_plus(&p, -q)) {
            assert!((rm + rp).abs() <= 1e-10);
        }
        if let Some(s) = br.s[i] {
            assert!(q.abs() < fold);
            assert!((s + s_branch(&p, -q).unwrap()).abs() <= 1e-10);
            assert!(s < last_s);
            last_s = s;
        }
    }
}

#[test]
fn branch_csv_leaves_gaps() {
    let p = params(6.0, 1.0, 1.0);
    let br = equilibrium_branches(&p, -8.0, 8.0).unwrap();
    let mut buf = Vec::new();
    br.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,r_minus,s,r_plus"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 4);
    assert!(!first[1].is_empty() && first[2].is_empty() && first[3].is_empty());
}

#[test]
fn scenario_one_examples() {
    let a = params(0.5, 1.0, 1.0);
    let lim = scenario_one_limit(&a, -1.0, 0.3);
    assert!(lim.stable);
    let ode = integrate_scenario_one(&a, -1.0, 0.3, 200.0).unwrap();
    assert!((ode - lim.value).abs() < 1e-6);

    let b = params(6.0, 1.0, 1.0);
    let up = scenario_one_limit(&b, 0.01, 0.0);
    assert!(up.stable);
    assert!((up.value - r_plus(&b, 0.0).unwrap()).abs() < 1e-12);
    let ode = integrate_scenario_one(&b, 0.01, 0.0, 200.0).unwrap();
    assert!((ode - up.value).abs() < 1e-6);

    let unstable = scenario_one_limit(&b, 0.0, 0.0);
    assert!(!unstable.stable);
    assert_eq!(unstable.value, 0.0);
}

#[test]
fn scenario_one_jumps_at_the_repeller() {
    let p = params(6.0, 1.0, 1.0);
    let q = 0.3;
    let s = s_branch(&p, q).unwrap();
    let below = scenario_one_limit(&p, s - 1e-9, q).value;
    let above = scenario_one_limit(&p, s + 1e-9, q).value;
    let gap = r_plus(&p, q).unwrap() - r_minus(&p, q).unwrap();
    assert!(above - below >= gap - 1e-6);
}

#[test]
fn scenario_two_examples() {
    let p = params(6.0, 1.0, 1.0);
    let (pi, qi, _) = scenario_two_limit(&p, 0.0, 1.0);
    assert!((pi - 1f64.tanh()).abs() < 1e-15);
    assert!((qi - (1.0 - 6.0 * 1f64.tanh())).abs() < 1e-14);

    // an equilibrium point stays put
    let q0 = 0.8;
    let m = r_plus(&p, q0).unwrap();
    let z0 = phi(1.0, q0 + 6.0 * m) - 3.0 * m * m;
    let x0 = PhasePoint::n1(m, q0, z0);
    let x = scenario_two_state(&p, &x0, 7.0);
    assert!(x.distance(&x0) < 1e-12);
    let (pl, ql, zl) = scenario_two_limit(&p, m, q0);
    assert!((pl - m).abs() < 1e-12 && (ql - q0).abs() < 1e-12 && (zl - z0).abs() < 1e-12);
}

#[test]
fn scenario_two_integrator_agreement_and_q_conservation() {
    let p = params(6.0, 1.0, 1.0);
    let h = IsingHamiltonian { params: p };
    for x0 in [
        PhasePoint::n1(0.0, 1.0, 0.0),
        PhasePoint::n1(-0.3, 0.5, 1.0),
    ] {
        let big_q0 = x0.q()[0] + 6.0 * x0.p()[0];
        for t in [1.0, 5.0, 10.0] {
            let y = flow_point(&h, &x0, t, 1e-12).unwrap();
            assert!(y.distance(&scenario_two_state(&p, &x0, t)) < 1e-6);
            assert!((y.q()[0] + 6.0 * y.p()[0] - big_q0).abs() < 1e-7);
        }
    }
}

#[test]
fn compare_scenarios_examples() {
    let p = params(6.0, 1.0, 1.0);
    let fold = fold_point(6.0, 1.0).unwrap();
    assert!(compare_scenarios(&p, 0.0, fold + 2.0, 21).unwrap() <= 1e-12);
    assert!(compare_scenarios(&p, 1e-3, fold + 2.0, 21).unwrap() < 0.01);
    assert!(compare_scenarios(&p, 1e-3, 0.5 * fold, 21).is_err());
    let coarse = compare_scenarios(&p, 1e-2, fold + 2.0, 21).unwrap();
    let fine = compare_scenarios(&p, 1e-3, fold + 2.0, 21).unwrap();
    assert!(fine <= coarse);
}

#[test]
fn scenario_two_limit_is_continuous() {
    let (b, beta) = (6.0, 1.0);
    let p = params(b, beta, 1.0);
    let step = 1e-3;
    for p0 in [-0.5, 0.0, 0.2] {
        let mut prev = scenario_two_limit(&p, p0, -3.0).0;
        for i in 1..6000 {
            let cur = scenario_two_limit(&p, p0, -3.0 + step * i as f64).0;
            assert!((cur - prev).abs() <= beta * (1.0 + b) * step);
            prev = cur;
        }
    }
}

#[test]
fn unperturbed_curve_is_zero_section() {
    let c = IsingCurve {
        a: 1.5,
        alpha: 0.4,
        b: 1.5,
        beta: 0.4,
    };
    for u in [-3.0, -0.2, 0.0, 1.0, 5.0] {
        let [p, _, z] = c.point(u);
        assert!(p.abs() < 1e-15 && z.abs() < 1e-14, "u={u}: {p} {z}");
    }
}

#[test]
fn curve_asymptotes() {
    let c = IsingCurve {
        a: 4.0,
        alpha: 1.0,
        b: 1.5,
        beta: 0.4,
    };
    for u in [-60.0, 60.0] {
        let [p, q, z] = c.point(u);
        assert!(q.abs() > 50.0);
        assert!(p.abs() < 1e-12);
        assert!((z - 1.25).abs() < 1e-10, "{z}");
    }
}

fn finite_difference_slope(c: &IsingCurve) -> f64 {
    let h = 1e-5;
    let (a, b) = (c.point(h), c.point(-h));
    (a[0] - b[0]) / (a[1] - b[1])
}

#[test]
fn chord_slope_examples() {
    assert!((dpdq_at_chord(2.0, 1.1, 2.0, 0.3).unwrap() - 0.8).abs() < 1e-15);
    assert!((dpdq_at_chord(4.0, 1.0, 1.5, 0.4).unwrap() - 1.6 / -1.5).abs() < 1e-14);
    for (a, alpha, b, beta) in [(4.0, 0.2, 2.0, 0.1), (4.0, 1.0, 1.5, 0.4)] {
        let exact = dpdq_at_chord(a, alpha, b, beta).unwrap();
        let fd = finite_difference_slope(&IsingCurve { a, alpha, b, beta });
        assert!(((fd - exact) / exact).abs() < 1e-4, "{fd} vs {exact}");
    }
    assert!(matches!(
        dpdq_at_chord(3.0, 0.5, 1.0, 0.2),
        Err(Error::FrontPole)
    ));
}

#[test]
fn front_convexity_matches_slope_sign() {
    for (a, alpha, b, beta, sign) in [(4.0, 1.0, 1.5, 0.4, -1.0), (4.0, 0.2, 2.0, 0.1, 1.0)] {
        let c = IsingCurve { a, alpha, b, beta };
        let h = 1e-3;
        let [_, q0, z0] = c.point(0.0);
        let [_, q1, z1] = c.point(h);
        let [_, qm, zm] = c.point(-h);
        // second divided difference of the front Z(Q)
        let second = 2.0 * ((z1 - z0) / (q1 - q0) - (z0 - zm) / (q0 - qm)) / (q1 - qm);
        assert_eq!(second.signum(), sign);
        assert_eq!(dpdq_at_chord(a, alpha, b, beta).unwrap().signum(), sign);
    }
}

#[test]
fn unfolded_curves_stay_above_zero_when_alpha_is_smaller() {
    let mut checked = 0;
    for a in [2.0, 4.0, 6.0] {
        for b in [0.5, 1.5] {
            for (alpha, beta) in [(0.2, 0.4), (0.5, 1.0), (1.0, 2.0)] {
                if alpha * (a - b) >= 1.0 {
                    continue;
                }
                let m = IsingCurve { a, alpha, b, beta }.min_z(-30.0, 30.0);
                assert!(m > 0.0, "({a}, {alpha}, {b}, {beta}): min Z = {m}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 8);
}

#[test]
fn folded_curve_can_dip_below_zero() {
    // counterexample with alpha < beta: the folded front reaches Z < 0 near u = 1
    let c = IsingCurve {
        a: 4.0,
        alpha: 1.0,
        b: 0.5,
        beta: 2.0,
    };
    let m = c.min_z(-30.0, 30.0);
    assert!((m + 1.65006).abs() < 1e-4, "{m}");
    let [_, _, z] = c.point(1.0);
    assert!(z < -1.5);
}

#[test]
fn admissible_examples() {
    let h = make_admissible(1.0, TAU, 0.0, 0.1).unwrap();
    assert!(h.report.as_ref().unwrap().all_hold());
    let h = make_admissible(1.0, TAU, 0.2, 0.1).unwrap();
    assert!(h.report.as_ref().unwrap().all_hold());
    assert!(make_admissible(1.0, TAU, -0.1, 0.1).is_err());
}

struct ReebReversal {
    c: f64,
}

impl Perturbation for ReebReversal {
    fn value(&self, big_p: f64, _big_q: f64, big_z: f64) -> f64 {
        2.0 * self.c * big_z * (-big_p * big_p).exp()
    }
    fn gradient(&self, big_p: f64, _big_q: f64, big_z: f64) -> [f64; 3] {
        let g = (-big_p * big_p).exp();
        [-4.0 * self.c * big_z * big_p * g, 0.0, 2.0 * self.c * g]
    }
}

#[test]
fn reversed_reeb_derivative_is_rejected() {
    let c = 1.0;
    let err = admissible_from(
        c,
        TAU,
        Arc::new(ReebReversal { c }),
        admissibility_region(TAU, 0.1),
    )
    .unwrap_err();
    match err {
        Error::NotAdmissible(msg) => assert!(msg.contains("(i)"), "{msg}"),
        other => panic!("unexpected error {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unique_nondegenerate_chord(
        b in 0.2..3.0f64, gap in 0.2..3.0f64, beta in 0.1..1.0f64, ratio in 1.2..3.0f64,
    ) {
        let (a, alpha) = (b + gap, beta * ratio);
        prop_assume!((1.0 - alpha * (a - b)).abs() > 0.05);
        let source = lambda_a_alpha(a, alpha, b, beta).unwrap();
        let chords = find_reeb_chords(&source, &Legendrian::zero_section(), -20.0, 20.0).unwrap();
        prop_assert_eq!(chords.len(), 1);
        prop_assert!(chords[0].q().abs() <= 1e-8);
        prop_assert!((chords[0].start.z() - LN_2 * (1.0 / alpha - 1.0 / beta)).abs() <= 1e-8);
        prop_assert!(chords[0].nondegenerate);
    }

    #[test]
    fn stable_branches_are_self_consistent_and_odd(b in 0.0..6.0f64, beta in 0.1..2.0f64, q in -5.0..5.0f64) {
        let p = params(b, beta, 1.0);
        match p.classify() {
            Case::B { .. } => {
                if let Some(r) = r_plus(&p, q) {
                    prop_assert!(p.self_consistency(r, q).abs() <= 1e-10);
                    prop_assert!((r + r_minus(&p, -q).unwrap()).abs() <= 1e-10);
                }
            }
            _ => {
                let r = r_single(&p, q);
                prop_assert!(p.self_consistency(r, q).abs() <= 1e-10);
                prop_assert!((r + r_single(&p, -q)).abs() <= 1e-10);
            }
        }
    }
}
