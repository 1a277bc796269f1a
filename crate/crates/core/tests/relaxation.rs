use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use contact_relax::contact::{FnHamiltonian, LinearDecay, PhaseView, SinePotential, TimeReversed};
use contact_relax::error::Error;
use contact_relax::ising::{lambda_a_alpha, make_admissible, IsingCurve};
use contact_relax::legendrian::{BaseDomain, Legendrian};
use contact_relax::models::{blocking, saturated_decay, MoebiusModel};
use contact_relax::relaxation::{
    compute_cores, hausdorff_to_curve, perturbation_sweep, shoot, verify_clubsuit, Classification,
    SampleRegion, ShootingProblem, SurfaceGrid,
};
use contact_relax::PhasePoint;

fn region() -> SampleRegion {
    SampleRegion {
        p: (-1.0, 1.0),
        q: (-1.0, 1.0),
        z: (-3.0, 1.0),
    }
}

#[test]
fn saturated_decay_satisfies_clubsuit() {
    let r = verify_clubsuit(
        &saturated_decay(1.0),
        &Legendrian::zero_section(),
        &region(),
    )
    .unwrap();
    assert!(r.all_hold(), "{r:?}");
    let (k1, k2) = (r.kappa1.unwrap(), r.kappa2.unwrap());
    assert!(0.0 < k1 && k1 < k2);
}

#[test]
fn growth_along_reeb_fails_iii() {
    let h = FnHamiltonian::new(1, |x: PhaseView<'_>| x.z);
    let r = verify_clubsuit(&h, &Legendrian::zero_section(), &region()).unwrap();
    assert!(!r.iii);
    assert_eq!(r.first_failure(), Some("i"));
}

#[test]
fn admissible_family_satisfies_clubsuit() {
    let h = make_admissible(1.0, TAU, 0.2, 0.1).unwrap();
    let region = SampleRegion {
        p: (-1.0, 1.0),
        q: (0.0, TAU),
        z: (-2.0, 2.0),
    };
    let r = verify_clubsuit(&h, &Legendrian::zero_section(), &region).unwrap();
    assert!(r.all_hold(), "{r:?}");
}

#[test]
fn decay_captures_every_shot_from_a_constant_section() {
    let prob = ShootingProblem::new(
        Arc::new(LinearDecay::new(1.0)),
        Legendrian::constant(-1.0),
        (-3.0, 3.0),
        Legendrian::zero_section(),
        1.0,
    );
    let report = shoot(&prob, 13).unwrap();
    assert_eq!(report.results.len(), 13);
    assert!(report
        .results
        .iter()
        .all(|r| r.classification == Classification::Captured));
    assert_eq!(report.captured_in_sigma_plus(), 13);
    assert!(report.results.iter().all(|r| r.final_distance <= prob.eps));
}

#[test]
fn moebius_interlinking_depends_on_the_sign_of_c() {
    let h = MoebiusModel::default().hamiltonian();
    let count = |c: f64| {
        let prob = ShootingProblem::new(
            Arc::new(h),
            MoebiusModel::k_c(c),
            (0.0, TAU),
            MoebiusModel::lambda_st(),
            1.0,
        );
        shoot(&prob, 8).unwrap().captured().count()
    };
    assert_eq!(count(-2.0), 8);
    assert_eq!(count(2.0), 0);
}

#[test]
fn scenario_one_has_a_captured_shot_in_sigma_plus() {
    let h = make_admissible(1.0, TAU, 0.1, 0.1).unwrap();
    let source = lambda_a_alpha(4.0, 1.0, 1.5, 0.4).unwrap();
    let window = source.parameter_window(-3.0, 3.0).unwrap();
    let mut prob =
        ShootingProblem::new(Arc::new(h), source, window, Legendrian::zero_section(), 1.0);
    prob.refine = false;
    let report = shoot(&prob, 21).unwrap();
    assert!(report.captured_in_sigma_plus() >= 1);
    // the folded source dips below Z = 0, so some shots run in Sigma_- throughout
    assert!(report.captured().any(|r| !r.stayed_in_sigma_plus));
    assert!(report.captured().all(|r| !r.crossed_target_boundary));
}

#[test]
fn scenario_two_captures_at_large_q() {
    let h = make_admissible(1.0, TAU, 0.1, 0.1).unwrap();
    let source = lambda_a_alpha(1.0, 1.0, 2.0, 1.0).unwrap();
    let window = source.parameter_window(12.0, 20.0).unwrap();
    let mut prob =
        ShootingProblem::new(Arc::new(h), source, window, Legendrian::zero_section(), 1.0);
    prob.refine = false;
    let report = shoot(&prob, 11).unwrap();
    assert!(report.captured_in_sigma_plus() >= 1);
}

#[test]
fn blocked_target_captures_nothing() {
    let (a, alpha, b, beta) = (4.0, 0.4, 1.5, 1.0);
    let min_z = IsingCurve { a, alpha, b, beta }.min_z(-20.0, 20.0);
    assert!(min_z > 0.0);
    let h = blocking(1.0, 0.5 * min_z).unwrap();
    let source = lambda_a_alpha(a, alpha, b, beta).unwrap();
    let window = source.parameter_window(-10.0, 10.0).unwrap();
    let mut prob =
        ShootingProblem::new(Arc::new(h), source, window, Legendrian::zero_section(), 1.0);
    prob.sigma_plus = Some(Arc::new(|x: PhaseView<'_>| -x.z));
    prob.refine = false;
    assert_eq!(shoot(&prob, 11).unwrap().captured().count(), 0);
}

#[test]
fn empty_window_and_zero_grid_are_rejected() {
    let prob = ShootingProblem::new(
        Arc::new(LinearDecay::new(1.0)),
        Legendrian::constant(-1.0),
        (1.0, -1.0),
        Legendrian::zero_section(),
        1.0,
    );
    assert!(matches!(shoot(&prob, 5), Err(Error::EmptyWindow)));
    let mut ok = prob.clone();
    ok.window = (-1.0, 1.0);
    assert!(shoot(&ok, 0).is_err());
}

#[test]
fn short_horizon_leaves_shots_undecided() {
    let mut prob = ShootingProblem::new(
        Arc::new(LinearDecay::new(1.0)),
        Legendrian::constant(-1.0),
        (-1.0, 1.0),
        Legendrian::zero_section(),
        1.0,
    );
    prob.horizon = 0.5;
    let report = shoot(&prob, 3).unwrap();
    assert!(report
        .results
        .iter()
        .all(|r| r.classification == Classification::Undecided));
}

fn sine_source_problem() -> ShootingProblem {
    let src = Legendrian::jet_graph(
        Arc::new(SinePotential {
            amplitude: 2.0,
            period: TAU,
        }),
        BaseDomain::Circle(TAU),
    );
    ShootingProblem::new(
        Arc::new(MoebiusModel::default().hamiltonian()),
        src,
        (0.0, TAU),
        MoebiusModel::lambda_st(),
        1.0,
    )
}

#[test]
fn refining_the_grid_keeps_verdicts_and_boundaries() {
    let prob = sine_source_problem();
    let coarse = shoot(&prob, 9).unwrap();
    let fine = shoot(&prob, 17).unwrap();
    for (i, r) in coarse.results.iter().enumerate() {
        let s = &fine.results[2 * i];
        assert_eq!(r.parameter, s.parameter);
        assert_eq!(r.classification, s.classification, "at u = {}", r.parameter);
    }
    assert!(!coarse.boundaries.is_empty());
    for u in &coarse.boundaries {
        let nearest = fine
            .boundaries
            .iter()
            .map(|v| (u - v).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-7, "{u} vs {:?}", fine.boundaries);
    }
}

#[test]
fn shooting_csv_lists_every_shot() {
    let prob = sine_source_problem();
    let mut quick = prob.clone();
    quick.refine = false;
    let report = shoot(&quick, 4).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("parameter,classification,final_distance,stayed_in_sigma_plus")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn small_source_shifts_keep_the_capture_count() {
    let prob = ShootingProblem::new(
        Arc::new(LinearDecay::new(1.0)),
        Legendrian::constant(-1.0),
        (-2.0, 2.0),
        Legendrian::zero_section(),
        1.0,
    );
    let sweep = perturbation_sweep(
        &prob,
        Arc::new(SinePotential {
            amplitude: 1.0,
            period: 3.0,
        }),
        &[0.0, 1e-3, 1e-2],
        7,
    )
    .unwrap();
    assert!(sweep.iter().all(|(_, n)| *n == 7), "{sweep:?}");
}

fn plane(count: usize) -> SurfaceGrid {
    SurfaceGrid {
        map: Arc::new(|q: f64, p: f64| PhasePoint::n1(p, q, 0.0)),
        s_range: (-2.0, 2.0),
        theta_range: (-1.0, 1.0),
        s_count: count,
        theta_count: count,
    }
}

#[test]
fn decay_core_on_the_plane_is_the_p_zero_line() {
    let cores = compute_cores(&LinearDecay::new(1.0), &plane(11), 15.0).unwrap();
    assert!(cores.gamma.is_empty());
    assert!(cores.q_plus.is_empty());
    assert_eq!(cores.q_minus.len(), 121);
    for x in &cores.q_minus {
        assert!(x.p()[0].abs() <= (-15.0f64).exp() * 1.0 + 1e-9);
        assert!(x.z().abs() <= 1e-12);
    }
    // grid spacing in q is 0.4
    let d = hausdorff_to_curve(
        &cores.q_minus,
        &Legendrian::zero_section(),
        (-2.0, 2.0),
        201,
    )
    .unwrap();
    assert!(d <= 0.2 + 1e-6, "{d}");
}

#[test]
fn non_invariant_surface_is_rejected() {
    let mut m = plane(5);
    m.map = Arc::new(|q: f64, p: f64| PhasePoint::n1(p, q, 0.5));
    assert!(matches!(
        compute_cores(&LinearDecay::new(1.0), &m, 1.0),
        Err(Error::NotInvariant { .. })
    ));
}

#[test]
fn moebius_gamma_is_the_equator_pair() {
    let h = MoebiusModel::default().hamiltonian();
    let torus = MoebiusModel::torus(8, 16, (PI / 16.0, TAU + PI / 16.0));
    let cores = compute_cores(&h, &torus, 2.0).unwrap();
    assert_eq!(cores.gamma.len(), 16);
    for x in &cores.gamma {
        assert!(x.z().abs() <= 1e-10);
        assert!((x.p()[0].abs() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn reversed_moebius_swaps_the_cores() {
    let h = MoebiusModel::default().hamiltonian();
    let torus = MoebiusModel::torus(64, 16, (PI / 16.0, TAU + PI / 16.0));
    let fwd = compute_cores(&h, &torus, 15.0).unwrap();
    let rev = compute_cores(&TimeReversed(h), &torus, 15.0).unwrap();
    let st = MoebiusModel::lambda_st();
    let unst = MoebiusModel::lambda_unst();
    let d = |cloud: &[PhasePoint], l: &Legendrian| {
        cloud
            .iter()
            .map(|x| l.distance_to(x).unwrap())
            .fold(0.0, f64::max)
    };
    assert!(d(&fwd.q_minus, &st) <= 1e-3);
    assert!(d(&fwd.q_plus, &unst) <= 1e-3);
    assert!(d(&rev.q_minus, &unst) <= 1e-3);
    assert!(d(&rev.q_plus, &st) <= 1e-3);
}
