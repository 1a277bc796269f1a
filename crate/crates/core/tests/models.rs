use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use contact_relax::contact::TangentVector;
use contact_relax::flow::{integrate, EventKind};
use contact_relax::models::{
    fitted_cooling_rate, sine_entropy, CoolingModel, CoolingVariant, MoebiusModel,
};
use contact_relax::{ContactHamiltonian, IntegratorConfig, PhasePoint};

const A: f64 = 2.0;
const SIGMA: f64 = 0.5;

fn coupled() -> CoolingModel {
    CoolingModel::exponential(A, SIGMA, CoolingVariant::Coupled { b: 0.5 }).unwrap()
}

fn isentropic() -> CoolingModel {
    CoolingModel::exponential(A, SIGMA, CoolingVariant::Isentropic).unwrap()
}

fn sine() -> CoolingModel {
    CoolingModel::exponential(A, SIGMA, CoolingVariant::Sine { eps: 0.5, n: 3.0 }).unwrap()
}

#[test]
fn coupled_cooling_converges_to_the_target_state() {
    let m = coupled();
    let target = PhasePoint::n1(SIGMA.exp(), SIGMA, SIGMA.exp());
    for x0 in [
        PhasePoint::n1(1.0, -0.5, 1.5),
        PhasePoint::n1(-0.3, 1.2, 0.0),
        PhasePoint::n1(2.0, 0.5, 4.0),
    ] {
        assert!(m.flow(&x0, 60.0).unwrap().distance(&target) <= 1e-9);
        assert!(m.limit(&x0).unwrap().distance(&target) <= 1e-15);
    }
}

#[test]
fn temperature_gap_decays_at_rate_a_minus_b() {
    let x0 = PhasePoint::n1(1.0, -0.5, 1.5);
    let rate = fitted_cooling_rate(&coupled(), &x0, 6.0, 10.0).unwrap();
    assert!((rate - 1.5).abs() / 1.5 <= 0.01, "{rate}");
}

#[test]
fn entropy_increases_below_the_target() {
    let m = coupled();
    let x0 = PhasePoint::n1(0.2, -1.0, 0.7);
    let mut prev = x0.q()[0];
    for k in 1..=30 {
        let q = m.flow(&x0, 0.5 * k as f64).unwrap().q()[0];
        assert!(q > prev && q < SIGMA);
        prev = q;
    }
}

#[test]
fn integrated_flow_matches_the_closed_forms() {
    let x0 = PhasePoint::n1(0.4, 0.2, 0.9);
    for m in [coupled(), isentropic(), sine()] {
        for t in [0.3, 1.0, 2.5, 5.0] {
            let num = m.flow(&x0, t).unwrap();
            let exact = m.closed_form(&x0, t).unwrap();
            assert!(
                num.distance(&exact) <= 1e-8,
                "{:?} t={t}: {num:?} vs {exact:?}",
                m.variant
            );
        }
    }
}

#[test]
fn isentropic_relaxation_keeps_entropy() {
    let m = isentropic();
    let x0 = PhasePoint::n1(-0.7, 0.8, 2.0);
    for k in 1..=20 {
        let x = m.flow(&x0, k as f64).unwrap();
        assert!((x.q()[0] - 0.8).abs() <= 1e-9);
    }
    let lim = m.limit(&x0).unwrap();
    assert!(m.equilibrium().distance_to(&lim).unwrap() <= 1e-15);
    assert!(m.flow(&x0, 25.0).unwrap().distance(&lim) <= 1e-9);
}

#[test]
fn equilibrium_point_is_stationary() {
    let q: f64 = 0.3;
    let x0 = PhasePoint::n1(q.exp(), q, q.exp());
    assert!(isentropic().flow(&x0, 10.0).unwrap().distance(&x0) <= 1e-12);
    // the sine variant moves along the equilibrium curve instead
    let m = sine();
    let x = m.flow(&x0, 10.0).unwrap();
    assert!(x.q()[0] > q);
    assert!(m.equilibrium().distance_to(&x).unwrap() <= 1e-9);
}

#[test]
fn sine_cooling_freezes_on_cell_endpoints() {
    let m = sine();
    let x0 = PhasePoint::n1(0.3, 0.0, -0.4);
    assert_eq!(sine_entropy(0.5, 3.0, 0.0, 50.0), 0.0);
    assert_eq!(m.flow(&x0, 20.0).unwrap().q()[0], 0.0);
    // float pi/3 is only within rounding of a fixed point; the integrator barely moves it
    let q0 = PI / 3.0;
    let q = m.flow(&PhasePoint::n1(0.3, q0, -0.4), 20.0).unwrap().q()[0];
    assert!((q - q0).abs() <= 1e-9, "{q} vs {q0}");
}

#[test]
fn sine_cooling_creeps_to_the_next_endpoint() {
    let m = sine();
    let x0 = PhasePoint::n1(0.4, 0.2, 0.2);
    let q = m.flow(&x0, 200.0).unwrap().q()[0];
    // cot(3 q) = cot(0.6) - 300 puts q(200) about 1/(3 * 298.5) below pi/3
    let expected = (PI / 2.0 + (300.0 - 0.6f64.cos() / 0.6f64.sin()).atan()) / 3.0;
    assert!((q - expected).abs() <= 1e-8, "{q} vs {expected}");
    let defect = PI / 3.0 - q;
    assert!(defect > 0.0 && defect < 1.2e-3, "{defect}");
    assert!((m.limit(&x0).unwrap().q()[0] - PI / 3.0).abs() <= 1e-15);
}

#[test]
fn sine_cooling_entropy_is_monotone_and_bounded() {
    let m = sine();
    for q0 in [-1.3, -0.2, 0.2, 0.9, 1.7] {
        let x0 = PhasePoint::n1(0.4, q0, 0.2);
        let next = m.limit(&x0).unwrap().q()[0];
        let mut prev = q0;
        for k in 1..=25 {
            let q = m.flow(&x0, 2.0 * k as f64).unwrap().q()[0];
            assert!(q >= prev - 1e-12);
            assert!((next - q).abs() < PI / 3.0 && q <= next + 1e-12);
            prev = q;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cooling_coordinates_preserve_the_contact_form(
        p in -3.0f64..3.0, q in -3.0f64..3.0, z in -3.0f64..3.0,
        vp in -1.0f64..1.0, vq in -1.0f64..1.0, vz in -1.0f64..1.0,
    ) {
        let x = PhasePoint::n1(p, q, z);
        let v = TangentVector::n1(vp, vq, vz);
        for m in [coupled(), isentropic(), sine()] {
            let defect = m.coordinates().unwrap().form_defect(&x, &v).unwrap();
            prop_assert!(defect <= 1e-9, "{defect}");
        }
    }

    #[test]
    fn sine_entropy_stays_in_its_cell(q0 in -4.0f64..4.0, t in 0.0f64..100.0) {
        let q = sine_entropy(0.5, 3.0, q0, t);
        let k = (3.0 * q0 / PI).floor();
        prop_assert!(q >= q0 && q <= PI * (k + 1.0) / 3.0 + 1e-12);
    }
}

#[test]
fn moebius_stable_point_is_stationary() {
    let m = MoebiusModel::default();
    let x0 = PhasePoint::n1(0.0, 0.0, -1.0);
    let x = m.trajectory(&x0, 5.0).unwrap();
    assert!(x.distance(&x0) <= 1e-12);
}

#[test]
fn moebius_matches_the_fractional_linear_formula() {
    let m = MoebiusModel::default();
    let x0 = PhasePoint::n1(0.5, 0.0, 0.0);
    for k in 1..=30 {
        let t = 0.1 * k as f64;
        let x = m.trajectory(&x0, t).unwrap();
        let (z, p) = MoebiusModel::closed_form_zp(0.0, 0.5, t);
        assert!(
            (x.z() - z).abs() <= 1e-6 && (x.p()[0] - p).abs() <= 1e-6,
            "t={t}"
        );
    }
}

#[test]
fn generic_points_converge_to_the_stable_section() {
    let m = MoebiusModel::default();
    let st = MoebiusModel::lambda_st();
    for (p, z) in [
        (0.3, 0.4),
        (-0.8, 0.5),
        (0.05, 0.99),
        (0.9, -0.3),
        (-2.0, -2.0),
        (0.2, -3.0),
        (1.0, -1.5),
    ] {
        let x = m.trajectory(&PhasePoint::n1(p, 1.0, z), 60.0).unwrap();
        assert!(st.distance_to(&x).unwrap() <= 1e-6, "({p}, {z}) -> {x:?}");
    }
}

// Far from the torus a' is tiny and z' = a - 2 a' p^2 stays near a_inf, so z runs off linearly.
#[test]
fn upper_far_field_drifts_off_linearly() {
    let m = MoebiusModel::default();
    let h = m.hamiltonian();
    let mut cfg = IntegratorConfig::until(100.0);
    cfg.escape_bound = Some(1e6);
    for (p, z) in [(0.0, 1.5), (-2.0, 2.0), (3.0, 1.0)] {
        let traj = integrate(&h, &PhasePoint::n1(p, 0.0, z), &cfg).unwrap();
        assert_eq!(traj.stop_kind(), Some(EventKind::MaxTime));
        let end = traj.last();
        assert!(end.z() > 50.0, "({p}, {z}) -> {end:?}");
        assert!(end.z() <= z + m.cutoff.a_inf * 100.0);
    }
}

#[test]
fn moebius_hamiltonian_is_bounded_and_complete() {
    let m = MoebiusModel::default();
    let h = m.hamiltonian();
    for s in [0.0, 3.0, 40.0, 1e4] {
        assert!(h.value(PhasePoint::n1(s, 0.0, s).view()) <= m.cutoff.a_inf);
    }
    let mut cfg = IntegratorConfig::until(100.0);
    cfg.escape_bound = Some(1e6);
    for x0 in [
        PhasePoint::n1(0.0, 0.0, 1.5),
        PhasePoint::n1(3.0, 1.0, 3.0),
        PhasePoint::n1(-4.0, 2.0, 0.1),
    ] {
        let traj = integrate(&h, &x0, &cfg).unwrap();
        assert_eq!(traj.stop_kind(), Some(EventKind::MaxTime), "{x0:?}");
    }
    // inside the solid torus nothing leaves the default box
    for x0 in [
        PhasePoint::n1(0.5, 0.0, 0.0),
        PhasePoint::n1(-0.7, 3.0, 0.7),
        PhasePoint::n1(0.0, 0.0, 0.999),
    ] {
        let traj = integrate(&h, &x0, &IntegratorConfig::until(100.0)).unwrap();
        assert_eq!(traj.stop_kind(), Some(EventKind::MaxTime), "{x0:?}");
    }
}

#[test]
fn moebius_circle_has_period_tau() {
    let k = MoebiusModel::k_c(-2.0);
    let x = k.point(0.3);
    let y = k.point(0.3 + TAU);
    assert!((x.z() - y.z()).abs() <= 1e-15);
}
