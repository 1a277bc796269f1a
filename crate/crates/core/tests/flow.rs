use std::f64::consts::LN_2;

use contact_relax::contact::{FnHamiltonian, LinearDecay, PhaseView};
use contact_relax::flow::{
    detect_convergence, flow_map_differential, flow_point, integrate, EventKind, Hypersurface,
};
use contact_relax::ising::{phi, phi_prime, IsingPrimaryHamiltonian};
use contact_relax::models::{MoebiusCutoff, MoebiusModel};
use contact_relax::ode::Direction;
use contact_relax::{ContactHamiltonian, IntegratorConfig, Legendrian, PhasePoint, Trajectory};

fn ising_closed_form(beta: f64, c: f64, x0: &PhasePoint, t: f64) -> [f64; 3] {
    let (p0, q0, z0) = (x0.p()[0], x0.q()[0], x0.z());
    let e = (-c * t).exp();
    [
        e * (p0 - phi_prime(beta, q0)) + phi_prime(beta, q0),
        q0,
        e * (z0 - phi(beta, q0)) + phi(beta, q0),
    ]
}

fn moebius() -> MoebiusModel {
    MoebiusModel::new(MoebiusCutoff::default())
}

#[test]
fn linear_decay_endpoint() {
    let traj = integrate(
        &LinearDecay::new(1.0),
        &PhasePoint::n1(1.0, 0.0, 1.0),
        &IntegratorConfig::until(5.0),
    )
    .unwrap();
    let end = traj.last();
    let e5 = (-5.0f64).exp();
    assert!((end.p()[0] - e5).abs() < 1e-8);
    assert_eq!(end.q()[0], 0.0);
    assert!((end.z() - e5).abs() < 1e-8);
    assert_eq!(traj.times()[0], 0.0);
    assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
    assert_eq!(traj.stop_kind(), Some(EventKind::MaxTime));
}

#[test]
fn ising_primary_matches_closed_form_and_keeps_q() {
    let (beta, c) = (0.4, 1.0);
    let h = IsingPrimaryHamiltonian { beta, c };
    for x0 in [
        PhasePoint::n1(0.7, 1.0, -0.5),
        PhasePoint::n1(-1.2, -2.0, 3.0),
    ] {
        let traj = integrate(&h, &x0, &IntegratorConfig::until(10.0)).unwrap();
        for i in 0..traj.len() {
            let want = ising_closed_form(beta, c, &x0, traj.times()[i]);
            let got = traj.state(i);
            for k in 0..3 {
                assert!(
                    (got[k] - want[k]).abs() < 1e-6,
                    "t={} k={k}",
                    traj.times()[i]
                );
            }
            assert!((got[1] - x0.q()[0]).abs() < 1e-7);
        }
    }
}

#[test]
fn moebius_matches_mobius_transformation() {
    let m = moebius();
    let x0 = PhasePoint::n1(0.3, 0.7, 0.2);
    let traj = integrate(&m.hamiltonian(), &x0, &IntegratorConfig::until(5.0)).unwrap();
    for i in 0..traj.len() {
        let s = traj.state(i);
        assert!(s[0] * s[0] + s[2] * s[2] < 1.0 + m.cutoff.eps);
        let (z, p) = MoebiusModel::closed_form_zp(0.2, 0.3, traj.times()[i]);
        assert!((s[2] - z).abs() < 1e-6 && (s[0] - p).abs() < 1e-6);
    }
}

#[test]
fn linear_decay_differential() {
    let d = flow_map_differential(&LinearDecay::new(1.0), &PhasePoint::n1(0.4, 1.0, -0.3), 1.0)
        .unwrap();
    let e = (-1.0f64).exp();
    let want = [[e, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, e]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((d[(i, j)] - want[i][j]).abs() < 1e-5);
        }
    }
}

#[test]
fn differential_at_zero_time_is_identity() {
    let d = flow_map_differential(&LinearDecay::new(1.0), &PhasePoint::n1(0.4, 1.0, -0.3), 0.0)
        .unwrap();
    assert_eq!(d, nalgebra::DMatrix::identity(3, 3));
}

#[test]
fn cooling_differential_in_normal_coordinates() {
    let (a, b) = (2.0, 1.0);
    // -aZ + bPQ generates Q' = -bQ, P' = -(a - b)P, Z' = -aZ
    let h = FnHamiltonian::new(1, move |x: PhaseView<'_>| -a * x.z + b * x.p[0] * x.q[0])
        .with_gradient(move |x: PhaseView<'_>, out: &mut [f64]| {
            out[0] = b * x.q[0];
            out[1] = b * x.p[0];
            out[2] = -a;
        });
    let d = flow_map_differential(&h, &PhasePoint::n1(0.2, -0.1, 0.3), 1.0).unwrap();
    let diag = [(-(a - b)).exp(), (-b).exp(), (-a).exp()];
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { diag[i] } else { 0.0 };
            assert!((d[(i, j)] - want).abs() < 1e-5, "({i},{j}) = {}", d[(i, j)]);
        }
    }
}

#[test]
fn decay_converges_to_zero_section() {
    let traj = integrate(
        &LinearDecay::new(1.0),
        &PhasePoint::n1(1.0, 0.0, 1.0),
        &IntegratorConfig::until(20.0),
    )
    .unwrap();
    assert!(detect_convergence(
        &traj,
        &Legendrian::zero_section(),
        1e-4,
        2.0
    ));
}

#[test]
fn constant_trajectory_at_distance_one_does_not_converge() {
    let samples: Vec<_> = (0..11)
        .map(|i| (i as f64, PhasePoint::n1(0.0, 0.5, 1.0)))
        .collect();
    let traj = Trajectory::from_samples(1, &samples).unwrap();
    assert!(!detect_convergence(
        &traj,
        &Legendrian::zero_section(),
        1e-4,
        2.0
    ));
}

#[test]
fn moebius_escapes_above_unstable_point() {
    let traj = integrate(
        &moebius().hamiltonian(),
        &PhasePoint::n1(0.0, 0.0, 1.0001),
        &IntegratorConfig::until(20.0),
    )
    .unwrap();
    assert!(traj.last().z() > 1.0001);
    assert!(!detect_convergence(
        &traj,
        &MoebiusModel::lambda_st(),
        1e-3,
        2.0
    ));
}

#[test]
fn event_located_at_ln2() {
    let cfg = IntegratorConfig {
        surfaces: vec![Hypersurface::new(
            "half",
            |x: PhaseView<'_>| x.z - 0.5,
            Direction::Falling,
            true,
        )],
        ..IntegratorConfig::until(5.0)
    };
    let traj = integrate(&LinearDecay::new(1.0), &PhasePoint::n1(0.0, 0.0, 1.0), &cfg).unwrap();
    let ev = traj.events().last().unwrap();
    assert_eq!(ev.kind, EventKind::HypersurfaceCrossing);
    assert_eq!(ev.label, "half");
    assert!((ev.t - LN_2).abs() < 1e-9);
    assert!((traj.final_time() - LN_2).abs() < 1e-9);
}

#[test]
fn growth_leaves_the_box() {
    let h = LinearDecay::new(-1.0);
    let traj = integrate(
        &h,
        &PhasePoint::n1(0.0, 0.0, 1.0),
        &IntegratorConfig::until(10.0),
    )
    .unwrap();
    assert_eq!(traj.stop_kind(), Some(EventKind::EscapedBox));
    assert!((traj.final_time() - 50f64.ln()).abs() < 1e-6);
}

fn closed_form_models() -> Vec<(
    Box<dyn ContactHamiltonian>,
    PhasePoint,
    Box<dyn Fn(f64) -> [f64; 3]>,
)> {
    let x_ising = PhasePoint::n1(0.7, 1.0, -0.5);
    let xi = x_ising.clone();
    vec![
        (
            Box::new(LinearDecay::new(1.0)),
            PhasePoint::n1(1.0, 0.0, 1.0),
            Box::new(|t: f64| [(-t).exp(), 0.0, (-t).exp()]),
        ),
        (
            Box::new(IsingPrimaryHamiltonian { beta: 0.4, c: 1.0 }),
            x_ising,
            Box::new(move |t| ising_closed_form(0.4, 1.0, &xi, t)),
        ),
        (
            Box::new(moebius().hamiltonian()),
            PhasePoint::n1(0.3, 0.7, 0.2),
            Box::new(|t| {
                // q is not part of the closed form; NaN excludes it
                let (z, p) = MoebiusModel::closed_form_zp(0.2, 0.3, t);
                [p, f64::NAN, z]
            }),
        ),
    ]
}

#[test]
fn halving_the_step_gains_at_least_eight() {
    for (h, x0, exact) in closed_form_models() {
        let want = exact(5.0);
        let err = |step: f64| {
            let cfg = IntegratorConfig {
                record_steps: false,
                ..IntegratorConfig::until(5.0)
                    .with_tol(1.0, 1.0)
                    .with_max_step(step)
            };
            let end = integrate(h.as_ref(), &x0, &cfg).unwrap().last();
            end.as_slice()
                .iter()
                .zip(&want)
                .filter(|(_, b)| !b.is_nan())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(0.5), err(0.25));
        assert!(coarse > 1e-13, "coarse error {coarse} is at rounding level");
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }
}

#[test]
fn forward_then_backward_returns() {
    for (h, x0, _) in closed_form_models() {
        for t in [0.5, 2.0, 5.0] {
            let y = flow_point(h.as_ref(), &x0, t, 1e-12).unwrap();
            let back = flow_point(h.as_ref(), &y, -t, 1e-12).unwrap();
            assert!(back.distance(&x0) < 1e-7, "t={t}: {}", back.distance(&x0));
        }
    }
}

#[test]
fn csv_round_trips() {
    let traj = integrate(
        &LinearDecay::new(0.3),
        &PhasePoint::n1(0.1, 0.2, 0.3),
        &IntegratorConfig::until(1.0),
    )
    .unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,p_1,q_1,z"));
    let rows: Vec<Vec<f64>> = lines
        .clone()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), traj.len());
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], traj.times()[i]);
        assert_eq!(&r[1..], traj.state(i));
    }
    assert!(lines.any(|l| l.starts_with("#event,")));
}

#[test]
fn rejects_bad_config() {
    let h = LinearDecay::new(1.0);
    let x0 = PhasePoint::n1(0.0, 0.0, 1.0);
    assert!(integrate(&h, &x0, &IntegratorConfig::until(0.0)).is_err());
    assert!(integrate(&h, &x0, &IntegratorConfig::until(1.0).with_tol(0.0, 1e-9)).is_err());
    assert!(integrate(
        &h,
        &PhasePoint::n1(f64::NAN, 0.0, 0.0),
        &IntegratorConfig::until(1.0)
    )
    .is_err());
}
