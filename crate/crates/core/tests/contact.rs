use std::sync::Arc;

use contact_relax::contact::{
    contact_form, contact_vector_field, make_contactomorphism, verify_contact_identity,
    ContactomorphismKind, ExpPotential, LinearDecay, NumericGradient, Reeb, Sum,
};
use contact_relax::ising::{
    phi, phi_prime, IsingHamiltonian, IsingParams, IsingPrimaryHamiltonian,
};
use contact_relax::models::{CoolingModel, CoolingVariant, MoebiusCutoff, MoebiusModel};
use contact_relax::{ContactHamiltonian, PhasePoint, TangentVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: &TangentVector, b: &[f64; 3], tol: f64) -> bool {
    a.as_slice()
        .iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol)
}

fn ising(b: f64, beta: f64, c: f64) -> IsingHamiltonian {
    IsingHamiltonian {
        params: IsingParams::new(b, beta, c).unwrap(),
    }
}

fn corpus() -> Vec<(&'static str, Box<dyn ContactHamiltonian>)> {
    vec![
        ("reeb", Box::new(Reeb { dim: 1 })),
        ("decay", Box::new(LinearDecay::new(0.7))),
        ("ising", Box::new(ising(6.0, 1.0, 1.0))),
        (
            "ising_primary",
            Box::new(IsingPrimaryHamiltonian { beta: 0.4, c: 1.3 }),
        ),
        (
            "moebius",
            Box::new(MoebiusModel::new(MoebiusCutoff::default()).hamiltonian()),
        ),
        (
            "cooling",
            Box::new(
                CoolingModel::exponential(2.0, 0.5, CoolingVariant::Coupled { b: 1.0 })
                    .unwrap()
                    .hamiltonian(),
            ),
        ),
        (
            "sine",
            Box::new(
                CoolingModel::exponential(1.0, 0.0, CoolingVariant::Sine { eps: 0.1, n: 3.0 })
                    .unwrap()
                    .hamiltonian(),
            ),
        ),
    ]
}

#[test]
fn reeb_field_is_d_dz() {
    for x in [
        PhasePoint::n1(0.0, 0.0, 0.0),
        PhasePoint::n1(-3.0, 2.5, 1e6),
    ] {
        let v = contact_vector_field(&Reeb { dim: 1 }, &x).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 1.0]);
    }
}

#[test]
fn linear_decay_field() {
    let c = 1.7;
    let x = PhasePoint::n1(0.3, -2.0, 4.0);
    let v = contact_vector_field(&LinearDecay::new(c), &x).unwrap();
    assert!(close(&v, &[-c * 0.3, 0.0, -c * 4.0], 1e-15));
}

#[test]
fn ising_primary_field() {
    let (beta, c) = (0.8, 1.5);
    let h = IsingPrimaryHamiltonian { beta, c };
    let (p, q, z) = (0.2, 1.1, -0.4);
    let v = contact_vector_field(&h, &PhasePoint::n1(p, q, z)).unwrap();
    let expected = [
        -c * p + c * phi_prime(beta, q),
        0.0,
        c * (-z + phi(beta, q)),
    ];
    assert!(close(&v, &expected, 1e-14));
}

#[test]
fn reeb_identity_residual_is_exactly_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let x = PhasePoint::n1(
            rand::Rng::random_range(&mut rng, -5.0..5.0),
            rand::Rng::random_range(&mut rng, -5.0..5.0),
            rand::Rng::random_range(&mut rng, -5.0..5.0),
        );
        let r = verify_contact_identity(&Reeb { dim: 1 }, &x, &mut rng).unwrap();
        assert_eq!(r.identity, 0.0);
    }
}

fn check_residuals(h: &dyn ContactHamiltonian, seed: u64, count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let x = PhasePoint::n1(
            rand::Rng::random_range(&mut rng, -5.0..5.0),
            rand::Rng::random_range(&mut rng, -5.0..5.0),
            rand::Rng::random_range(&mut rng, -5.0..5.0),
        );
        let r = verify_contact_identity(h, &x, &mut rng).unwrap();
        assert!(r.identity <= 1e-6 && r.lie <= 1e-6, "{x:?}: {r:?}");
    }
}

#[test]
fn linear_decay_lie_residuals() {
    check_residuals(&LinearDecay::new(1.0), 2, 100);
}

#[test]
fn ising_lie_residuals() {
    check_residuals(&ising(6.0, 1.0, 1.0), 3, 100);
}

#[test]
fn ising_primary_with_zero_b_is_identity() {
    let m = make_contactomorphism(ContactomorphismKind::IsingPrimary { b: 0.0 }).unwrap();
    let x = PhasePoint::n1(0.4, -1.2, 2.2);
    assert_eq!(m.forward(&x).unwrap(), x);
}

#[test]
fn ising_stability_example() {
    let m =
        make_contactomorphism(ContactomorphismKind::IsingStability { b: 6.0, beta: 1.0 }).unwrap();
    let y = m.forward(&PhasePoint::n1(0.5, 0.0, 0.0)).unwrap();
    assert!((y.q()[0] - 3.0).abs() < 1e-15);
    assert!((y.p()[0] - (0.5 - 3f64.tanh())).abs() < 1e-15);
    let expected_z = -(2.0 * 3f64.cosh()).ln() + 0.75;
    assert!((y.z() - expected_z).abs() < 1e-14);
}

#[test]
fn cooling_equilibrium_maps_to_origin() {
    let m = make_contactomorphism(ContactomorphismKind::Cooling {
        potential: Arc::new(ExpPotential),
        sigma: 1.0,
    })
    .unwrap();
    let e = std::f64::consts::E;
    let y = m.forward(&PhasePoint::n1(e, 1.0, e)).unwrap();
    assert_eq!(y.as_slice(), &[0.0, 0.0, 0.0]);
}

#[test]
fn stability_rejects_nonpositive_beta() {
    assert!(
        make_contactomorphism(ContactomorphismKind::IsingStability { b: 1.0, beta: 0.0 }).is_err()
    );
}

#[test]
fn contact_form_of_reeb_vector() {
    let x = PhasePoint::n1(2.0, 3.0, 4.0);
    assert_eq!(
        contact_form(&x, &TangentVector::n1(0.0, 0.0, 1.0)).unwrap(),
        1.0
    );
    assert_eq!(
        contact_form(&x, &TangentVector::n1(0.0, 1.0, 0.0)).unwrap(),
        -2.0
    );
}

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

fn kinds() -> Vec<ContactomorphismKind> {
    vec![
        ContactomorphismKind::IsingPrimary { b: 1.5 },
        ContactomorphismKind::IsingStability { b: 6.0, beta: 1.0 },
        ContactomorphismKind::Cooling {
            potential: Arc::new(ExpPotential),
            sigma: 0.3,
        },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn contact_identity_holds(p in coord(), q in coord(), z in coord()) {
        let x = PhasePoint::n1(p, q, z);
        for (name, h) in corpus() {
            let v = contact_vector_field(h.as_ref(), &x).unwrap();
            let lhs = contact_form(&x, &v).unwrap();
            let hx = h.value(x.view());
            prop_assert!((lhs - hx).abs() <= 1e-9 * hx.abs().max(1.0), "{name}: {lhs} vs {hx}");
            let numeric = NumericGradient(h.as_ref());
            let v = contact_vector_field(&numeric, &x).unwrap();
            let lhs = contact_form(&x, &v).unwrap();
            prop_assert!((lhs - hx).abs() <= 1e-5 * hx.abs().max(1.0), "{name} fd: {lhs} vs {hx}");
        }
    }

    #[test]
    fn contactomorphisms_preserve_lambda(
        p in coord(), q in coord(), z in coord(),
        dp in -1.0..1.0f64, dq in -1.0..1.0f64, dz in -1.0..1.0f64,
    ) {
        let x = PhasePoint::n1(p, q, z);
        let v = TangentVector::n1(dp, dq, dz);
        for kind in kinds() {
            let m = make_contactomorphism(kind).unwrap();
            prop_assert!(m.form_defect(&x, &v).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn contactomorphisms_invert(p in coord(), q in coord(), z in coord()) {
        let x = PhasePoint::n1(p, q, z);
        for kind in kinds() {
            let m = make_contactomorphism(kind).unwrap();
            let back = m.inverse(&m.forward(&x).unwrap()).unwrap();
            prop_assert!(back.distance(&x) <= 1e-9);
        }
    }

    #[test]
    fn vector_field_is_linear_in_h(p in coord(), q in coord(), z in coord()) {
        let x = PhasePoint::n1(p, q, z);
        let a = ising(1.5, 0.4, 1.0);
        let b = LinearDecay::new(0.3);
        let sum = contact_vector_field(&Sum(a, b), &x).unwrap();
        let va = contact_vector_field(&a, &x).unwrap();
        let vb = contact_vector_field(&b, &x).unwrap();
        for i in 0..3 {
            prop_assert!((sum.as_slice()[i] - va.as_slice()[i] - vb.as_slice()[i]).abs() <= 1e-12);
        }
    }
}
