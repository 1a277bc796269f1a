//! The standard contact space `(R^{2n+1}, dz - p dq)`.
//!
//! Points and tangent vectors are stored flat as `[p_1..p_n, q_1..q_n, z]`.
//! Hamiltonians receive borrowed [`PhaseView`]s so that the integrators can
//! evaluate them on their own state buffers without copying.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising;

/// A point `(p, q, z)` of the contact space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    data: Vec<f64>,
}

/// A tangent vector `(dp, dq, dz)`, laid out like [`PhasePoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    data: Vec<f64>,
}

/// Borrowed view of a point.
#[derive(Debug, Clone, Copy)]
pub struct PhaseView<'a> {
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub z: f64,
}

fn check_flat_len(len: usize) -> Result<usize> {
    if len < 3 || len.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "flat phase-space vector must have odd length >= 3, got {len}"
        )));
    }
    Ok((len - 1) / 2)
}

macro_rules! flat_accessors {
    ($ty:ident, $p:ident, $q:ident, $z:ident) => {
        impl $ty {
            pub fn new($p: &[f64], $q: &[f64], $z: f64) -> Result<Self> {
                if $p.len() != $q.len() {
                    return Err(Error::DimensionMismatch {
                        expected: $p.len(),
                        got: $q.len(),
                    });
                }
                if $p.is_empty() {
                    return Err(Error::InvalidParameter(
                        "dimension n must be at least 1".into(),
                    ));
                }
                let mut data = Vec::with_capacity(2 * $p.len() + 1);
                data.extend_from_slice($p);
                data.extend_from_slice($q);
                data.push($z);
                Ok(Self { data })
            }

            /// One-degree-of-freedom constructor.
            pub fn n1($p: f64, $q: f64, $z: f64) -> Self {
                Self {
                    data: vec![$p, $q, $z],
                }
            }

            pub fn from_flat(data: Vec<f64>) -> Result<Self> {
                check_flat_len(data.len())?;
                Ok(Self { data })
            }

            pub fn dim(&self) -> usize {
                (self.data.len() - 1) / 2
            }

            pub fn $p(&self) -> &[f64] {
                &self.data[..self.dim()]
            }

            pub fn $q(&self) -> &[f64] {
                let n = self.dim();
                &self.data[n..2 * n]
            }

            pub fn $z(&self) -> f64 {
                self.data[2 * self.dim()]
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|v| v.is_finite())
            }

            pub fn norm(&self) -> f64 {
                self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    };
}

flat_accessors!(PhasePoint, p, q, z);
flat_accessors!(TangentVector, dp, dq, dz);

impl PhasePoint {
    pub fn view(&self) -> PhaseView<'_> {
        PhaseView::from_flat(&self.data)
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl<'a> PhaseView<'a> {
    /// Splits a flat `[p, q, z]` slice. Panics if the length is even.
    pub fn from_flat(y: &'a [f64]) -> Self {
        let n = (y.len() - 1) / 2;
        debug_assert_eq!(y.len(), 2 * n + 1);
        PhaseView {
            p: &y[..n],
            q: &y[n..2 * n],
            z: y[2 * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn to_point(&self) -> PhasePoint {
        PhasePoint::new(self.p, self.q, self.z).expect("view has matching p, q")
    }
}

/// Whether the base coordinates live on `R^n` or on circles of period `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Euclidean,
    QPeriodic(f64),
}

/// A contact Hamiltonian `H(p, q, z)`.
///
/// Implementors that know their partial derivatives override
/// [`analytic_gradient`](Self::analytic_gradient); otherwise central finite
/// differences are used by [`gradient`].
pub trait ContactHamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: PhaseView<'_>) -> f64;

    /// Writes `(dH/dp, dH/dq, dH/dz)` into `out` (flat layout). Returns
    /// `false` when no closed form is available.
    fn analytic_gradient(&self, _x: PhaseView<'_>, _out: &mut [f64]) -> bool {
        false
    }

    fn topology(&self) -> Topology {
        Topology::Euclidean
    }
}

impl<H: ContactHamiltonian + ?Sized> ContactHamiltonian for Arc<H> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        (**self).value(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        (**self).analytic_gradient(x, out)
    }
    fn topology(&self) -> Topology {
        (**self).topology()
    }
}

impl<H: ContactHamiltonian + ?Sized> ContactHamiltonian for &H {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        (**self).value(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        (**self).analytic_gradient(x, out)
    }
    fn topology(&self) -> Topology {
        (**self).topology()
    }
}

impl<H: ContactHamiltonian + ?Sized> ContactHamiltonian for Box<H> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        (**self).value(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        (**self).analytic_gradient(x, out)
    }
    fn topology(&self) -> Topology {
        (**self).topology()
    }
}

/// Step used for central differences: `max(1, |x|) * eps^(1/3)`.
pub fn fd_step(x: f64) -> f64 {
    x.abs().max(1.0) * f64::EPSILON.cbrt()
}

/// Gradient of `h` at the flat point `y`, falling back to central differences.
pub fn gradient_into<H: ContactHamiltonian + ?Sized>(h: &H, y: &[f64], out: &mut [f64]) {
    if h.analytic_gradient(PhaseView::from_flat(y), out) {
        return;
    }
    let mut work = y.to_vec();
    for i in 0..y.len() {
        let step = fd_step(y[i]);
        work[i] = y[i] + step;
        let up = h.value(PhaseView::from_flat(&work));
        work[i] = y[i] - step;
        let down = h.value(PhaseView::from_flat(&work));
        work[i] = y[i];
        // the realized step differs from `step` by rounding
        let span = (y[i] + step) - (y[i] - step);
        out[i] = (up - down) / span;
    }
}

pub fn gradient<H: ContactHamiltonian + ?Sized>(h: &H, x: &PhasePoint) -> TangentVector {
    let mut out = vec![0.0; x.as_slice().len()];
    gradient_into(h, x.as_slice(), &mut out);
    TangentVector { data: out }
}

/// `dH(R) = dH/dz`, the derivative of `H` along the Reeb field.
pub fn reeb_derivative<H: ContactHamiltonian + ?Sized>(h: &H, x: &PhasePoint) -> f64 {
    gradient(h, x).dz()
}

/// `lambda_x(v) = v.dz - sum_i p_i v.dq_i`.
pub fn contact_form(x: &PhasePoint, v: &TangentVector) -> Result<f64> {
    if x.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: v.dim(),
        });
    }
    Ok(contact_form_flat(x.as_slice(), v.as_slice()))
}

pub(crate) fn contact_form_flat(x: &[f64], v: &[f64]) -> f64 {
    let n = (x.len() - 1) / 2;
    v[2 * n] - (0..n).map(|i| x[i] * v[n + i]).sum::<f64>()
}

/// Writes the contact vector field of `h` at flat point `y` into `out`.
///
/// Uses a caller-provided gradient buffer so the integrators stay
/// allocation-free.
pub fn vector_field_into<H: ContactHamiltonian + ?Sized>(
    h: &H,
    y: &[f64],
    grad: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let n = (y.len() - 1) / 2;
    gradient_into(h, y, grad);
    let value = h.value(PhaseView::from_flat(y));
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "Hamiltonian or its gradient",
        });
    }
    let hz = grad[2 * n];
    let mut p_dot_hp = 0.0;
    for i in 0..n {
        let p = y[i];
        let hp = grad[i];
        let hq = grad[n + i];
        out[i] = hq + p * hz;
        out[n + i] = -hp;
        p_dot_hp += p * hp;
    }
    out[2 * n] = value - p_dot_hp;
    Ok(())
}

/// `(dH/dq + p dH/dz, -dH/dp, H - p dH/dp)` at `x`.
pub fn contact_vector_field<H: ContactHamiltonian + ?Sized>(
    h: &H,
    x: &PhasePoint,
) -> Result<TangentVector> {
    if h.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: x.dim(),
        });
    }
    let len = x.as_slice().len();
    let mut grad = vec![0.0; len];
    let mut out = vec![0.0; len];
    vector_field_into(h, x.as_slice(), &mut grad, &mut out)?;
    Ok(TangentVector { data: out })
}

/// Residuals of the two identities every contact Hamiltonian satisfies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContactResiduals {
    /// `|lambda(v_H) - H|`.
    pub identity: f64,
    /// `max |(L_v lambda - dH(R) lambda)(w)|` over the probe frame.
    pub lie: f64,
}

const LIE_FLOW_TIME: f64 = 1e-4;
const LIE_SPATIAL_STEP: f64 = 1e-5;

/// Displacement `phi^s(y) - y` by classical RK4 with two substeps.
///
/// Returned as a displacement so that differences between nearby
/// trajectories do not lose digits to the magnitude of `y`.
fn short_flow_displacement<H: ContactHamiltonian + ?Sized>(
    h: &H,
    y: &[f64],
    s: f64,
) -> Result<Vec<f64>> {
    const SUBSTEPS: usize = 2;
    let len = y.len();
    let dt = s / SUBSTEPS as f64;
    let mut disp = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut stage = vec![0.0; len];
    let mut k = [
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    ];
    for _ in 0..SUBSTEPS {
        for (j, c) in [0.0, 0.5, 0.5, 1.0].into_iter().enumerate() {
            for i in 0..len {
                let prev = if j == 0 { 0.0 } else { k[j - 1][i] };
                stage[i] = y[i] + (disp[i] + c * dt * prev);
            }
            let (head, tail) = k.split_at_mut(j);
            let _ = head;
            vector_field_into(h, &stage, &mut grad, &mut tail[0])?;
        }
        for i in 0..len {
            disp[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }
    Ok(disp)
}

/// Checks `lambda(v_H) = H` and `L_v lambda = dH(R) lambda` at `x`.
///
/// The Lie derivative is obtained by pulling `lambda` back along the
/// time-`1e-4` flow in both time directions, with the flow differential taken
/// by central differences on a random unit frame drawn from `rng`.
pub fn verify_contact_identity<H: ContactHamiltonian + ?Sized, R: Rng + ?Sized>(
    h: &H,
    x: &PhasePoint,
    rng: &mut R,
) -> Result<ContactResiduals> {
    let v = contact_vector_field(h, x)?;
    let hx = h.value(x.view());
    let identity = (contact_form(x, &v)? - hx).abs();

    let y = x.as_slice();
    let len = y.len();
    let n = x.dim();
    let reeb = reeb_derivative(h, x);
    let delta = LIE_FLOW_TIME;
    let step = LIE_SPATIAL_STEP;

    let base_fwd = short_flow_displacement(h, y, delta)?;
    let base_bwd = short_flow_displacement(h, y, -delta)?;

    let mut lie: f64 = 0.0;
    for _ in 0..len {
        let mut w: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
        w.iter_mut().for_each(|c| *c /= norm);
        let plus: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a + step * b).collect();
        let minus: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a - step * b).collect();
        // the frame vector actually realized in floating point
        let w_real: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * step))
            .collect();

        // G(s) - G(0) where G(s) = lambda_{phi^s x}(D phi^s w)
        let mut increments = [0.0; 2];
        for (slot, (s, base)) in [(delta, &base_fwd), (-delta, &base_bwd)]
            .into_iter()
            .enumerate()
        {
            let dp = short_flow_displacement(h, &plus, s)?;
            let dm = short_flow_displacement(h, &minus, s)?;
            let e: Vec<f64> = dp
                .iter()
                .zip(&dm)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect();
            let mut g = e[2 * n];
            for i in 0..n {
                g -= y[i] * e[n + i];
                g -= base[i] * (w_real[n + i] + e[n + i]);
            }
            increments[slot] = g;
        }
        let lie_w = (increments[0] - increments[1]) / (2.0 * delta);
        let expected = reeb * contact_form_flat(y, &w_real);
        lie = lie.max((lie_w - expected).abs());
    }
    Ok(ContactResiduals { identity, lie })
}

/// Hamiltonian built from closures.
#[derive(Clone)]
pub struct FnHamiltonian {
    dim: usize,
    value: Arc<dyn Fn(PhaseView<'_>) -> f64 + Send + Sync>,
    grad: Option<Arc<dyn Fn(PhaseView<'_>, &mut [f64]) + Send + Sync>>,
    topology: Topology,
}

impl std::fmt::Debug for FnHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnHamiltonian")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.grad.is_some())
            .field("topology", &self.topology)
            .finish()
    }
}

impl FnHamiltonian {
    pub fn new(dim: usize, value: impl Fn(PhaseView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            grad: None,
            topology: Topology::Euclidean,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(PhaseView<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }
}

impl ContactHamiltonian for FnHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        (self.value)(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(x, out);
                true
            }
            None => false,
        }
    }
    fn topology(&self) -> Topology {
        self.topology
    }
}

/// `H = 1`, whose contact field is the Reeb field.
#[derive(Debug, Clone, Copy)]
pub struct Reeb {
    pub dim: usize,
}

impl ContactHamiltonian for Reeb {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: PhaseView<'_>) -> f64 {
        1.0
    }
    fn analytic_gradient(&self, _x: PhaseView<'_>, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|g| *g = 0.0);
        true
    }
}

/// `H = -c z` on `R^{2n+1}`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDecay {
    pub dim: usize,
    pub c: f64,
}

impl LinearDecay {
    pub fn new(c: f64) -> Self {
        Self { dim: 1, c }
    }
}

impl ContactHamiltonian for LinearDecay {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        -self.c * x.z
    }
    fn analytic_gradient(&self, _x: PhaseView<'_>, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|g| *g = 0.0);
        out[2 * self.dim] = -self.c;
        true
    }
}

/// `-H`; its flow is the time reversal of the flow of `H`.
#[derive(Debug, Clone)]
pub struct TimeReversed<H>(pub H);

impl<H: ContactHamiltonian> ContactHamiltonian for TimeReversed<H> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        -self.0.value(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        if self.0.analytic_gradient(x, out) {
            out.iter_mut().for_each(|g| *g = -*g);
            true
        } else {
            false
        }
    }
    fn topology(&self) -> Topology {
        self.0.topology()
    }
}

/// `H_1 + H_2`.
#[derive(Debug, Clone)]
pub struct Sum<A, B>(pub A, pub B);

impl<A: ContactHamiltonian, B: ContactHamiltonian> ContactHamiltonian for Sum<A, B> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        self.0.value(x) + self.1.value(x)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        let mut other = vec![0.0; out.len()];
        if self.0.analytic_gradient(x, out) && self.1.analytic_gradient(x, &mut other) {
            out.iter_mut().zip(&other).for_each(|(a, b)| *a += b);
            true
        } else {
            false
        }
    }
    fn topology(&self) -> Topology {
        self.0.topology()
    }
}

/// Hides the closed-form gradient of the inner Hamiltonian, forcing finite
/// differences.
#[derive(Debug, Clone)]
pub struct NumericGradient<H>(pub H);

impl<H: ContactHamiltonian> ContactHamiltonian for NumericGradient<H> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        self.0.value(x)
    }
    fn topology(&self) -> Topology {
        self.0.topology()
    }
}

/// A smooth function of one variable with its first two derivatives.
pub trait Potential: Send + Sync {
    fn value(&self, q: f64) -> f64;
    fn d1(&self, q: f64) -> f64;
    fn d2(&self, q: f64) -> f64;
}

/// `phi(q) = e^q`, with the argument clipped at 700 to stay finite.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpPotential;

const EXP_CLIP: f64 = 700.0;

impl Potential for ExpPotential {
    fn value(&self, q: f64) -> f64 {
        q.min(EXP_CLIP).exp()
    }
    fn d1(&self, q: f64) -> f64 {
        q.min(EXP_CLIP).exp()
    }
    fn d2(&self, q: f64) -> f64 {
        q.min(EXP_CLIP).exp()
    }
}

type PointMap = Arc<dyn Fn(&PhasePoint) -> PhasePoint + Send + Sync>;
type TangentMap = Arc<dyn Fn(&PhasePoint, &TangentVector) -> TangentVector + Send + Sync>;

/// The coordinate changes used by the models. All are strict
/// contactomorphisms: they pull `dZ - P dQ` back to `dz - p dq`.
#[derive(Clone)]
pub enum ContactomorphismKind {
    /// `P = p, Q = q + b p, Z = z + b p^2 / 2`.
    IsingPrimary { b: f64 },
    /// `Q = q + b p, P = p - phi_beta'(Q), Z = z - phi_beta(Q) + b p^2 / 2`.
    IsingStability { b: f64, beta: f64 },
    /// `P = p - phi'(q), Q = q - sigma, Z = z - phi(q)`.
    Cooling {
        potential: Arc<dyn Potential>,
        sigma: f64,
    },
    /// User-supplied forward map, inverse and differential.
    Custom {
        forward: PointMap,
        inverse: PointMap,
        pushforward: TangentMap,
    },
}

impl std::fmt::Debug for ContactomorphismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::IsingPrimary { b } => f.debug_struct("IsingPrimary").field("b", b).finish(),
            Self::IsingStability { b, beta } => f
                .debug_struct("IsingStability")
                .field("b", b)
                .field("beta", beta)
                .finish(),
            Self::Cooling { sigma, .. } => f.debug_struct("Cooling").field("sigma", sigma).finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// An invertible coordinate change on `R^3` with its differential.
#[derive(Debug, Clone)]
pub struct Contactomorphism {
    kind: ContactomorphismKind,
}

pub fn make_contactomorphism(kind: ContactomorphismKind) -> Result<Contactomorphism> {
    match &kind {
        ContactomorphismKind::IsingStability { beta, .. } if !(*beta > 0.0) => {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )))
        }
        ContactomorphismKind::IsingPrimary { b }
        | ContactomorphismKind::IsingStability { b, .. }
            if !b.is_finite() =>
        {
            return Err(Error::InvalidParameter("b must be finite".into()))
        }
        _ => {}
    }
    Ok(Contactomorphism { kind })
}

fn require_n1(x: &PhasePoint) -> Result<()> {
    if x.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: x.dim(),
        });
    }
    Ok(())
}

impl Contactomorphism {
    pub fn kind(&self) -> &ContactomorphismKind {
        &self.kind
    }

    pub fn forward(&self, x: &PhasePoint) -> Result<PhasePoint> {
        require_n1(x)?;
        let (p, q, z) = (x.p()[0], x.q()[0], x.z());
        Ok(match &self.kind {
            ContactomorphismKind::IsingPrimary { b } => {
                PhasePoint::n1(p, q + b * p, z + 0.5 * b * p * p)
            }
            ContactomorphismKind::IsingStability { b, beta } => {
                let big_q = q + b * p;
                PhasePoint::n1(
                    p - ising::phi_prime(*beta, big_q),
                    big_q,
                    z - ising::phi(*beta, big_q) + 0.5 * b * p * p,
                )
            }
            ContactomorphismKind::Cooling { potential, sigma } => {
                PhasePoint::n1(p - potential.d1(q), q - sigma, z - potential.value(q))
            }
            ContactomorphismKind::Custom { forward, .. } => forward(x),
        })
    }

    pub fn inverse(&self, x: &PhasePoint) -> Result<PhasePoint> {
        require_n1(x)?;
        let (big_p, big_q, big_z) = (x.p()[0], x.q()[0], x.z());
        Ok(match &self.kind {
            ContactomorphismKind::IsingPrimary { b } => {
                PhasePoint::n1(big_p, big_q - b * big_p, big_z - 0.5 * b * big_p * big_p)
            }
            ContactomorphismKind::IsingStability { b, beta } => {
                let p = big_p + ising::phi_prime(*beta, big_q);
                PhasePoint::n1(
                    p,
                    big_q - b * p,
                    big_z + ising::phi(*beta, big_q) - 0.5 * b * p * p,
                )
            }
            ContactomorphismKind::Cooling { potential, sigma } => {
                let q = big_q + sigma;
                PhasePoint::n1(big_p + potential.d1(q), q, big_z + potential.value(q))
            }
            ContactomorphismKind::Custom { inverse, .. } => inverse(x),
        })
    }

    /// Differential at `x` applied to `v`.
    pub fn pushforward(&self, x: &PhasePoint, v: &TangentVector) -> Result<TangentVector> {
        require_n1(x)?;
        if v.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: v.dim(),
            });
        }
        let (p, q) = (x.p()[0], x.q()[0]);
        let (dp, dq, dz) = (v.dp()[0], v.dq()[0], v.dz());
        Ok(match &self.kind {
            ContactomorphismKind::IsingPrimary { b } => {
                TangentVector::n1(dp, dq + b * dp, dz + b * p * dp)
            }
            ContactomorphismKind::IsingStability { b, beta } => {
                let big_q = q + b * p;
                let d_big_q = dq + b * dp;
                let sech2 = 1.0 - (beta * big_q).tanh().powi(2);
                TangentVector::n1(
                    dp - beta * sech2 * d_big_q,
                    d_big_q,
                    dz - ising::phi_prime(*beta, big_q) * d_big_q + b * p * dp,
                )
            }
            ContactomorphismKind::Cooling { potential, .. } => {
                TangentVector::n1(dp - potential.d2(q) * dq, dq, dz - potential.d1(q) * dq)
            }
            ContactomorphismKind::Custom { pushforward, .. } => pushforward(x, v),
        })
    }

    /// `|lambda(Dx v) - lambda(v)|` at one (point, tangent) pair.
    pub fn form_defect(&self, x: &PhasePoint, v: &TangentVector) -> Result<f64> {
        let image = self.forward(x)?;
        let pushed = self.pushforward(x, v)?;
        Ok((contact_form(&image, &pushed)? - contact_form(x, v)?).abs())
    }
}

/// `(p, q, z) -> (p + psi'(q), q, z + psi(q))`: adding the 1-jet of `psi`.
/// A contactomorphism for any smooth `psi`.
pub fn jet_shift(psi: Arc<dyn Potential>) -> Contactomorphism {
    let f = psi.clone();
    let g = psi.clone();
    let h = psi;
    Contactomorphism {
        kind: ContactomorphismKind::Custom {
            forward: Arc::new(move |x| {
                let q = x.q()[0];
                PhasePoint::n1(x.p()[0] + f.d1(q), q, x.z() + f.value(q))
            }),
            inverse: Arc::new(move |x| {
                let q = x.q()[0];
                PhasePoint::n1(x.p()[0] - g.d1(q), q, x.z() - g.value(q))
            }),
            pushforward: Arc::new(move |x, v| {
                let q = x.q()[0];
                let dq = v.dq()[0];
                TangentVector::n1(v.dp()[0] + h.d2(q) * dq, dq, v.dz() + h.d1(q) * dq)
            }),
        },
    }
}

/// `psi(q) = amplitude * sin(2 pi q / period)`.
#[derive(Debug, Clone, Copy)]
pub struct SinePotential {
    pub amplitude: f64,
    pub period: f64,
}

impl Potential for SinePotential {
    fn value(&self, q: f64) -> f64 {
        self.amplitude * (2.0 * PI * q / self.period).sin()
    }
    fn d1(&self, q: f64) -> f64 {
        let k = 2.0 * PI / self.period;
        self.amplitude * k * (k * q).cos()
    }
    fn d2(&self, q: f64) -> f64 {
        let k = 2.0 * PI / self.period;
        -self.amplitude * k * k * (k * q).sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contact_form_examples() {
        let origin = PhasePoint::n1(0.0, 0.0, 0.0);
        assert_eq!(
            contact_form(&origin, &TangentVector::n1(1.0, 0.0, 0.0)).unwrap(),
            0.0
        );
        assert_eq!(
            contact_form(&origin, &TangentVector::n1(0.0, 0.0, 1.0)).unwrap(),
            1.0
        );
        let x = PhasePoint::n1(2.0, 5.0, 1.0);
        assert_eq!(
            contact_form(&x, &TangentVector::n1(0.0, 1.0, 3.0)).unwrap(),
            1.0
        );
    }

    #[test]
    fn contact_form_rejects_mismatched_dimensions() {
        let x = PhasePoint::new(&[0.0, 1.0], &[0.0, 0.0], 0.0).unwrap();
        let v = TangentVector::n1(0.0, 0.0, 1.0);
        assert!(matches!(
            contact_form(&x, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reeb_field_is_exact() {
        let h = Reeb { dim: 1 };
        let v = contact_vector_field(&h, &PhasePoint::n1(3.5, -2.0, 7.0)).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn linear_decay_field() {
        let c = 1.7;
        let v =
            contact_vector_field(&LinearDecay::new(c), &PhasePoint::n1(0.4, 2.0, -1.5)).unwrap();
        assert_eq!(v.as_slice(), &[-c * 0.4, 0.0, c * 1.5]);
    }

    #[test]
    fn finite_difference_gradient_matches_closed_form() {
        let h = LinearDecay::new(2.0);
        let x = PhasePoint::n1(1.0, -3.0, 0.25);
        let analytic = contact_vector_field(&h, &x).unwrap();
        let numeric = contact_vector_field(&NumericGradient(h), &x).unwrap();
        for (a, b) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let h = FnHamiltonian::new(1, |x| x.z.ln());
        let err = contact_vector_field(&h, &PhasePoint::n1(0.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn reeb_identity_residual_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = verify_contact_identity(&Reeb { dim: 1 }, &PhasePoint::n1(1.0, 2.0, 3.0), &mut rng)
            .unwrap();
        assert_eq!(r.identity, 0.0);
    }

    #[test]
    fn linear_decay_lie_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = LinearDecay::new(1.3);
        for _ in 0..100 {
            let x = PhasePoint::n1(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let r = verify_contact_identity(&h, &x, &mut rng).unwrap();
            assert!(r.identity <= 1e-6 && r.lie <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn time_reversal_negates_field() {
        let h = LinearDecay::new(0.5);
        let x = PhasePoint::n1(1.0, 2.0, 3.0);
        let v = contact_vector_field(&h, &x).unwrap();
        let w = contact_vector_field(&TimeReversed(h), &x).unwrap();
        for (a, b) in v.as_slice().iter().zip(w.as_slice()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn ising_primary_with_zero_b_is_identity() {
        let m = make_contactomorphism(ContactomorphismKind::IsingPrimary { b: 0.0 }).unwrap();
        let x = PhasePoint::n1(0.3, -1.2, 4.0);
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn ising_stability_example() {
        let m = make_contactomorphism(ContactomorphismKind::IsingStability { b: 6.0, beta: 1.0 })
            .unwrap();
        let y = m.forward(&PhasePoint::n1(0.5, 0.0, 0.0)).unwrap();
        assert_eq!(y.q()[0], 3.0);
        assert!((y.p()[0] - (0.5 - 3f64.tanh())).abs() < 1e-15);
        let expected_z = -(2.0 * 3f64.cosh()).ln() + 0.75;
        assert!((y.z() - expected_z).abs() < 1e-14);
    }

    #[test]
    fn cooling_maps_equilibrium_to_origin() {
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
    fn inverse_roundtrips() {
        let maps = [
            make_contactomorphism(ContactomorphismKind::IsingPrimary { b: 1.5 }).unwrap(),
            make_contactomorphism(ContactomorphismKind::IsingStability { b: 6.0, beta: 1.0 })
                .unwrap(),
            make_contactomorphism(ContactomorphismKind::Cooling {
                potential: Arc::new(ExpPotential),
                sigma: 0.5,
            })
            .unwrap(),
            jet_shift(Arc::new(SinePotential {
                amplitude: 0.3,
                period: 2.0,
            })),
        ];
        let x = PhasePoint::n1(0.7, -0.4, 1.1);
        for m in &maps {
            let back = m.inverse(&m.forward(&x).unwrap()).unwrap();
            assert!(back.distance(&x) < 1e-13, "{:?}", m.kind());
        }
    }

    #[test]
    fn rejects_nonpositive_beta() {
        assert!(
            make_contactomorphism(ContactomorphismKind::IsingStability { b: 1.0, beta: 0.0 })
                .is_err()
        );
    }
}
