//! Worked models with closed-form solutions: Newton cooling in three
//! variants, contact Möbius dynamics, and two Hamiltonians built from `-cz`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::contact::{
    make_contactomorphism, ContactHamiltonian, Contactomorphism, ContactomorphismKind,
    ExpPotential, FnHamiltonian, PhasePoint, PhaseView, Potential, Topology,
};
use crate::error::{Error, Result};
use crate::flow::flow_point;
use crate::legendrian::{BaseDomain, ConstantFunction, Legendrian};
use crate::relaxation::SurfaceGrid;

/// Integration tolerance used by the model drivers.
pub const MODEL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoolingVariant {
    /// `H = -a(z - phi(q)) + b(p - phi'(q))(q - sigma)`, `a > b > 0`.
    Coupled { b: f64 },
    /// `H = -a(z - phi(q))`.
    Isentropic,
    /// `H = -a(z - phi(q)) - eps (p - phi'(q)) sin^2(N q)`, `eps N < a`.
    Sine { eps: f64, n: f64 },
}

#[derive(Clone)]
pub struct CoolingModel {
    pub potential: Arc<dyn Potential>,
    pub a: f64,
    pub sigma: f64,
    pub variant: CoolingVariant,
}

impl std::fmt::Debug for CoolingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoolingModel")
            .field("a", &self.a)
            .field("sigma", &self.sigma)
            .field("variant", &self.variant)
            .finish()
    }
}

impl CoolingModel {
    pub fn new(
        potential: Arc<dyn Potential>,
        a: f64,
        sigma: f64,
        variant: CoolingVariant,
    ) -> Result<Self> {
        if !(a > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need a > 0 and finite sigma, got a={a}"
            )));
        }
        match variant {
            CoolingVariant::Coupled { b } if !(b > 0.0 && b < a) => {
                return Err(Error::InvalidParameter(format!(
                    "need a > b > 0, got a={a}, b={b}"
                )))
            }
            CoolingVariant::Sine { eps, n } if !(eps > 0.0 && n > 0.0 && eps * n < a) => {
                return Err(Error::InvalidParameter(format!(
                    "need eps, N > 0 and eps*N < a, got eps={eps}, N={n}, a={a}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            potential,
            a,
            sigma,
            variant,
        })
    }

    /// Exponential internal energy `phi(q) = e^q`.
    pub fn exponential(a: f64, sigma: f64, variant: CoolingVariant) -> Result<Self> {
        Self::new(Arc::new(ExpPotential), a, sigma, variant)
    }

    pub fn hamiltonian(&self) -> FnHamiltonian {
        let phi = self.potential.clone();
        let phi_g = self.potential.clone();
        let (a, sigma, variant) = (self.a, self.sigma, self.variant);
        // H = -a Z + G(P, q) with Z = z - phi(q), P = p - phi'(q)
        let extra = move |pp: f64, q: f64| -> (f64, f64, f64) {
            // value, d/dP, d/dq at fixed P
            match variant {
                CoolingVariant::Coupled { b } => (b * pp * (q - sigma), b * (q - sigma), b * pp),
                CoolingVariant::Isentropic => (0.0, 0.0, 0.0),
                CoolingVariant::Sine { eps, n } => {
                    let s = (n * q).sin();
                    (
                        -eps * pp * s * s,
                        -eps * s * s,
                        -eps * pp * n * (2.0 * n * q).sin(),
                    )
                }
            }
        };
        FnHamiltonian::new(1, move |x: PhaseView<'_>| {
            let (p, q, z) = (x.p[0], x.q[0], x.z);
            -a * (z - phi.value(q)) + extra(p - phi.d1(q), q).0
        })
        .with_gradient(move |x: PhaseView<'_>, out: &mut [f64]| {
            let (p, q) = (x.p[0], x.q[0]);
            let pp = p - phi_g.d1(q);
            let (_, g_p, g_q) = extra(pp, q);
            out[0] = g_p;
            out[1] = a * phi_g.d1(q) + g_q - g_p * phi_g.d2(q);
            out[2] = -a;
        })
    }

    /// The coordinates `(P, Q, Z)` in which the flow is linear or explicit.
    /// `Q = q - sigma` for the coupled variant and `Q = q` otherwise.
    pub fn coordinates(&self) -> Result<Contactomorphism> {
        let sigma = match self.variant {
            CoolingVariant::Coupled { .. } => self.sigma,
            _ => 0.0,
        };
        make_contactomorphism(ContactomorphismKind::Cooling {
            potential: self.potential.clone(),
            sigma,
        })
    }

    /// Numerical flow of the model Hamiltonian.
    pub fn flow(&self, x0: &PhasePoint, t: f64) -> Result<PhasePoint> {
        flow_point(&self.hamiltonian(), x0, t, MODEL_TOL)
    }

    /// Explicit solution in the original coordinates.
    pub fn closed_form(&self, x0: &PhasePoint, t: f64) -> Result<PhasePoint> {
        let m = self.coordinates()?;
        let y = m.forward(x0)?;
        let (p0, q0, z0) = (y.p()[0], y.q()[0], y.z());
        let a = self.a;
        let y_t = match self.variant {
            CoolingVariant::Coupled { b } => PhasePoint::n1(
                p0 * (-(a - b) * t).exp(),
                q0 * (-b * t).exp(),
                z0 * (-a * t).exp(),
            ),
            CoolingVariant::Isentropic => {
                PhasePoint::n1(p0 * (-a * t).exp(), q0, z0 * (-a * t).exp())
            }
            CoolingVariant::Sine { eps, n } => {
                let q = sine_entropy(eps, n, q0, t);
                let s0 = (n * q0).sin();
                let ratio = if s0 == 0.0 { 1.0 } else { s0 / (n * q).sin() };
                PhasePoint::n1(p0 * (-a * t).exp() * ratio * ratio, q, z0 * (-a * t).exp())
            }
        };
        m.inverse(&y_t)
    }

    /// `t -> infinity` limit of the orbit through `x0`.
    pub fn limit(&self, x0: &PhasePoint) -> Result<PhasePoint> {
        let q_inf = match self.variant {
            CoolingVariant::Coupled { .. } => self.sigma,
            CoolingVariant::Isentropic => x0.q()[0],
            CoolingVariant::Sine { n, .. } => {
                let q0 = x0.q()[0];
                if (n * q0).sin() == 0.0 {
                    q0
                } else {
                    PI * ((n * q0 / PI).floor() + 1.0) / n
                }
            }
        };
        Ok(PhasePoint::n1(
            self.potential.d1(q_inf),
            q_inf,
            self.potential.value(q_inf),
        ))
    }

    /// The equilibrium Legendrian `{z = phi(q), p = phi'(q)}`.
    pub fn equilibrium(&self) -> Legendrian {
        Legendrian::jet_graph(self.potential.clone(), BaseDomain::Line)
    }
}

/// `q(t)` under `q' = eps sin^2(N q)`, from `cot(N q(t)) = cot(N q0) - eps N t`
/// on the cell `(k pi / N, (k + 1) pi / N)` containing `q0`. Cell endpoints are fixed.
pub fn sine_entropy(eps: f64, n: f64, q0: f64, t: f64) -> f64 {
    let s0 = (n * q0).sin();
    if s0 == 0.0 {
        return q0;
    }
    let k = (n * q0 / PI).floor();
    let cot = (n * q0).cos() / s0 - eps * n * t;
    (k * PI + 0.5 * PI - cot.atan()) / n
}

/// Fitted exponential rate of `|p - phi'(q)|` between two late times.
pub fn fitted_cooling_rate(model: &CoolingModel, x0: &PhasePoint, t1: f64, t2: f64) -> Result<f64> {
    let gap = |t: f64| -> Result<f64> {
        let x = model.flow(x0, t)?;
        Ok((x.p()[0] - model.potential.d1(x.q()[0])).abs())
    };
    Ok(-(gap(t2)?.ln() - gap(t1)?.ln()) / (t2 - t1))
}

/// Increasing `C^1` profile with `a(s) = s - 1` on `[0, 1 + eps]` and
/// `a(s) -> a_inf` as `s -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusCutoff {
    pub eps: f64,
    pub a_inf: f64,
}

impl Default for MoebiusCutoff {
    fn default() -> Self {
        Self {
            eps: 0.1,
            a_inf: 2.0,
        }
    }
}

impl MoebiusCutoff {
    pub fn new(eps: f64, a_inf: f64) -> Result<Self> {
        if !(eps > 0.0 && a_inf > 1.0 && a_inf > eps) {
            return Err(Error::InvalidParameter(format!(
                "need eps > 0 and a_inf > max(1, eps), got eps={eps}, a_inf={a_inf}"
            )));
        }
        Ok(Self { eps, a_inf })
    }

    pub fn value(&self, s: f64) -> f64 {
        let seam = 1.0 + self.eps;
        if s <= seam {
            s - 1.0
        } else {
            let width = self.a_inf - self.eps;
            self.a_inf + (self.eps - self.a_inf) * (-(s - seam) / width).exp()
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let seam = 1.0 + self.eps;
        if s <= seam {
            1.0
        } else {
            (-(s - seam) / (self.a_inf - self.eps)).exp()
        }
    }
}

/// `H = a(p^2 + z^2)` on `J^1 S^1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MoebiusModel {
    pub cutoff: MoebiusCutoff,
}

impl MoebiusModel {
    pub fn new(cutoff: MoebiusCutoff) -> Self {
        Self { cutoff }
    }

    pub fn hamiltonian(&self) -> MoebiusHamiltonian {
        MoebiusHamiltonian {
            cutoff: self.cutoff,
        }
    }

    /// `(z, p)` from `w(t) = (w0 cosh t - sinh t) / (-w0 sinh t + cosh t)`, `w = z + i p`.
    pub fn closed_form_zp(z0: f64, p0: f64, t: f64) -> (f64, f64) {
        let (c, s) = (t.cosh(), t.sinh());
        let (nr, ni) = (z0 * c - s, p0 * c);
        let (dr, di) = (-z0 * s + c, -p0 * s);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    pub fn trajectory(&self, x0: &PhasePoint, t: f64) -> Result<PhasePoint> {
        flow_point(&self.hamiltonian(), x0, t, MODEL_TOL)
    }

    /// `{p = 0, z = -1}`.
    pub fn lambda_st() -> Legendrian {
        Legendrian::jet_graph(Arc::new(ConstantFunction(-1.0)), BaseDomain::Circle(TAU))
    }

    /// `{p = 0, z = 1}`.
    pub fn lambda_unst() -> Legendrian {
        Legendrian::jet_graph(Arc::new(ConstantFunction(1.0)), BaseDomain::Circle(TAU))
    }

    /// `K_c = {p = 0, z = c}`.
    pub fn k_c(c: f64) -> Legendrian {
        Legendrian::jet_graph(Arc::new(ConstantFunction(c)), BaseDomain::Circle(TAU))
    }

    /// The torus `{p^2 + z^2 = 1}` as `(q, theta) -> (sin theta, q, cos theta)`.
    pub fn torus(q_count: usize, theta_count: usize, theta_range: (f64, f64)) -> SurfaceGrid {
        SurfaceGrid {
            map: Arc::new(|q: f64, theta: f64| PhasePoint::n1(theta.sin(), q, theta.cos())),
            s_range: (0.0, TAU * (1.0 - 1.0 / q_count.max(1) as f64)),
            theta_range,
            s_count: q_count,
            theta_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusHamiltonian {
    pub cutoff: MoebiusCutoff,
}

impl ContactHamiltonian for MoebiusHamiltonian {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        self.cutoff.value(x.p[0] * x.p[0] + x.z * x.z)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        let d = self.cutoff.derivative(x.p[0] * x.p[0] + x.z * x.z);
        out[0] = 2.0 * d * x.p[0];
        out[1] = 0.0;
        out[2] = 2.0 * d * x.z;
        true
    }
    fn topology(&self) -> Topology {
        Topology::QPeriodic(TAU)
    }
}

/// `H = c B(-z)` with `B(s) = s` for `s <= 1` and `2 - e^{-(s - 1)}` above:
/// equal to `-cz` near the zero section, positive and bounded on `{z < 0}`.
pub fn saturated_decay(c: f64) -> FnHamiltonian {
    let b = |s: f64| {
        if s <= 1.0 {
            (s, 1.0)
        } else {
            (2.0 - (-(s - 1.0)).exp(), (-(s - 1.0)).exp())
        }
    };
    FnHamiltonian::new(1, move |x: PhaseView<'_>| c * b(-x.z).0).with_gradient(
        move |x: PhaseView<'_>, out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = -c * b(-x.z).1;
        },
    )
}

/// `H = -c Z (1 - Z / delta)`, vanishing on `{Z = 0}` and `{Z = delta}`.
pub fn blocking(c: f64, delta: f64) -> Result<FnHamiltonian> {
    if !(delta > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need c, delta > 0, got c={c}, delta={delta}"
        )));
    }
    Ok(
        FnHamiltonian::new(1, move |x: PhaseView<'_>| -c * x.z * (1.0 - x.z / delta))
            .with_gradient(move |x: PhaseView<'_>, out: &mut [f64]| {
                out[0] = 0.0;
                out[1] = 0.0;
                out[2] = -c * (1.0 - 2.0 * x.z / delta);
            }),
    )
}
