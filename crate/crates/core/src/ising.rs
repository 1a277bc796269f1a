//! Mean-field Ising thermodynamics in contact coordinates.
//!
//! Conventions: `p` is the magnetization, `q` the external field, `z` minus the
//! Helmholtz free energy. Primary coordinates are `P = p, Q = q + b p,
//! Z = z + b p^2 / 2`; stability coordinates additionally subtract the
//! equilibrium 1-jet so that the equilibrium Legendrian becomes the zero section.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::Serialize;

use crate::contact::{ContactHamiltonian, PhasePoint, PhaseView, Topology};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt};
use crate::legendrian::Legendrian;
use crate::ode::{self, OdeConfig};
use crate::relaxation::{verify_clubsuit, ClubsuitReport, SampleRegion};
use crate::roots::{bisect, golden_min, safeguarded_newton};

/// `phi_beta(u) = ln(2 cosh(beta u)) / beta`, computed without overflow.
pub fn phi(beta: f64, u: f64) -> f64 {
    debug_assert!(beta > 0.0);
    let a = u.abs();
    a + (-2.0 * beta * a).exp().ln_1p() / beta
}

/// `phi_beta'(u) = tanh(beta u)`.
pub fn phi_prime(beta: f64, u: f64) -> f64 {
    (beta * u).tanh()
}

/// Checked variant of [`phi`].
pub fn try_phi(beta: f64, u: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok(phi(beta, u))
}

/// Interaction strength, inverse temperature and relaxation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsingParams {
    pub b: f64,
    pub beta: f64,
    pub c: f64,
}

impl IsingParams {
    pub fn new(b: f64, beta: f64, c: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("b must be >= 0, got {b}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "c must be positive, got {c}"
            )));
        }
        Ok(Self { b, beta, c })
    }

    /// `p - tanh(beta (q + b p))`.
    pub fn self_consistency(&self, p: f64, q: f64) -> f64 {
        p - (self.beta * (q + self.b * p)).tanh()
    }

    pub fn classify(&self) -> Case {
        let bb = self.b * self.beta;
        if (bb - 1.0).abs() < 1e-12 {
            Case::Marginal
        } else if bb < 1.0 {
            Case::A
        } else {
            Case::B {
                fold: fold_point(self.b, self.beta).expect("b beta > 1"),
            }
        }
    }
}

/// `F(p, q) = -phi_beta(q + b p) + b p^2 / 2`.
pub fn free_energy(params: &IsingParams, p: f64, q: f64) -> f64 {
    -phi(params.beta, q + params.b * p) + 0.5 * params.b * p * p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Case {
    /// `b beta < 1`: one attracting equilibrium for every field.
    A,
    /// `b beta > 1`: three equilibria for `|q| < fold`.
    B { fold: f64 },
    /// `b beta = 1` to 1e-12.
    Marginal,
}

/// Magnetization at the fold, `sqrt(1 - 1/(b beta))`.
pub fn fold_magnetization(b: f64, beta: f64) -> Option<f64> {
    let bb = b * beta;
    (bb > 1.0).then(|| (1.0 - 1.0 / bb).sqrt())
}

/// Field magnitude where the stable and unstable branches merge.
pub fn fold_point(b: f64, beta: f64) -> Option<f64> {
    fold_magnetization(b, beta).map(|p| b * p - p.atanh() / beta)
}

/// Number of roots of `p - tanh(beta (q + b p))`, counted from the signs of
/// the function at its interior extrema.
pub fn count_equilibria(b: f64, beta: f64, q: f64) -> usize {
    let g = |p: f64| p - (beta * (q + b * p)).tanh();
    // g is concave left of its inflection point p = -q/b and convex right of it,
    // so each side has at most one interior extremum
    let lo = -2.0;
    let hi = 2.0;
    let split = (-q / b).clamp(lo, hi);
    let mut nodes = vec![lo, hi];
    if split > lo {
        nodes.push(golden_min(|p| -g(p), lo, split, 1e-13).0);
    }
    if split < hi {
        nodes.push(golden_min(g, split, hi, 1e-13).0);
    }
    nodes.sort_by(f64::total_cmp);
    let vals: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
    vals.windows(2)
        .filter(|w| w[0].signum() != w[1].signum() && w[0] != 0.0)
        .count()
        + vals.iter().filter(|v| **v == 0.0).count()
}

/// Fold point located by bisection in `q` on the number of equilibria
/// (three below the fold, one above), independent of the tangency formula.
pub fn fold_point_by_root_count(b: f64, beta: f64) -> Option<f64> {
    if b * beta <= 1.0 {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = b + 1.0 / beta;
    if count_equilibria(b, beta, lo) != 3 {
        return None;
    }
    while count_equilibria(b, beta, hi) != 1 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if count_equilibria(b, beta, mid) >= 3 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

const ROOT_TOL: f64 = 1e-15;

fn solve_on(params: &IsingParams, q: f64, lo: f64, hi: f64) -> Option<f64> {
    let g = |p: f64| params.self_consistency(p, q);
    bisect(g, lo, hi, ROOT_TOL).ok()
}

/// The unique equilibrium in Case A and the marginal case.
pub fn r_single(params: &IsingParams, q: f64) -> f64 {
    solve_on(params, q, -1.0, 1.0).expect("g(-1) <= 0 <= g(1)")
}

/// Upper stable branch, defined for `q >= -fold` in Case B.
pub fn r_plus(params: &IsingParams, q: f64) -> Option<f64> {
    match fold_magnetization(params.b, params.beta) {
        None => Some(r_single(params, q)),
        Some(ps) => solve_on(params, q, ps, 1.0),
    }
}

/// Lower stable branch, `r_minus(q) = -r_plus(-q)`.
pub fn r_minus(params: &IsingParams, q: f64) -> Option<f64> {
    match fold_magnetization(params.b, params.beta) {
        None => Some(r_single(params, q)),
        Some(ps) => solve_on(params, q, -1.0, -ps),
    }
}

/// Repelling branch on `(-fold, fold)` in Case B.
pub fn s_branch(params: &IsingParams, q: f64) -> Option<f64> {
    let ps = fold_magnetization(params.b, params.beta)?;
    let g_lo = params.self_consistency(-ps, q);
    let g_hi = params.self_consistency(ps, q);
    if g_lo > 0.0 && g_hi < 0.0 {
        solve_on(params, q, -ps, ps)
    } else {
        None
    }
}

/// `s` extended by `-inf` above the fold and `+inf` below it.
pub fn s_extended(params: &IsingParams, q: f64) -> f64 {
    match s_branch(params, q) {
        Some(s) => s,
        None if q > 0.0 => f64::NEG_INFINITY,
        None => f64::INFINITY,
    }
}

/// Equilibrium branches sampled on a q-grid.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumBranches {
    pub case: Case,
    pub q: Vec<f64>,
    /// In Case A (and the marginal case) both stable columns hold the single branch.
    pub r_minus: Vec<Option<f64>>,
    pub s: Vec<Option<f64>>,
    pub r_plus: Vec<Option<f64>>,
}

pub const BRANCH_GRID: usize = 1024;

pub fn equilibrium_branches(
    params: &IsingParams,
    q_lo: f64,
    q_hi: f64,
) -> Result<EquilibriumBranches> {
    if !(q_lo < q_hi) || !q_lo.is_finite() || !q_hi.is_finite() {
        return Err(Error::EmptyWindow);
    }
    let case = params.classify();
    let q: Vec<f64> = (0..BRANCH_GRID)
        .map(|i| q_lo + (q_hi - q_lo) * i as f64 / (BRANCH_GRID - 1) as f64)
        .collect();
    let (r_minus, s, r_plus) = match case {
        Case::B { .. } => (
            q.iter().map(|&x| r_minus(params, x)).collect(),
            q.iter().map(|&x| s_branch(params, x)).collect(),
            q.iter().map(|&x| r_plus(params, x)).collect(),
        ),
        Case::A | Case::Marginal => {
            let r: Vec<Option<f64>> = q.iter().map(|&x| Some(r_single(params, x))).collect();
            (r.clone(), vec![None; q.len()], r)
        }
    };
    Ok(EquilibriumBranches {
        case,
        q,
        r_minus,
        s,
        r_plus,
    })
}

impl EquilibriumBranches {
    /// Largest self-consistency residual over all emitted points.
    pub fn max_residual(&self, params: &IsingParams) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &q) in self.q.iter().enumerate() {
            for p in [self.r_minus[i], self.s[i], self.r_plus[i]]
                .into_iter()
                .flatten()
            {
                worst = worst.max(params.self_consistency(p, q).abs());
            }
        }
        worst
    }

    /// CSV `q,r_minus,s,r_plus` with empty fields where a branch is undefined.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "q,r_minus,s,r_plus")?;
        for i in 0..self.q.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.q[i]),
                fmt_opt(self.r_minus[i]),
                fmt_opt(self.s[i]),
                fmt_opt(self.r_plus[i])
            )?;
        }
        Ok(())
    }
}

/// Limit of a scenario-I relaxation (field held fixed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioOneLimit {
    pub value: f64,
    pub stable: bool,
}

/// `lim p(t)` for `p' = -c p + c tanh(beta (q + b p))` at fixed `q`.
pub fn scenario_one_limit(params: &IsingParams, p0: f64, q: f64) -> ScenarioOneLimit {
    match params.classify() {
        Case::A | Case::Marginal => ScenarioOneLimit {
            value: r_single(params, q),
            stable: true,
        },
        Case::B { .. } => {
            let s = s_extended(params, q);
            if p0 > s {
                ScenarioOneLimit {
                    value: r_plus(params, q).expect("p0 above s"),
                    stable: true,
                }
            } else if p0 < s {
                ScenarioOneLimit {
                    value: r_minus(params, q).expect("p0 below s"),
                    stable: true,
                }
            } else {
                ScenarioOneLimit {
                    value: s,
                    stable: false,
                }
            }
        }
    }
}

/// Integrates the scenario-I equation to `t_end`.
pub fn integrate_scenario_one(params: &IsingParams, p0: f64, q: f64, t_end: f64) -> Result<f64> {
    let IsingParams { b, beta, c } = *params;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = -c * y[0] + c * (beta * (q + b * y[0])).tanh();
        Ok(())
    };
    let out = ode::integrate(
        rhs,
        0.0,
        &[p0],
        t_end,
        &OdeConfig::with_tol(1e-12),
        &[],
        1e-12,
        |_, _| ControlFlow::Continue(()),
    )?;
    Ok(out.y[0])
}

/// `h_{b,beta}(p, q, z) = c (-(z + b p^2 / 2) + phi_beta(q + b p))` in the
/// original coordinates.
#[derive(Debug, Clone, Copy)]
pub struct IsingHamiltonian {
    pub params: IsingParams,
}

impl ContactHamiltonian for IsingHamiltonian {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        let IsingParams { b, beta, c } = self.params;
        let (p, q) = (x.p[0], x.q[0]);
        c * (-(x.z + 0.5 * b * p * p) + phi(beta, q + b * p))
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        let IsingParams { b, beta, c } = self.params;
        let (p, q) = (x.p[0], x.q[0]);
        let t = phi_prime(beta, q + b * p);
        out[0] = c * b * (t - p);
        out[1] = c * t;
        out[2] = -c;
        true
    }
}

/// The same Hamiltonian in primary coordinates: `c (-Z + phi_beta(Q))`.
#[derive(Debug, Clone, Copy)]
pub struct IsingPrimaryHamiltonian {
    pub beta: f64,
    pub c: f64,
}

impl ContactHamiltonian for IsingPrimaryHamiltonian {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        self.c * (-x.z + phi(self.beta, x.q[0]))
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        out[0] = 0.0;
        out[1] = self.c * phi_prime(self.beta, x.q[0]);
        out[2] = -self.c;
        true
    }
}

/// Scenario-II flow evaluated in closed form at time `t` (original coordinates).
pub fn scenario_two_state(params: &IsingParams, x0: &PhasePoint, t: f64) -> PhasePoint {
    let IsingParams { b, beta, c } = *params;
    let (p0, q0, z0) = (x0.p()[0], x0.q()[0], x0.z());
    let big_q = q0 + b * p0;
    let big_z0 = z0 + 0.5 * b * p0 * p0;
    let decay = (-c * t).exp();
    let eq_p = phi_prime(beta, big_q);
    let eq_z = phi(beta, big_q);
    let p = decay * (p0 - eq_p) + eq_p;
    let big_z = decay * (big_z0 - eq_z) + eq_z;
    PhasePoint::n1(p, big_q - b * p, big_z - 0.5 * b * p * p)
}

/// `(p_inf, q_inf, z_inf)` of scenario II.
pub fn scenario_two_limit(params: &IsingParams, p0: f64, q0: f64) -> (f64, f64, f64) {
    let IsingParams { b, beta, .. } = *params;
    let big_q = q0 + b * p0;
    let p = phi_prime(beta, big_q);
    (p, q0 + b * (p0 - p), phi(beta, big_q) - 0.5 * b * p * p)
}

/// Largest `|p_I - p_II|` over near-equilibrium initial conditions with
/// `|p0 - tanh(beta (q0 + b p0))| <= delta` and `|q0| >= k`.
///
/// The q-grid covers `[k, k + 5]` and its mirror image, `grid` points each,
/// with `grid` magnetization offsets per field value.
pub fn compare_scenarios(params: &IsingParams, delta: f64, k: f64, grid: usize) -> Result<f64> {
    if !(delta >= 0.0) || grid < 2 {
        return Err(Error::InvalidParameter(
            "delta must be >= 0 and grid >= 2".into(),
        ));
    }
    if let Case::B { fold } = params.classify() {
        if !(k > fold) {
            return Err(Error::InvalidParameter(format!(
                "K = {k} must exceed the fold point {fold}"
            )));
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..grid {
        let mag = k + 5.0 * i as f64 / (grid - 1) as f64;
        for q0 in [mag, -mag] {
            let eq = scenario_one_limit(params, 0.0, q0);
            let r = if q0 > 0.0 {
                r_plus(params, q0).unwrap_or(eq.value)
            } else {
                r_minus(params, q0).unwrap_or(eq.value)
            };
            let slope = 1.0 - params.b * params.beta * (1.0 - r * r);
            let reach = if delta == 0.0 {
                0.0
            } else {
                2.0 * delta / slope.max(1e-3)
            };
            for j in 0..grid {
                let p0 = r + reach * (2.0 * j as f64 / (grid - 1) as f64 - 1.0);
                if params.self_consistency(p0, q0).abs() > delta {
                    continue;
                }
                let p_one = scenario_one_limit(params, p0, q0).value;
                let (p_two, _, _) = scenario_two_limit(params, p0, q0);
                worst = worst.max((p_one - p_two).abs());
            }
        }
    }
    Ok(worst)
}

/// The curve `Lambda_{a, alpha}` in the stability coordinates of `(b, beta)`.
///
/// Parametrized by `u = alpha (q + a p)` of the `(a, alpha)` system:
/// `Q = u/alpha - (a - b) tanh u`, `P = tanh u - tanh(beta Q)`,
/// `Z = phi_alpha(u/alpha) - phi_beta(Q) - (a - b) tanh^2 u / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsingCurve {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
}

impl IsingCurve {
    pub fn q_of(&self, u: f64) -> f64 {
        u / self.alpha - (self.a - self.b) * u.tanh()
    }

    pub fn point(&self, u: f64) -> [f64; 3] {
        let m = u.tanh();
        let big_q = self.q_of(u);
        let big_p = m - (self.beta * big_q).tanh();
        let big_z = phi(self.alpha, u / self.alpha)
            - phi(self.beta, big_q)
            - 0.5 * (self.a - self.b) * m * m;
        [big_p, big_q, big_z]
    }

    pub fn tangent(&self, u: f64) -> [f64; 3] {
        let m = u.tanh();
        let sech2 = 1.0 - m * m;
        let big_q = self.q_of(u);
        let tq = (self.beta * big_q).tanh();
        let dq = 1.0 / self.alpha - (self.a - self.b) * sech2;
        let dp = sech2 - self.beta * (1.0 - tq * tq) * dq;
        let dz = m / self.alpha - tq * dq - (self.a - self.b) * m * sech2;
        [dp, dq, dz]
    }

    /// Parameter interval containing every point with `Q` in `[q_lo, q_hi]`.
    pub fn u_window(&self, q_lo: f64, q_hi: f64) -> (f64, f64) {
        let spread = (self.a - self.b).abs();
        (self.alpha * (q_lo - spread), self.alpha * (q_hi + spread))
    }

    /// `Z` at the point over `P = Q = 0`: `ln 2 (1/alpha - 1/beta)`.
    pub fn z_at_origin(&self) -> f64 {
        LN_2 * (1.0 / self.alpha - 1.0 / self.beta)
    }

    /// Residual of the implicit equation for `P` at fixed `Q`.
    fn implicit(&self, big_p: f64, big_q: f64) -> (f64, f64) {
        let p = big_p + (self.beta * big_q).tanh();
        let t = (self.alpha * (big_q + (self.a - self.b) * p)).tanh();
        (
            big_p + (self.beta * big_q).tanh() - t,
            1.0 - self.alpha * (self.a - self.b) * (1.0 - t * t),
        )
    }

    /// All `(P, Z)` on the curve over `Q`, found by bracketing `P` in `[-2, 2]`
    /// and safeguarded Newton.
    pub fn solve_at_q(&self, big_q: f64) -> Vec<(f64, f64)> {
        const N: usize = 4096;
        let f = |big_p: f64| self.implicit(big_p, big_q).0;
        let mut roots = Vec::new();
        let mut prev_x = -2.0;
        let mut prev_f = f(prev_x);
        for i in 1..=N {
            let x = -2.0 + 4.0 * i as f64 / N as f64;
            let fx = f(x);
            if prev_f == 0.0 {
                roots.push(prev_x);
            } else if fx != 0.0 && prev_f.signum() != fx.signum() {
                if let Ok(r) = safeguarded_newton(|p| self.implicit(p, big_q), prev_x, x, 1e-15) {
                    roots.push(r);
                }
            }
            prev_x = x;
            prev_f = fx;
        }
        roots
            .into_iter()
            .map(|big_p| {
                let p = big_p + (self.beta * big_q).tanh();
                let arg = big_q + (self.a - self.b) * p;
                let big_z =
                    phi(self.alpha, arg) - 0.5 * (self.a - self.b) * p * p - phi(self.beta, big_q);
                (big_p, big_z)
            })
            .collect()
    }

    /// Smallest `Z` on the curve over `[q_lo, q_hi]` (grid of 4096 parameters).
    pub fn min_z(&self, q_lo: f64, q_hi: f64) -> f64 {
        let (lo, hi) = self.u_window(q_lo, q_hi);
        (0..4096)
            .map(|i| lo + (hi - lo) * i as f64 / 4095.0)
            .map(|u| self.point(u))
            .filter(|x| x[1] >= q_lo && x[1] <= q_hi)
            .map(|x| x[2])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Lambda_{a, alpha}` in the stability coordinates of `(b, beta)`.
pub fn lambda_a_alpha(a: f64, alpha: f64, b: f64, beta: f64) -> Result<Legendrian> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(
            "alpha and beta must be positive".into(),
        ));
    }
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::InvalidParameter(
            "a and b must be non-negative".into(),
        ));
    }
    Ok(Legendrian::IsingEquilibrium(IsingCurve {
        a,
        alpha,
        b,
        beta,
    }))
}

/// `dP/dQ` of `Lambda_{a, alpha}` at the chord over `Q = 0`.
pub fn dpdq_at_chord(a: f64, alpha: f64, b: f64, beta: f64) -> Result<f64> {
    let den = 1.0 - alpha * (a - b);
    if den.abs() <= 1e-14 {
        return Err(Error::FrontPole);
    }
    Ok((alpha - beta + alpha * beta * (a - b)) / den)
}

/// A perturbation term `F(P, Q, Z)` of `-c Z`.
pub trait Perturbation: Send + Sync {
    fn value(&self, big_p: f64, big_q: f64, big_z: f64) -> f64;
    /// `(dF/dP, dF/dQ, dF/dZ)`.
    fn gradient(&self, big_p: f64, big_q: f64, big_z: f64) -> [f64; 3];
}

/// Smooth bump on `rho < |P| < 4 rho` with peak value 1.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub rho: f64,
}

impl Bump {
    fn x(&self, big_p: f64) -> f64 {
        (big_p.abs() - self.rho) / (3.0 * self.rho)
    }

    pub fn value(&self, big_p: f64) -> f64 {
        let x = self.x(big_p);
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        (4.0 - 1.0 / (x * (1.0 - x))).exp()
    }

    pub fn derivative(&self, big_p: f64) -> f64 {
        let x = self.x(big_p);
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let w = x * (1.0 - x);
        let g = (4.0 - 1.0 / w).exp();
        g * (1.0 - 2.0 * x) / (w * w) * big_p.signum() / (3.0 * self.rho)
    }
}

/// `F = eps sin(2 pi Q / tau) g(P)` with `g` a [`Bump`].
#[derive(Debug, Clone, Copy)]
pub struct SineBump {
    pub eps: f64,
    pub tau: f64,
    pub bump: Bump,
}

impl Perturbation for SineBump {
    fn value(&self, big_p: f64, big_q: f64, _big_z: f64) -> f64 {
        if self.eps == 0.0 {
            return 0.0;
        }
        self.eps * (2.0 * PI * big_q / self.tau).sin() * self.bump.value(big_p)
    }
    fn gradient(&self, big_p: f64, big_q: f64, _big_z: f64) -> [f64; 3] {
        if self.eps == 0.0 {
            return [0.0; 3];
        }
        let k = 2.0 * PI / self.tau;
        [
            self.eps * (k * big_q).sin() * self.bump.derivative(big_p),
            self.eps * k * (k * big_q).cos() * self.bump.value(big_p),
            0.0,
        ]
    }
}

/// `H(P, Q, Z) = -c Z + F(P, Q, Z)`, `tau`-periodic in `Q`.
#[derive(Clone)]
pub struct AdmissibleHamiltonian {
    pub c: f64,
    pub tau: f64,
    pub perturbation: Arc<dyn Perturbation>,
    pub report: Option<ClubsuitReport>,
}

impl std::fmt::Debug for AdmissibleHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdmissibleHamiltonian")
            .field("c", &self.c)
            .field("tau", &self.tau)
            .field("report", &self.report)
            .finish()
    }
}

impl ContactHamiltonian for AdmissibleHamiltonian {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: PhaseView<'_>) -> f64 {
        -self.c * x.z + self.perturbation.value(x.p[0], x.q[0], x.z)
    }
    fn analytic_gradient(&self, x: PhaseView<'_>, out: &mut [f64]) -> bool {
        let g = self.perturbation.gradient(x.p[0], x.q[0], x.z);
        out[0] = g[0];
        out[1] = g[1];
        out[2] = g[2] - self.c;
        true
    }
    fn topology(&self) -> Topology {
        Topology::QPeriodic(self.tau)
    }
}

/// Region sampled by the admissibility checks around the zero section.
pub fn admissibility_region(tau: f64, rho: f64) -> SampleRegion {
    let p_max = (5.0 * rho).max(1.0);
    SampleRegion {
        p: (-p_max, p_max),
        q: (0.0, tau),
        z: (-2.0, 2.0),
    }
}

/// Builds `-c Z + eps sin(2 pi Q / tau) g(P)` and runs the admissibility sampler.
pub fn make_admissible(c: f64, tau: f64, eps: f64, rho: f64) -> Result<AdmissibleHamiltonian> {
    if !(eps >= 0.0) || !(rho > 0.0) || !(tau > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need c > 0, tau > 0, eps >= 0, rho > 0 (got c={c}, tau={tau}, eps={eps}, rho={rho})"
        )));
    }
    let perturbation = Arc::new(SineBump {
        eps,
        tau,
        bump: Bump { rho },
    });
    admissible_from(c, tau, perturbation, admissibility_region(tau, rho))
}

/// Wraps a user-supplied perturbation and rejects it if a sampled condition fails.
pub fn admissible_from(
    c: f64,
    tau: f64,
    perturbation: Arc<dyn Perturbation>,
    region: SampleRegion,
) -> Result<AdmissibleHamiltonian> {
    let mut h = AdmissibleHamiltonian {
        c,
        tau,
        perturbation,
        report: None,
    };
    let report = verify_clubsuit(&h, &Legendrian::zero_section(), &region)?;
    if let Some(cond) = report.first_failure() {
        return Err(Error::NotAdmissible(format!("condition ({cond}) violated")));
    }
    h.report = Some(report);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        assert!((phi(2.0, 0.0) - LN_2 / 2.0).abs() < 1e-15);
        assert_eq!(phi_prime(1.0, 0.0), 0.0);
        assert_eq!(phi_prime(1.0, -0.3), -phi_prime(1.0, 0.3));
        let v = phi(1.0, 50.0);
        assert!(v.is_finite() && (v - 50.0).abs() < 1e-12);
        assert!(phi(1.0, 1000.0).is_finite());
        assert!(try_phi(0.0, 1.0).is_err());
    }

    #[test]
    fn phi_matches_naive_formula() {
        for u in [-3.0f64, -0.5, 0.0, 0.7, 4.0] {
            let naive = (2.0 * (1.3 * u).cosh()).ln() / 1.3;
            assert!((phi(1.3, u) - naive).abs() < 1e-14);
        }
    }

    #[test]
    fn free_energy_examples() {
        let p = IsingParams::new(0.0, 2.0, 1.0).unwrap();
        assert_eq!(free_energy(&p, 0.4, 1.2), -phi(2.0, 1.2));
        let p = IsingParams::new(6.0, 1.0, 1.0).unwrap();
        assert!((free_energy(&p, 0.0, 0.0) + LN_2).abs() < 1e-15);
    }

    #[test]
    fn classification() {
        assert_eq!(IsingParams::new(0.5, 1.0, 1.0).unwrap().classify(), Case::A);
        assert_eq!(
            IsingParams::new(2.0, 0.5, 1.0).unwrap().classify(),
            Case::Marginal
        );
        assert!(matches!(
            IsingParams::new(6.0, 1.0, 1.0).unwrap().classify(),
            Case::B { .. }
        ));
    }

    #[test]
    fn fold_oracle_agrees() {
        let a = fold_point(6.0, 1.0).unwrap();
        let oracle = fold_point_by_root_count(6.0, 1.0).unwrap();
        assert!((a - oracle).abs() < 1e-8, "{a} vs {oracle}");
    }

    #[test]
    fn scenario_one_case_b() {
        let p = IsingParams::new(6.0, 1.0, 1.0).unwrap();
        let up = scenario_one_limit(&p, 0.01, 0.0);
        assert_eq!(up.value, r_plus(&p, 0.0).unwrap());
        let mid = scenario_one_limit(&p, 0.0, 0.0);
        assert_eq!(mid.value, 0.0);
        assert!(!mid.stable);
    }

    #[test]
    fn scenario_two_example() {
        let p = IsingParams::new(6.0, 1.0, 1.0).unwrap();
        let (pi, qi, _) = scenario_two_limit(&p, 0.0, 1.0);
        assert_eq!(pi, 1f64.tanh());
        assert!((qi - (1.0 - 6.0 * 1f64.tanh())).abs() < 1e-15);
    }

    #[test]
    fn curve_reduces_to_zero_section() {
        let c = IsingCurve {
            a: 2.0,
            alpha: 0.7,
            b: 2.0,
            beta: 0.7,
        };
        for u in [-5.0, -0.3, 0.0, 1.0, 8.0] {
            let x = c.point(u);
            assert!(x[0].abs() < 1e-15 && x[2].abs() < 1e-14, "{x:?}");
        }
    }

    #[test]
    fn bump_support() {
        let g = Bump { rho: 0.1 };
        assert_eq!(g.value(0.05), 0.0);
        assert_eq!(g.value(0.45), 0.0);
        assert!((g.value(0.25) - 1.0).abs() < 1e-15);
        let h = 1e-6;
        let fd = (g.value(0.2 + h) - g.value(0.2 - h)) / (2.0 * h);
        assert!((fd - g.derivative(0.2)).abs() < 1e-5);
        let fd = (g.value(-0.2 + h) - g.value(-0.2 - h)) / (2.0 * h);
        assert!((fd - g.derivative(-0.2)).abs() < 1e-5);
    }
}
