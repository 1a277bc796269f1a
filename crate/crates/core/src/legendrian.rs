//! Legendrian curves in `J^1 R` (n = 1): distances, Reeb chords and rate
//! estimates for normal hyperbolicity.
//!
//! Internally points are `[p, q, z]` triples.

use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};
use serde::Serialize;

use crate::contact::{
    contact_form_flat, gradient, ContactHamiltonian, PhasePoint, Potential, TangentVector,
};
use crate::error::{Error, Result};
use crate::flow::{flow_map_differential_along, flow_point};
use crate::io::{row, write_csv};
use crate::ising::IsingCurve;
use crate::roots::{bisect, golden_min};

/// Number of grid samples used by distance scans and Legendrian residuals.
pub const SCAN_SAMPLES: usize = 512;
/// Grid size used when bracketing Reeb chords.
pub const CHORD_SAMPLES: usize = 2048;
/// Threshold on `|d/dq (p0 - p1)|` above which a chord counts as non-degenerate.
pub const NONDEGENERACY_THRESHOLD: f64 = 1e-8;
/// Parameter window used for unbounded curves when no window is given.
pub const DEFAULT_WINDOW: (f64, f64) = (-10.0, 10.0);

/// Base of a jet graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BaseDomain {
    Line,
    /// `q` lives on a circle of this period; the generating function must be periodic.
    Circle(f64),
}

/// A curve `u -> (p(u), q(u), z(u))` with its derivative.
pub trait ParametricCurve: Send + Sync {
    fn point(&self, u: f64) -> [f64; 3];

    fn tangent(&self, u: f64) -> [f64; 3] {
        let h = 1e-6 * u.abs().max(1.0);
        let a = self.point(u + h);
        let b = self.point(u - h);
        [
            (a[0] - b[0]) / (2.0 * h),
            (a[1] - b[1]) / (2.0 * h),
            (a[2] - b[2]) / (2.0 * h),
        ]
    }
}

/// Parametric curve from closures.
pub struct FnCurve<P, T = fn(f64) -> [f64; 3]> {
    point: P,
    tangent: Option<T>,
}

impl<P: Fn(f64) -> [f64; 3] + Send + Sync> FnCurve<P> {
    pub fn new(point: P) -> Self {
        Self {
            point,
            tangent: None,
        }
    }
}

impl<P, T> FnCurve<P, T>
where
    P: Fn(f64) -> [f64; 3] + Send + Sync,
    T: Fn(f64) -> [f64; 3] + Send + Sync,
{
    pub fn with_tangent(point: P, tangent: T) -> Self {
        Self {
            point,
            tangent: Some(tangent),
        }
    }
}

impl<P, T> ParametricCurve for FnCurve<P, T>
where
    P: Fn(f64) -> [f64; 3] + Send + Sync,
    T: Fn(f64) -> [f64; 3] + Send + Sync,
{
    fn point(&self, u: f64) -> [f64; 3] {
        (self.point)(u)
    }
    fn tangent(&self, u: f64) -> [f64; 3] {
        match &self.tangent {
            Some(t) => t(u),
            None => {
                let h = 1e-6 * u.abs().max(1.0);
                let a = (self.point)(u + h);
                let b = (self.point)(u - h);
                [
                    (a[0] - b[0]) / (2.0 * h),
                    (a[1] - b[1]) / (2.0 * h),
                    (a[2] - b[2]) / (2.0 * h),
                ]
            }
        }
    }
}

/// `psi(q) = value` for all `q`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunction(pub f64);

impl Potential for ConstantFunction {
    fn value(&self, _q: f64) -> f64 {
        self.0
    }
    fn d1(&self, _q: f64) -> f64 {
        0.0
    }
    fn d2(&self, _q: f64) -> f64 {
        0.0
    }
}

#[derive(Clone)]
pub enum Legendrian {
    /// `{z = psi(q), p = psi'(q)}`.
    JetGraph {
        psi: Arc<dyn Potential>,
        domain: BaseDomain,
    },
    Parametric {
        curve: Arc<dyn ParametricCurve>,
        lo: f64,
        hi: f64,
    },
    IsingEquilibrium(IsingCurve),
}

impl std::fmt::Debug for Legendrian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Legendrian::JetGraph { domain, .. } => {
                f.debug_struct("JetGraph").field("domain", domain).finish()
            }
            Legendrian::Parametric { lo, hi, .. } => f
                .debug_struct("Parametric")
                .field("lo", lo)
                .field("hi", hi)
                .finish(),
            Legendrian::IsingEquilibrium(c) => f.debug_tuple("IsingEquilibrium").field(c).finish(),
        }
    }
}

/// A vertical segment from `start` on one Legendrian to `end` on another.
#[derive(Debug, Clone, Serialize)]
pub struct ReebChord {
    pub start: PhasePoint,
    pub end: PhasePoint,
    pub length: f64,
    pub nondegenerate: bool,
}

impl ReebChord {
    pub fn q(&self) -> f64 {
        self.start.q()[0]
    }
}

fn dist2(a: &[f64; 3], x: &[f64; 3]) -> f64 {
    (a[0] - x[0]).powi(2) + (a[1] - x[1]).powi(2) + (a[2] - x[2]).powi(2)
}

fn to_point(v: [f64; 3]) -> PhasePoint {
    PhasePoint::n1(v[0], v[1], v[2])
}

impl Legendrian {
    /// `{p = 0, z = 0}` over the line.
    pub fn zero_section() -> Self {
        Self::constant(0.0)
    }

    /// `{p = 0, z = value}`.
    pub fn constant(value: f64) -> Self {
        Legendrian::JetGraph {
            psi: Arc::new(ConstantFunction(value)),
            domain: BaseDomain::Line,
        }
    }

    pub fn jet_graph(psi: Arc<dyn Potential>, domain: BaseDomain) -> Self {
        Legendrian::JetGraph { psi, domain }
    }

    pub fn parametric(curve: Arc<dyn ParametricCurve>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::EmptyWindow);
        }
        Ok(Legendrian::Parametric { curve, lo, hi })
    }

    pub(crate) fn eval(&self, u: f64) -> [f64; 3] {
        match self {
            Legendrian::JetGraph { psi, .. } => [psi.d1(u), u, psi.value(u)],
            Legendrian::Parametric { curve, .. } => curve.point(u),
            Legendrian::IsingEquilibrium(c) => c.point(u),
        }
    }

    pub(crate) fn eval_tangent(&self, u: f64) -> [f64; 3] {
        match self {
            Legendrian::JetGraph { psi, .. } => [psi.d2(u), 1.0, psi.d1(u)],
            Legendrian::Parametric { curve, .. } => curve.tangent(u),
            Legendrian::IsingEquilibrium(c) => c.tangent(u),
        }
    }

    pub fn point(&self, u: f64) -> PhasePoint {
        to_point(self.eval(u))
    }

    pub fn tangent(&self, u: f64) -> TangentVector {
        let t = self.eval_tangent(u);
        TangentVector::n1(t[0], t[1], t[2])
    }

    /// Parameter interval of a bounded curve; `None` for curves over the line.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Legendrian::JetGraph {
                domain: BaseDomain::Circle(tau),
                ..
            } => Some((0.0, *tau)),
            Legendrian::Parametric { lo, hi, .. } => Some((*lo, *hi)),
            _ => None,
        }
    }

    /// Parameter interval covering the points with base coordinate in `[q_lo, q_hi]`.
    pub fn parameter_window(&self, q_lo: f64, q_hi: f64) -> Result<(f64, f64)> {
        if !(q_lo < q_hi) {
            return Err(Error::EmptyWindow);
        }
        Ok(match self {
            Legendrian::JetGraph { .. } => (q_lo, q_hi),
            Legendrian::Parametric { lo, hi, .. } => (*lo, *hi),
            Legendrian::IsingEquilibrium(c) => c.u_window(q_lo, q_hi),
        })
    }

    /// Evenly spaced samples `(u, point)` on `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, count: usize) -> Vec<(f64, PhasePoint)> {
        let count = count.max(2);
        (0..count)
            .map(|i| {
                let u = lo + (hi - lo) * i as f64 / (count - 1) as f64;
                (u, self.point(u))
            })
            .collect()
    }

    /// Writes `count` samples on `[lo, hi]` as CSV `u,p,q,z`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        w: W,
        lo: f64,
        hi: f64,
        count: usize,
    ) -> std::io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .sample(lo, hi, count)
            .into_iter()
            .map(|(u, x)| row(&[u, x.p()[0], x.q()[0], x.z()]))
            .collect();
        write_csv(w, &["u", "p", "q", "z"], &rows)
    }

    /// Closest point: `(parameter, point, distance)`.
    pub fn closest_point(&self, x: &PhasePoint) -> Result<(f64, PhasePoint, f64)> {
        if x.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: x.dim(),
            });
        }
        let target = [x.p()[0], x.q()[0], x.z()];
        let (lo, hi) = match self {
            Legendrian::JetGraph { domain, .. } => {
                let q = match domain {
                    BaseDomain::Line => target[1],
                    BaseDomain::Circle(tau) => target[1].rem_euclid(*tau),
                };
                let target_local = [target[0], q, target[2]];
                let d0 = dist2(&self.eval(q), &target_local).sqrt();
                if d0 == 0.0 {
                    return Ok((q, self.point(q), 0.0));
                }
                let (u, d) = self.scan(&target_local, q - d0, q + d0);
                let mut p = self.eval(u);
                // report the closest point on the same sheet of the cover as x
                p[1] += target[1] - q;
                return Ok((u + target[1] - q, to_point(p), d));
            }
            Legendrian::Parametric { lo, hi, .. } => (*lo, *hi),
            Legendrian::IsingEquilibrium(c) => {
                let u0 = c.alpha * target[1];
                let d0 = dist2(&self.eval(u0), &target).sqrt();
                c.u_window(target[1] - d0, target[1] + d0)
            }
        };
        if !(lo < hi) {
            return Err(Error::EmptyWindow);
        }
        let (u, d) = self.scan(&target, lo, hi);
        Ok((u, self.point(u), d))
    }

    pub fn distance_to(&self, x: &PhasePoint) -> Result<f64> {
        Ok(self.closest_point(x)?.2)
    }

    /// Grid scan plus golden-section refinement of the squared distance.
    fn scan(&self, x: &[f64; 3], lo: f64, hi: f64) -> (f64, f64) {
        let n = SCAN_SAMPLES;
        let step = (hi - lo) / (n - 1) as f64;
        let mut best = (lo, f64::INFINITY);
        for i in 0..n {
            let u = lo + step * i as f64;
            let d = dist2(&self.eval(u), x);
            if d < best.1 {
                best = (u, d);
            }
        }
        let a = (best.0 - step).max(lo);
        let b = (best.0 + step).min(hi);
        let (u, d) = golden_min(|u| dist2(&self.eval(u), x), a, b, 1e-10);
        if d <= best.1 {
            (u, d.sqrt())
        } else {
            (best.0, best.1.sqrt())
        }
    }

    /// Max of `|lambda(t)| / |t|` over 512 tangents on the parameter window
    /// (the domain for bounded curves, `window` or [`DEFAULT_WINDOW`] otherwise).
    pub fn verify(&self, window: Option<(f64, f64)>) -> f64 {
        let (lo, hi) = self.domain().or(window).unwrap_or(DEFAULT_WINDOW);
        let mut worst: f64 = 0.0;
        for i in 0..SCAN_SAMPLES {
            let u = lo + (hi - lo) * i as f64 / (SCAN_SAMPLES - 1) as f64;
            let x = self.eval(u);
            let t = self.eval_tangent(u);
            let norm = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
            if norm == 0.0 {
                continue;
            }
            worst = worst.max(contact_form_flat(&x, &t).abs() / norm);
        }
        worst
    }

    /// `p` as a function of the base coordinate, when the curve is a jet graph.
    fn as_jet(&self) -> Option<&Arc<dyn Potential>> {
        match self {
            Legendrian::JetGraph { psi, .. } => Some(psi),
            _ => None,
        }
    }
}

/// Reeb chords from `from` to `to` whose base point lies in `[q_lo, q_hi]`.
///
/// Chords sit where the `(p, q)` projections meet; only those with
/// `z_to > z_from` are kept. A curve pair whose projections coincide along an
/// interval yields one degenerate chord per coincidence interval.
pub fn find_reeb_chords(
    from: &Legendrian,
    to: &Legendrian,
    q_lo: f64,
    q_hi: f64,
) -> Result<Vec<ReebChord>> {
    if !(q_lo < q_hi) {
        return Err(Error::EmptyWindow);
    }
    let candidates: Vec<(f64, [f64; 3], [f64; 3], bool)> = match (from.as_jet(), to.as_jet()) {
        (Some(psi0), Some(psi1)) => {
            let f = |q: f64| psi0.d1(q) - psi1.d1(q);
            scan_roots(f, q_lo, q_hi)
                .into_iter()
                .map(|(q, degenerate)| {
                    let slope = psi0.d2(q) - psi1.d2(q);
                    (
                        q,
                        from.eval(q),
                        to.eval(q),
                        !degenerate && slope.abs() > NONDEGENERACY_THRESHOLD,
                    )
                })
                .collect()
        }
        (Some(_), None) => graph_vs_curve(to, from, q_lo, q_hi)?
            .into_iter()
            .map(|(q, on_curve, on_graph, nd)| (q, on_graph, on_curve, nd))
            .collect(),
        (None, Some(_)) => graph_vs_curve(from, to, q_lo, q_hi)?,
        (None, None) => curve_vs_curve(from, to, q_lo, q_hi)?,
    };
    let mut chords: Vec<ReebChord> = candidates
        .into_iter()
        .filter(|(q, ..)| *q >= q_lo && *q <= q_hi)
        .filter_map(|(_, start, end, nondegenerate)| {
            let length = end[2] - start[2];
            (length > 0.0).then(|| ReebChord {
                start: to_point(start),
                end: to_point([start[0], start[1], end[2]]),
                length,
                nondegenerate,
            })
        })
        .collect();
    chords.sort_by(|a, b| a.q().total_cmp(&b.q()));
    Ok(chords)
}

/// Roots of `f` on a 2048-point grid, with `true` marking intervals where
/// `f` vanishes identically (reported once, at their midpoint).
fn scan_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<(f64, bool)> {
    let n = CHORD_SAMPLES;
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    let mut i = 0;
    while i < n {
        if vals[i] == 0.0 {
            let start = i;
            while i + 1 < n && vals[i + 1] == 0.0 {
                i += 1;
            }
            if i > start {
                roots.push((0.5 * (xs[start] + xs[i]), true));
            } else {
                roots.push((xs[i], false));
            }
            i += 1;
            continue;
        }
        if i + 1 < n
            && vals[i + 1] != 0.0
            && vals[i].is_finite()
            && vals[i + 1].is_finite()
            && vals[i].signum() != vals[i + 1].signum()
        {
            if let Ok(r) = bisect(&f, xs[i], xs[i + 1], 1e-12) {
                roots.push((r, false));
            }
        }
        i += 1;
    }
    roots
}

/// Chords between a jet graph and a parametric curve, returned as
/// `(q, point on curve, point on graph, nondegenerate)`.
fn graph_vs_curve(
    curve: &Legendrian,
    graph: &Legendrian,
    q_lo: f64,
    q_hi: f64,
) -> Result<Vec<(f64, [f64; 3], [f64; 3], bool)>> {
    let psi = graph.as_jet().expect("graph is a jet graph");
    let (u_lo, u_hi) = curve.parameter_window(q_lo, q_hi)?;
    let f = |u: f64| {
        let x = curve.eval(u);
        x[0] - psi.d1(x[1])
    };
    Ok(scan_roots(f, u_lo, u_hi)
        .into_iter()
        .map(|(u, degenerate)| {
            let x = curve.eval(u);
            let t = curve.eval_tangent(u);
            let g = graph.eval(x[1]);
            let tg = graph.eval_tangent(x[1]);
            (x[1], x, g, !degenerate && transversal(&t, &tg))
        })
        .collect())
}

/// `|d/dq (p0 - p1)| > threshold`, read off the two `(p, q)` tangents. Where a
/// tangent is vertical the normalized cross product is used instead.
fn transversal(t0: &[f64; 3], t1: &[f64; 3]) -> bool {
    let vertical = |t: &[f64; 3]| t[1].abs() <= 1e-12 * t[0].abs().max(1e-300);
    if !vertical(t0) && !vertical(t1) {
        let s0 = t0[0] / t0[1];
        let s1 = t1[0] / t1[1];
        (s0 - s1).abs() > NONDEGENERACY_THRESHOLD
    } else {
        let cross = t0[0] * t1[1] - t0[1] * t1[0];
        let n0 = t0[0].hypot(t0[1]);
        let n1 = t1[0].hypot(t1[1]);
        cross.abs() > NONDEGENERACY_THRESHOLD * n0 * n1
    }
}

/// Both curves parametric: intersect the sampled `(q, p)` polylines and
/// polish each crossing with Newton's method.
fn curve_vs_curve(
    a: &Legendrian,
    b: &Legendrian,
    q_lo: f64,
    q_hi: f64,
) -> Result<Vec<(f64, [f64; 3], [f64; 3], bool)>> {
    let (a_lo, a_hi) = a.parameter_window(q_lo, q_hi)?;
    let (b_lo, b_hi) = b.parameter_window(q_lo, q_hi)?;
    let n = CHORD_SAMPLES;
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let ua = grid(a_lo, a_hi);
    let ub = grid(b_lo, b_hi);
    let pa: Vec<[f64; 3]> = ua.iter().map(|&u| a.eval(u)).collect();
    let pb: Vec<[f64; 3]> = ub.iter().map(|&u| b.eval(u)).collect();
    let mut out: Vec<(f64, [f64; 3], [f64; 3], bool)> = Vec::new();
    for i in 0..n - 1 {
        let (a0, a1) = (pa[i], pa[i + 1]);
        let (amin, amax) = (a0[1].min(a1[1]), a0[1].max(a1[1]));
        for j in 0..n - 1 {
            let (b0, b1) = (pb[j], pb[j + 1]);
            if b0[1].max(b1[1]) < amin || b0[1].min(b1[1]) > amax {
                continue;
            }
            // segment intersection in the (q, p) plane
            let d1 = [a1[1] - a0[1], a1[0] - a0[0]];
            let d2 = [b1[1] - b0[1], b1[0] - b0[0]];
            let denom = d1[0] * d2[1] - d1[1] * d2[0];
            if denom == 0.0 {
                continue;
            }
            let w = [b0[1] - a0[1], b0[0] - a0[0]];
            let s = (w[0] * d2[1] - w[1] * d2[0]) / denom;
            let r = (w[0] * d1[1] - w[1] * d1[0]) / denom;
            if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&r) {
                continue;
            }
            let mut u = ua[i] + s * (ua[i + 1] - ua[i]);
            let mut v = ub[j] + r * (ub[j + 1] - ub[j]);
            for _ in 0..50 {
                let x = a.eval(u);
                let y = b.eval(v);
                let tx = a.eval_tangent(u);
                let ty = b.eval_tangent(v);
                let f = [x[1] - y[1], x[0] - y[0]];
                let det = tx[1] * (-ty[0]) - (-ty[1]) * tx[0];
                if det == 0.0 {
                    break;
                }
                let du = (f[0] * (-ty[0]) - (-ty[1]) * f[1]) / det;
                let dv = (tx[1] * f[1] - tx[0] * f[0]) / det;
                u -= du;
                v -= dv;
                if du.abs() + dv.abs() < 1e-14 {
                    break;
                }
            }
            let x = a.eval(u);
            let y = b.eval(v);
            if (x[0] - y[0]).abs() + (x[1] - y[1]).abs() > 1e-9 {
                continue;
            }
            if out
                .iter()
                .any(|(q, s, ..)| (q - x[1]).abs() < 1e-9 && (s[0] - x[0]).abs() < 1e-9)
            {
                continue;
            }
            let nd = transversal(&a.eval_tangent(u), &b.eval_tangent(v));
            out.push((x[1], x, y, nd));
        }
    }
    Ok(out)
}

/// Normal/tangential rate estimates along an invariant Legendrian.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HyperbolicityEstimate {
    /// Normal contraction rate (min over samples).
    pub a_est: f64,
    /// Tangential growth rate (max over samples).
    pub b_est: f64,
    /// `min -dH(R)` over samples.
    pub c_est: f64,
    /// Longer of the two flow times (`t/2`, `t`) used for the rates.
    pub t: f64,
    /// `a_est > max(b_est, 0)`.
    pub normally_hyperbolic: bool,
}

const HYPERBOLICITY_SAMPLES: usize = 32;
const INVARIANCE_TOL: f64 = 1e-6;

/// Estimates contraction rates of the flow of `h` normal and tangent to `lambda`
/// inside `M = {h = 0}`, from flow-map differentials at 32 samples of the
/// parameter window.
///
/// Rates are slopes of the log-norms between `t/2` and `t`, with `t` the
/// largest of `{1, 2, 4, 8}` not exceeding `t_max`.
pub fn estimate_hyperbolicity<H: ContactHamiltonian + ?Sized>(
    h: &H,
    lambda: &Legendrian,
    window: (f64, f64),
    t_max: f64,
) -> Result<HyperbolicityEstimate> {
    let t = [8.0, 4.0, 2.0, 1.0]
        .into_iter()
        .find(|&t| t <= t_max)
        .ok_or_else(|| Error::InvalidParameter(format!("t_max must be at least 1, got {t_max}")))?;
    let (lo, hi) = lambda.domain().unwrap_or(window);
    let samples = lambda.sample(lo, hi, HYPERBOLICITY_SAMPLES);

    for (_, x) in &samples {
        let y = flow_point(h, x, 1.0, 1e-11)?;
        let deviation = lambda.distance_to(&y)?;
        if deviation > INVARIANCE_TOL {
            return Err(Error::NotInvariant { deviation });
        }
    }

    let mut a_est = f64::INFINITY;
    let mut b_est = f64::NEG_INFINITY;
    let mut c_est = f64::INFINITY;
    for (u, x) in &samples {
        let g = gradient(h, x);
        let reeb = g.dz();
        if reeb.abs() < 1e-12 {
            return Err(Error::NotTransverse { value: reeb });
        }
        c_est = c_est.min(-reeb);
        let (tan_x, nor_x) = frame(g.as_slice(), &lambda.eval_tangent(*u))?;
        let mut basis = DMatrix::zeros(3, 2);
        basis.set_column(0, &tan_x);
        basis.set_column(1, &nor_x);
        // log-norms at t/2 and t; their difference cancels the constant C
        let mut logs = [(0.0, 0.0); 2];
        for (slot, s) in [0.5 * t, t].into_iter().enumerate() {
            let d = flow_map_differential_along(h, x, s, &basis)?;
            let y = flow_point(h, x, s, 1e-11)?;
            let (uy, _, _) = lambda.closest_point(&y)?;
            let gy = gradient(h, &y);
            let (tan_y, nor_y) = frame(gy.as_slice(), &lambda.eval_tangent(uy))?;
            logs[slot] = (
                (tan_y.transpose() * &d).norm().ln(),
                (nor_y.transpose() * &d).norm().ln(),
            );
        }
        let span = 0.5 * t;
        a_est = a_est.min(-(logs[1].1 - logs[0].1) / span);
        b_est = b_est.max((logs[1].0 - logs[0].0) / span);
    }
    Ok(HyperbolicityEstimate {
        a_est,
        b_est,
        c_est,
        t,
        normally_hyperbolic: a_est > b_est.max(0.0),
    })
}

/// Unit tangent of the curve and the unit normal to it inside `grad^perp`.
fn frame(grad: &[f64], tangent: &[f64; 3]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let g = Vector3::new(grad[0], grad[1], grad[2]);
    let t = Vector3::new(tangent[0], tangent[1], tangent[2]);
    let t = t.try_normalize(1e-300).ok_or(Error::NonFinite {
        context: "curve tangent",
    })?;
    let n = g.cross(&t);
    let n = n
        .try_normalize(1e-300)
        .ok_or(Error::NotTransverse { value: 0.0 })?;
    Ok((t, n))
}
