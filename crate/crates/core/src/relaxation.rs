//! Relaxation trajectories between Legendrians: sampled checks of the
//! attractor assumptions, a shooting solver and attractor cores.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{
    gradient, ContactHamiltonian, PhasePoint, PhaseView, Potential, TimeReversed,
};
use crate::error::{Error, Result};
use crate::flow::{
    detect_convergence, flow_point, integrate, ConvergenceStop, EventKind, Hypersurface,
    IntegratorConfig, Trajectory, ESCAPE_BOUND,
};
use crate::io::fmt_f64;
use crate::legendrian::{BaseDomain, FnCurve, Legendrian};
use crate::ode::Direction;
use crate::roots::bisect;

/// Axis-aligned box `p x q x z` used for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleRegion {
    pub p: (f64, f64),
    pub q: (f64, f64),
    pub z: (f64, f64),
}

/// Outcome of the sampled check of conditions (i)-(iv).
#[derive(Debug, Clone, Serialize)]
pub struct ClubsuitReport {
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub i: bool,
    pub ii: bool,
    pub iii: bool,
    pub iv: bool,
    pub samples: usize,
}

impl ClubsuitReport {
    pub fn all_hold(&self) -> bool {
        self.i && self.ii && self.iii && self.iv
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        [
            (self.i, "i"),
            (self.ii, "ii"),
            (self.iii, "iii"),
            (self.iv, "iv"),
        ]
        .into_iter()
        .find(|(ok, _)| !ok)
        .map(|(_, name)| name)
    }
}

const GRID_SIDE: usize = 22;
const TUBE_RADIUS: f64 = 0.05;
const REEB_SLACK: f64 = 1e-12;

fn lin(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

fn reeb_at<H: ContactHamiltonian + ?Sized>(h: &H, x: &PhasePoint) -> f64 {
    gradient(h, x).dz()
}

/// Sampled verification of conditions (i)-(iv) for `h` and the target `lambda1`.
///
/// (i) is tested at points of `{H > 0}` just off the nodal set (found by
/// bracketing `H` along `z` in every grid column) and `kappa1` is half the
/// smallest `H` at a sampled violation. (ii) takes `kappa2` as the smallest
/// upper quantile of sampled `H` above which no violation occurs. (iii) samples
/// a tube of radius 0.05 around `lambda1`, and (iv) integrates probes started
/// in that tube inside `{H > 0}`.
pub fn verify_clubsuit<H: ContactHamiltonian + ?Sized>(
    h: &H,
    lambda1: &Legendrian,
    region: &SampleRegion,
) -> Result<ClubsuitReport> {
    let n = GRID_SIDE;
    let mut positive: Vec<(f64, f64)> = Vec::new(); // (H, dH(R)) on {H > 0}
    let mut near_nodal_ok = true;
    let mut samples = 0usize;
    for i in 0..n {
        let p = lin(region.p.0, region.p.1, i, n);
        for j in 0..n {
            let q = lin(region.q.0, region.q.1, j, n);
            let column: Vec<f64> = (0..n).map(|k| lin(region.z.0, region.z.1, k, n)).collect();
            let values: Vec<f64> = column
                .iter()
                .map(|&z| h.value(PhasePoint::n1(p, q, z).view()))
                .collect();
            for (k, &z) in column.iter().enumerate() {
                samples += 1;
                if values[k] > 0.0 {
                    let x = PhasePoint::n1(p, q, z);
                    positive.push((values[k], reeb_at(h, &x)));
                }
            }
            for k in 0..n - 1 {
                if values[k].signum() == values[k + 1].signum() || values[k] == 0.0 {
                    continue;
                }
                let f = |z: f64| h.value(PhasePoint::n1(p, q, z).view());
                let Ok(z0) = bisect(f, column[k], column[k + 1], 1e-13) else {
                    continue;
                };
                let eta = 1e-4 * (region.z.1 - region.z.0);
                for z in [z0 - eta, z0 + eta] {
                    let x = PhasePoint::n1(p, q, z);
                    if h.value(x.view()) > 0.0 {
                        samples += 1;
                        positive.push((h.value(x.view()), reeb_at(h, &x)));
                        if reeb_at(h, &x) > REEB_SLACK {
                            near_nodal_ok = false;
                        }
                    }
                }
            }
        }
    }

    let bad_min = positive
        .iter()
        .filter(|(_, r)| *r > REEB_SLACK)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut values: Vec<f64> = positive.iter().map(|(v, _)| *v).collect();
    values.sort_by(f64::total_cmp);
    let median = values.get(values.len() / 2).copied();

    let kappa1 = if near_nodal_ok {
        match median {
            Some(m) => Some((0.5 * bad_min).min(m)),
            None => Some(1.0),
        }
    } else {
        None
    };
    let kappa2 = kappa1.and_then(|k1| {
        if values.is_empty() {
            return Some(2.0 * k1);
        }
        [0.5, 0.75, 0.9].into_iter().find_map(|quantile| {
            let idx = ((values.len() as f64 - 1.0) * quantile) as usize;
            let candidate = values[idx].max(2.0 * k1);
            let clean = positive
                .iter()
                .all(|(v, r)| *v < candidate || *r <= REEB_SLACK);
            clean.then_some(candidate)
        })
    });

    // (iii): tube around the target
    let (t_lo, t_hi) = lambda1
        .domain()
        .unwrap_or(lambda1.parameter_window(region.q.0, region.q.1)?);
    let m = 100;
    let offsets = 10;
    let mut iii = true;
    for i in 0..m {
        let base = lambda1.point(lin(t_lo, t_hi, i, m));
        for j in 0..offsets {
            for k in 0..offsets {
                let dp =
                    lin(-TUBE_RADIUS, TUBE_RADIUS, j, offsets) * std::f64::consts::FRAC_1_SQRT_2;
                let dz =
                    lin(-TUBE_RADIUS, TUBE_RADIUS, k, offsets) * std::f64::consts::FRAC_1_SQRT_2;
                let x = PhasePoint::n1(base.p()[0] + dp, base.q()[0], base.z() + dz);
                samples += 1;
                if !(reeb_at(h, &x) < 0.0) {
                    iii = false;
                }
            }
        }
    }

    // (iv): probes from the tube inside {H > 0}
    let mut probes = Vec::new();
    for i in 0..4 {
        let base = lambda1.point(lin(t_lo, t_hi, i, 4) * 0.9 + 0.05 * (t_lo + t_hi));
        for (dp, dz) in [(0.03, 0.03), (-0.03, 0.03), (0.03, -0.03), (-0.03, -0.03)] {
            let x = PhasePoint::n1(base.p()[0] + dp, base.q()[0], base.z() + dz);
            if h.value(x.view()) > 0.0 {
                probes.push(x);
            }
        }
    }
    let rate = lambda1
        .sample(t_lo, t_hi, 8)
        .iter()
        .map(|(_, x)| -reeb_at(h, x))
        .fold(f64::INFINITY, f64::min);
    let horizon = 40.0 / rate.clamp(0.1, 10.0);
    let iv = !probes.is_empty()
        && probes.iter().all(|x| {
            let cfg = IntegratorConfig {
                record_steps: false,
                ..IntegratorConfig::until(horizon)
            };
            match integrate(h, x, &cfg) {
                Ok(traj) if traj.stop_kind() == Some(EventKind::MaxTime) => lambda1
                    .distance_to(&traj.last())
                    .map(|d| d <= 1e-3)
                    .unwrap_or(false),
                _ => false,
            }
        });

    Ok(ClubsuitReport {
        kappa1,
        kappa2,
        i: kappa1.is_some(),
        ii: kappa2.is_some(),
        iii,
        iv,
        samples,
    })
}

/// Sign function describing `Sigma_+ = {sigma > 0}`.
pub type SideFn = Arc<dyn Fn(PhaseView<'_>) -> f64 + Send + Sync>;

/// A search for trajectories from `source` to `target` inside `Sigma_+`.
#[derive(Clone)]
pub struct ShootingProblem {
    pub hamiltonian: Arc<dyn ContactHamiltonian>,
    pub source: Legendrian,
    /// Parameter window on the source curve.
    pub window: (f64, f64),
    pub target: Legendrian,
    /// Defaults to the Hamiltonian itself.
    pub sigma_plus: Option<SideFn>,
    pub horizon: f64,
    pub eps: f64,
    pub escape_bound: f64,
    /// Bisect captured/escaped transitions on the parameter axis.
    pub refine: bool,
}

impl std::fmt::Debug for ShootingProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShootingProblem")
            .field("source", &self.source)
            .field("window", &self.window)
            .field("target", &self.target)
            .field("horizon", &self.horizon)
            .field("eps", &self.eps)
            .finish()
    }
}

/// Default capture radius.
pub const DEFAULT_EPS: f64 = 1e-3;
/// Parameter tolerance of the boundary bisection.
pub const BOUNDARY_TOL: f64 = 1e-8;

impl ShootingProblem {
    /// Horizon `50 / c`, capture radius `1e-3`.
    pub fn new(
        hamiltonian: Arc<dyn ContactHamiltonian>,
        source: Legendrian,
        window: (f64, f64),
        target: Legendrian,
        c: f64,
    ) -> Self {
        Self {
            hamiltonian,
            source,
            window,
            target,
            sigma_plus: None,
            horizon: 50.0 / c,
            eps: DEFAULT_EPS,
            escape_bound: ESCAPE_BOUND,
            refine: true,
        }
    }

    fn side(&self, x: PhaseView<'_>) -> f64 {
        match &self.sigma_plus {
            Some(s) => s(x),
            None => self.hamiltonian.value(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Captured,
    Escaped,
    Undecided,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Captured => "captured",
            Classification::Escaped => "escaped",
            Classification::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub parameter: f64,
    pub classification: Classification,
    /// Every sample before entry into the capture tube lies in `Sigma_+`.
    pub stayed_in_sigma_plus: bool,
    /// The shot stayed in `Sigma_+` up to the capture tube and left it inside the tube.
    pub crossed_target_boundary: bool,
    pub final_distance: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingReport {
    pub results: Vec<ShootingResult>,
    /// Parameters of captured/escaped transitions, refined to [`BOUNDARY_TOL`].
    pub boundaries: Vec<f64>,
}

impl ShootingReport {
    pub fn captured(&self) -> impl Iterator<Item = &ShootingResult> {
        self.results
            .iter()
            .filter(|r| r.classification == Classification::Captured)
    }

    /// Captured shots that stayed in `Sigma_+`.
    pub fn captured_in_sigma_plus(&self) -> usize {
        self.captured().filter(|r| r.stayed_in_sigma_plus).count()
    }

    /// CSV `parameter,classification,final_distance,stayed_in_sigma_plus`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "parameter,classification,final_distance,stayed_in_sigma_plus"
        )?;
        for r in &self.results {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(r.parameter),
                r.classification.as_str(),
                fmt_f64(r.final_distance),
                r.stayed_in_sigma_plus
            )?;
        }
        Ok(())
    }
}

/// One shot from the source point with parameter `u`.
pub fn shoot_one(prob: &ShootingProblem, u: f64) -> Result<ShootingResult> {
    let x0 = prob.source.point(u);
    let eps = prob.eps;
    let target = Arc::new(prob.target.clone());
    let mut cfg = IntegratorConfig::until(prob.horizon);
    cfg.escape_bound = Some(prob.escape_bound);
    cfg.convergence = Some(ConvergenceStop {
        target: target.clone(),
        eps,
        window: prob.horizon / 5.0,
    });
    let side = {
        let prob = prob.clone();
        let target = target.clone();
        move |x: PhaseView<'_>| {
            let s = prob.side(x);
            if s > 0.0 {
                return s;
            }
            let d = target.distance_to(&x.to_point()).unwrap_or(f64::INFINITY);
            s.max(eps - d)
        }
    };
    cfg.surfaces.push(Hypersurface::new(
        "left_sigma_plus",
        side,
        Direction::Falling,
        true,
    ));
    let traj = integrate(&prob.hamiltonian, &x0, &cfg)?;

    let final_distance = prob.target.distance_to(&traj.last())?;
    let stop = traj.stop_kind();
    let classification = if matches!(
        stop,
        Some(EventKind::EscapedBox | EventKind::HypersurfaceCrossing)
    ) {
        Classification::Escaped
    } else if detect_convergence(&traj, &prob.target, eps, prob.horizon / 5.0) {
        Classification::Captured
    } else {
        Classification::Undecided
    };

    let mut stayed = true;
    let mut crossed = false;
    for i in 0..traj.len() {
        let x = traj.view(i);
        let inside_tube = prob.target.distance_to(&traj.point(i))? <= eps;
        if inside_tube {
            if stayed && prob.side(x) <= 0.0 {
                crossed = true;
            }
            break;
        }
        if prob.side(x) <= 0.0 {
            stayed = false;
        }
    }
    Ok(ShootingResult {
        parameter: u,
        classification,
        stayed_in_sigma_plus: stayed,
        crossed_target_boundary: crossed,
        final_distance,
        trajectory: traj,
    })
}

/// Shoots from `grid_size` evenly spaced source points and refines every
/// captured/escaped transition by bisection.
pub fn shoot(prob: &ShootingProblem, grid_size: usize) -> Result<ShootingReport> {
    if grid_size < 1 {
        return Err(Error::InvalidParameter("grid_size must be positive".into()));
    }
    if !(prob.window.0 <= prob.window.1) {
        return Err(Error::EmptyWindow);
    }
    let params: Vec<f64> = if grid_size == 1 {
        vec![0.5 * (prob.window.0 + prob.window.1)]
    } else {
        (0..grid_size)
            .map(|i| lin(prob.window.0, prob.window.1, i, grid_size))
            .collect()
    };
    let results: Vec<ShootingResult> = params
        .par_iter()
        .map(|&u| shoot_one(prob, u))
        .collect::<Result<_>>()?;

    let mut boundaries = Vec::new();
    if prob.refine {
        for pair in results.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let transition = matches!(
                (a.classification, b.classification),
                (Classification::Captured, Classification::Escaped)
                    | (Classification::Escaped, Classification::Captured)
            );
            if !transition {
                continue;
            }
            let (mut lo, mut hi) = (a.parameter, b.parameter);
            let lo_class = a.classification;
            while hi - lo > BOUNDARY_TOL {
                let mid = 0.5 * (lo + hi);
                let class = shoot_one(prob, mid)?.classification;
                if class == lo_class {
                    lo = mid;
                } else if class == Classification::Undecided {
                    break;
                } else {
                    hi = mid;
                }
            }
            boundaries.push(0.5 * (lo + hi));
        }
    }
    Ok(ShootingReport {
        results,
        boundaries,
    })
}

/// Replaces a curve by its image under `(p, q, z) -> (p + psi'(q), q, z + psi(q))`,
/// restricted to the parameter window.
pub fn jet_shifted(
    base: &Legendrian,
    psi: Arc<dyn Potential>,
    window: (f64, f64),
) -> Result<Legendrian> {
    let base = base.clone();
    let curve = FnCurve::new(move |u: f64| {
        let x = base.point(u);
        let q = x.q()[0];
        [x.p()[0] + psi.d1(q), q, x.z() + psi.value(q)]
    });
    Legendrian::parametric(Arc::new(curve), window.0, window.1)
}

/// Captured counts when the source is shifted by `amplitude * shape`, for each amplitude.
///
/// Evidence of robustness only: a stable count under small shifts.
pub fn perturbation_sweep(
    prob: &ShootingProblem,
    shape: Arc<dyn Potential>,
    amplitudes: &[f64],
    grid_size: usize,
) -> Result<Vec<(f64, usize)>> {
    struct Scaled(Arc<dyn Potential>, f64);
    impl Potential for Scaled {
        fn value(&self, q: f64) -> f64 {
            self.1 * self.0.value(q)
        }
        fn d1(&self, q: f64) -> f64 {
            self.1 * self.0.d1(q)
        }
        fn d2(&self, q: f64) -> f64 {
            self.1 * self.0.d2(q)
        }
    }
    amplitudes
        .iter()
        .map(|&amp| {
            let mut shifted = prob.clone();
            shifted.source = jet_shifted(
                &prob.source,
                Arc::new(Scaled(shape.clone(), amp)),
                prob.window,
            )?;
            shifted.refine = false;
            let report = shoot(&shifted, grid_size)?;
            Ok((amp, report.captured_in_sigma_plus()))
        })
        .collect()
}

/// A two-parameter surface `(s, theta) -> point`, sampled on a grid.
#[derive(Clone)]
pub struct SurfaceGrid {
    pub map: Arc<dyn Fn(f64, f64) -> PhasePoint + Send + Sync>,
    pub s_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub s_count: usize,
    pub theta_count: usize,
}

impl std::fmt::Debug for SurfaceGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurfaceGrid")
            .field("s_range", &self.s_range)
            .field("theta_range", &self.theta_range)
            .field("s_count", &self.s_count)
            .field("theta_count", &self.theta_count)
            .finish()
    }
}

impl SurfaceGrid {
    fn s(&self, i: usize) -> f64 {
        lin(self.s_range.0, self.s_range.1, i, self.s_count.max(2))
    }
    fn theta(&self, j: usize) -> f64 {
        lin(
            self.theta_range.0,
            self.theta_range.1,
            j,
            self.theta_count.max(2),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cores {
    /// `{dH(R) = 0}` on the surface.
    pub gamma: Vec<PhasePoint>,
    /// Forward image of `{dH(R) < 0}` at time `s_max`.
    pub q_minus: Vec<PhasePoint>,
    /// Backward image of `{dH(R) > 0}` at time `s_max`.
    pub q_plus: Vec<PhasePoint>,
}

const INVARIANCE_RESIDUAL: f64 = 1e-8;

/// Cores of the flow of `h` on the invariant surface `m`.
///
/// Grid points with `dH(R) < 0` are flowed forward for `s_max`, those with
/// `dH(R) > 0` backward; `Gamma` is located by bisection in `theta` between
/// grid points of opposite sign.
pub fn compute_cores<H: ContactHamiltonian + ?Sized>(
    h: &H,
    m: &SurfaceGrid,
    s_max: f64,
) -> Result<Cores> {
    let mut points = Vec::with_capacity(m.s_count * m.theta_count);
    for i in 0..m.s_count {
        for j in 0..m.theta_count {
            points.push((i, j, (m.map)(m.s(i), m.theta(j))));
        }
    }
    let residual = points
        .iter()
        .map(|(_, _, x)| h.value(x.view()).abs())
        .fold(0.0, f64::max);
    if residual > INVARIANCE_RESIDUAL {
        return Err(Error::NotInvariant {
            deviation: residual,
        });
    }
    let reeb: Vec<f64> = points.iter().map(|(_, _, x)| reeb_at(h, x)).collect();

    let mut gamma = Vec::new();
    for i in 0..m.s_count {
        for j in 0..m.theta_count.saturating_sub(1) {
            let a = reeb[i * m.theta_count + j];
            let b = reeb[i * m.theta_count + j + 1];
            if a == 0.0 {
                gamma.push(points[i * m.theta_count + j].2.clone());
            } else if b != 0.0 && a.signum() != b.signum() {
                let s = m.s(i);
                let f = |theta: f64| reeb_at(h, &(m.map)(s, theta));
                if let Ok(theta) = bisect(f, m.theta(j), m.theta(j + 1), 1e-12) {
                    gamma.push((m.map)(s, theta));
                }
            }
        }
    }

    let evolve = |sign: f64| -> Result<Vec<PhasePoint>> {
        points
            .par_iter()
            .zip(reeb.par_iter())
            .filter(|(_, r)| **r * sign > 0.0)
            .map(|((_, _, x), _)| {
                if sign < 0.0 {
                    flow_point(h, x, s_max, 1e-10)
                } else {
                    flow_point(&TimeReversed(h), x, s_max, 1e-10)
                }
            })
            .collect()
    };
    Ok(Cores {
        gamma,
        q_minus: evolve(-1.0)?,
        q_plus: evolve(1.0)?,
    })
}

/// Symmetric Hausdorff distance between a point cloud and a curve sampled
/// on `window` (bounded curves use their own domain).
pub fn hausdorff_to_curve(
    cloud: &[PhasePoint],
    curve: &Legendrian,
    window: (f64, f64),
    curve_samples: usize,
) -> Result<f64> {
    if cloud.is_empty() {
        return Ok(f64::INFINITY);
    }
    let forward = cloud
        .par_iter()
        .map(|x| curve.distance_to(x))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    // on a circle base the cloud may sit on another sheet of the cover
    let wrapped: Vec<PhasePoint> = match curve {
        Legendrian::JetGraph {
            domain: BaseDomain::Circle(tau),
            ..
        } => cloud
            .iter()
            .map(|x| PhasePoint::n1(x.p()[0], x.q()[0].rem_euclid(*tau), x.z()))
            .collect(),
        _ => cloud.to_vec(),
    };
    let (lo, hi) = curve.domain().unwrap_or(window);
    let backward = curve
        .sample(lo, hi, curve_samples)
        .par_iter()
        .map(|(_, y)| {
            wrapped
                .iter()
                .map(|x| x.distance(y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    Ok(forward.max(backward))
}
