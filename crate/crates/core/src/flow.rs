//! Integration of contact Hamiltonian flows.

use std::cell::RefCell;
use std::io::Write;
use std::ops::ControlFlow;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::contact::{vector_field_into, ContactHamiltonian, PhasePoint, PhaseView, TimeReversed};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::legendrian::Legendrian;
use crate::ode::{self, Direction, Event, OdeConfig, Stop};

/// Default half-width of the escape box `[-50, 50]^{2n+1}`.
pub const ESCAPE_BOUND: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HypersurfaceCrossing,
    EnteredNeighborhood,
    EscapedBox,
    Converged,
    MaxTime,
    /// Step size underflow: the field is too stiff or blows up.
    Stiff,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::HypersurfaceCrossing => "hypersurface_crossing",
            EventKind::EnteredNeighborhood => "entered_neighborhood",
            EventKind::EscapedBox => "escaped_box",
            EventKind::Converged => "converged",
            EventKind::MaxTime => "max_time",
            EventKind::Stiff => "stiff",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowEvent {
    pub t: f64,
    pub kind: EventKind,
    /// Label of the hypersurface or neighbourhood, empty otherwise.
    pub label: String,
}

/// A level set `{f = 0}` whose crossings are reported.
#[derive(Clone)]
pub struct Hypersurface {
    pub label: String,
    pub func: Arc<dyn Fn(PhaseView<'_>) -> f64 + Send + Sync>,
    pub direction: Direction,
    pub terminal: bool,
}

impl std::fmt::Debug for Hypersurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hypersurface")
            .field("label", &self.label)
            .field("direction", &self.direction)
            .field("terminal", &self.terminal)
            .finish()
    }
}

impl Hypersurface {
    pub fn new(
        label: impl Into<String>,
        func: impl Fn(PhaseView<'_>) -> f64 + Send + Sync + 'static,
        direction: Direction,
        terminal: bool,
    ) -> Self {
        Self {
            label: label.into(),
            func: Arc::new(func),
            direction,
            terminal,
        }
    }
}

/// Reported when the trajectory comes within `radius` of `target`.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub label: String,
    pub target: Arc<Legendrian>,
    pub radius: f64,
    pub terminal: bool,
}

/// Stop once the trajectory has stayed within `eps` of `target` for `window`.
#[derive(Debug, Clone)]
pub struct ConvergenceStop {
    pub target: Arc<Legendrian>,
    pub eps: f64,
    pub window: f64,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_time: f64,
    /// Half-width of the escape box; `None` disables the check.
    pub escape_bound: Option<f64>,
    pub surfaces: Vec<Hypersurface>,
    pub neighborhoods: Vec<Neighborhood>,
    pub convergence: Option<ConvergenceStop>,
    /// Record every accepted step; otherwise only the endpoints.
    pub record_steps: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_time: 10.0,
            escape_bound: Some(ESCAPE_BOUND),
            surfaces: Vec::new(),
            neighborhoods: Vec::new(),
            convergence: None,
            record_steps: true,
        }
    }
}

impl IntegratorConfig {
    pub fn until(max_time: f64) -> Self {
        Self {
            max_time,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::InvalidParameter("max_time must be positive".into()));
        }
        Ok(())
    }

    fn ode(&self) -> OdeConfig {
        OdeConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            ..OdeConfig::default()
        }
    }
}

/// Time-stamped states of one integration, stored flat.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    events: Vec<FlowEvent>,
}

impl Trajectory {
    pub fn from_samples(dim: usize, samples: &[(f64, PhasePoint)]) -> Result<Self> {
        let mut traj = Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            events: Vec::new(),
        };
        for (t, x) in samples {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.dim(),
                });
            }
            traj.push(*t, x.as_slice());
        }
        Ok(traj)
    }

    fn push(&mut self, t: f64, y: &[f64]) {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return;
            }
        }
        self.times.push(t);
        self.states.extend_from_slice(y);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let w = 2 * self.dim + 1;
        &self.states[i * w..(i + 1) * w]
    }

    pub fn view(&self, i: usize) -> PhaseView<'_> {
        PhaseView::from_flat(self.state(i))
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        PhasePoint::from_flat(self.state(i).to_vec()).expect("stored states have odd length")
    }

    pub fn last(&self) -> PhasePoint {
        self.point(self.len() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn events(&self) -> &[FlowEvent] {
        &self.events
    }

    pub fn has_event(&self, kind: EventKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }

    /// The event that ended the integration.
    pub fn stop_kind(&self) -> Option<EventKind> {
        self.events.last().map(|e| e.kind)
    }

    /// Writes `t,p_1..p_n,q_1..q_n,z` rows followed by `#event,` lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("p_{i}")));
        header.extend((1..=n).map(|i| format!("q_{i}")));
        header.push("z".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[i])];
            row.extend(self.state(i).iter().map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        for e in &self.events {
            writeln!(w, "#event,{},{},{}", fmt_f64(e.t), e.kind.as_str(), e.label)?;
        }
        Ok(())
    }
}

/// Flow-map right-hand side for `h` on a flat state.
fn field_rhs<'a, H: ContactHamiltonian + ?Sized>(
    h: &'a H,
    len: usize,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let mut grad = vec![0.0; len];
    move |_t, y, dy| vector_field_into(h, y, &mut grad, dy)
}

/// Integrates the contact flow of `h` from `x0` for `cfg.max_time`.
///
/// Terminal events, box escape, convergence and step underflow end the run
/// early; the terminating event is the last entry of `events()`.
pub fn integrate<H: ContactHamiltonian + ?Sized>(
    h: &H,
    x0: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if h.dim() != x0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: x0.dim(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite {
            context: "initial point",
        });
    }
    let len = x0.as_slice().len();

    let mut events: Vec<Event<'_>> = Vec::new();
    let mut kinds: Vec<(EventKind, String, bool)> = Vec::new();
    for s in &cfg.surfaces {
        let func = s.func.clone();
        events.push(Event {
            value: Box::new(move |_t, y: &[f64]| func(PhaseView::from_flat(y))),
            direction: s.direction,
            terminal: s.terminal,
        });
        kinds.push((EventKind::HypersurfaceCrossing, s.label.clone(), s.terminal));
    }
    for nb in &cfg.neighborhoods {
        let target = nb.target.clone();
        let radius = nb.radius;
        events.push(Event {
            value: Box::new(move |_t, y: &[f64]| {
                let x = PhasePoint::from_flat(y.to_vec()).expect("flat state");
                target.distance_to(&x).unwrap_or(f64::INFINITY) - radius
            }),
            direction: Direction::Falling,
            terminal: nb.terminal,
        });
        kinds.push((
            EventKind::EnteredNeighborhood,
            nb.label.clone(),
            nb.terminal,
        ));
    }
    if let Some(bound) = cfg.escape_bound {
        events.push(Event {
            value: Box::new(move |_t, y: &[f64]| {
                y.iter().fold(0.0_f64, |m, v| m.max(v.abs())) - bound
            }),
            direction: Direction::Rising,
            terminal: true,
        });
        kinds.push((EventKind::EscapedBox, String::new(), true));
    }

    let traj = RefCell::new(Trajectory {
        dim: x0.dim(),
        times: Vec::new(),
        states: Vec::new(),
        events: Vec::new(),
    });
    let conv_error: RefCell<Option<Error>> = RefCell::new(None);
    let mut inside_since: Option<f64> = None;
    let mut converged_at: Option<f64> = None;
    let observer = |t: f64, y: &[f64]| {
        if cfg.record_steps || t == 0.0 {
            traj.borrow_mut().push(t, y);
        }
        if let Some(conv) = &cfg.convergence {
            let x = PhasePoint::from_flat(y.to_vec()).expect("flat state");
            match conv.target.distance_to(&x) {
                Ok(d) if d <= conv.eps => {
                    let since = *inside_since.get_or_insert(t);
                    if t - since >= conv.window {
                        converged_at = Some(t);
                        return ControlFlow::Break(());
                    }
                }
                Ok(_) => inside_since = None,
                Err(e) => {
                    *conv_error.borrow_mut() = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    };

    let out = ode::integrate(
        field_rhs(h, len),
        0.0,
        x0.as_slice(),
        cfg.max_time,
        &cfg.ode(),
        &events,
        1e-12 * cfg.max_time,
        observer,
    )?;
    if let Some(e) = conv_error.into_inner() {
        return Err(e);
    }
    let mut traj = traj.into_inner();
    traj.push(out.t, &out.y);
    for c in &out.crossings {
        let (kind, label, terminal) = &kinds[c.index];
        if !terminal || !matches!(out.stop, Stop::Event(i) if i == c.index) {
            traj.events.push(FlowEvent {
                t: c.t,
                kind: *kind,
                label: label.clone(),
            });
        }
    }
    let final_event = match out.stop {
        Stop::EndTime => FlowEvent {
            t: out.t,
            kind: EventKind::MaxTime,
            label: String::new(),
        },
        Stop::Event(i) => FlowEvent {
            t: out.t,
            kind: kinds[i].0,
            label: kinds[i].1.clone(),
        },
        Stop::StepUnderflow => FlowEvent {
            t: out.t,
            kind: EventKind::Stiff,
            label: String::new(),
        },
        Stop::Observer => FlowEvent {
            t: converged_at.unwrap_or(out.t),
            kind: EventKind::Converged,
            label: String::new(),
        },
    };
    traj.events.push(final_event);
    Ok(traj)
}

/// Endpoint of the time-`t` flow, without event handling. Negative `t`
/// integrates the flow of `-h`.
pub fn flow_point<H: ContactHamiltonian + ?Sized>(
    h: &H,
    x0: &PhasePoint,
    t: f64,
    tol: f64,
) -> Result<PhasePoint> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let cfg = IntegratorConfig {
        escape_bound: None,
        record_steps: false,
        ..IntegratorConfig::until(t.abs()).with_tol(tol, tol)
    };
    let traj = if t > 0.0 {
        integrate(h, x0, &cfg)?
    } else {
        integrate(&TimeReversed(h), x0, &cfg)?
    };
    if traj.stop_kind() == Some(EventKind::Stiff) {
        return Err(Error::Integration(format!(
            "step underflow at t = {}",
            traj.final_time()
        )));
    }
    Ok(traj.last())
}

/// Tolerance used for flow-map differentials.
pub const DIFFERENTIAL_TOL: f64 = 1e-11;

/// `D_x phi^t` in the standard basis, by central differences.
pub fn flow_map_differential<H: ContactHamiltonian + ?Sized>(
    h: &H,
    x0: &PhasePoint,
    t: f64,
) -> Result<DMatrix<f64>> {
    let len = x0.as_slice().len();
    flow_map_differential_along(h, x0, t, &DMatrix::identity(len, len))
}

/// `D_x phi^t` applied to the columns of `basis`.
///
/// Column `i` is `(phi^t(x + d b_i) - phi^t(x - d b_i)) / 2d` with
/// `d = 1e-6 max(1, |x|)`. All perturbed copies are integrated as one stacked
/// system so that they share a step sequence.
pub fn flow_map_differential_along<H: ContactHamiltonian + ?Sized>(
    h: &H,
    x0: &PhasePoint,
    t: f64,
    basis: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flow time must be >= 0, got {t}"
        )));
    }
    let len = x0.as_slice().len();
    if basis.nrows() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: basis.nrows(),
        });
    }
    if t == 0.0 {
        return Ok(basis.clone());
    }
    let cols = basis.ncols();
    let delta = 1e-6 * x0.norm().max(1.0);
    let mut y0 = Vec::with_capacity(2 * cols * len);
    for j in 0..cols {
        for sign in [1.0, -1.0] {
            for i in 0..len {
                y0.push(x0.as_slice()[i] + sign * delta * basis[(i, j)]);
            }
        }
    }
    let mut grad = vec![0.0; len];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        for (chunk, out) in y.chunks(len).zip(dy.chunks_mut(len)) {
            vector_field_into(h, chunk, &mut grad, out)?;
        }
        Ok(())
    };
    let cfg = OdeConfig::with_tol(DIFFERENTIAL_TOL);
    let out = ode::integrate(rhs, 0.0, &y0, t, &cfg, &[], 1e-12 * t, |_, _| {
        ControlFlow::Continue(())
    })?;
    if out.stop != Stop::EndTime {
        return Err(Error::Integration(format!(
            "differential integration stopped at t = {}",
            out.t
        )));
    }
    // realized perturbation, robust to rounding of x0 + d b
    let mut result = DMatrix::zeros(len, cols);
    for j in 0..cols {
        let plus = &out.y[(2 * j) * len..(2 * j + 1) * len];
        let minus = &out.y[(2 * j + 1) * len..(2 * j + 2) * len];
        for i in 0..len {
            result[(i, j)] = (plus[i] - minus[i]) / (2.0 * delta);
        }
    }
    Ok(result)
}

/// True iff every sample in the trailing `window` is within `eps` of `target`.
pub fn detect_convergence(traj: &Trajectory, target: &Legendrian, eps: f64, window: f64) -> bool {
    if traj.is_empty() || traj.final_time() < window {
        return false;
    }
    let start = traj.final_time() - window;
    (0..traj.len())
        .filter(|&i| traj.times()[i] >= start)
        .all(|i| {
            target
                .distance_to(&traj.point(i))
                .map(|d| d <= eps)
                .unwrap_or(false)
        })
}
