//! Dormand–Prince 5(4) integrator with PI step control and event location.
//!
//! The integrator is generic over the right-hand side so that the contact
//! flows, the stacked variational copies used for flow-map differentials and
//! the master equations all share one stepper.

use std::ops::ControlFlow;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Hard cap on accepted plus rejected steps.
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

impl OdeConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Which sign changes of an event function count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    fn triggers(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Either => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

/// A scalar function of `(t, y)` whose zero crossings are located.
pub struct Event<'a> {
    pub value: Box<dyn Fn(f64, &[f64]) -> f64 + 'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl std::fmt::Debug for Event<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Event")
            .field("direction", &self.direction)
            .field("terminal", &self.terminal)
            .finish()
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    EndTime,
    /// A terminal event fired; index into the event slice.
    Event(usize),
    /// The step size underflowed or the step budget was exhausted.
    StepUnderflow,
    /// The observer asked to stop.
    Observer,
}

/// A located event crossing.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub index: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub stop: Stop,
    pub crossings: Vec<Crossing>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

/// Result of one trial step. `k[0]` must already hold `f(t, y)`.
/// Writes the 5th-order solution into `y_new`, the error estimate into `err`,
/// and `f(t + h, y_new)` into `k[6]`.
fn dp_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    h: f64,
    st: &mut Stages,
    y_new: &mut [f64],
    err: &mut [f64],
) -> Result<bool>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    macro_rules! stage {
        ($idx:expr, $c:expr, $($a:expr => $j:expr),+) => {{
            for i in 0..n {
                st.tmp[i] = y[i] + h * (0.0 $(+ $a * st.k[$j][i])+);
            }
            let (_, rest) = st.k.split_at_mut($idx);
            match f(t + $c * h, &st.tmp, &mut rest[0]) {
                Ok(()) => {}
                Err(Error::NonFinite { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
            if rest[0].iter().any(|v| !v.is_finite()) {
                return Ok(false);
            }
        }};
    }
    stage!(1, C2, A21 => 0);
    stage!(2, C3, A31 => 0, A32 => 1);
    stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
    stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * st.k[0][i]
                + A73 * st.k[2][i]
                + A74 * st.k[3][i]
                + A75 * st.k[4][i]
                + A76 * st.k[5][i]);
    }
    if y_new.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    {
        let (_, rest) = st.k.split_at_mut(6);
        match f(t + h, y_new, &mut rest[0]) {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    if st.k[6].iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    for i in 0..n {
        err[i] = h
            * (E1 * st.k[0][i]
                + E3 * st.k[2][i]
                + E4 * st.k[3][i]
                + E5 * st.k[4][i]
                + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
    }
    Ok(true)
}

fn error_norm(cfg: &OdeConfig, y: &[f64], y_new: &[f64], err: &[f64]) -> f64 {
    let n = y.len() as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let scale = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], cfg: &OdeConfig) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len() as f64;
    let scale: Vec<f64> = y
        .iter()
        .map(|v| cfg.abs_tol + cfg.rel_tol * v.abs())
        .collect();
    let d0 = (y
        .iter()
        .zip(&scale)
        .map(|(v, s)| (v / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let d1 = (f0
        .iter()
        .zip(&scale)
        .map(|(v, s)| (v / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(cfg.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    if f(t + h0, &y1, &mut f1).is_err() || f1.iter().any(|v| !v.is_finite()) {
        return Ok(h0 * 1e-3);
    }
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&scale)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(cfg.max_step))
}

/// Advances `y` from `t0` to at most `t_end`.
///
/// `observer` sees every accepted step (including the final one) and may
/// stop the run. Events are located by bisection to `event_tol` in time, each
/// trial point obtained by re-stepping from the start of the step.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    cfg: &OdeConfig,
    events: &[Event<'_>],
    event_tol: f64,
    mut observer: O,
) -> Result<Outcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    cfg.validate()?;
    if !(t_end >= t0) {
        return Err(Error::InvalidParameter(format!(
            "t_end {t_end} precedes t0 {t0}"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial state",
        });
    }
    let n = y0.len();
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut crossings = Vec::new();
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    f(t, &y, &mut st.k[0])?;
    if st.k[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "vector field at initial state",
        });
    }
    if let ControlFlow::Break(()) = observer(t, &y) {
        return Ok(Outcome {
            t,
            y,
            stop: Stop::Observer,
            crossings,
            accepted_steps: 0,
            rejected_steps: 0,
        });
    }
    if t_end == t0 {
        return Ok(Outcome {
            t,
            y,
            stop: Stop::EndTime,
            crossings,
            accepted_steps: 0,
            rejected_steps: 0,
        });
    }

    let mut event_vals: Vec<f64> = events.iter().map(|e| (e.value)(t, &y)).collect();
    let mut h = initial_step(&mut f, t, &y, &st.k[0].clone(), cfg)?.min(t_end - t0);
    let mut prev_err: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if accepted + rejected >= cfg.max_steps {
            return Ok(Outcome {
                t,
                y,
                stop: Stop::StepUnderflow,
                crossings,
                accepted_steps: accepted,
                rejected_steps: rejected,
            });
        }
        let remaining = t_end - t;
        let mut step = h.min(cfg.max_step);
        let finishing = step >= remaining * (1.0 - 1e-12);
        if finishing {
            step = remaining;
        }
        let min_step = 1e-14 * t.abs().max(1.0);
        if step < min_step && !finishing {
            return Ok(Outcome {
                t,
                y,
                stop: Stop::StepUnderflow,
                crossings,
                accepted_steps: accepted,
                rejected_steps: rejected,
            });
        }

        let ok = dp_step(&mut f, t, &y, step, &mut st, &mut y_new, &mut err)?;
        let norm = if ok {
            error_norm(cfg, &y, &y_new, &err)
        } else {
            f64::INFINITY
        };
        if !(norm <= 1.0) {
            rejected += 1;
            let factor = if norm.is_finite() {
                (SAFETY * norm.powf(-PI_ALPHA)).clamp(MIN_FACTOR, 1.0)
            } else {
                0.25
            };
            h = step * factor;
            last_rejected = true;
            if h < min_step {
                return Ok(Outcome {
                    t,
                    y,
                    stop: Stop::StepUnderflow,
                    crossings,
                    accepted_steps: accepted,
                    rejected_steps: rejected,
                });
            }
            continue;
        }

        // accepted: look for events inside [t, t + step]
        let t_new = if finishing { t_end } else { t + step };
        let mut first: Option<(usize, f64, Vec<f64>)> = None;
        let mut fired: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        for (idx, ev) in events.iter().enumerate() {
            let after = (ev.value)(t_new, &y_new);
            if ev.direction.triggers(event_vals[idx], after) {
                let (te, ye) = locate(
                    &mut f,
                    t,
                    &y,
                    &st.k[0],
                    step,
                    ev,
                    event_vals[idx],
                    event_tol,
                )?;
                if ev.terminal && first.as_ref().is_none_or(|(_, tf, _)| te < *tf) {
                    first = Some((idx, te, ye.clone()));
                }
                fired.push((idx, te, ye));
            }
        }
        if let Some((idx, te, ye)) = first {
            for (i, tc, yc) in fired {
                if tc <= te {
                    crossings.push(Crossing {
                        index: i,
                        t: tc,
                        y: yc,
                    });
                }
            }
            crossings.sort_by(|a, b| a.t.total_cmp(&b.t));
            accepted += 1;
            let _ = observer(te, &ye);
            return Ok(Outcome {
                t: te,
                y: ye,
                stop: Stop::Event(idx),
                crossings,
                accepted_steps: accepted,
                rejected_steps: rejected,
            });
        }
        for (i, tc, yc) in fired {
            crossings.push(Crossing {
                index: i,
                t: tc,
                y: yc,
            });
        }

        accepted += 1;
        t = t_new;
        y.copy_from_slice(&y_new);
        st.k.swap(0, 6);
        for (idx, ev) in events.iter().enumerate() {
            event_vals[idx] = (ev.value)(t, &y);
        }

        if let ControlFlow::Break(()) = observer(t, &y) {
            return Ok(Outcome {
                t,
                y,
                stop: Stop::Observer,
                crossings,
                accepted_steps: accepted,
                rejected_steps: rejected,
            });
        }
        if finishing {
            return Ok(Outcome {
                t,
                y,
                stop: Stop::EndTime,
                crossings,
                accepted_steps: accepted,
                rejected_steps: rejected,
            });
        }

        let norm = norm.max(1e-10);
        let mut factor = SAFETY * norm.powf(-PI_ALPHA) * prev_err.powf(PI_BETA);
        factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
        if last_rejected {
            factor = factor.min(1.0);
        }
        h = step * factor;
        prev_err = norm;
        last_rejected = false;
    }
}

/// Bisection on the event function, re-stepping from `(t, y)` for each trial.
#[allow(clippy::too_many_arguments)]
fn locate<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    step: f64,
    ev: &Event<'_>,
    before: f64,
    tol: f64,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut st = Stages::new(n);
    let mut y_trial = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut lo = 0.0;
    let mut hi = step;
    let mut y_hi: Option<Vec<f64>> = None;
    let mut trial = |dt: f64, st: &mut Stages, y_trial: &mut Vec<f64>| -> Result<bool> {
        st.k[0].copy_from_slice(f0);
        dp_step(f, t, y, dt, st, y_trial, &mut err)
    };
    let sign_before = before;
    while hi - lo > tol.max(f64::EPSILON * t.abs().max(1.0)) {
        let mid = 0.5 * (lo + hi);
        if !trial(mid, &mut st, &mut y_trial)? {
            hi = mid;
            continue;
        }
        let v = (ev.value)(t + mid, &y_trial);
        if ev.direction.triggers(sign_before, v) {
            hi = mid;
            y_hi = Some(y_trial.clone());
        } else {
            lo = mid;
        }
    }
    let y_event = match y_hi {
        Some(v) => v,
        None => {
            trial(hi, &mut st, &mut y_trial)?;
            y_trial.clone()
        }
    };
    Ok((t + hi, y_event))
}
