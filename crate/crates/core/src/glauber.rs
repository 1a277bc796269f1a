//! Glauber spin dynamics: exact master equation, the lumped Curie–Weiss
//! chain, continuous-time Monte Carlo and the perturbed dynamics driven by a
//! contact Hamiltonian `-cZ + F`.

use std::io::Write;
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::ising::Perturbation;
use crate::ode::{self, OdeConfig};

/// Largest site count accepted by [`master_evolve`].
pub const MASTER_MAX_SITES: usize = 16;
/// Largest site count accepted by [`lumped_master_evolve`].
pub const LUMPED_MAX_SITES: usize = 100_000;
/// Tolerance of the exact evolutions.
pub const EXACT_TOL: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Coupling {
    /// `J_gh = b / |G|` for `g != h`.
    CurieWeiss { b: f64 },
    /// Symmetric, zero diagonal, row-major `|G| x |G|`.
    Matrix(Vec<f64>),
}

/// Spins on `(Z_N)^d` with field `q`, inverse temperature `beta` and flip-rate scale `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinSystem {
    pub side: usize,
    pub d: usize,
    pub coupling: Coupling,
    pub q: f64,
    pub beta: f64,
    pub c: f64,
}

impl SpinSystem {
    pub fn new(
        side: usize,
        d: usize,
        coupling: Coupling,
        q: f64,
        beta: f64,
        c: f64,
    ) -> Result<Self> {
        if side == 0 || d == 0 {
            return Err(Error::InvalidParameter("lattice must be non-empty".into()));
        }
        let sites = side
            .checked_pow(d as u32)
            .ok_or_else(|| Error::InvalidParameter("lattice too large".into()))?;
        if !(beta >= 0.0) || !(c >= 0.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need beta >= 0, c >= 0 and finite q, got beta={beta}, c={c}, q={q}"
            )));
        }
        if let Coupling::Matrix(j) = &coupling {
            if j.len() != sites * sites {
                return Err(Error::DimensionMismatch {
                    expected: sites * sites,
                    got: j.len(),
                });
            }
            for g in 0..sites {
                if j[g * sites + g] != 0.0 {
                    return Err(Error::InvalidParameter(
                        "coupling diagonal must vanish".into(),
                    ));
                }
                for h in 0..g {
                    if j[g * sites + h] != j[h * sites + g] {
                        return Err(Error::InvalidParameter("coupling must be symmetric".into()));
                    }
                }
            }
        }
        Ok(Self {
            side,
            d,
            coupling,
            q,
            beta,
            c,
        })
    }

    pub fn curie_weiss(sites: usize, b: f64, q: f64, beta: f64, c: f64) -> Result<Self> {
        Self::new(sites, 1, Coupling::CurieWeiss { b }, q, beta, c)
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn coupling_between(&self, g: usize, h: usize) -> f64 {
        if g == h {
            return 0.0;
        }
        match &self.coupling {
            Coupling::CurieWeiss { b } => b / self.sites() as f64,
            Coupling::Matrix(j) => j[g * self.sites() + h],
        }
    }

    /// `sum_{h != g} J_gh sigma(h)`.
    pub fn local_field(&self, sigma: &Configuration, g: usize) -> f64 {
        match &self.coupling {
            Coupling::CurieWeiss { b } => {
                b * (sigma.total() - f64::from(sigma.0[g])) / self.sites() as f64
            }
            Coupling::Matrix(j) => {
                let n = self.sites();
                (0..n).map(|h| j[g * n + h] * f64::from(sigma.0[h])).sum()
            }
        }
    }

    fn require_curie_weiss(&self) -> Result<f64> {
        match self.coupling {
            Coupling::CurieWeiss { b } => Ok(b),
            Coupling::Matrix(_) => Err(Error::NotCurieWeiss),
        }
    }
}

/// A spin configuration with entries `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration(Vec<i8>);

impl Configuration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidParameter("spins must be +1 or -1".into()));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// First `k` spins up, the rest down.
    pub fn with_up_count(n: usize, k: usize) -> Self {
        Self((0..n).map(|i| if i < k { 1 } else { -1 }).collect())
    }

    /// Bit `g` of `index` set means `sigma(g) = +1`.
    pub fn from_index(n: usize, index: usize) -> Self {
        Self(
            (0..n)
                .map(|g| if index >> g & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 1)
            .map(|(g, _)| 1 << g)
            .sum()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|s| f64::from(*s)).sum()
    }

    pub fn magnetization(&self) -> f64 {
        self.total() / self.0.len() as f64
    }

    pub fn up_count(&self) -> usize {
        self.0.iter().filter(|s| **s == 1).count()
    }

    /// `sigma` with site `g` flipped.
    pub fn flipped(&self, g: usize) -> Self {
        let mut s = self.clone();
        s.0[g] = -s.0[g];
        s
    }
}

/// Number of up spins in a Curie–Weiss system of `n` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LumpedState {
    pub k: usize,
    pub n: usize,
}

impl LumpedState {
    pub fn magnetization(&self) -> f64 {
        (2.0 * self.k as f64 - self.n as f64) / self.n as f64
    }
}

/// `-q sum sigma(g) - sum over unordered pairs J_gh sigma(g) sigma(h)`.
pub fn energy(sys: &SpinSystem, sigma: &Configuration) -> f64 {
    let n = sigma.len();
    let field = -sys.q * sigma.total();
    let pairs = match &sys.coupling {
        Coupling::CurieWeiss { b } => {
            let m = sigma.total();
            // sum_{g<h} s_g s_h = (M^2 - n) / 2
            b / n as f64 * 0.5 * (m * m - n as f64)
        }
        Coupling::Matrix(j) => {
            let mut acc = 0.0;
            for g in 0..n {
                for h in g + 1..n {
                    acc += j[g * n + h] * f64::from(sigma.0[g] * sigma.0[h]);
                }
            }
            acc
        }
    };
    field - pairs
}

/// Energy released by flipping `g`: `H(sigma) - H(flipped) = -2 sigma(g)(q + local field)`.
pub fn flip_delta(sys: &SpinSystem, sigma: &Configuration, g: usize) -> f64 {
    -2.0 * f64::from(sigma.0[g]) * (sys.q + sys.local_field(sigma, g))
}

/// `w_g(sigma) = (c/2)(1 + tanh(beta Delta / 2))`, evaluated as the
/// equivalent `c / (1 + e^{-beta Delta})` so that small rates keep their
/// relative precision.
pub fn flip_rate(sys: &SpinSystem, sigma: &Configuration, g: usize) -> f64 {
    rate_from_delta(sys.c, sys.beta, flip_delta(sys, sigma, g))
}

fn rate_from_delta(c: f64, beta: f64, delta: f64) -> f64 {
    c / (1.0 + (-beta * delta).exp())
}

/// Normalized Gibbs weights `e^{-beta H} / Z` over all `2^|G|` configurations.
pub fn gibbs_distribution(sys: &SpinSystem) -> Result<Vec<f64>> {
    let n = require_small(sys)?;
    let energies: Vec<f64> = (0..1usize << n)
        .map(|i| energy(sys, &Configuration::from_index(n, i)))
        .collect();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies
        .iter()
        .map(|e| (-sys.beta * (e - e_min)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

fn require_small(sys: &SpinSystem) -> Result<usize> {
    let n = sys.sites();
    if n > MASTER_MAX_SITES {
        return Err(Error::StateSpaceTooLarge {
            sites: n,
            limit: MASTER_MAX_SITES,
        });
    }
    Ok(n)
}

fn require_normalized(pi: &[f64]) -> Result<()> {
    let mass: f64 = pi.iter().sum();
    if (mass - 1.0).abs() > NORMALIZATION_TOL || pi.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::NotNormalized { mass });
    }
    Ok(())
}

/// Generator of the master equation on `2^|G|` states.
#[derive(Debug, Clone)]
pub struct MasterGenerator {
    sites: usize,
    /// `rates[s * sites + g] = w_g(s)`.
    rates: Vec<f64>,
}

impl MasterGenerator {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        let n = require_small(sys)?;
        let mut rates = vec![0.0; (1 << n) * n];
        for s in 0..1usize << n {
            let sigma = Configuration::from_index(n, s);
            for g in 0..n {
                rates[s * n + g] = flip_rate(sys, &sigma, g);
            }
        }
        Ok(Self { sites: n, rates })
    }

    /// `d pi(s)/dt = sum_g (-pi(s) w_g(s) + pi(s^g) w_g(s^g))`.
    pub fn apply(&self, pi: &[f64], out: &mut [f64]) {
        let n = self.sites;
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for g in 0..n {
                let t = s ^ (1 << g);
                acc += pi[t] * self.rates[t * n + g] - pi[s] * self.rates[s * n + g];
            }
            *o = acc;
        }
    }

    pub fn states(&self) -> usize {
        1 << self.sites
    }
}

fn exact_config() -> OdeConfig {
    OdeConfig {
        rel_tol: EXACT_TOL,
        abs_tol: 1e-14,
        ..OdeConfig::default()
    }
}

/// Evolves `pi` under `apply` and returns the state at each requested time.
fn evolve_linear(
    apply: impl Fn(&[f64], &mut [f64]),
    pi0: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let cfg = exact_config();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = pi0.to_vec();
    for &t_next in times {
        if t_next < t {
            return Err(Error::InvalidParameter(
                "output times must be non-decreasing".into(),
            ));
        }
        if t_next > t {
            let res = ode::integrate(
                |_, y, dy| {
                    apply(y, dy);
                    Ok(())
                },
                t,
                &y,
                t_next,
                &cfg,
                &[],
                0.0,
                |_, _| ControlFlow::Continue(()),
            )?;
            if res.stop != ode::Stop::EndTime {
                return Err(Error::Integration(format!(
                    "master equation stopped: {:?}",
                    res.stop
                )));
            }
            y = res.y;
            t = t_next;
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Exact law at time `t` from `pi0` over the `2^|G|` configurations.
pub fn master_evolve(sys: &SpinSystem, pi0: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(master_evolve_at(sys, pi0, &[t])?.pop().unwrap_or_default())
}

/// [`master_evolve`] at several non-decreasing times.
pub fn master_evolve_at(sys: &SpinSystem, pi0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let gen = MasterGenerator::new(sys)?;
    if pi0.len() != gen.states() {
        return Err(Error::DimensionMismatch {
            expected: gen.states(),
            got: pi0.len(),
        });
    }
    require_normalized(pi0)?;
    evolve_linear(|y, dy| gen.apply(y, dy), pi0, times)
}

/// Law of the up-spin count induced by a law on configurations.
pub fn lump(pi: &[f64], sites: usize) -> Vec<f64> {
    let mut out = vec![0.0; sites + 1];
    for (s, p) in pi.iter().enumerate() {
        out[s.count_ones() as usize] += p;
    }
    out
}

/// `E[sigma(g)]` for each site under a law on configurations.
pub fn site_magnetizations(pi: &[f64], sites: usize) -> Vec<f64> {
    (0..sites)
        .map(|g| {
            pi.iter()
                .enumerate()
                .map(|(s, p)| if s >> g & 1 == 1 { *p } else { -*p })
                .sum()
        })
        .collect()
}

/// Transition rates of the up-spin count: `(k -> k - 1, k -> k + 1)`.
pub fn lumped_rates(sys: &SpinSystem, k: usize) -> Result<(f64, f64)> {
    let b = sys.require_curie_weiss()?;
    let n = sys.sites();
    let nf = n as f64;
    let m = (2.0 * k as f64 - nf) / nf;
    let down = -2.0 * (sys.q + b * (m - 1.0 / nf));
    let up = 2.0 * (sys.q + b * (m + 1.0 / nf));
    Ok((
        k as f64 * rate_from_delta(sys.c, sys.beta, down),
        (n - k) as f64 * rate_from_delta(sys.c, sys.beta, up),
    ))
}

/// Tridiagonal generator of the up-spin count.
#[derive(Debug, Clone)]
pub struct LumpedGenerator {
    down: Vec<f64>,
    up: Vec<f64>,
}

impl LumpedGenerator {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        let n = sys.sites();
        if n > LUMPED_MAX_SITES {
            return Err(Error::StateSpaceTooLarge {
                sites: n,
                limit: LUMPED_MAX_SITES,
            });
        }
        let (down, up) = (0..=n)
            .map(|k| lumped_rates(sys, k))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self { down, up })
    }

    pub fn apply(&self, pi: &[f64], out: &mut [f64]) {
        let n = pi.len() - 1;
        for k in 0..=n {
            let mut acc = -pi[k] * (self.down[k] + self.up[k]);
            if k > 0 {
                acc += pi[k - 1] * self.up[k - 1];
            }
            if k < n {
                acc += pi[k + 1] * self.down[k + 1];
            }
            out[k] = acc;
        }
    }

    /// Exact drift of the magnetization: `sum_k pi_k (2/N)(up_k - down_k)`.
    pub fn magnetization_drift(&self, pi: &[f64]) -> f64 {
        let n = (pi.len() - 1) as f64;
        pi.iter()
            .enumerate()
            .map(|(k, p)| p * 2.0 / n * (self.up[k] - self.down[k]))
            .sum()
    }

    /// Stationary law from detailed balance along the chain.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.up.len() - 1;
        let mut log_w = vec![0.0; n + 1];
        for k in 1..=n {
            log_w[k] = log_w[k - 1] + self.up[k - 1].ln() - self.down[k].ln();
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

/// Exact law of the up-spin count at time `t`.
pub fn lumped_master_evolve(sys: &SpinSystem, pi0: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(lumped_master_evolve_at(sys, pi0, &[t])?
        .pop()
        .unwrap_or_default())
}

pub fn lumped_master_evolve_at(
    sys: &SpinSystem,
    pi0: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let gen = LumpedGenerator::new(sys)?;
    if pi0.len() != sys.sites() + 1 {
        return Err(Error::DimensionMismatch {
            expected: sys.sites() + 1,
            got: pi0.len(),
        });
    }
    require_normalized(pi0)?;
    evolve_linear(|y, dy| gen.apply(y, dy), pi0, times)
}

/// Binomial law of the up-spin count for independent spins of mean `m`.
pub fn product_measure(n: usize, m: f64) -> Vec<f64> {
    let p_up: f64 = 0.5 * (1.0 + m);
    let mut log_c = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let lp = log_c + k as f64 * p_up.ln() + (n - k) as f64 * (1.0 - p_up).ln();
        out.push(if lp.is_nan() { 0.0 } else { lp.exp() });
    }
    let z: f64 = out.iter().sum();
    out.into_iter().map(|x| x / z).collect()
}

pub fn mean_magnetization(pi: &[f64]) -> f64 {
    let n = (pi.len() - 1) as f64;
    pi.iter()
        .enumerate()
        .map(|(k, p)| p * (2.0 * k as f64 - n) / n)
        .sum()
}

/// Mean-field ODE `p' = -c(p - tanh(beta(q + b p)))` at the requested times.
pub fn mean_field_path(
    b: f64,
    beta: f64,
    c: f64,
    q: f64,
    p0: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    Ok(evolve_ode(
        move |y: &[f64], dy: &mut [f64]| dy[0] = -c * (y[0] - (beta * (q + b * y[0])).tanh()),
        &[p0],
        times,
    )?
    .into_iter()
    .map(|v| v[0])
    .collect())
}

fn evolve_ode(f: impl Fn(&[f64], &mut [f64]), y0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    evolve_linear(f, y0, times)
}

/// Piecewise-constant magnetization path of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnetizationPath {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
}

impl MagnetizationPath {
    /// Value at time `t` (the last jump at or before `t`).
    pub fn at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|s| *s <= t);
        self.m[i.saturating_sub(1)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,m")?;
        for (t, m) in self.times.iter().zip(&self.m) {
            writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*m))?;
        }
        Ok(())
    }
}

/// RNG of run `run` in the family `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Continuous-time Glauber chain: exponential waiting times with total rate
/// `sum_g w_g`, the flipped site drawn proportionally to its rate.
pub fn gillespie_run<R: Rng + ?Sized>(
    sys: &SpinSystem,
    sigma0: &Configuration,
    t_max: f64,
    rng: &mut R,
) -> Result<MagnetizationPath> {
    let n = sys.sites();
    if sigma0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma0.len(),
        });
    }
    let mut sigma = sigma0.clone();
    let mut path = MagnetizationPath {
        times: vec![0.0],
        m: vec![sigma.magnetization()],
    };
    let mut t = 0.0;
    match sys.coupling {
        Coupling::CurieWeiss { .. } => {
            // Rates depend only on the spin value, so draw the class then a site in it.
            let mut ups: Vec<usize> = (0..n).filter(|g| sigma.0[*g] == 1).collect();
            let mut downs: Vec<usize> = (0..n).filter(|g| sigma.0[*g] == -1).collect();
            loop {
                let (down_rate, up_rate) = lumped_rates(sys, ups.len())?;
                let total = down_rate + up_rate;
                if !(total > 0.0) {
                    break;
                }
                t += exponential(rng, total);
                if t > t_max {
                    break;
                }
                let flip_up_spin = rng.random::<f64>() * total < down_rate;
                let (from, to) = if flip_up_spin {
                    (&mut ups, &mut downs)
                } else {
                    (&mut downs, &mut ups)
                };
                let i = rng.random_range(0..from.len());
                let g = from.swap_remove(i);
                to.push(g);
                sigma.0[g] = -sigma.0[g];
                path.times.push(t);
                path.m.push(sigma.magnetization());
            }
        }
        Coupling::Matrix(_) => {
            let mut rates: Vec<f64> = (0..n).map(|g| flip_rate(sys, &sigma, g)).collect();
            loop {
                let total: f64 = rates.iter().sum();
                if !(total > 0.0) {
                    break;
                }
                t += exponential(rng, total);
                if t > t_max {
                    break;
                }
                let mut target = rng.random::<f64>() * total;
                let mut g = n - 1;
                for (h, r) in rates.iter().enumerate() {
                    if target < *r {
                        g = h;
                        break;
                    }
                    target -= r;
                }
                sigma.0[g] = -sigma.0[g];
                for (h, r) in rates.iter_mut().enumerate() {
                    if h == g || sys.coupling_between(g, h) != 0.0 {
                        *r = flip_rate(sys, &sigma, h);
                    }
                }
                path.times.push(t);
                path.m.push(sigma.magnetization());
            }
        }
    }
    Ok(path)
}

/// Discrete-time chain with step `h`: each step visits the sites in order and
/// flips site `g` with probability `h w_g(sigma)`.
pub fn discrete_run<R: Rng + ?Sized>(
    sys: &SpinSystem,
    sigma0: &Configuration,
    t_max: f64,
    h: f64,
    rng: &mut R,
) -> Result<MagnetizationPath> {
    if !(h > 0.0) || h * sys.c > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < h <= 1/c, got h={h}"
        )));
    }
    let n = sys.sites();
    if sigma0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma0.len(),
        });
    }
    let mut sigma = sigma0.clone();
    let steps = (t_max / h).floor() as usize;
    let mut path = MagnetizationPath {
        times: vec![0.0],
        m: vec![sigma.magnetization()],
    };
    for step in 1..=steps {
        for g in 0..n {
            if rng.random::<f64>() < h * flip_rate(sys, &sigma, g) {
                sigma.0[g] = -sigma.0[g];
            }
        }
        path.times.push(step as f64 * h);
        path.m.push(sigma.magnetization());
    }
    Ok(path)
}

/// Realization of the bias `r` in the perturbed rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Noise {
    /// `r = dF/dQ`.
    Mean,
    /// `r = dF/dQ + amplitude * U(-1, 1)`, drawn per event.
    Jitter(f64),
}

/// Per-site rates of the perturbed chain at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedRates {
    /// Rate scale `c' = c - dF/dZ`.
    pub c_prime: f64,
    pub r: f64,
    pub big_p: f64,
    /// Rates before clamping to `[0, c']`.
    pub raw: Vec<f64>,
    pub rates: Vec<f64>,
    /// `dQ/dt` and `dZ/dt` at the state.
    pub q_dot: f64,
    pub z_dot: f64,
}

impl PerturbedRates {
    pub fn clamped(&self) -> bool {
        self.raw.iter().zip(&self.rates).any(|(a, b)| a != b)
    }
}

/// Rates `w'_g = (c'/2)(1 - sigma(g) tanh(beta(q + local))) - sigma(g) r / 2`
/// with `q = Q - b m`, and the right-hand side of the `(Q, Z)` equations.
/// `sys.q` is ignored; `sys.coupling` supplies `b` for the field update.
pub fn perturbed_step_rates(
    sys: &SpinSystem,
    sigma: &Configuration,
    big_q: f64,
    big_z: f64,
    f: &dyn Perturbation,
    r_offset: f64,
) -> Result<PerturbedRates> {
    let b = sys.require_curie_weiss()?;
    let m = sigma.magnetization();
    let big_p = m - (sys.beta * big_q).tanh();
    let [f_p, f_q, f_z] = f.gradient(big_p, big_q, big_z);
    let c_prime = sys.c - f_z;
    if !(c_prime > 0.0) {
        return Err(Error::NonPositiveRate { c_prime });
    }
    let r = f_q + r_offset;
    let q = big_q - b * m;
    let n = sys.sites() as f64;
    let mut raw = Vec::with_capacity(sigma.len());
    for &s in sigma.spins() {
        let s = f64::from(s);
        let local = b * (m - s / n);
        raw.push(0.5 * c_prime * (1.0 - s * (sys.beta * (q + local)).tanh()) - 0.5 * s * r);
    }
    let rates = raw.iter().map(|w| w.clamp(0.0, c_prime)).collect();
    Ok(PerturbedRates {
        c_prime,
        r,
        big_p,
        raw,
        rates,
        q_dot: -f_p,
        z_dot: -sys.c * big_z + f.value(big_p, big_q, big_z) - big_p * f_p,
    })
}

/// Path of a perturbed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedPath {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub big_p: Vec<f64>,
    pub big_q: Vec<f64>,
    pub big_z: Vec<f64>,
    /// Some event used clamped rates.
    pub clamped: bool,
}

impl PerturbedPath {
    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t).saturating_sub(1)
    }

    /// `(m, P, Q, Z)` at time `t`, with `(Q, Z)` advanced by Euler from the last event.
    pub fn state_at(&self, t: f64, beta: f64) -> (f64, f64, f64, f64) {
        let i = self.index_at(t);
        let (m, q) = (self.m[i], self.big_q[i]);
        (m, m - (beta * q).tanh(), q, self.big_z[i])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,m,P,Q,Z")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.m[i]),
                fmt_f64(self.big_p[i]),
                fmt_f64(self.big_q[i]),
                fmt_f64(self.big_z[i])
            )?;
        }
        Ok(())
    }
}

/// Perturbed chain: rates from [`perturbed_step_rates`], and after each
/// waiting time `(Q, Z)` advance by one explicit Euler step.
pub fn perturbed_run<R: Rng + ?Sized>(
    sys: &SpinSystem,
    sigma0: &Configuration,
    big_q0: f64,
    big_z0: f64,
    f: &dyn Perturbation,
    noise: Noise,
    t_max: f64,
    rng: &mut R,
) -> Result<PerturbedPath> {
    let n = sys.sites();
    if sigma0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma0.len(),
        });
    }
    let mut sigma = sigma0.clone();
    let (mut big_q, mut big_z) = (big_q0, big_z0);
    let mut t = 0.0;
    let mut path = PerturbedPath {
        times: vec![0.0],
        m: vec![sigma.magnetization()],
        big_p: vec![sigma.magnetization() - (sys.beta * big_q).tanh()],
        big_q: vec![big_q],
        big_z: vec![big_z],
        clamped: false,
    };
    loop {
        let offset = match noise {
            Noise::Mean => 0.0,
            Noise::Jitter(a) => a * (2.0 * rng.random::<f64>() - 1.0),
        };
        let st = perturbed_step_rates(sys, &sigma, big_q, big_z, f, offset)?;
        path.clamped |= st.clamped();
        let total: f64 = st.rates.iter().sum();
        let dt = if total > 0.0 {
            exponential(rng, total)
        } else {
            f64::INFINITY
        };
        if t + dt > t_max {
            // advance the continuous part to the horizon
            let h = t_max - t;
            big_q += h * st.q_dot;
            big_z += h * st.z_dot;
            path.times.push(t_max);
            path.m.push(sigma.magnetization());
            path.big_p
                .push(sigma.magnetization() - (sys.beta * big_q).tanh());
            path.big_q.push(big_q);
            path.big_z.push(big_z);
            break;
        }
        t += dt;
        big_q += dt * st.q_dot;
        big_z += dt * st.z_dot;
        let mut target = rng.random::<f64>() * total;
        let mut g = n - 1;
        for (h, r) in st.rates.iter().enumerate() {
            if target < *r {
                g = h;
                break;
            }
            target -= r;
        }
        sigma.0[g] = -sigma.0[g];
        path.times.push(t);
        path.m.push(sigma.magnetization());
        path.big_p
            .push(sigma.magnetization() - (sys.beta * big_q).tanh());
        path.big_q.push(big_q);
        path.big_z.push(big_z);
    }
    Ok(path)
}

/// Mean and standard error of an observable over an ensemble, per time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub runs: usize,
}

impl EnsembleSummary {
    pub fn from_samples(times: &[f64], samples: &[Vec<f64>]) -> Self {
        let runs = samples.len();
        let mut mean = vec![0.0; times.len()];
        let mut se = vec![0.0; times.len()];
        for i in 0..times.len() {
            let mu = samples.iter().map(|s| s[i]).sum::<f64>() / runs as f64;
            let var = if runs > 1 {
                samples.iter().map(|s| (s[i] - mu).powi(2)).sum::<f64>() / (runs - 1) as f64
            } else {
                0.0
            };
            mean[i] = mu;
            se[i] = (var / runs as f64).sqrt();
        }
        Self {
            times: times.to_vec(),
            mean,
            se,
            runs,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mean_m,se_m,runs")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.mean[i]),
                fmt_f64(self.se[i]),
                self.runs
            )?;
        }
        Ok(())
    }
}

/// Gillespie ensemble; run `i` uses stream `i` of `seed`, so the result does
/// not depend on the thread count.
pub fn gillespie_ensemble(
    sys: &SpinSystem,
    sigma0: &Configuration,
    times: &[f64],
    runs: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let path = gillespie_run(sys, sigma0, t_max, &mut run_rng(seed, i as u64))?;
            Ok(times.iter().map(|t| path.at(*t)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(EnsembleSummary::from_samples(times, &samples))
}

/// Discrete-time ensemble, seeded like [`gillespie_ensemble`].
pub fn discrete_ensemble(
    sys: &SpinSystem,
    sigma0: &Configuration,
    times: &[f64],
    h: f64,
    runs: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let path = discrete_run(sys, sigma0, t_max, h, &mut run_rng(seed, i as u64))?;
            Ok(times.iter().map(|t| path.at(*t)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(EnsembleSummary::from_samples(times, &samples))
}

/// Ensemble of perturbed runs summarizing `P = m - tanh(beta Q)`.
#[allow(clippy::too_many_arguments)]
pub fn perturbed_ensemble(
    sys: &SpinSystem,
    sigma0: &Configuration,
    big_q0: f64,
    big_z0: f64,
    f: Arc<dyn Perturbation>,
    noise: Noise,
    times: &[f64],
    runs: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let path = perturbed_run(
                sys,
                sigma0,
                big_q0,
                big_z0,
                f.as_ref(),
                noise,
                t_max,
                &mut run_rng(seed, i as u64),
            )?;
            Ok(times
                .iter()
                .map(|t| path.state_at(*t, sys.beta).1)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(EnsembleSummary::from_samples(times, &samples))
}

/// Mean-field system `P' = -(c - F_Z) P + F_Q`, `Q' = -F_P`, `Z' = -cZ + F - P F_P`
/// as `(P, Q, Z)` at the requested times.
pub fn perturbed_mean_field(
    c: f64,
    f: &dyn Perturbation,
    state0: [f64; 3],
    times: &[f64],
) -> Result<Vec<[f64; 3]>> {
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let [fp, fq, fz] = f.gradient(y[0], y[1], y[2]);
        dy[0] = -(c - fz) * y[0] + fq;
        dy[1] = -fp;
        dy[2] = -c * y[2] + f.value(y[0], y[1], y[2]) - y[0] * fp;
    };
    Ok(evolve_ode(rhs, &state0, times)?
        .into_iter()
        .map(|v| [v[0], v[1], v[2]])
        .collect())
}

/// The same system written for the magnetization `m = P + tanh(beta Q)`:
/// `m' = -(c - F_Z) P + F_Q`, `Q' = -F_P`, `Z' = -cZ + F - P F_P`.
///
/// This is the mean drift of the perturbed chain. Its `P` differs from
/// [`perturbed_mean_field`] by the term `beta sech^2(beta Q) F_P` that the
/// moving field adds to `P'`. Returns `(P, Q, Z)`.
pub fn perturbed_chain_mean_field(
    beta: f64,
    c: f64,
    f: &dyn Perturbation,
    state0: [f64; 3],
    times: &[f64],
) -> Result<Vec<[f64; 3]>> {
    let m0 = state0[0] + (beta * state0[1]).tanh();
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let big_p = y[0] - (beta * y[1]).tanh();
        let [fp, fq, fz] = f.gradient(big_p, y[1], y[2]);
        dy[0] = -(c - fz) * big_p + fq;
        dy[1] = -fp;
        dy[2] = -c * y[2] + f.value(big_p, y[1], y[2]) - big_p * fp;
    };
    Ok(evolve_ode(rhs, &[m0, state0[1], state0[2]], times)?
        .into_iter()
        .map(|v| [v[0] - (beta * v[1]).tanh(), v[1], v[2]])
        .collect())
}
