use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use contact_relax::contact::{
    contact_form, contact_vector_field, jet_shift, make_contactomorphism, verify_contact_identity,
    ContactomorphismKind, ExpPotential, LinearDecay, NumericGradient, SinePotential, TimeReversed,
};
use contact_relax::flow::{integrate, EventKind};
use contact_relax::glauber::{
    discrete_ensemble, gillespie_ensemble, lump, lumped_master_evolve_at, master_evolve_at,
    mean_field_path, mean_magnetization, perturbed_chain_mean_field, perturbed_ensemble,
    perturbed_mean_field, product_measure, run_rng, Configuration, Coupling, Noise, SpinSystem,
    MASTER_MAX_SITES,
};
use contact_relax::io::{fmt_f64, row, write_csv};
use contact_relax::ising::{
    compare_scenarios, dpdq_at_chord, equilibrium_branches, fold_point, lambda_a_alpha,
    make_admissible, Bump, Case, IsingHamiltonian, IsingParams, SineBump,
};
use contact_relax::legendrian::{estimate_hyperbolicity, find_reeb_chords};
use contact_relax::models::{blocking, fitted_cooling_rate, saturated_decay, MoebiusModel};
use contact_relax::relaxation::{
    compute_cores, hausdorff_to_curve, shoot as shoot_all, ShootingProblem, SurfaceGrid,
};
use contact_relax::{ContactHamiltonian, Error, IntegratorConfig, Legendrian, PhasePoint};

use crate::models::{ModelArgs, ModelName};
use crate::output::Output;
use crate::CliError;

/// Comma-separated numbers, e.g. `0.5,0,-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Floats(pub Vec<f64>);

impl FromStr for Floats {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("'{t}' is not a number"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Floats)
    }
}

fn point3(x: &Floats) -> Result<PhasePoint, CliError> {
    match x.0.as_slice() {
        [p, q, z] => Ok(PhasePoint::n1(*p, *q, *z)),
        v => Err(CliError::Usage(format!(
            "expected p,q,z but got {} values",
            v.len()
        ))),
    }
}

fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>, CliError> {
    if !(t_max > 0.0 && dt > 0.0) {
        return Err(CliError::Usage("need positive --t-max and --dt".into()));
    }
    let steps = (t_max / dt).round() as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

fn write_points(out: &mut Output, name: &str, points: &[PhasePoint]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|x| row(&[x.p()[0], x.q()[0], x.z()]))
        .collect();
    out.write_with(name, |w| write_csv(w, &["p", "q", "z"], &rows))
}

fn done(out: Output) -> Result<(), CliError> {
    let dir = out.finish()?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------- check

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    /// Random points per Hamiltonian and per map
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Points per Hamiltonian for the Lie-derivative check
    #[arg(long, default_value_t = 100)]
    pub lie_points: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Multiplies every tolerance
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
}

fn random_point(rng: &mut impl Rng, half_width: f64) -> PhasePoint {
    let mut c = || rng.random_range(-half_width..half_width);
    PhasePoint::n1(c(), c(), c())
}

pub fn check(dir: PathBuf, args: &CheckArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "check", args)?;
    out.seed(args.seed);
    let ising = IsingHamiltonian {
        params: IsingParams::new(6.0, 1.0, 1.0)?,
    };
    let admissible = make_admissible(1.0, TAU, 0.1, 0.1)?;
    let cooling = crate::models::ModelArgs::cooling_default(ModelName::Cooling)?;
    let sine = crate::models::ModelArgs::cooling_default(ModelName::CoolingSine)?;
    let moebius = MoebiusModel::default().hamiltonian();
    let hamiltonians: Vec<(&str, Box<dyn ContactHamiltonian>, f64)> = vec![
        ("decay", Box::new(LinearDecay::new(1.0)), 1e-9),
        ("saturated", Box::new(saturated_decay(1.0)), 1e-9),
        ("ising", Box::new(ising), 1e-9),
        ("admissible", Box::new(admissible.clone()), 1e-9),
        ("cooling", Box::new(cooling.hamiltonian()), 1e-9),
        ("cooling-sine", Box::new(sine.hamiltonian()), 1e-9),
        ("moebius", Box::new(moebius), 1e-9),
        ("ising-fd", Box::new(NumericGradient(ising)), 1e-5),
        ("admissible-fd", Box::new(NumericGradient(admissible)), 1e-5),
        ("moebius-fd", Box::new(NumericGradient(moebius)), 1e-5),
    ];
    let maps = [
        (
            "map:ising-primary",
            make_contactomorphism(ContactomorphismKind::IsingPrimary { b: 6.0 })?,
        ),
        (
            "map:ising-stability",
            make_contactomorphism(ContactomorphismKind::IsingStability { b: 6.0, beta: 1.0 })?,
        ),
        (
            "map:cooling",
            make_contactomorphism(ContactomorphismKind::Cooling {
                potential: Arc::new(ExpPotential),
                sigma: 0.5,
            })?,
        ),
        (
            "map:jet-shift",
            jet_shift(Arc::new(SinePotential {
                amplitude: 0.7,
                period: 3.0,
            })),
        ),
    ];

    const LIE_TOL: f64 = 1e-6;
    let mut rng = run_rng(args.seed, 0);
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let scale = args.tol_scale;
    let mut record = |name: &str, test: &str, worst: f64, tol: f64| {
        let tol = tol * scale;
        let pass = worst <= tol;
        if !pass {
            failed.push(format!("{name}/{test}"));
        }
        println!(
            "{} {name:<20} {test:<9} {worst:.3e} <= {tol:e}",
            if pass { "PASS" } else { "FAIL" }
        );
        rows.push(vec![
            name.to_string(),
            test.to_string(),
            fmt_f64(worst),
            fmt_f64(tol),
            pass.to_string(),
        ]);
    };
    for (name, h, tol) in &hamiltonians {
        let mut worst: f64 = 0.0;
        for _ in 0..args.points {
            let x = random_point(&mut rng, 5.0);
            let v = contact_vector_field(h.as_ref(), &x)?;
            let hx = h.value(x.view());
            worst = worst.max((contact_form(&x, &v)? - hx).abs() / hx.abs().max(1.0));
        }
        record(name, "identity", worst, *tol);
        if !name.ends_with("-fd") {
            let mut lie: f64 = 0.0;
            for _ in 0..args.lie_points {
                let x = random_point(&mut rng, 1.0);
                lie = lie.max(verify_contact_identity(h.as_ref(), &x, &mut rng)?.lie);
            }
            record(name, "lie", lie, LIE_TOL);
        }
    }
    for (name, m) in &maps {
        let mut worst: f64 = 0.0;
        for _ in 0..args.points {
            let x = random_point(&mut rng, 3.0);
            let v = contact_relax::TangentVector::n1(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            worst = worst.max(m.form_defect(&x, &v)?);
        }
        record(name, "form", worst, 1e-9);
    }
    out.tolerance("identity", 1e-9 * scale);
    out.tolerance("identity_fd", 1e-5 * scale);
    out.tolerance("lie", LIE_TOL * scale);
    out.tolerance("form", 1e-9 * scale);
    out.write_with("check.csv", |w| {
        write_csv(
            w,
            &["name", "test", "max_residual", "tolerance", "pass"],
            &rows,
        )
    })?;
    out.note("failed", &failed);
    done(out)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{} check(s) failed: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}

// ---------------------------------------------------------------- flow

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Initial point p,q,z
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Floats,
    /// Flow time; negative values integrate backward
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub abs_tol: f64,
    /// Largest step, which also sets the output resolution
    #[arg(long, default_value_t = 0.01)]
    pub max_step: f64,
    /// Half-width of the escape box
    #[arg(long, default_value_t = 50.0)]
    pub escape_bound: f64,
}

pub fn flow(dir: PathBuf, args: &FlowArgs) -> Result<(), CliError> {
    if args.t == 0.0 || !args.t.is_finite() {
        return Err(CliError::Usage("--t must be finite and nonzero".into()));
    }
    let mut out = Output::new(dir, "flow", args)?;
    let h = args.model.build()?;
    let x0 = point3(&args.x0)?;
    let mut cfg = IntegratorConfig::until(args.t.abs())
        .with_tol(args.rel_tol, args.abs_tol)
        .with_max_step(args.max_step);
    cfg.escape_bound = Some(args.escape_bound);
    out.tolerance("rel_tol", args.rel_tol);
    out.tolerance("abs_tol", args.abs_tol);
    let (traj, sign) = if args.t > 0.0 {
        (integrate(&h, &x0, &cfg)?, 1.0)
    } else {
        (integrate(&TimeReversed(h.clone()), &x0, &cfg)?, -1.0)
    };
    if let Some(kind) = traj.stop_kind() {
        out.note("stop", kind.as_str());
    }
    let end = traj.last();
    println!(
        "t = {}  p = {}  q = {}  z = {}  H = {}",
        fmt_f64(sign * traj.final_time()),
        fmt_f64(end.p()[0]),
        fmt_f64(end.q()[0]),
        fmt_f64(end.z()),
        fmt_f64(h.value(end.view()))
    );
    if sign > 0.0 {
        out.write_with("trajectory.csv", |w| traj.write_csv(w))?;
    } else {
        let rows: Vec<Vec<String>> = (0..traj.len())
            .map(|i| {
                let mut r = vec![fmt_f64(-traj.times()[i])];
                r.extend(traj.state(i).iter().map(|v| fmt_f64(*v)));
                r
            })
            .collect();
        out.write_with("trajectory.csv", |w| {
            write_csv(w, &["t", "p_1", "q_1", "z"], &rows)
        })?;
    }
    let stiff = traj.stop_kind() == Some(EventKind::Stiff);
    done(out)?;
    if stiff {
        return Err(Error::Integration(format!(
            "step size underflow at t = {}",
            fmt_f64(sign * traj.final_time())
        ))
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------- equilibrium

#[derive(Debug, Args, Serialize)]
pub struct EquilibriumArgs {
    #[arg(long, default_value_t = 6.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub q_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub q_max: f64,
}

pub fn equilibrium(dir: PathBuf, args: &EquilibriumArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "equilibrium", args)?;
    let params = IsingParams::new(args.b, args.beta, args.c)?;
    let branches = equilibrium_branches(&params, args.q_min, args.q_max)?;
    let residual = branches.max_residual(&params);
    match branches.case {
        Case::A => println!("case A (b beta < 1): single branch"),
        Case::Marginal => println!("marginal case (b beta = 1)"),
        Case::B { fold } => println!("case B: fold at |q| = {}", fmt_f64(fold)),
    }
    println!("max self-consistency residual {residual:.3e}");
    out.note("case", branches.case);
    out.note("max_residual", residual);
    out.write_with("branches.csv", |w| branches.write_csv(w))?;
    done(out)
}

// ---------------------------------------------------------------- chord

#[derive(Debug, Args, Serialize)]
pub struct ChordArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    pub q_min: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub q_max: f64,
}

pub fn chord(dir: PathBuf, args: &ChordArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "chord", args)?;
    let source = lambda_a_alpha(args.a, args.alpha, args.b, args.beta)?;
    let chords = find_reeb_chords(&source, &Legendrian::zero_section(), args.q_min, args.q_max)?;
    if let Ok(slope) = dpdq_at_chord(args.a, args.alpha, args.b, args.beta) {
        out.note("dpdq_at_origin", slope);
    }
    let rows: Vec<Vec<String>> = chords
        .iter()
        .map(|c| {
            vec![
                fmt_f64(c.q()),
                fmt_f64(c.start.z()),
                fmt_f64(c.length),
                c.nondegenerate.to_string(),
            ]
        })
        .collect();
    let header = ["Q", "Z_start", "length", "nondegenerate"];
    println!("{}", header.join(","));
    for r in &rows {
        println!("{}", r.join(","));
    }
    out.write_with("chords.csv", |w| write_csv(w, &header, &rows))?;
    done(out)
}

// ---------------------------------------------------------------- shoot

#[derive(Debug, Args, Serialize)]
pub struct ShootArgs {
    #[arg(long, default_value_t = 4.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.5)]
    pub b: f64,
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Size of the admissible perturbation
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Use the blocking Hamiltonian with this offset instead, and Sigma_+ = {Z < 0}
    #[arg(long)]
    pub blocking: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    /// Integration horizon (default 50 / c)
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Capture radius
    #[arg(long, default_value_t = 1e-3)]
    pub capture: f64,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub q_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub q_max: f64,
    /// Skip bisection of captured/escaped boundaries
    #[arg(long)]
    pub no_refine: bool,
}

pub fn shoot(dir: PathBuf, args: &ShootArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "shoot", args)?;
    let source = lambda_a_alpha(args.a, args.alpha, args.b, args.beta)?;
    let window = source.parameter_window(args.q_min, args.q_max)?;
    let h: Arc<dyn ContactHamiltonian> = match args.blocking {
        Some(delta) => Arc::new(blocking(args.c, delta)?),
        None => Arc::new(make_admissible(args.c, args.tau, args.eps, args.rho)?),
    };
    let mut prob = ShootingProblem::new(h, source, window, Legendrian::zero_section(), args.c);
    if args.blocking.is_some() {
        prob.sigma_plus = Some(Arc::new(|x: contact_relax::PhaseView<'_>| -x.z));
    }
    if let Some(t) = args.horizon {
        prob.horizon = t;
    }
    prob.eps = args.capture;
    prob.refine = !args.no_refine;
    out.tolerance("capture_radius", prob.eps);
    let report = shoot_all(&prob, args.grid)?;
    let captured = report.captured().count();
    let in_sigma = report.captured_in_sigma_plus();
    println!(
        "{} shots: {captured} captured, {in_sigma} captured inside Sigma_+",
        report.results.len()
    );
    out.note("captured", captured);
    out.note("captured_in_sigma_plus", in_sigma);
    out.note("boundaries", &report.boundaries);
    out.write_with("shots.csv", |w| report.write_csv(w))?;
    done(out)
}

// ---------------------------------------------------------------- glauber

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Exact master equation on all 2^|G| configurations
    Master,
    /// Exact master equation on the up-spin count (Curie-Weiss only)
    Lumped,
    Gillespie,
    /// Discrete-time random sequential updates
    Discrete,
    /// Chain with the field driven by a perturbed contact Hamiltonian
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    CurieWeiss,
    /// Strength b between lattice neighbors of the periodic lattice
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// The configuration with round(|G|(1 + m0)/2) up spins
    Fixed,
    /// Independent spins of mean m0 (exact engines only)
    Product,
}

#[derive(Debug, Args, Serialize)]
pub struct GlauberArgs {
    #[arg(long, value_enum, default_value = "lumped")]
    pub engine: Engine,
    /// Lattice side; the lattice has n^d sites
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, value_enum, default_value = "curie-weiss")]
    pub coupling: CouplingKind,
    #[arg(long, default_value_t = 0.5)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Initial magnetization
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub m0: f64,
    #[arg(long, value_enum, default_value = "fixed")]
    pub init: Init,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5.0)]
    pub t_max: f64,
    /// Output time step
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Time step of the discrete engine
    #[arg(long, default_value_t = 0.005)]
    pub h: f64,
    /// Perturbation size of the perturbed engine
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Initial Q of the perturbed engine
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub big_q0: f64,
    /// Initial Z of the perturbed engine
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub big_z0: f64,
    /// Jitter amplitude of the drift bias (default: exact mean)
    #[arg(long)]
    pub jitter: Option<f64>,
}

fn nearest_neighbor(side: usize, d: usize, b: f64) -> Vec<f64> {
    let sites = side.pow(d as u32);
    let mut j = vec![0.0; sites * sites];
    for g in 0..sites {
        let mut stride = 1;
        for _ in 0..d {
            let coord = g / stride % side;
            for next in [(coord + 1) % side, (coord + side - 1) % side] {
                let h = g - coord * stride + next * stride;
                if h != g {
                    j[g * sites + h] = b;
                }
            }
            stride *= side;
        }
    }
    j
}

fn write_columns(
    out: &mut Output,
    name: &str,
    header: &[&str],
    columns: &[&[f64]],
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = (0..columns[0].len())
        .map(|i| columns.iter().map(|c| fmt_f64(c[i])).collect())
        .collect();
    out.write_with(name, |w| write_csv(w, header, &rows))
}

pub fn glauber(dir: PathBuf, args: &GlauberArgs) -> Result<(), CliError> {
    if !(-1.0..=1.0).contains(&args.m0) {
        return Err(CliError::Usage(format!(
            "--m0 must lie in [-1, 1], got {}",
            args.m0
        )));
    }
    let mut out = Output::new(dir, "glauber", args)?;
    let coupling = match args.coupling {
        CouplingKind::CurieWeiss => Coupling::CurieWeiss { b: args.b },
        CouplingKind::NearestNeighbor => Coupling::Matrix(nearest_neighbor(args.n, args.d, args.b)),
    };
    let sys = SpinSystem::new(args.n, args.d, coupling, args.q, args.beta, args.c)?;
    let sites = sys.sites();
    let times = time_grid(args.t_max, args.dt)?;
    let up = ((1.0 + args.m0) / 2.0 * sites as f64).round() as usize;
    let sigma0 = Configuration::with_up_count(sites, up);
    let stochastic = matches!(
        args.engine,
        Engine::Gillespie | Engine::Discrete | Engine::Perturbed
    );
    if stochastic {
        if args.init == Init::Product {
            return Err(CliError::Usage(
                "--init product needs the master or lumped engine".into(),
            ));
        }
        if args.runs == 0 {
            return Err(CliError::Usage("--runs must be positive".into()));
        }
        out.seed(args.seed);
    }
    match args.engine {
        Engine::Master => {
            if sites > MASTER_MAX_SITES {
                return Err(Error::StateSpaceTooLarge {
                    sites,
                    limit: MASTER_MAX_SITES,
                }
                .into());
            }
            let pi0: Vec<f64> = match args.init {
                Init::Fixed => {
                    let mut pi = vec![0.0; 1 << sites];
                    pi[sigma0.index()] = 1.0;
                    pi
                }
                Init::Product => {
                    let up = 0.5 * (1.0 + args.m0);
                    (0..1usize << sites)
                        .map(|i| {
                            let k = i.count_ones() as i32;
                            up.powi(k) * (1.0 - up).powi(sites as i32 - k)
                        })
                        .collect()
                }
            };
            let m: Vec<f64> = master_evolve_at(&sys, &pi0, &times)?
                .iter()
                .map(|pi| mean_magnetization(&lump(pi, sites)))
                .collect();
            write_columns(&mut out, "magnetization.csv", &["t", "m"], &[&times, &m])?;
            println!(
                "m({}) = {}",
                fmt_f64(args.t_max),
                fmt_f64(*m.last().unwrap_or(&f64::NAN))
            );
        }
        Engine::Lumped => {
            let pi0 = match args.init {
                Init::Fixed => {
                    let mut pi = vec![0.0; sites + 1];
                    pi[up] = 1.0;
                    pi
                }
                Init::Product => product_measure(sites, args.m0),
            };
            let m: Vec<f64> = lumped_master_evolve_at(&sys, &pi0, &times)?
                .iter()
                .map(|pi| mean_magnetization(pi))
                .collect();
            let m0 = mean_magnetization(&pi0);
            let mf = mean_field_path(args.b, args.beta, args.c, args.q, m0, &times)?;
            write_columns(
                &mut out,
                "magnetization.csv",
                &["t", "m", "mean_field"],
                &[&times, &m, &mf],
            )?;
            let gap = m
                .iter()
                .zip(&mf)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.note("max_gap_to_mean_field", gap);
            println!(
                "m({}) = {}, max |m - mean field| = {gap:.3e}",
                fmt_f64(args.t_max),
                fmt_f64(m[m.len() - 1])
            );
        }
        Engine::Gillespie | Engine::Discrete => {
            let summary = if args.engine == Engine::Gillespie {
                gillespie_ensemble(&sys, &sigma0, &times, args.runs, args.seed)?
            } else {
                discrete_ensemble(&sys, &sigma0, &times, args.h, args.runs, args.seed)?
            };
            out.write_with("ensemble.csv", |w| summary.write_csv(w))?;
            let i = summary.times.len() - 1;
            println!(
                "m({}) = {} +- {}",
                fmt_f64(args.t_max),
                fmt_f64(summary.mean[i]),
                fmt_f64(summary.se[i])
            );
        }
        Engine::Perturbed => {
            let f = SineBump {
                eps: args.eps,
                tau: args.tau,
                bump: Bump { rho: args.rho },
            };
            let noise = match args.jitter {
                Some(a) => Noise::Jitter(a),
                None => Noise::Mean,
            };
            let summary = perturbed_ensemble(
                &sys,
                &sigma0,
                args.big_q0,
                args.big_z0,
                Arc::new(f),
                noise,
                &times,
                args.runs,
                args.seed,
            )?;
            let big_p0 = sigma0.magnetization() - (args.beta * args.big_q0).tanh();
            let state0 = [big_p0, args.big_q0, args.big_z0];
            let system: Vec<f64> = perturbed_mean_field(args.c, &f, state0, &times)?
                .iter()
                .map(|s| s[0])
                .collect();
            let chain: Vec<f64> =
                perturbed_chain_mean_field(args.beta, args.c, &f, state0, &times)?
                    .iter()
                    .map(|s| s[0])
                    .collect();
            let rows: Vec<Vec<String>> = (0..times.len())
                .map(|i| {
                    vec![
                        fmt_f64(times[i]),
                        fmt_f64(summary.mean[i]),
                        fmt_f64(summary.se[i]),
                        summary.runs.to_string(),
                        fmt_f64(system[i]),
                        fmt_f64(chain[i]),
                    ]
                })
                .collect();
            out.write_with("perturbed.csv", |w| {
                write_csv(
                    w,
                    &["t", "mean_P", "se_P", "runs", "P_system", "P_chain"],
                    &rows,
                )
            })?;
            let i = times.len() - 1;
            println!(
                "P({}) = {} +- {}; system {}, chain drift {}",
                fmt_f64(args.t_max),
                fmt_f64(summary.mean[i]),
                fmt_f64(summary.se[i]),
                fmt_f64(system[i]),
                fmt_f64(chain[i])
            );
        }
    }
    done(out)
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 6.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Distances from equilibrium
    #[arg(long, default_value = "0.001,0.01,0.05,0.1")]
    pub delta: Floats,
    /// Lower bounds on |q| (default: fold + 0.5, 1, 2)
    #[arg(long)]
    pub k: Option<Floats>,
    /// Grid points per axis inside compare_scenarios
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
}

pub fn compare(dir: PathBuf, args: &CompareArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "compare", args)?;
    let params = IsingParams::new(args.b, args.beta, args.c)?;
    let ks = match &args.k {
        Some(k) => k.0.clone(),
        None => {
            let base = fold_point(args.b, args.beta).unwrap_or(0.0);
            vec![base + 0.5, base + 1.0, base + 2.0]
        }
    };
    let pairs: Vec<(f64, f64)> = args
        .delta
        .0
        .iter()
        .flat_map(|&d| ks.iter().map(move |&k| (d, k)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(d, k)| compare_scenarios(&params, d, k, args.grid))
        .collect::<Result<Vec<f64>, _>>()?;
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .zip(&values)
        .map(|(&(d, k), &v)| row(&[d, k, v]))
        .collect();
    for r in &rows {
        println!(
            "delta = {}  k = {}  max |p_I - p_II| = {}",
            r[0], r[1], r[2]
        );
    }
    out.write_with("discrepancy.csv", |w| {
        write_csv(w, &["delta", "k", "max_discrepancy"], &rows)
    })?;
    done(out)
}

// ---------------------------------------------------------------- cooling

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoolingKind {
    Coupled,
    Isentropic,
    Sine,
}

#[derive(Debug, Args, Serialize)]
pub struct CoolingArgs {
    #[arg(long, value_enum, default_value = "coupled")]
    pub variant: CoolingKind,
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Coupling of the coupled variant
    #[arg(long, default_value_t = 0.5)]
    pub b: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub sigma: f64,
    /// Amplitude of the sine variant
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Frequency N of the sine variant
    #[arg(long, default_value_t = 3.0)]
    pub freq: f64,
    #[arg(long, default_value = "1,-0.5,1.5", allow_hyphen_values = true)]
    pub x0: Floats,
    #[arg(long, default_value_t = 20.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
}

pub fn cooling(dir: PathBuf, args: &CoolingArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "cooling", args)?;
    let name = match args.variant {
        CoolingKind::Coupled => ModelName::Cooling,
        CoolingKind::Isentropic => ModelName::CoolingIsentropic,
        CoolingKind::Sine => ModelName::CoolingSine,
    };
    let margs = ModelArgs {
        a: Some(args.a),
        b: Some(args.b),
        sigma: args.sigma,
        eps: Some(args.eps),
        freq: args.freq,
        ..ModelArgs::default_for(name)
    };
    let m = margs.cooling(name)?;
    let x0 = point3(&args.x0)?;
    let times = time_grid(args.t_max, args.dt)?;
    let rows = times
        .par_iter()
        .map(|&t| {
            let (x, e) = if t == 0.0 {
                (x0.clone(), x0.clone())
            } else {
                (m.flow(&x0, t)?, m.closed_form(&x0, t)?)
            };
            Ok(row(&[
                t,
                x.p()[0],
                x.q()[0],
                x.z(),
                e.p()[0],
                e.q()[0],
                e.z(),
            ]))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    out.write_with("trajectory.csv", |w| {
        write_csv(
            w,
            &["t", "p", "q", "z", "p_exact", "q_exact", "z_exact"],
            &rows,
        )
    })?;
    let limit = m.limit(&x0)?;
    println!(
        "limit (p, q, z) = ({}, {}, {})",
        fmt_f64(limit.p()[0]),
        fmt_f64(limit.q()[0]),
        fmt_f64(limit.z())
    );
    out.note("limit", limit.as_slice());
    if args.variant == CoolingKind::Coupled {
        let rate = fitted_cooling_rate(&m, &x0, 0.3 * args.t_max, 0.5 * args.t_max)?;
        println!(
            "fitted cooling rate {} (a - b = {})",
            fmt_f64(rate),
            fmt_f64(args.a - args.b)
        );
        out.note("fitted_rate", rate);
    }
    done(out)
}

// ---------------------------------------------------------------- moebius

#[derive(Debug, Args, Serialize)]
pub struct MoebiusArgs {
    #[arg(long, default_value = "0.5,0,0", allow_hyphen_values = true)]
    pub x0: Floats,
    #[arg(long, default_value_t = 3.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Seam offset of the cutoff profile
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 2.0)]
    pub a_inf: f64,
    /// Heights c of the circles K_c = {p = 0, z = c} to shoot from
    #[arg(long, allow_hyphen_values = true)]
    pub kc: Option<Floats>,
    /// Shots per circle
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
}

pub fn moebius(dir: PathBuf, args: &MoebiusArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "moebius", args)?;
    let margs = ModelArgs {
        eps: Some(args.eps),
        a_inf: args.a_inf,
        ..ModelArgs::default_for(ModelName::Moebius)
    };
    let m = margs.moebius()?;
    let x0 = point3(&args.x0)?;
    let times = time_grid(args.t_max, args.dt)?;
    let rows = times
        .par_iter()
        .map(|&t| {
            let x = if t == 0.0 {
                x0.clone()
            } else {
                m.trajectory(&x0, t)?
            };
            let (z, p) = MoebiusModel::closed_form_zp(x0.z(), x0.p()[0], t);
            Ok(row(&[t, x.p()[0], x.q()[0], x.z(), p, z]))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    out.write_with("trajectory.csv", |w| {
        write_csv(w, &["t", "p", "q", "z", "p_exact", "z_exact"], &rows)
    })?;
    if let Some(cs) = &args.kc {
        let h = m.hamiltonian();
        let mut kc_rows = Vec::new();
        for &c in &cs.0 {
            let prob = ShootingProblem::new(
                Arc::new(h),
                MoebiusModel::k_c(c),
                (0.0, TAU),
                MoebiusModel::lambda_st(),
                1.0,
            );
            let n = shoot_all(&prob, args.grid)?.captured().count();
            println!(
                "K_{}: {n}/{} shots captured by Lambda_st",
                fmt_f64(c),
                args.grid
            );
            kc_rows.push(vec![fmt_f64(c), n.to_string(), args.grid.to_string()]);
        }
        out.write_with("kc.csv", |w| {
            write_csv(w, &["c", "captured", "shots"], &kc_rows)
        })?;
    }
    done(out)
}

// ---------------------------------------------------------------- cores

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoresModel {
    /// Moebius flow on the torus p^2 + z^2 = 1
    Moebius,
    /// -z on the plane z = 0
    Decay,
}

#[derive(Debug, Args, Serialize)]
pub struct CoresArgs {
    #[arg(long, value_enum, default_value = "moebius")]
    pub model: CoresModel,
    /// Grid points along q; the Hausdorff distances are bounded below by half their spacing
    #[arg(long, default_value_t = 1024)]
    pub q_count: usize,
    /// Grid points along the second surface coordinate
    #[arg(long, default_value_t = 16)]
    pub theta_count: usize,
    /// Flow time of the core images
    #[arg(long, default_value_t = 15.0)]
    pub s_max: f64,
    /// Use the time-reversed flow
    #[arg(long)]
    pub reverse: bool,
}

pub fn cores(dir: PathBuf, args: &CoresArgs) -> Result<(), CliError> {
    if args.q_count < 2 || args.theta_count < 2 {
        return Err(CliError::Usage("grid counts must be at least 2".into()));
    }
    let mut out = Output::new(dir, "cores", args)?;
    let (h, grid, attract, repel): (
        Arc<dyn ContactHamiltonian>,
        SurfaceGrid,
        Legendrian,
        Option<Legendrian>,
    ) = match args.model {
        CoresModel::Moebius => {
            let shift = PI / args.theta_count as f64;
            (
                Arc::new(MoebiusModel::default().hamiltonian()),
                MoebiusModel::torus(args.q_count, args.theta_count, (shift, TAU + shift)),
                MoebiusModel::lambda_st(),
                Some(MoebiusModel::lambda_unst()),
            )
        }
        CoresModel::Decay => (
            Arc::new(LinearDecay::new(1.0)),
            SurfaceGrid {
                map: Arc::new(|q: f64, p: f64| PhasePoint::n1(p, q, 0.0)),
                s_range: (-2.0, 2.0),
                theta_range: (-1.0, 1.0),
                s_count: args.q_count,
                theta_count: args.theta_count,
            },
            Legendrian::zero_section(),
            None,
        ),
    };
    let cores = if args.reverse {
        compute_cores(&TimeReversed(h), &grid, args.s_max)?
    } else {
        compute_cores(&h, &grid, args.s_max)?
    };
    let (minus_target, plus_target) = if args.reverse {
        (repel, Some(attract))
    } else {
        (Some(attract), repel)
    };
    let window = match args.model {
        CoresModel::Moebius => (0.0, TAU),
        CoresModel::Decay => grid.s_range,
    };
    for (key, cloud, target) in [
        ("q_minus", &cores.q_minus, minus_target),
        ("q_plus", &cores.q_plus, plus_target),
    ] {
        if let (Some(l), false) = (target, cloud.is_empty()) {
            let d = hausdorff_to_curve(cloud, &l, window, 2000)?;
            println!(
                "{key}: {} points, Hausdorff distance to its section {d:.3e}",
                cloud.len()
            );
            out.note(&format!("{key}_hausdorff"), d);
        } else {
            println!("{key}: {} points", cloud.len());
        }
    }
    println!("gamma: {} points", cores.gamma.len());
    write_points(&mut out, "gamma.csv", &cores.gamma)?;
    write_points(&mut out, "q_minus.csv", &cores.q_minus)?;
    write_points(&mut out, "q_plus.csv", &cores.q_plus)?;
    done(out)
}

// ---------------------------------------------------------------- hyperbolicity

#[derive(Debug, Args, Serialize)]
pub struct HyperbolicityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Invariant Legendrian: the zero section, or Lambda_st for the Moebius model
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub window_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub window_hi: f64,
    #[arg(long, default_value_t = 8.0)]
    pub t_max: f64,
}

pub fn hyperbolicity(dir: PathBuf, args: &HyperbolicityArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "hyperbolicity", args)?;
    let h = args.model.build()?;
    let lambda = if args.model.hamiltonian.is_none() && args.model.model == ModelName::Moebius {
        MoebiusModel::lambda_st()
    } else {
        Legendrian::zero_section()
    };
    let est = estimate_hyperbolicity(&h, &lambda, (args.window_lo, args.window_hi), args.t_max)?;
    println!(
        "a_est = {}  b_est = {}  c_est = {}  (t = {})  normally hyperbolic: {}",
        fmt_f64(est.a_est),
        fmt_f64(est.b_est),
        fmt_f64(est.c_est),
        fmt_f64(est.t),
        est.normally_hyperbolic
    );
    let mut w = out.create("estimate.json")?;
    serde_json::to_writer_pretty(&mut w, &est)?;
    w.flush()?;
    done(out)
}

// ---------------------------------------------------------------- figures

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    All,
    /// Moebius phase portrait
    Fig1,
    /// Moebius cutoff profile
    Fig2,
    /// Case B equilibrium branches (b = 6, beta = 1)
    Fig3,
    /// Front of Lambda_{4,1} in the coordinates of (1.5, 0.4)
    Fig4,
    /// Front of Lambda_{4,0.2} in the coordinates of (2, 0.1)
    Fig5,
}

#[derive(Debug, Args, Serialize)]
pub struct FiguresArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub only: Figure,
    /// Samples per curve
    #[arg(long, default_value_t = 801)]
    pub samples: usize,
}

pub fn figures(dir: PathBuf, args: &FiguresArgs) -> Result<(), CliError> {
    let mut out = Output::new(dir, "figures", args)?;
    let want = |f: Figure| args.only == Figure::All || args.only == f;
    if want(Figure::Fig1) {
        let h = MoebiusModel::default().hamiltonian();
        let mut cfg = IntegratorConfig::until(8.0).with_max_step(0.05);
        cfg.escape_bound = Some(4.0);
        let starts: Vec<(f64, f64)> = (0..9)
            .flat_map(|i| (0..9).map(move |j| (-1.6 + 0.4 * i as f64, -1.6 + 0.4 * j as f64)))
            .collect();
        let trajs = starts
            .par_iter()
            .map(|&(p, z)| integrate(&h, &PhasePoint::n1(p, 0.0, z), &cfg))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut rows = Vec::new();
        for (id, traj) in trajs.iter().enumerate() {
            for i in 0..traj.len() {
                let x = traj.point(i);
                let mut r = vec![id.to_string()];
                r.extend(row(&[traj.times()[i], x.p()[0], x.z()]));
                rows.push(r);
            }
        }
        out.write_with("fig1_moebius_portrait.csv", |w| {
            write_csv(w, &["id", "t", "p", "z"], &rows)
        })?;
    }
    if want(Figure::Fig2) {
        let cut = MoebiusModel::default().cutoff;
        let n = args.samples.max(2);
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| 6.0 * i as f64 / (n - 1) as f64)
            .map(|s| row(&[s, cut.value(s), cut.derivative(s)]))
            .collect();
        out.write_with("fig2_cutoff.csv", |w| {
            write_csv(w, &["s", "a", "da"], &rows)
        })?;
    }
    if want(Figure::Fig3) {
        let params = IsingParams::new(6.0, 1.0, 1.0)?;
        let branches = equilibrium_branches(&params, -8.0, 8.0)?;
        out.write_with("fig3_branches.csv", |w| branches.write_csv(w))?;
    }
    for (fig, name, (a, alpha, b, beta), q) in [
        (Figure::Fig4, "fig4_front.csv", (4.0, 1.0, 1.5, 0.4), 5.0),
        (Figure::Fig5, "fig5_front.csv", (4.0, 0.2, 2.0, 0.1), 30.0),
    ] {
        if want(fig) {
            let l = lambda_a_alpha(a, alpha, b, beta)?;
            let (lo, hi) = l.parameter_window(-q, q)?;
            out.write_with(name, |w| l.write_csv(w, lo, hi, args.samples.max(2)))?;
        }
    }
    done(out)
}
