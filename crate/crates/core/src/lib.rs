//! Contact Hamiltonian dynamics for relaxation processes.
//!
//! The crate works on the standard contact space `R^{2n+1}` with coordinates
//! `(p, q, z)` and contact form `dz - p dq`. It provides:
//!
//! - [`contact`]: points, tangent vectors, contact Hamiltonians and their
//!   vector fields, plus the coordinate changes used by the thermodynamic models.
//! - [`flow`]: adaptive Dormand–Prince integration of contact flows with events,
//!   flow-map differentials and convergence detection.
//! - [`legendrian`]: Legendrian curves, distances, Reeb chords and
//!   normal-hyperbolicity rate estimates.
//! - [`ising`]: mean-field Ising thermodynamics (equilibrium branches, the two
//!   relaxation scenarios, the perturbed-equilibrium Legendrians and admissible
//!   Hamiltonians).
//! - [`glauber`]: exact master equations, the lumped Curie–Weiss chain and
//!   Gillespie simulation of Glauber spin dynamics.
//! - [`relaxation`]: shooting for relaxation trajectories, sampled checks of the
//!   attractor assumptions, and core computation.
//! - [`models`]: Newton cooling and contact Möbius dynamics with closed forms.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod error;
pub mod flow;
pub mod glauber;
pub mod io;
pub mod ising;
pub mod legendrian;
pub mod models;
pub mod ode;
pub mod relaxation;
pub mod roots;

pub use contact::{ContactHamiltonian, PhasePoint, PhaseView, TangentVector};
pub use error::{Error, Result};

pub use flow::{IntegratorConfig, Trajectory};
pub use legendrian::Legendrian;
