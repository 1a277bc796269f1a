//! Named Hamiltonians and parsed expressions in `p`, `q`, `z`.

use std::f64::consts::TAU;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use exmex::prelude::*;
use serde::Serialize;

use contact_relax::contact::{FnHamiltonian, LinearDecay, PhaseView};
use contact_relax::ising::{
    make_admissible, IsingHamiltonian, IsingParams, IsingPrimaryHamiltonian,
};
use contact_relax::models::{
    saturated_decay, CoolingModel, CoolingVariant, MoebiusCutoff, MoebiusModel,
};
use contact_relax::ContactHamiltonian;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    /// -c z
    Decay,
    /// -c z near the zero section, saturating on {z < 0}
    Saturated,
    /// Ising system in the stability coordinates of (b, beta)
    Ising,
    /// Ising system in the primary coordinates
    IsingPrimary,
    /// a(p^2 + z^2) with the C^1 cutoff
    Moebius,
    Cooling,
    CoolingIsentropic,
    CoolingSine,
    /// -c Z + eps sin(2 pi Q / tau) g(P)
    Admissible,
}

/// Model selection shared by `flow` and `hyperbolicity`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "decay")]
    pub model: ModelName,
    /// Expression in p, q, z; overrides --model
    #[arg(long, allow_hyphen_values = true)]
    pub hamiltonian: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Cooling rate a (default 2)
    #[arg(long)]
    pub a: Option<f64>,
    /// Interaction b (default 6 for Ising, 0.5 for cooling)
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Target entropy of the cooling models
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Perturbation size (admissible, cooling-sine, Moebius cutoff seam)
    #[arg(long)]
    pub eps: Option<f64>,
    /// Frequency N of the sine cooling model
    #[arg(long, default_value_t = 3.0)]
    pub freq: f64,
    #[arg(long, default_value_t = TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Limit of the Moebius cutoff profile
    #[arg(long, default_value_t = 2.0)]
    pub a_inf: f64,
}

impl ModelArgs {
    /// The command-line defaults for `model`.
    pub fn default_for(model: ModelName) -> Self {
        Self {
            model,
            hamiltonian: None,
            c: 1.0,
            a: None,
            b: None,
            beta: 1.0,
            sigma: 0.5,
            eps: None,
            freq: 3.0,
            tau: TAU,
            rho: 0.1,
            a_inf: 2.0,
        }
    }

    pub fn cooling_default(name: ModelName) -> Result<CoolingModel, CliError> {
        Self::default_for(name).cooling(name)
    }

    pub fn cooling_variant(&self, name: ModelName) -> CoolingVariant {
        match name {
            ModelName::CoolingIsentropic => CoolingVariant::Isentropic,
            ModelName::CoolingSine => CoolingVariant::Sine {
                eps: self.eps.unwrap_or(0.5),
                n: self.freq,
            },
            _ => CoolingVariant::Coupled {
                b: self.b.unwrap_or(0.5),
            },
        }
    }

    pub fn cooling(&self, name: ModelName) -> Result<CoolingModel, CliError> {
        Ok(CoolingModel::exponential(
            self.a.unwrap_or(2.0),
            self.sigma,
            self.cooling_variant(name),
        )?)
    }

    pub fn moebius(&self) -> Result<MoebiusModel, CliError> {
        Ok(MoebiusModel::new(MoebiusCutoff::new(
            self.eps.unwrap_or(0.1),
            self.a_inf,
        )?))
    }

    pub fn build(&self) -> Result<Arc<dyn ContactHamiltonian>, CliError> {
        if let Some(expr) = &self.hamiltonian {
            return Ok(Arc::new(expression(expr)?));
        }
        Ok(match self.model {
            ModelName::Decay => Arc::new(LinearDecay::new(self.c)),
            ModelName::Saturated => Arc::new(saturated_decay(self.c)),
            ModelName::Ising => Arc::new(IsingHamiltonian {
                params: IsingParams::new(self.b.unwrap_or(6.0), self.beta, self.c)?,
            }),
            ModelName::IsingPrimary => {
                IsingParams::new(0.0, self.beta, self.c)?;
                Arc::new(IsingPrimaryHamiltonian {
                    beta: self.beta,
                    c: self.c,
                })
            }
            ModelName::Moebius => Arc::new(self.moebius()?.hamiltonian()),
            ModelName::Cooling | ModelName::CoolingIsentropic | ModelName::CoolingSine => {
                Arc::new(self.cooling(self.model)?.hamiltonian())
            }
            ModelName::Admissible => Arc::new(make_admissible(
                self.c,
                self.tau,
                self.eps.unwrap_or(0.1),
                self.rho,
            )?),
        })
    }
}

/// `H(p, q, z)` from an expression, with symbolic partial derivatives.
pub fn expression(text: &str) -> Result<FnHamiltonian, CliError> {
    let bad =
        |e: exmex::ExError| CliError::Usage(format!("cannot parse Hamiltonian '{text}': {e}"));
    let expr = exmex::parse::<f64>(text).map_err(bad)?;
    let names: Vec<String> = expr.var_names().to_vec();
    // slot of each variable in the (p, q, z) argument
    let mut slots = Vec::with_capacity(names.len());
    for n in &names {
        slots.push(match n.as_str() {
            "p" => 0,
            "q" => 1,
            "z" => 2,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown variable '{other}' (use p, q, z)"
                )))
            }
        });
    }
    let partials = (0..names.len())
        .map(|i| expr.clone().partial(i).map_err(bad))
        .collect::<Result<Vec<_>, _>>()?;
    let slots_g = slots.clone();
    let args = move |x: PhaseView<'_>| -> Vec<f64> {
        let full = [x.p[0], x.q[0], x.z];
        slots.iter().map(|&s| full[s]).collect()
    };
    let args_g = args.clone();
    let value = move |x: PhaseView<'_>| expr.eval(&args(x)).unwrap_or(f64::NAN);
    Ok(
        FnHamiltonian::new(1, value).with_gradient(move |x: PhaseView<'_>, out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            let a = args_g(x);
            for (d, &s) in partials.iter().zip(&slots_g) {
                out[s] = d.eval(&a).unwrap_or(f64::NAN);
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use contact_relax::contact::gradient;
    use contact_relax::PhasePoint;

    #[test]
    fn expression_gradient() {
        let h = expression("-z + 0.5*sin(q)*p^2").unwrap();
        let x = PhasePoint::n1(2.0, 0.3, 1.0);
        assert!((h.value(x.view()) - (-1.0 + 2.0 * 0.3f64.sin())).abs() < 1e-14);
        let g = gradient(&h, &x);
        assert!((g.as_slice()[0] - 2.0 * 0.3f64.sin()).abs() < 1e-14);
        assert!((g.as_slice()[1] - 2.0 * 0.3f64.cos()).abs() < 1e-14);
        assert_eq!(g.as_slice()[2], -1.0);
    }

    #[test]
    fn missing_variables_have_zero_derivative() {
        let h = expression("q^2").unwrap();
        let g = gradient(&h, &PhasePoint::n1(1.0, 3.0, 2.0));
        assert_eq!(g.as_slice(), &[0.0, 6.0, 0.0]);
        assert!(expression("-w").is_err());
        assert!(expression("-z +").is_err());
    }
}
