//! Epidemic state, model parameters and the vector field.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsl::InteractionSpec;
use crate::error::{Error, Result};

/// Absolute slack used by feasibility checks unless a caller asks for another one.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Susceptible and infected fractions for each subpopulation. The recovered fraction is
/// `1 - x - y` and is never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EpidemicState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Config(format!(
                "state vectors have different lengths ({} susceptible, {} infected)",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Config(
                "state must have at least one subpopulation".into(),
            ));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Config("state contains a non-finite value".into()));
        }
        Ok(Self { x, y })
    }

    /// Disease-free state `(x, 0)`.
    pub fn disease_free(x: Vec<f64>) -> Self {
        let n = x.len();
        Self { x, y: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn recovered(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| 1.0 - x - y)
            .collect()
    }

    pub fn max_infected(&self) -> f64 {
        self.y.iter().copied().fold(0.0, f64::max)
    }

    /// Whether the state lies in the feasible set within an additive tolerance.
    pub fn is_feasible(&self, tol: f64) -> bool {
        is_feasible(self, tol)
    }
}

/// `true` iff `0 <= x_i, y_i <= 1` and `x_i + y_i <= 1` hold for every node, each within
/// the additive tolerance `tol`.
pub fn is_feasible(state: &EpidemicState, tol: f64) -> bool {
    state.x.len() == state.y.len()
        && state.x.iter().zip(&state.y).all(|(&x, &y)| {
            x >= -tol && x <= 1.0 + tol && y >= -tol && y <= 1.0 + tol && x + y <= 1.0 + tol
        })
}

/// Time derivative of an [`EpidemicState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Recovery rate and interaction matrix of a model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    gamma: f64,
    interaction: InteractionSpec,
}

impl ModelParams {
    pub fn new(gamma: f64, interaction: InteractionSpec) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!(
                "recovery rate must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma, interaction })
    }

    pub fn n(&self) -> usize {
        self.interaction.n()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn interaction(&self) -> &InteractionSpec {
        &self.interaction
    }

    pub(crate) fn check_dims(&self, state: &EpidemicState) -> Result<()> {
        if state.x.len() != self.n() || state.y.len() != self.n() {
            return Err(Error::Config(format!(
                "state has {} subpopulations but the model has {}",
                state.x.len().max(state.y.len()),
                self.n()
            )));
        }
        Ok(())
    }
}

/// `dx = -diag(x) A(x,y) y`, `dy = diag(x) A(x,y) y - gamma y`.
///
/// In builds with debug assertions the interaction matrix is checked for negative entries
/// on every call.
pub fn evaluate_vector_field(
    params: &ModelParams,
    state: &EpidemicState,
) -> Result<StateDerivative> {
    params.check_dims(state)?;
    let a = if cfg!(debug_assertions) {
        params.interaction.evaluate_matrix(state)?
    } else {
        params.interaction.evaluate(&state.x, &state.y)?
    };
    Ok(assemble(params.gamma, &a, &state.x, &state.y))
}

/// Vector field without dimension or nonnegativity validation. Accepts points slightly
/// outside the feasible set, which Runge-Kutta stages and finite-difference stencils need.
pub fn vector_field_unchecked(
    params: &ModelParams,
    x: &[f64],
    y: &[f64],
) -> Result<StateDerivative> {
    let a = params.interaction.evaluate(x, y)?;
    Ok(assemble(params.gamma, &a, x, y))
}

fn assemble(gamma: f64, a: &DMatrix<f64>, x: &[f64], y: &[f64]) -> StateDerivative {
    let n = x.len();
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    for i in 0..n {
        let pressure: f64 = (0..n).map(|j| a[(i, j)] * y[j]).sum();
        let incidence = x[i] * pressure;
        dx[i] = -incidence;
        dy[i] = incidence - gamma * y[i];
    }
    StateDerivative { dx, dy }
}
