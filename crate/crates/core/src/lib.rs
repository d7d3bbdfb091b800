//! Simulation and analysis of SIR epidemics on networks of subpopulations whose contact
//! rates respond to the epidemic state.

pub mod cli;
pub mod config;
pub mod dsl;
pub mod error;
pub mod integrator;
pub mod presets;
pub mod stability;
pub mod state;
pub mod transient;

pub use error::{Error, Result};
pub use state::{evaluate_vector_field, is_feasible, EpidemicState, ModelParams, StateDerivative};
