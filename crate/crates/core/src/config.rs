//! JSON scenario files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsl::{FunctionSpec, InteractionSpec};
use crate::error::{Error, Result};
use crate::integrator::IntegratorOptions;
use crate::stability::{RegionOptions, DEFAULT_MARGINAL_BAND};
use crate::state::{EpidemicState, ModelParams};
use crate::transient::{TransientOptions, DEFAULT_NOISE_TOL};

/// A one-variable function: an expression string or one of the parametric forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FunctionConfig {
    Expression(String),
    Affine { affine: AffineParams },
    ReciprocalAffine { reciprocal_affine: ReciprocalParams },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineParams {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReciprocalParams {
    pub p: f64,
    pub alpha: f64,
}

impl FunctionConfig {
    fn build(&self) -> Result<FunctionSpec> {
        Ok(match self {
            FunctionConfig::Expression(s) => FunctionSpec::parse(s)?,
            FunctionConfig::Affine { affine } => FunctionSpec::affine(affine.p, affine.q),
            FunctionConfig::ReciprocalAffine {
                reciprocal_affine: r,
            } => FunctionSpec::reciprocal_affine(r.p, r.alpha),
        })
    }
}

/// One function shared by every node, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Each(Vec<FunctionConfig>),
    All(FunctionConfig),
}

impl PerNode {
    fn build(&self, n: usize, field: &str) -> Result<Vec<FunctionSpec>> {
        match self {
            PerNode::All(f) => Ok(vec![f.build()?; n]),
            PerNode::Each(v) if v.len() == n => v.iter().map(FunctionConfig::build).collect(),
            PerNode::Each(v) => Err(Error::Config(format!(
                "model.interaction.{field} has {} entries, expected {n}",
                v.len()
            ))),
        }
    }

    fn expanded(&self, n: usize) -> PerNode {
        match self {
            PerNode::All(f) => PerNode::Each(vec![f.clone(); n]),
            each => each.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionConfig {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Rank1Local {
        g: PerNode,
        f: PerNode,
    },
    ScalarScaled {
        numerators: PerNode,
        denominator: String,
    },
    OuterProduct {
        scale: f64,
    },
    ExpressionMatrix {
        entries: Vec<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub gamma: f64,
    pub interaction: InteractionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_converged_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_tol: Option<f64>,
    /// Random initial conditions for the unimodality verification; skipped when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Budget of the multimodality search; skipped when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Equilibrium analysed by `stability`; the simulated limit is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

pub const DEFAULT_GRID_RESOLUTION: usize = 201;
pub const DEFAULT_SEED: u64 = 0;

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        raw.resolve()
    }

    /// Fills every default and expands shared per-node functions, then validates the
    /// result, including nonnegativity sampling of the interaction.
    pub fn resolve(mut self) -> Result<Self> {
        let n = self.model.n;
        if n == 0 {
            return Err(Error::Config("model.n must be at least 1".into()));
        }
        let gamma = self.model.gamma;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!(
                "model.gamma must be positive, got {gamma}"
            )));
        }
        match &mut self.model.interaction {
            InteractionConfig::Rank1Local { g, f } => {
                *g = g.expanded(n);
                *f = f.expanded(n);
            }
            InteractionConfig::ScalarScaled { numerators, .. } => {
                *numerators = numerators.expanded(n)
            }
            _ => {}
        }
        let d = IntegratorOptions::for_gamma(gamma);
        let i = &mut self.integrator;
        i.rel_tol.get_or_insert(d.rel_tol);
        i.abs_tol.get_or_insert(d.abs_tol);
        i.t_max.get_or_insert(d.t_max);
        i.y_converged_threshold
            .get_or_insert(d.y_converged_threshold);
        i.max_step.get_or_insert(d.max_step);
        i.clamp_eps.get_or_insert(d.clamp_eps);
        let r = RegionOptions::default();
        let a = &mut self.analysis;
        a.grid_resolution.get_or_insert(DEFAULT_GRID_RESOLUTION);
        a.boundary_tol.get_or_insert(r.boundary_tol);
        a.tie_tol.get_or_insert(r.tie_tol);
        a.marginal_band.get_or_insert(DEFAULT_MARGINAL_BAND);
        a.noise_tol.get_or_insert(DEFAULT_NOISE_TOL);
        a.seed.get_or_insert(DEFAULT_SEED);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.model.n;
        let check_len = |name: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} has length {len}, expected n = {n}"
                )))
            }
        };
        if let Some(init) = &self.initial {
            check_len("initial.x", init.x.len())?;
            check_len("initial.y", init.y.len())?;
            let s = self.initial_state()?.expect("initial present");
            if !s.is_feasible(0.0) {
                return Err(Error::Config(
                    "initial state must satisfy 0 <= x, y and x + y <= 1".into(),
                ));
            }
        }
        if let Some(x) = &self.analysis.x_star {
            check_len("analysis.x_star", x.len())?;
        }
        if let Some(w) = &self.analysis.weights {
            check_len("analysis.weights", w.len())?;
        }
        self.integrator_options().validate()?;
        let a = &self.analysis;
        if a.noise_tol.unwrap_or(0.0) < 0.0 {
            return Err(Error::Config(
                "analysis.noise_tol must be nonnegative".into(),
            ));
        }
        if a.trials == Some(0) || a.budget == Some(0) {
            return Err(Error::Config(
                "analysis.trials and analysis.budget must be positive".into(),
            ));
        }
        self.params()?;
        Ok(())
    }

    pub fn interaction(&self) -> Result<InteractionSpec> {
        let n = self.model.n;
        match &self.model.interaction {
            InteractionConfig::Constant { matrix } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!(
                        "model.interaction.matrix must be {n}x{n}"
                    )));
                }
                InteractionSpec::constant(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            InteractionConfig::Rank1Local { g, f } => {
                InteractionSpec::rank1_local(g.build(n, "g")?, f.build(n, "f")?)
            }
            InteractionConfig::ScalarScaled {
                numerators,
                denominator,
            } => InteractionSpec::scalar_scaled(numerators.build(n, "numerators")?, denominator),
            InteractionConfig::OuterProduct { scale } => InteractionSpec::outer_product(n, *scale),
            InteractionConfig::ExpressionMatrix { entries } => {
                if entries.len() != n || entries.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!(
                        "model.interaction.entries must be {n}x{n}"
                    )));
                }
                let flat: Vec<&str> = entries.iter().flatten().map(String::as_str).collect();
                InteractionSpec::expression_matrix(n, &flat)
            }
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.gamma, self.interaction()?)
    }

    pub fn initial_state(&self) -> Result<Option<EpidemicState>> {
        self.initial
            .as_ref()
            .map(|i| EpidemicState::new(i.x.clone(), i.y.clone()))
            .transpose()
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        let d = IntegratorOptions::for_gamma(self.model.gamma);
        let i = &self.integrator;
        IntegratorOptions {
            rel_tol: i.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: i.abs_tol.unwrap_or(d.abs_tol),
            t_max: i.t_max.unwrap_or(d.t_max),
            y_converged_threshold: i.y_converged_threshold.unwrap_or(d.y_converged_threshold),
            max_step: i.max_step.unwrap_or(d.max_step),
            clamp_eps: i.clamp_eps.unwrap_or(d.clamp_eps),
        }
    }

    pub fn region_options(&self) -> RegionOptions {
        let d = RegionOptions::default();
        let a = &self.analysis;
        RegionOptions {
            grid_resolution: a.grid_resolution.unwrap_or(DEFAULT_GRID_RESOLUTION),
            boundary_tol: a.boundary_tol.unwrap_or(d.boundary_tol),
            tie_tol: a.tie_tol.unwrap_or(d.tie_tol),
            marginal_band: a.marginal_band.unwrap_or(d.marginal_band),
            weights: a.weights.clone(),
        }
    }

    pub fn transient_options(&self) -> TransientOptions {
        TransientOptions {
            integrator: self.integrator_options(),
            noise_tol: self.analysis.noise_tol.unwrap_or(DEFAULT_NOISE_TOL),
        }
    }

    pub fn seed(&self) -> u64 {
        self.analysis.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads, resolves and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECIPROCAL: &str = r#"{
        "model": {"n": 2, "gamma": 1,
                  "interaction": {"kind": "rank1_local", "g": "1+x", "f": "1/(1+1.5*y)"}},
        "initial": {"x": [0.9, 0.9], "y": [0.05, 0.05]}
    }"#;

    #[test]
    fn reciprocal_config_is_valid_and_resolved() {
        let c = ScenarioConfig::from_json(RECIPROCAL).unwrap();
        assert_eq!(c.integrator.rel_tol, Some(1e-8));
        assert_eq!(c.analysis.grid_resolution, Some(201));
        match &c.model.interaction {
            InteractionConfig::Rank1Local {
                g: PerNode::Each(g),
                ..
            } => assert_eq!(g.len(), 2),
            other => panic!("{other:?}"),
        }
        let again = ScenarioConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn wrong_lengths_and_unknown_fields() {
        let bad = RECIPROCAL.replace("\"y\": [0.05, 0.05]", "\"y\": [0.05, 0.05, 0.0]");
        assert!(
            matches!(ScenarioConfig::from_json(&bad), Err(Error::Config(m)) if m.contains("initial.y"))
        );
        let bad = RECIPROCAL.replace("\"gamma\": 1", "\"gamma\": 1, \"beta\": 2");
        assert!(matches!(
            ScenarioConfig::from_json(&bad),
            Err(Error::Config(_))
        ));
        let bad = RECIPROCAL.replace("[0.9, 0.9]", "[0.97, 0.9]");
        assert!(ScenarioConfig::from_json(&bad).is_err());
    }

    #[test]
    fn negative_function_names_witness() {
        let bad = RECIPROCAL.replace("1/(1+1.5*y)", "y-2");
        match ScenarioConfig::from_json(&bad) {
            Err(Error::ModelValidity { message, .. }) => {
                assert!(message.contains("u = 0"), "{message}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let bad = RECIPROCAL.replace("1+x", "1 +* x");
        match ScenarioConfig::from_json(&bad) {
            Err(Error::Parse(e)) => assert_eq!(e.offset, 3),
            other => panic!("{other:?}"),
        }
        assert!(
            matches!(ScenarioConfig::from_json("{\"model\": "), Err(Error::Config(m)) if m.contains("line"))
        );
    }

    #[test]
    fn all_interaction_kinds_parse() {
        let kinds = [
            r#"{"kind": "constant", "matrix": [[3, 2], [1, 2]]}"#,
            r#"{"kind": "rank1_local", "g": [{"affine": {"p": 1, "q": 1}}, "1"], "f": {"reciprocal_affine": {"p": 1, "alpha": 1.5}}}"#,
            r#"{"kind": "scalar_scaled", "numerators": "2 - x", "denominator": "1 + y1 + y2"}"#,
            r#"{"kind": "outer_product", "scale": 0.8}"#,
            r#"{"kind": "expression_matrix", "entries": [["1", "x1"], ["y", "exp(-y2)"]]}"#,
        ];
        for k in kinds {
            let text = format!(r#"{{"model": {{"n": 2, "gamma": 0.5, "interaction": {k}}}}}"#);
            let c = ScenarioConfig::from_json(&text).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(c.params().unwrap().n(), 2);
            assert_eq!(c.integrator_options().t_max, 2e4);
        }
        let text = r#"{"model": {"n": 2, "gamma": 1, "interaction": {"kind": "constant", "matrix": [[1]]}}}"#;
        assert!(matches!(
            ScenarioConfig::from_json(text),
            Err(Error::Config(_))
        ));
    }
}
