//! Stability of disease-free equilibria and stability-region scans.

mod eigen;
mod region;
mod svg;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{EpidemicState, ModelParams};

pub use eigen::{dominant_eigen, DominantEigen};
pub use region::{
    downward_closure_violations, midpoint_convexity_violations, scan_region, RegionOptions,
    RegionScan,
};
pub use svg::render_svg;

pub const DEFAULT_MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

impl Classification {
    pub fn from_lambda(lambda: f64, gamma: f64, band: f64) -> Self {
        if lambda > gamma + band {
            Classification::Unstable
        } else if lambda < gamma - band {
            Classification::Stable
        } else {
            Classification::Marginal
        }
    }

    /// One-letter code used in region scans.
    pub fn code(self) -> &'static str {
        match self {
            Classification::Stable => "S",
            Classification::Unstable => "U",
            Classification::Marginal => "M",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub x_star: Vec<f64>,
    pub lambda_max: f64,
    /// Left Perron vector; absent when `diag(x*) A(x*, 0)` is reducible.
    pub perron_vector: Option<Vec<f64>>,
    pub classification: Classification,
    pub gamma: f64,
    pub marginal_band: f64,
}

fn check_x_star(params: &ModelParams, x_star: &[f64]) -> Result<()> {
    if x_star.len() != params.n() {
        return Err(Error::Config(format!(
            "equilibrium has {} components but the model has {}",
            x_star.len(),
            params.n()
        )));
    }
    if x_star.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Usage(format!(
            "equilibrium {x_star:?} is outside [0,1]^n"
        )));
    }
    Ok(())
}

/// `diag(x*) A(x*, 0)`, whose dominant eigenvalue decides stability.
pub fn next_generation_matrix(params: &ModelParams, x_star: &[f64]) -> Result<DMatrix<f64>> {
    check_x_star(params, x_star)?;
    let a = params
        .interaction()
        .evaluate_matrix(&EpidemicState::disease_free(x_star.to_vec()))?;
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(x_star)) * a)
}

/// Classifies the equilibrium `(x*, 0)` by comparing the dominant eigenvalue of
/// `diag(x*) A(x*, 0)` with `gamma`; values within `marginal_band` of `gamma` are Marginal.
pub fn classify_equilibrium(
    params: &ModelParams,
    x_star: &[f64],
    marginal_band: f64,
) -> Result<StabilityReport> {
    if !(marginal_band >= 0.0) {
        return Err(Error::Usage(format!(
            "marginal band must be nonnegative, got {marginal_band}"
        )));
    }
    let b = next_generation_matrix(params, x_star)?;
    let e = dominant_eigen(&b)?;
    Ok(StabilityReport {
        x_star: x_star.to_vec(),
        lambda_max: e.lambda,
        perron_vector: e.left_vector,
        classification: Classification::from_lambda(e.lambda, params.gamma(), marginal_band),
        gamma: params.gamma(),
        marginal_band,
    })
}

/// Jacobian of the vector field at `(x*, 0)` in `(x, y)` ordering:
/// `[[0, -B], [0, B - gamma I]]` with `B = diag(x*) A(x*, 0)`.
pub fn jacobian_at_equilibrium(params: &ModelParams, x_star: &[f64]) -> Result<DMatrix<f64>> {
    let b = next_generation_matrix(params, x_star)?;
    let n = x_star.len();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&(-&b));
    let lower = b - DMatrix::identity(n, n) * params.gamma();
    j.view_mut((n, n), (n, n)).copy_from(&lower);
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{FunctionSpec, InteractionSpec};
    use crate::state::vector_field_unchecked;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reciprocal_feedback() -> ModelParams {
        let spec = InteractionSpec::rank1_local(
            vec![FunctionSpec::parse("1 + x").unwrap(); 2],
            vec![FunctionSpec::parse("1/(1+1.5*y)").unwrap(); 2],
        )
        .unwrap();
        ModelParams::new(1.0, spec).unwrap()
    }

    fn fatigue() -> ModelParams {
        let spec = InteractionSpec::scalar_scaled(
            vec![FunctionSpec::parse("2 - x").unwrap(); 2],
            "1 + y1 + y2",
        )
        .unwrap();
        ModelParams::new(1.0, spec).unwrap()
    }

    #[test]
    fn reciprocal_feedback_symmetric_point_is_stable() {
        let r = classify_equilibrium(&reciprocal_feedback(), &[0.3, 0.3], DEFAULT_MARGINAL_BAND)
            .unwrap();
        assert!((r.lambda_max - 0.78).abs() < 1e-11);
        assert_eq!(r.classification, Classification::Stable);
        let v = r.perron_vector.unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fatigue_full_susceptibility_is_unstable() {
        let r = classify_equilibrium(&fatigue(), &[1.0, 1.0], DEFAULT_MARGINAL_BAND).unwrap();
        assert!((r.lambda_max - 2.0).abs() < 1e-11);
        assert_eq!(r.classification, Classification::Unstable);
    }

    #[test]
    fn origin_is_stable_and_boundary_point_marginal() {
        let r = classify_equilibrium(&fatigue(), &[0.0, 0.0], DEFAULT_MARGINAL_BAND).unwrap();
        assert_eq!(r.lambda_max, 0.0);
        assert_eq!(r.classification, Classification::Stable);
        assert_eq!(r.perron_vector, None);
        let r = classify_equilibrium(&fatigue(), &[1.0, 0.0], DEFAULT_MARGINAL_BAND).unwrap();
        assert_eq!(r.lambda_max, 1.0);
        assert_eq!(r.classification, Classification::Marginal);
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(
            Classification::from_lambda(1.0 + 2e-9, 1.0, 1e-9),
            Classification::Unstable
        );
        assert_eq!(
            Classification::from_lambda(1.0 - 2e-9, 1.0, 1e-9),
            Classification::Stable
        );
        assert_eq!(
            Classification::from_lambda(1.0 + 5e-10, 1.0, 1e-9),
            Classification::Marginal
        );
    }

    #[test]
    fn rejects_bad_equilibria() {
        assert!(classify_equilibrium(&fatigue(), &[0.5], 1e-9).is_err());
        assert!(matches!(
            classify_equilibrium(&fatigue(), &[1.5, 0.0], 1e-9),
            Err(Error::Usage(_))
        ));
        assert!(classify_equilibrium(&fatigue(), &[0.5, 0.5], -1.0).is_err());
    }

    #[test]
    fn jacobian_at_origin() {
        let p = fatigue();
        let j = jacobian_at_equilibrium(&p, &[0.0, 0.0]).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 2)] = -1.0;
        expected[(3, 3)] = -1.0;
        assert_eq!(j, expected);
    }

    #[test]
    fn jacobian_uniform_constant_matrix() {
        let p = ModelParams::new(
            1.0,
            InteractionSpec::constant(DMatrix::from_element(2, 2, 1.5)).unwrap(),
        )
        .unwrap();
        let j = jacobian_at_equilibrium(&p, &[0.5, 0.5]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, -0.75, -0.75, //
                0.0, 0.0, -0.75, -0.75, //
                0.0, 0.0, -0.25, 0.75, //
                0.0, 0.0, 0.75, -0.25,
            ],
        );
        assert!((j - expected).amax() < 1e-15);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let g: Vec<_> = (0..3)
                .map(|_| FunctionSpec::affine(rng.gen_range(0.5..2.0), rng.gen_range(0.0..1.0)))
                .collect();
            let f: Vec<_> = (0..3)
                .map(|_| {
                    FunctionSpec::reciprocal_affine(
                        rng.gen_range(0.5..2.0),
                        rng.gen_range(0.0..3.0),
                    )
                })
                .collect();
            let p = ModelParams::new(
                rng.gen_range(0.5..2.0),
                InteractionSpec::rank1_local(g, f).unwrap(),
            )
            .unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..0.9)).collect();
            let j = jacobian_at_equilibrium(&p, &x).unwrap();
            let base: Vec<f64> = x.iter().copied().chain([0.0; 3]).collect();
            let h = 1e-6;
            for k in 0..6 {
                let eval = |d: f64| {
                    let mut u = base.clone();
                    u[k] += d;
                    let r = vector_field_unchecked(&p, &u[..3], &u[3..]).unwrap();
                    [r.dx, r.dy].concat()
                };
                let (plus, minus) = (eval(h), eval(-h));
                for i in 0..6 {
                    assert!((j[(i, k)] - (plus[i] - minus[i]) / (2.0 * h)).abs() < 1e-6);
                }
            }
        }
    }
}
