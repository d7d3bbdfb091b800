//! Numerical checks of structural properties of an interaction spec.

use nalgebra::DMatrix;
use serde::Serialize;

use super::spec::{FunctionSpec, InteractionSpec};
use crate::error::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const DEFAULT_HYPOTHESIS_SAMPLES: usize = 1001;
pub const HYPOTHESIS_TOL: f64 = 1e-9;
const MAX_GRID_POINTS: usize = 10_000_000;
const MAX_REPORTED_VIOLATIONS: usize = 64;

/// Which of the two sufficient conditions for a monotone stability region failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityCondition {
    /// `A_ij + x_i dA_ij/dx_i >= 0`
    OwnSusceptibility,
    /// `dA_ij/dx_k >= 0` for `k != i`
    CrossSusceptibility,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub condition: MonotonicityCondition,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// `false` means the sufficient conditions are not satisfied on the grid; the stability
    /// region may still be monotone.
    pub holds: bool,
    pub points_checked: usize,
    pub violation_count: usize,
    pub violations: Vec<MonotonicityViolation>,
}

/// Checks the monotonicity conditions at `y = 0` by finite differences on a uniform grid of
/// `grid_resolution^n` points.
pub fn check_monotonicity_conditions(
    spec: &InteractionSpec,
    grid_resolution: usize,
    fd_step: f64,
) -> Result<MonotonicityReport> {
    if grid_resolution < 2 {
        return Err(Error::Usage(format!(
            "grid resolution must be at least 2, got {grid_resolution}"
        )));
    }
    if !(fd_step > 0.0 && fd_step <= 1e-3) {
        return Err(Error::Usage(format!(
            "finite-difference step must lie in (0, 1e-3], got {fd_step}"
        )));
    }
    let n = spec.n();
    let total = (grid_resolution as f64).powi(n as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(Error::Usage(format!(
            "grid of {grid_resolution}^{n} points is too large for the monotonicity check"
        )));
    }
    let total = total as usize;
    let mut report = MonotonicityReport {
        holds: true,
        points_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
    };
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let x: Vec<f64> = idx
            .iter()
            .map(|&k| k as f64 / (grid_resolution - 1) as f64)
            .collect();
        for v in check_monotonicity_at(spec, &x, fd_step)? {
            report.violation_count += 1;
            if report.violations.len() < MAX_REPORTED_VIOLATIONS {
                report.violations.push(v);
            }
        }
        report.points_checked += 1;
        for d in idx.iter_mut() {
            *d += 1;
            if *d < grid_resolution {
                break;
            }
            *d = 0;
        }
    }
    report.holds = report.violation_count == 0;
    Ok(report)
}

/// Violations of the monotonicity conditions at a single point `(x, 0)`.
pub fn check_monotonicity_at(
    spec: &InteractionSpec,
    x: &[f64],
    fd_step: f64,
) -> Result<Vec<MonotonicityViolation>> {
    let n = spec.n();
    let zero = vec![0.0; n];
    let eval = |x: &[f64]| spec.evaluate(x, &zero);
    let a = eval(x)?;
    let mut out = Vec::new();
    for k in 0..n {
        let d = partial(&eval, x, k, fd_step)?;
        for i in 0..n {
            for j in 0..n {
                let slack = 1e-7 * (1.0 + a[(i, j)].abs());
                let (condition, value) = if k == i {
                    (
                        MonotonicityCondition::OwnSusceptibility,
                        a[(i, j)] + x[i] * d[(i, j)],
                    )
                } else {
                    (MonotonicityCondition::CrossSusceptibility, d[(i, j)])
                };
                if value < -slack {
                    out.push(MonotonicityViolation {
                        condition,
                        i,
                        j,
                        k,
                        x: x.to_vec(),
                        value,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `dA/dx_k`: central differences inside the box, second-order one-sided at its faces.
fn partial(
    eval: &impl Fn(&[f64]) -> Result<DMatrix<f64>>,
    x: &[f64],
    k: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let shifted = |delta: f64| {
        let mut p = x.to_vec();
        p[k] += delta;
        eval(&p)
    };
    if x[k] - h >= 0.0 && x[k] + h <= 1.0 {
        Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
    } else {
        let s = if x[k] - h < 0.0 { h } else { -h };
        let f0 = eval(x)?;
        let f1 = shifted(s)?;
        let f2 = shifted(2.0 * s)?;
        Ok((f1 * 4.0 - f0 * 3.0 - f2) / (2.0 * s))
    }
}

/// Shape and positivity assumptions under which the aggregate infection curve is unimodal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnimodalityHypothesis {
    /// `u g_i(u)` strictly increasing.
    XgIncreasing,
    /// `u f_j(u)` strictly increasing.
    YfIncreasing,
    /// `u f_j(u)` concave.
    YfConcave,
    GPositive,
    FPositive,
}

impl UnimodalityHypothesis {
    pub fn describe(self) -> &'static str {
        match self {
            UnimodalityHypothesis::XgIncreasing => "u*g_i(u) is strictly increasing on [0,1]",
            UnimodalityHypothesis::YfIncreasing => "u*f_j(u) is strictly increasing on [0,1]",
            UnimodalityHypothesis::YfConcave => "u*f_j(u) is concave on [0,1]",
            UnimodalityHypothesis::GPositive => "g_i is positive on [0,1]",
            UnimodalityHypothesis::FPositive => "f_j is positive on [0,1]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisFailure {
    pub hypothesis: UnimodalityHypothesis,
    pub node: usize,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnimodalityHypothesesReport {
    pub holds: bool,
    pub failed_hypothesis: Option<UnimodalityHypothesis>,
    pub witness: Option<HypothesisFailure>,
    pub failures: Vec<HypothesisFailure>,
}

/// Samples the hypotheses on `samples` uniform points of `[0, 1]` for each factor of a
/// rank-one local spec. The first failure in the order of [`UnimodalityHypothesis`] is
/// reported as the witness.
pub fn check_unimodality_hypotheses(
    spec: &InteractionSpec,
    samples: usize,
) -> Result<UnimodalityHypothesesReport> {
    let factors = spec.rank1_factors().ok_or_else(|| {
        Error::Usage(format!(
            "unimodality hypotheses need a rank-one local interaction, got {}",
            spec.kind_name()
        ))
    })?;
    if samples < 3 {
        return Err(Error::Usage(format!(
            "need at least 3 samples, got {samples}"
        )));
    }
    let grid: Vec<f64> = (0..samples)
        .map(|k| k as f64 / (samples - 1) as f64)
        .collect();
    let sample = |func: &FunctionSpec| -> Result<Vec<f64>> {
        grid.iter()
            .map(|&u| {
                func.eval(u)
                    .map_err(|e| Error::model(format!("function {func} at u = {u}: {e}")))
            })
            .collect()
    };

    let mut failures = Vec::new();
    let mut push = |hypothesis, node, k: Option<usize>| {
        if let Some(k) = k {
            failures.push(HypothesisFailure {
                hypothesis,
                node,
                witness: grid[k],
            });
        }
    };
    let g = factors.g.iter().map(sample).collect::<Result<Vec<_>>>()?;
    let f = factors.f.iter().map(sample).collect::<Result<Vec<_>>>()?;
    let times_u = |v: &[f64]| -> Vec<f64> { v.iter().zip(&grid).map(|(a, u)| a * u).collect() };

    for (node, gv) in g.iter().enumerate() {
        push(
            UnimodalityHypothesis::XgIncreasing,
            node,
            first_non_increase(&times_u(gv)),
        );
    }
    for (node, fv) in f.iter().enumerate() {
        push(
            UnimodalityHypothesis::YfIncreasing,
            node,
            first_non_increase(&times_u(fv)),
        );
    }
    for (node, fv) in f.iter().enumerate() {
        push(
            UnimodalityHypothesis::YfConcave,
            node,
            first_convexity(&times_u(fv)),
        );
    }
    for (node, gv) in g.iter().enumerate() {
        push(
            UnimodalityHypothesis::GPositive,
            node,
            gv.iter().position(|v| *v <= 0.0),
        );
    }
    for (node, fv) in f.iter().enumerate() {
        push(
            UnimodalityHypothesis::FPositive,
            node,
            fv.iter().position(|v| *v <= 0.0),
        );
    }

    let witness = failures.first().cloned();
    Ok(UnimodalityHypothesesReport {
        holds: failures.is_empty(),
        failed_hypothesis: witness.as_ref().map(|w| w.hypothesis),
        witness,
        failures,
    })
}

fn first_non_increase(v: &[f64]) -> Option<usize> {
    v.windows(2).position(|w| w[1] - w[0] <= HYPOTHESIS_TOL)
}

fn first_convexity(v: &[f64]) -> Option<usize> {
    v.windows(3)
        .position(|w| w[2] - 2.0 * w[1] + w[0] > HYPOTHESIS_TOL)
        .map(|k| k + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank1(g: &str, f: &str, n: usize) -> InteractionSpec {
        InteractionSpec::rank1_local(
            vec![FunctionSpec::parse(g).unwrap(); n],
            vec![FunctionSpec::parse(f).unwrap(); n],
        )
        .unwrap()
    }

    #[test]
    fn constant_spec_satisfies_monotonicity() {
        let spec = InteractionSpec::constant(DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 1.0, 2.0]))
            .unwrap();
        let r = check_monotonicity_conditions(&spec, 21, DEFAULT_FD_STEP).unwrap();
        assert!(r.holds);
        assert_eq!(r.points_checked, 441);
    }

    #[test]
    fn pandemic_fatigue_spec_satisfies_monotonicity() {
        let spec = InteractionSpec::scalar_scaled(
            vec![FunctionSpec::parse("2 - x").unwrap(); 2],
            "1 + y1 + y2",
        )
        .unwrap();
        let r = check_monotonicity_conditions(&spec, 51, DEFAULT_FD_STEP).unwrap();
        assert!(r.holds, "{:?}", r.violations.first());
    }

    #[test]
    fn squared_decay_violates_own_condition() {
        let spec = InteractionSpec::expression_matrix(2, &["(1-x)^2"; 4]).unwrap();
        let v = check_monotonicity_at(&spec, &[0.9, 0.0], DEFAULT_FD_STEP).unwrap();
        let own: Vec<_> = v
            .iter()
            .filter(|v| v.condition == MonotonicityCondition::OwnSusceptibility && v.i == 0)
            .collect();
        assert_eq!(own.len(), 2);
        // (1 - x)(1 - 3x) at x = 0.9
        assert!((own[0].value - 0.1 * (1.0 - 2.7)).abs() < 1e-6);
        let r = check_monotonicity_conditions(&spec, 11, DEFAULT_FD_STEP).unwrap();
        assert!(!r.holds);
        assert!(r.violations.iter().all(
            |v| v.x[v.i] > 1.0 / 3.0 && v.condition == MonotonicityCondition::OwnSusceptibility
        ));
    }

    #[test]
    fn cross_dependence_is_detected() {
        let spec = InteractionSpec::expression_matrix(2, &["2 - x2", "1", "1", "1"]).unwrap();
        let r = check_monotonicity_conditions(&spec, 5, DEFAULT_FD_STEP).unwrap();
        assert!(!r.holds);
        let v = &r.violations[0];
        assert_eq!(
            (v.condition, v.i, v.j, v.k),
            (MonotonicityCondition::CrossSusceptibility, 0, 0, 1)
        );
        assert!((v.value + 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotonicity_preconditions() {
        let spec = InteractionSpec::constant(DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            check_monotonicity_conditions(&spec, 1, 1e-6),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            check_monotonicity_conditions(&spec, 5, 1e-2),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            check_monotonicity_conditions(&spec, 5, 0.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn reciprocal_feedback_satisfies_hypotheses() {
        let r = check_unimodality_hypotheses(&rank1("1 + x", "1/(1+1.5*y)", 2), 1001).unwrap();
        assert!(r.holds, "{r:?}");
        assert_eq!(r.failed_hypothesis, None);
    }

    #[test]
    fn outer_product_counterexample_fails_first_hypothesis() {
        let spec = InteractionSpec::outer_product(5, 0.8).unwrap();
        let r = check_unimodality_hypotheses(&spec, 1001).unwrap();
        assert!(!r.holds);
        assert_eq!(
            r.failed_hypothesis,
            Some(UnimodalityHypothesis::XgIncreasing)
        );
        let w = r.witness.unwrap();
        assert!((w.witness - 0.5).abs() <= 1e-3, "{w:?}");
        assert!(r
            .failures
            .iter()
            .any(|f| f.hypothesis == UnimodalityHypothesis::FPositive && f.witness == 0.0));
    }

    #[test]
    fn constant_factors_satisfy_hypotheses() {
        let r = check_unimodality_hypotheses(&rank1("1", "1", 3), 1001).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn convex_f_violates_concavity() {
        let r = check_unimodality_hypotheses(&rank1("1", "1 + y", 1), 101).unwrap();
        assert_eq!(r.failed_hypothesis, Some(UnimodalityHypothesis::YfConcave));
    }

    #[test]
    fn hypotheses_need_rank1_spec() {
        let spec = InteractionSpec::constant(DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            check_unimodality_hypotheses(&spec, 1001),
            Err(Error::Usage(_))
        ));
    }
}
