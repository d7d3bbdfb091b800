use std::fmt;

use nalgebra::DMatrix;

use super::expr::{Bindings, EvalError, Expr};
use super::parser::{parse_expression, ParseError, ParseErrorKind};
use crate::error::{Error, Result};
use crate::state::EpidemicState;

/// Number of quasi-random feasible states sampled when a spec is constructed.
pub const VALIDATION_SAMPLES: usize = 10_000;
/// Number of uniform points on `[0, 1]` used to validate a one-variable function.
pub const FUNCTION_SAMPLES: usize = 1001;

/// An expression together with the text it was parsed from.
#[derive(Debug, Clone)]
pub struct ParsedExpr {
    source: String,
    ast: Expr,
}

impl ParsedExpr {
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        Ok(Self {
            source: source.trim().to_string(),
            ast: parse_expression(source, n)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }
}

impl PartialEq for ParsedExpr {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

/// A nonnegative function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionSpec {
    /// `p + q u`
    Affine { p: f64, q: f64 },
    /// `p / (1 + alpha u)`
    ReciprocalAffine { p: f64, alpha: f64 },
    /// An expression in the bare variable `x` or `y`.
    Expression(ParsedExpr),
}

impl FunctionSpec {
    pub fn affine(p: f64, q: f64) -> Self {
        FunctionSpec::Affine { p, q }
    }

    pub fn reciprocal_affine(p: f64, alpha: f64) -> Self {
        FunctionSpec::ReciprocalAffine { p, alpha }
    }

    /// Parse a one-variable expression such as `1 + x` or `1/(1+1.5*y)`.
    pub fn parse(source: &str) -> Result<Self> {
        let parsed = ParsedExpr::parse(source, usize::MAX)?;
        if !parsed.ast.is_univariate() {
            return Err(ParseError {
                kind: ParseErrorKind::UnknownIdentifier,
                offset: 0,
                message: format!(
                    "function '{}' may only use the bare variable x or y",
                    parsed.source
                ),
            }
            .into());
        }
        Ok(FunctionSpec::Expression(parsed))
    }

    pub fn eval(&self, u: f64) -> std::result::Result<f64, EvalError> {
        let v = match self {
            FunctionSpec::Affine { p, q } => p + q * u,
            FunctionSpec::ReciprocalAffine { p, alpha } => {
                let d = 1.0 + alpha * u;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                p / d
            }
            FunctionSpec::Expression(e) => return e.ast.eval(&Bindings::scalar(u)),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Checks finiteness and nonnegativity on a uniform sample of `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        self.first_invalid_point()
            .map_or(Ok(()), |(_, message)| Err(Error::model(message)))
    }

    fn first_invalid_point(&self) -> Option<(f64, String)> {
        (0..FUNCTION_SAMPLES).find_map(|k| {
            let u = k as f64 / (FUNCTION_SAMPLES - 1) as f64;
            match self.eval(u) {
                Ok(v) if v >= 0.0 => None,
                Ok(v) => Some((
                    u,
                    format!("function {self} is negative at u = {u} (value {v})"),
                )),
                Err(e) => Some((u, format!("function {self} at u = {u}: {e}"))),
            }
        })
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Affine { p, q } => write!(f, "{p} + {q}*u"),
            FunctionSpec::ReciprocalAffine { p, alpha } => write!(f, "{p}/(1 + {alpha}*u)"),
            FunctionSpec::Expression(e) => f.write_str(&e.source),
        }
    }
}

/// The state-dependent interaction matrix `A(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionSpec {
    /// A matrix that does not depend on the state.
    Constant { matrix: DMatrix<f64> },
    /// `A_ij = g_i(x_i) f_j(y_j)`.
    Rank1Local {
        g: Vec<FunctionSpec>,
        f: Vec<FunctionSpec>,
    },
    /// `A_ij = h_i(x_i) / d(x, y)`, the same denominator for every entry.
    ScalarScaled {
        numerators: Vec<FunctionSpec>,
        denominator: ParsedExpr,
    },
    /// `A = c (1 - x) y^T`.
    OuterProduct { n: usize, scale: f64 },
    /// Arbitrary entries, row-major.
    ExpressionMatrix { n: usize, entries: Vec<ParsedExpr> },
}

/// Factors `g`, `f` of a rank-one local interaction `A_ij = g_i(x_i) f_j(y_j)`.
#[derive(Debug, Clone)]
pub struct Rank1Factors {
    pub g: Vec<FunctionSpec>,
    pub f: Vec<FunctionSpec>,
}

impl InteractionSpec {
    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        Self::Constant { matrix }.validated()
    }

    pub fn rank1_local(g: Vec<FunctionSpec>, f: Vec<FunctionSpec>) -> Result<Self> {
        Self::rank1_local_unvalidated(g, f).validated()
    }

    /// Skips the construction-time sampling; evaluation still reports negative entries.
    pub fn rank1_local_unvalidated(g: Vec<FunctionSpec>, f: Vec<FunctionSpec>) -> Self {
        Self::Rank1Local { g, f }
    }

    pub fn scalar_scaled(numerators: Vec<FunctionSpec>, denominator: &str) -> Result<Self> {
        let n = numerators.len();
        let denominator = ParsedExpr::parse(denominator, n)?;
        if denominator.ast.uses_local() {
            return Err(Error::Config(format!(
                "denominator '{}' must use indexed variables (x1, y2, ...)",
                denominator.source
            )));
        }
        Self::ScalarScaled {
            numerators,
            denominator,
        }
        .validated()
    }

    pub fn outer_product(n: usize, scale: f64) -> Result<Self> {
        Self::OuterProduct { n, scale }.validated()
    }

    /// `entries` is row-major with `n * n` sources.
    pub fn expression_matrix(n: usize, entries: &[impl AsRef<str>]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Config(format!(
                "expression matrix needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        let entries = entries
            .iter()
            .map(|s| ParsedExpr::parse(s.as_ref(), n))
            .collect::<Result<Vec<_>>>()?;
        Self::ExpressionMatrix { n, entries }.validated()
    }

    pub fn n(&self) -> usize {
        match self {
            InteractionSpec::Constant { matrix } => matrix.nrows(),
            InteractionSpec::Rank1Local { g, .. } => g.len(),
            InteractionSpec::ScalarScaled { numerators, .. } => numerators.len(),
            InteractionSpec::OuterProduct { n, .. }
            | InteractionSpec::ExpressionMatrix { n, .. } => *n,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            InteractionSpec::Constant { .. } => "constant",
            InteractionSpec::Rank1Local { .. } => "rank1_local",
            InteractionSpec::ScalarScaled { .. } => "scalar_scaled",
            InteractionSpec::OuterProduct { .. } => "outer_product",
            InteractionSpec::ExpressionMatrix { .. } => "expression_matrix",
        }
    }

    /// The local rank-one factorization, when the spec has one.
    pub fn rank1_factors(&self) -> Option<Rank1Factors> {
        match self {
            InteractionSpec::Rank1Local { g, f } => Some(Rank1Factors {
                g: g.clone(),
                f: f.clone(),
            }),
            InteractionSpec::OuterProduct { n, scale } => Some(Rank1Factors {
                g: vec![FunctionSpec::affine(*scale, -*scale); *n],
                f: vec![FunctionSpec::affine(0.0, 1.0); *n],
            }),
            _ => None,
        }
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config(
                "interaction must have at least one node".into(),
            ));
        }
        match self {
            InteractionSpec::Constant { matrix } => {
                if !matrix.is_square() {
                    return Err(Error::Config(
                        "constant interaction matrix must be square".into(),
                    ));
                }
                if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(Error::model(format!(
                        "constant interaction matrix has entry {v}; entries must be finite and nonnegative"
                    )));
                }
            }
            InteractionSpec::Rank1Local { g, f } => {
                if f.len() != g.len() {
                    return Err(Error::Config(format!(
                        "rank-one factors have different lengths ({} and {})",
                        g.len(),
                        f.len()
                    )));
                }
            }
            InteractionSpec::OuterProduct { scale, .. } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(Error::model(format!(
                        "outer-product scale must be nonnegative, got {scale}"
                    )));
                }
            }
            InteractionSpec::ScalarScaled { .. } | InteractionSpec::ExpressionMatrix { .. } => {}
        }
        Ok(())
    }

    fn validated(self) -> Result<Self> {
        self.check_shape()?;
        match &self {
            InteractionSpec::Constant { .. } | InteractionSpec::OuterProduct { .. } => {}
            InteractionSpec::Rank1Local { g, f } => {
                let n = g.len();
                check_factors(g, "g", |u| (vec![u; n], vec![0.0; n]))?;
                check_factors(f, "f", |u| (vec![0.0; n], vec![u; n]))?;
            }
            InteractionSpec::ScalarScaled { .. } | InteractionSpec::ExpressionMatrix { .. } => {
                self.validate_on_samples(VALIDATION_SAMPLES)?;
            }
        }
        Ok(self)
    }

    /// Evaluates the matrix on `samples` quasi-random feasible states plus the vertices of
    /// the feasible set and rejects the spec on the first negative or failed entry.
    pub fn validate_on_samples(&self, samples: usize) -> Result<()> {
        let n = self.n();
        let mut states: Vec<EpidemicState> = vec![
            EpidemicState::disease_free(vec![0.0; n]),
            EpidemicState::disease_free(vec![1.0; n]),
            EpidemicState {
                x: vec![0.0; n],
                y: vec![1.0; n],
            },
        ];
        let mut halton = Halton::new(2 * n);
        states.extend((0..samples).map(|_| {
            let p = halton.next_point();
            let x = p[..n].to_vec();
            let y = (0..n).map(|i| p[n + i] * (1.0 - x[i])).collect();
            EpidemicState { x, y }
        }));
        for s in &states {
            self.evaluate_matrix(s)?;
        }
        Ok(())
    }

    /// Evaluates `A(x, y)` without checking signs.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        let fail = |i: usize, j: usize, e: EvalError| Error::ModelValidity {
            message: format!("interaction entry ({}, {}) failed: {e}", i + 1, j + 1),
            entry: Some((i, j)),
            witness: Some(EpidemicState {
                x: x.to_vec(),
                y: y.to_vec(),
            }),
        };
        if x.len() != n || y.len() != n {
            return Err(Error::Config(format!(
                "state has {} subpopulations but the interaction has {n}",
                x.len()
            )));
        }
        Ok(match self {
            InteractionSpec::Constant { matrix } => matrix.clone(),
            InteractionSpec::Rank1Local { g, f } => {
                let gv = g
                    .iter()
                    .enumerate()
                    .map(|(i, gi)| gi.eval(x[i]).map_err(|e| fail(i, 0, e)))
                    .collect::<Result<Vec<_>>>()?;
                let fv = f
                    .iter()
                    .enumerate()
                    .map(|(j, fj)| fj.eval(y[j]).map_err(|e| fail(0, j, e)))
                    .collect::<Result<Vec<_>>>()?;
                DMatrix::from_fn(n, n, |i, j| gv[i] * fv[j])
            }
            InteractionSpec::ScalarScaled {
                numerators,
                denominator,
            } => {
                let d = denominator
                    .ast
                    .eval(&Bindings::global(x, y))
                    .map_err(|e| fail(0, 0, e))?;
                if d == 0.0 {
                    return Err(fail(0, 0, EvalError::DivisionByZero));
                }
                let h = numerators
                    .iter()
                    .enumerate()
                    .map(|(i, hi)| hi.eval(x[i]).map_err(|e| fail(i, 0, e)))
                    .collect::<Result<Vec<_>>>()?;
                DMatrix::from_fn(n, n, |i, _| h[i] / d)
            }
            InteractionSpec::OuterProduct { scale, .. } => {
                DMatrix::from_fn(n, n, |i, j| scale * (1.0 - x[i]) * y[j])
            }
            InteractionSpec::ExpressionMatrix { entries, .. } => {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = entries[i * n + j]
                            .ast
                            .eval(&Bindings::entry(x, y, i, j))
                            .map_err(|e| fail(i, j, e))?;
                    }
                }
                m
            }
        })
    }

    /// Evaluates `A` at `state` and rejects negative entries, reporting the entry and state.
    pub fn evaluate_matrix(&self, state: &EpidemicState) -> Result<DMatrix<f64>> {
        let m = self.evaluate(&state.x, &state.y)?;
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] < 0.0 {
                    return Err(Error::ModelValidity {
                        message: format!(
                            "interaction entry ({}, {}) is negative ({}) at x = {:?}, y = {:?}",
                            i + 1,
                            j + 1,
                            m[(i, j)],
                            state.x,
                            state.y
                        ),
                        entry: Some((i, j)),
                        witness: Some(state.clone()),
                    });
                }
            }
        }
        Ok(m)
    }
}

/// Evaluates the interaction matrix at a state, rejecting negative entries.
pub fn evaluate_matrix(spec: &InteractionSpec, state: &EpidemicState) -> Result<DMatrix<f64>> {
    spec.evaluate_matrix(state)
}

/// Halton low-discrepancy sequence in `dim` dimensions.
struct Halton {
    bases: Vec<u64>,
    index: u64,
}

impl Halton {
    fn new(dim: usize) -> Self {
        let mut bases = Vec::with_capacity(dim);
        let mut candidate = 2u64;
        while bases.len() < dim {
            if bases.iter().all(|p| !candidate.is_multiple_of(*p)) {
                bases.push(candidate);
            }
            candidate += 1;
        }
        // Skip the first points, which are poorly spread in high dimensions.
        Self { bases, index: 20 }
    }

    fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        self.bases
            .iter()
            .map(|&b| {
                let mut f = 1.0;
                let mut r = 0.0;
                let mut i = self.index;
                while i > 0 {
                    f /= b as f64;
                    r += f * (i % b) as f64;
                    i /= b;
                }
                r
            })
            .collect()
    }
}

/// Rejects the first factor that is negative or undefined somewhere on `[0, 1]`, naming
/// the feasible state at which it fails.
fn check_factors(
    funcs: &[FunctionSpec],
    name: &str,
    state_at: impl Fn(f64) -> (Vec<f64>, Vec<f64>),
) -> Result<()> {
    for (i, func) in funcs.iter().enumerate() {
        if let Some((u, message)) = func.first_invalid_point() {
            let (x, y) = state_at(u);
            return Err(Error::ModelValidity {
                message: format!("{name}_{}: {message}", i + 1),
                entry: None,
                witness: EpidemicState::new(x, y).ok(),
            });
        }
    }
    Ok(())
}
