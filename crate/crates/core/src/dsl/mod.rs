//! Interaction-matrix specifications and the expression language used to write them.

mod checks;
mod expr;
mod parser;
mod spec;

pub use checks::{
    check_monotonicity_at, check_monotonicity_conditions, check_unimodality_hypotheses,
    HypothesisFailure, MonotonicityCondition, MonotonicityReport, MonotonicityViolation,
    UnimodalityHypothesesReport, UnimodalityHypothesis, DEFAULT_FD_STEP,
    DEFAULT_HYPOTHESIS_SAMPLES, HYPOTHESIS_TOL,
};
pub use expr::{BinOp, Bindings, EvalError, Expr, Func, Var};
pub use parser::{parse_expression, ParseError, ParseErrorKind};
pub use spec::{
    evaluate_matrix, FunctionSpec, InteractionSpec, ParsedExpr, Rank1Factors, FUNCTION_SAMPLES,
    VALIDATION_SAMPLES,
};
