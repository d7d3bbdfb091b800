//! Aggregate infection curve of rank-one local models and its peak structure.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{
    check_unimodality_hypotheses, InteractionSpec, Rank1Factors, DEFAULT_HYPOTHESIS_SAMPLES,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorOptions, Trajectory};
use crate::state::{EpidemicState, ModelParams};

pub const DEFAULT_NOISE_TOL: f64 = 1e-6;
/// Tolerance reduction applied when a curve is re-integrated to confirm its shape.
pub const REINTEGRATION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    MonotoneDecreasing,
    Unimodal,
    Multimodal,
    MonotoneIncreasingTruncated,
}

impl CurveShape {
    /// Shapes allowed for a model satisfying the unimodality hypotheses.
    pub fn is_unimodal(self) -> bool {
        matches!(self, CurveShape::MonotoneDecreasing | CurveShape::Unimodal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub kind: ExtremumKind,
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeAnalysis {
    pub shape: CurveShape,
    pub peak_time: Option<f64>,
    pub peak_index: Option<usize>,
    pub reversals: usize,
    pub extrema: Vec<Extremum>,
}

impl ShapeAnalysis {
    pub fn maxima(&self) -> usize {
        self.extrema
            .iter()
            .filter(|e| e.kind == ExtremumKind::Max)
            .count()
    }
}

/// Classifies a sampled curve by counting direction reversals with hysteresis: a reversal
/// is confirmed once the curve retreats from its running extreme by more than
/// `noise_tol * max(values)`.
pub fn detect_unimodality(times: &[f64], values: &[f64], noise_tol: f64) -> Result<ShapeAnalysis> {
    if times.len() != values.len() {
        return Err(Error::Usage(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::Usage(format!(
            "need at least 3 samples, got {}",
            times.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage(
            "sample times must be strictly increasing".into(),
        ));
    }
    if !(noise_tol >= 0.0) {
        return Err(Error::Usage(format!(
            "noise tolerance must be nonnegative, got {noise_tol}"
        )));
    }
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = noise_tol * vmax.max(0.0);
    let at = |kind, index: usize| Extremum {
        kind,
        index,
        time: times[index],
        value: values[index],
    };

    let Some(first) = values.windows(2).position(|w| w[1] != w[0]) else {
        return Ok(ShapeAnalysis {
            shape: CurveShape::MonotoneDecreasing,
            peak_time: Some(times[0]),
            peak_index: Some(0),
            reversals: 0,
            extrema: vec![at(ExtremumKind::Max, 0)],
        });
    };
    let starts_up = values[first + 1] > values[first];
    let mut up = starts_up;
    let mut extrema = Vec::new();
    if !starts_up {
        extrema.push(at(ExtremumKind::Max, 0));
    }
    let mut ext = first;
    let mut reversals = 0;
    for k in first + 1..values.len() {
        let v = values[k];
        if up {
            if v > values[ext] {
                ext = k;
            } else if values[ext] - v > h {
                extrema.push(at(ExtremumKind::Max, ext));
                reversals += 1;
                up = false;
                ext = k;
            }
        } else if v < values[ext] {
            ext = k;
        } else if v - values[ext] > h {
            extrema.push(at(ExtremumKind::Min, ext));
            reversals += 1;
            up = true;
            ext = k;
        }
    }
    if up {
        extrema.push(at(ExtremumKind::Max, ext));
    }

    let (shape, peak_index) = match (starts_up, reversals) {
        (false, 0) => (CurveShape::MonotoneDecreasing, Some(0)),
        (true, 0) => (CurveShape::MonotoneIncreasingTruncated, None),
        (true, 1) => {
            let k = extrema[0].index;
            (CurveShape::Unimodal, Some(k))
        }
        _ => (CurveShape::Multimodal, None),
    };
    let peak_time = peak_index.map(|k| match shape {
        CurveShape::Unimodal => refine_peak(times, values, k),
        _ => times[k],
    });
    Ok(ShapeAnalysis {
        shape,
        peak_time,
        peak_index,
        reversals,
        extrema,
    })
}

/// Vertex of the parabola through the samples around `k`, or `times[k]` when that is not a
/// proper interior maximum.
fn refine_peak(times: &[f64], values: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= times.len() {
        return times[k];
    }
    let (t0, t1, t2) = (times[k - 1], times[k], times[k + 1]);
    let (v0, v1, v2) = (values[k - 1], values[k], values[k + 1]);
    let denom = (t0 - t1) * (t0 - t2) * (t1 - t2);
    let a = (t2 * (v1 - v0) + t1 * (v0 - v2) + t0 * (v2 - v1)) / denom;
    let b = (t2 * t2 * (v0 - v1) + t1 * t1 * (v2 - v0) + t0 * t0 * (v1 - v2)) / denom;
    if !(a < 0.0) {
        return t1;
    }
    let vertex = -b / (2.0 * a);
    if vertex.is_finite() && vertex >= t0 && vertex <= t2 {
        vertex
    } else {
        t1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(flatten)]
    pub analysis: ShapeAnalysis,
}

fn factors_of(spec: &InteractionSpec) -> Result<Rank1Factors> {
    spec.rank1_factors().ok_or_else(|| {
        Error::Usage(format!(
            "the aggregate infection curve needs a rank-one local interaction, got {}",
            spec.kind_name()
        ))
    })
}

/// `sum_j f_j(y_j) y_j`.
pub fn aggregate_value(factors: &Rank1Factors, y: &[f64]) -> Result<f64> {
    factors
        .f
        .iter()
        .zip(y)
        .map(|(f, &yj)| {
            f.eval(yj)
                .map(|v| v * yj)
                .map_err(|e| Error::model(format!("f at y = {yj}: {e}")))
        })
        .sum()
}

/// Evaluates the aggregate infection curve along a trajectory and classifies its shape.
pub fn aggregate_curve(
    traj: &Trajectory,
    spec: &InteractionSpec,
    noise_tol: f64,
) -> Result<AggregateCurve> {
    let factors = factors_of(spec)?;
    let values = traj
        .states
        .iter()
        .map(|s| aggregate_value(&factors, &s.y))
        .collect::<Result<Vec<f64>>>()?;
    let analysis = if values.len() >= 3 {
        detect_unimodality(&traj.times, &values, noise_tol)?
    } else {
        let rising = values.len() == 2 && values[1] > values[0];
        let last = values.len() - 1;
        let max = |index: usize| Extremum {
            kind: ExtremumKind::Max,
            index,
            time: traj.times[index],
            value: values[index],
        };
        if rising {
            ShapeAnalysis {
                shape: CurveShape::MonotoneIncreasingTruncated,
                peak_time: None,
                peak_index: None,
                reversals: 0,
                extrema: vec![max(last)],
            }
        } else {
            ShapeAnalysis {
                shape: CurveShape::MonotoneDecreasing,
                peak_time: Some(traj.times[0]),
                peak_index: Some(0),
                reversals: 0,
                extrema: vec![max(0)],
            }
        }
    };
    Ok(AggregateCurve {
        times: traj.times.clone(),
        values,
        analysis,
    })
}

pub fn write_curve_csv(curve: &AggregateCurve, mut w: impl Write) -> Result<()> {
    writeln!(w, "t,ybar")?;
    for (t, v) in curve.times.iter().zip(&curve.values) {
        writeln!(w, "{t:.16e},{v:.16e}")?;
    }
    Ok(())
}

/// Per-pair infection pressure `h_ij = x_i g_i(x_i) f_j(y_j) y_j` at one state.
pub fn force_of_infection_at(
    spec: &InteractionSpec,
    state: &EpidemicState,
) -> Result<DMatrix<f64>> {
    let factors = factors_of(spec)?;
    let n = state.n();
    let eval = |f: &crate::dsl::FunctionSpec, u: f64| {
        f.eval(u)
            .map_err(|e| Error::model(format!("{f} at {u}: {e}")))
    };
    let mut gx = Vec::with_capacity(n);
    let mut fy = Vec::with_capacity(n);
    for i in 0..n {
        gx.push(state.x[i] * eval(&factors.g[i], state.x[i])?);
        fy.push(state.y[i] * eval(&factors.f[i], state.y[i])?);
    }
    Ok(DMatrix::from_fn(n, n, |i, j| gx[i] * fy[j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceOfInfection {
    pub times: Vec<f64>,
    pub h: Vec<DMatrix<f64>>,
}

pub fn force_of_infection(traj: &Trajectory, spec: &InteractionSpec) -> Result<ForceOfInfection> {
    Ok(ForceOfInfection {
        times: traj.times.clone(),
        h: traj
            .states
            .iter()
            .map(|s| force_of_infection_at(spec, s))
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientOptions {
    pub integrator: IntegratorOptions,
    pub noise_tol: f64,
}

impl TransientOptions {
    pub fn for_gamma(gamma: f64) -> Self {
        Self {
            integrator: IntegratorOptions::for_gamma(gamma),
            noise_tol: DEFAULT_NOISE_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransientAnalysis {
    pub trajectory: Trajectory,
    pub curve: AggregateCurve,
    /// Whether the curve was flagged and recomputed at tighter tolerances.
    pub reintegrated: bool,
}

/// Integrates and classifies the aggregate curve. A curve that is not unimodal is
/// recomputed once with tolerances tightened by [`REINTEGRATION_FACTOR`] and the tighter
/// result is kept.
pub fn analyze_transient(
    params: &ModelParams,
    initial: &EpidemicState,
    opts: &TransientOptions,
) -> Result<TransientAnalysis> {
    let trajectory = integrate(params, initial, &opts.integrator)?;
    let curve = aggregate_curve(&trajectory, params.interaction(), opts.noise_tol)?;
    if curve.analysis.shape.is_unimodal() {
        return Ok(TransientAnalysis {
            trajectory,
            curve,
            reintegrated: false,
        });
    }
    let tight = opts.integrator.tightened(REINTEGRATION_FACTOR);
    let trajectory = integrate(params, initial, &tight)?;
    let curve = aggregate_curve(&trajectory, params.interaction(), opts.noise_tol)?;
    Ok(TransientAnalysis {
        trajectory,
        curve,
        reintegrated: true,
    })
}

/// Random feasible initial condition with skewed per-node magnitudes: `y_i = u^(1 + 4v)`,
/// `x_i = w (1 - y_i)`. Vectors with `x = 0` or `y = 0` are redrawn.
pub fn sample_initial_condition(rng: &mut impl Rng, n: usize) -> EpidemicState {
    loop {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let yi = rng.gen::<f64>().powf(1.0 + 4.0 * rng.gen::<f64>());
            x.push(rng.gen::<f64>() * (1.0 - yi));
            y.push(yi);
        }
        if x.iter().any(|v| *v > 0.0) && y.iter().any(|v| *v > 0.0) {
            return EpidemicState { x, y };
        }
    }
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub initial: EpidemicState,
    pub shape: CurveShape,
    pub maxima: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub trials: usize,
    pub seed: u64,
    pub all_unimodal: bool,
    pub counterexamples: Vec<Counterexample>,
    pub monotone_decreasing: usize,
    pub unimodal: usize,
    pub reintegrated: usize,
    /// Trials whose shape disagrees with the sign of the initial slope of the curve.
    pub slope_mismatches: Vec<usize>,
}

/// Integrates `trials` random initial conditions and checks that every aggregate curve is
/// unimodal or monotone decreasing. Requires the unimodality hypotheses to hold.
pub fn verify_unimodality(
    params: &ModelParams,
    trials: usize,
    seed: u64,
    opts: &TransientOptions,
) -> Result<VerificationReport> {
    let report = check_unimodality_hypotheses(params.interaction(), DEFAULT_HYPOTHESIS_SAMPLES)?;
    if let Some(w) = report.witness {
        return Err(Error::Precondition(format!(
            "unimodality hypothesis failed: {} (node {}, u = {})",
            w.hypothesis.describe(),
            w.node + 1,
            w.witness
        )));
    }
    if trials == 0 {
        return Err(Error::Usage("need at least one trial".into()));
    }
    let n = params.n();
    let results = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let initial = sample_initial_condition(&mut trial_rng(seed, trial as u64), n);
            let a = analyze_transient(params, &initial, opts)?;
            Ok((initial, a))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = VerificationReport {
        trials,
        seed,
        all_unimodal: true,
        counterexamples: Vec::new(),
        monotone_decreasing: 0,
        unimodal: 0,
        reintegrated: 0,
        slope_mismatches: Vec::new(),
    };
    for (trial, (initial, a)) in results.into_iter().enumerate() {
        let shape = a.curve.analysis.shape;
        out.reintegrated += a.reintegrated as usize;
        match shape {
            CurveShape::MonotoneDecreasing => out.monotone_decreasing += 1,
            CurveShape::Unimodal => out.unimodal += 1,
            _ => {
                out.all_unimodal = false;
                out.counterexamples.push(Counterexample {
                    trial,
                    initial,
                    shape,
                    maxima: a.curve.analysis.maxima(),
                });
                continue;
            }
        }
        let v = &a.curve.values;
        let rising = v.len() > 1 && v[1] > v[0];
        if rising != (shape == CurveShape::Unimodal) {
            out.slope_mismatches.push(trial);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub budget: usize,
    pub seed: u64,
    pub best_trial: usize,
    pub initial: EpidemicState,
    pub reversals: usize,
    pub maxima: usize,
    pub shape: CurveShape,
    pub extrema: Vec<Extremum>,
    /// Trials whose curve was classified multimodal.
    pub multimodal_trials: usize,
    /// Trials skipped because integration failed.
    pub failed_trials: usize,
}

/// Random search for an initial condition whose aggregate curve has as many confirmed
/// reversals as possible. Ties go to the lowest trial index.
pub fn search_multimodal_ic(
    params: &ModelParams,
    budget: usize,
    seed: u64,
    opts: &TransientOptions,
) -> Result<SearchReport> {
    factors_of(params.interaction())?;
    if budget == 0 {
        return Err(Error::Usage("search budget must be at least 1".into()));
    }
    let n = params.n();
    let results: Vec<Option<(usize, usize, CurveShape)>> = (0..budget)
        .into_par_iter()
        .map(|trial| {
            let initial = sample_initial_condition(&mut trial_rng(seed, trial as u64), n);
            analyze_transient(params, &initial, opts).ok().map(|a| {
                let s = &a.curve.analysis;
                (s.reversals, s.maxima(), s.shape)
            })
        })
        .collect();
    let failed_trials = results.iter().filter(|r| r.is_none()).count();
    let multimodal_trials = results
        .iter()
        .flatten()
        .filter(|r| r.2 == CurveShape::Multimodal)
        .count();
    let mut best: Option<(usize, usize)> = None;
    for (trial, r) in results.iter().enumerate() {
        if let Some((rev, _, _)) = r {
            if best.is_none_or(|(_, b)| *rev > b) {
                best = Some((trial, *rev));
            }
        }
    }
    let Some((best_trial, _)) = best else {
        return Err(Error::Numerical {
            message: format!("all {budget} search trials failed to integrate"),
            best_estimate: f64::NAN,
        });
    };
    let initial = sample_initial_condition(&mut trial_rng(seed, best_trial as u64), n);
    let a = analyze_transient(params, &initial, opts)?;
    let s = a.curve.analysis;
    Ok(SearchReport {
        budget,
        seed,
        best_trial,
        initial,
        reversals: s.reversals,
        maxima: s
            .extrema
            .iter()
            .filter(|e| e.kind == ExtremumKind::Max)
            .count(),
        shape: s.shape,
        extrema: s.extrema,
        multimodal_trials,
        failed_trials,
    })
}
