//! Adaptive Dormand-Prince 5(4) integration of the epidemic ODEs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{evaluate_vector_field, vector_field_unchecked, EpidemicState, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    pub y_converged_threshold: f64,
    pub max_step: f64,
    pub clamp_eps: f64,
}

impl IntegratorOptions {
    pub fn for_gamma(gamma: f64) -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            t_max: 1e4 / gamma,
            y_converged_threshold: 1e-10,
            max_step: 0.05 / gamma,
            clamp_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("t_max", self.t_max),
            ("y_converged_threshold", self.y_converged_threshold),
            ("max_step", self.max_step),
            ("clamp_eps", self.clamp_eps),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "integrator.{name} must be positive, got {v}"
                )));
            }
        }
        if self.rel_tol > 1e-3 || self.abs_tol > 1e-3 {
            return Err(Error::Config(
                "integrator tolerances must not exceed 1e-3".into(),
            ));
        }
        Ok(())
    }

    /// Same options with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    ConvergedToEquilibrium,
    ReachedTMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<EpidemicState>,
    pub terminal: Terminal,
}

impl Trajectory {
    pub fn initial(&self) -> &EpidemicState {
        &self.states[0]
    }

    pub fn last(&self) -> &EpidemicState {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Packed `[x; y]` helpers.
struct System<'a> {
    params: &'a ModelParams,
    n: usize,
}

impl System<'_> {
    fn rhs(&self, u: &[f64]) -> Result<Vec<f64>> {
        let d = vector_field_unchecked(self.params, &u[..self.n], &u[self.n..])?;
        Ok([d.dx, d.dy].concat())
    }

    fn rhs_checked(&self, u: &[f64]) -> Result<Vec<f64>> {
        let d = evaluate_vector_field(self.params, &self.unpack(u))?;
        Ok([d.dx, d.dy].concat())
    }

    fn unpack(&self, u: &[f64]) -> EpidemicState {
        EpidemicState {
            x: u[..self.n].to_vec(),
            y: u[self.n..].to_vec(),
        }
    }
}

fn combine(u: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = u.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, kv) in out.iter_mut().zip(k.iter()) {
                *o += h * c * kv;
            }
        }
    }
    out
}

fn error_norm(e: &[f64], u0: &[f64], u1: &[f64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = e
        .iter()
        .zip(u0.iter().zip(u1))
        .map(|(ei, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (sum / e.len() as f64).sqrt()
}

fn initial_step(sys: &System<'_>, u0: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64 {
    let scaled = |v: &[f64]| {
        let s: f64 = v
            .iter()
            .zip(u0)
            .map(|(vi, ui)| (vi / (opts.abs_tol + opts.rel_tol * ui.abs())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = scaled(u0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(opts.max_step);
    let u1 = combine(u0, h0, &[(1.0, f0)]);
    let Ok(f1) = sys.rhs(&u1) else {
        return h0;
    };
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

enum Proposal {
    Feasible(Vec<f64>),
    Infeasible(String),
}

/// Clamps round-off violations of the feasible set; reports anything larger.
fn project_step(u: Vec<f64>, n: usize, eps: f64) -> Proposal {
    let mut u = u;
    for (k, v) in u.iter_mut().enumerate() {
        if *v < -eps || *v > 1.0 + eps || !v.is_finite() {
            let name = if k < n { "x" } else { "y" };
            return Proposal::Infeasible(format!("{name}_{} = {v}", k % n + 1));
        }
        *v = v.clamp(0.0, 1.0);
    }
    for i in 0..n {
        let excess = u[i] + u[n + i] - 1.0;
        if excess > eps {
            return Proposal::Infeasible(format!("x_{0} + y_{0} = {1}", i + 1, 1.0 + excess));
        }
        if excess > 0.0 {
            u[n + i] = (1.0 - u[i]).max(0.0);
        }
    }
    Proposal::Feasible(u)
}

/// Raises each `y_i` to `y_i(t0) exp(-gamma (t - t0))`, a lower bound every exact
/// solution satisfies because new infections are nonnegative. Keeps tiny infected
/// fractions from being rounded to zero.
fn floor_infected(u: &mut [f64], u0: &[f64], n: usize, decay: f64) {
    for i in 0..n {
        let floor = (u0[n + i] * decay).min((1.0 - u[i]).max(0.0));
        if u[n + i] < floor {
            u[n + i] = floor;
        }
    }
}

fn project_sample(u: &mut [f64], n: usize) {
    for v in u.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    for i in 0..n {
        if u[i] + u[n + i] > 1.0 {
            u[n + i] = 1.0 - u[i];
        }
    }
}

/// Integrates from `initial` until every `y_i` drops below the convergence threshold or
/// `t_max` is reached. Samples are spaced at most `max_step` apart; dense output fills in
/// between accepted steps.
pub fn integrate(
    params: &ModelParams,
    initial: &EpidemicState,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    params.check_dims(initial)?;
    if !initial.is_feasible(0.0) {
        return Err(Error::Config(format!(
            "initial state is not feasible: x = {:?}, y = {:?}",
            initial.x, initial.y
        )));
    }
    let n = params.n();
    let gamma = params.gamma();
    let sys = System { params, n };
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let converged = |u: &[f64]| u[n..].iter().all(|v| *v < opts.y_converged_threshold);

    let mut t: f64 = 0.0;
    let mut u: Vec<f64> = [initial.x.clone(), initial.y.clone()].concat();
    if converged(&u) {
        return Ok(Trajectory {
            times,
            states,
            terminal: Terminal::ConvergedToEquilibrium,
        });
    }
    let mut k1 = sys.rhs_checked(&u)?;
    let mut h = initial_step(&sys, &u, &k1, opts);
    let mut last_rejected = false;

    loop {
        let min_step = 1e-14 * t.max(1.0);
        let h_try = h.min(opts.t_max - t);
        let last = h_try < h || t + h_try >= opts.t_max;
        let step = try_step(&sys, &u, &k1, h_try)?;
        let (u_new, k7, err) = match step {
            StepResult::Proposed {
                u_new,
                k7,
                err_vec,
                k,
            } => {
                let err = error_norm(&err_vec, &u, &u_new, opts);
                (u_new, (k7, k), err)
            }
            StepResult::EvalFailed(reason) => {
                h = h_try * 0.5;
                if h < min_step {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: format!("vector field could not be evaluated: {reason}"),
                        state: sys.unpack(&u),
                    });
                }
                last_rejected = true;
                continue;
            }
        };
        if !(err <= 1.0) {
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(MIN_FACTOR)
            } else {
                MIN_FACTOR
            };
            h = h_try * factor;
            if h < min_step {
                return Err(Error::StepSizeUnderflow {
                    t,
                    state: sys.unpack(&u),
                });
            }
            last_rejected = true;
            continue;
        }
        let mut u_acc = match project_step(u_new.clone(), n, opts.clamp_eps) {
            Proposal::Feasible(v) => v,
            Proposal::Infeasible(reason) => {
                h = h_try * 0.5;
                if h < min_step {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: format!("state left the feasible set: {reason}"),
                        state: sys.unpack(&u),
                    });
                }
                last_rejected = true;
                continue;
            }
        };

        let t_new = if last { opts.t_max } else { t + h_try };
        floor_infected(&mut u_acc, &u, n, (-gamma * (t_new - t)).exp());
        let (k7v, k) = k7;
        let gaps = ((t_new - t) / opts.max_step).ceil() as usize;
        if gaps > 1 {
            let dense = DenseStep::new(&u, &u_new, &k, &k7v, h_try);
            for m in 1..gaps {
                let theta = m as f64 / gaps as f64;
                let mut v = dense.eval(theta);
                project_sample(&mut v, n);
                floor_infected(&mut v, &u, n, (-gamma * theta * (t_new - t)).exp());
                times.push(t + theta * (t_new - t));
                states.push(sys.unpack(&v));
            }
        }
        t = t_new;
        u = u_acc;
        times.push(t);
        states.push(sys.unpack(&u));

        if converged(&u) {
            return Ok(Trajectory {
                times,
                states,
                terminal: Terminal::ConvergedToEquilibrium,
            });
        }
        if t >= opts.t_max {
            return Ok(Trajectory {
                times,
                states,
                terminal: Terminal::ReachedTMax,
            });
        }

        let mut factor = (SAFETY * err.max(1e-10).powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR);
        if last_rejected {
            factor = factor.min(1.0);
        }
        h = h_try * factor;
        last_rejected = false;
        k1 = sys.rhs_checked(&u)?;
    }
}

enum StepResult {
    Proposed {
        u_new: Vec<f64>,
        k7: Vec<f64>,
        err_vec: Vec<f64>,
        k: [Vec<f64>; 6],
    },
    EvalFailed(String),
}

fn try_step(sys: &System<'_>, u: &[f64], k1: &[f64], h: f64) -> Result<StepResult> {
    macro_rules! stage {
        ($e:expr) => {
            match sys.rhs(&$e) {
                Ok(v) => v,
                Err(e @ Error::ModelValidity { .. }) => {
                    return Ok(StepResult::EvalFailed(e.to_string()))
                }
                Err(e) => return Err(e),
            }
        };
    }
    let k2 = stage!(combine(u, h, &[(A21, k1)]));
    let k3 = stage!(combine(u, h, &[(A31, k1), (A32, &k2)]));
    let k4 = stage!(combine(u, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = stage!(combine(
        u,
        h,
        &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]
    ));
    let k6 = stage!(combine(
        u,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]
    ));
    let u_new = combine(
        u,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = stage!(u_new);
    let err_vec = combine(
        &vec![0.0; u.len()],
        h,
        &[
            (E1, k1),
            (E3, &k3),
            (E4, &k4),
            (E5, &k5),
            (E6, &k6),
            (E7, &k7),
        ],
    );
    Ok(StepResult::Proposed {
        u_new,
        k7,
        err_vec,
        k: [k1.to_vec(), k2, k3, k4, k5, k6],
    })
}

/// Fourth-order continuous extension of a Dormand-Prince step.
struct DenseStep {
    r: [Vec<f64>; 5],
}

impl DenseStep {
    fn new(u0: &[f64], u1: &[f64], k: &[Vec<f64>; 6], k7: &[f64], h: f64) -> Self {
        let m = u0.len();
        let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; m]);
        for i in 0..m {
            let diff = u1[i] - u0[i];
            let bspl = h * k[0][i] - diff;
            r[0][i] = u0[i];
            r[1][i] = diff;
            r[2][i] = bspl;
            r[3][i] = diff - h * k7[i] - bspl;
            r[4][i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k7[i]);
        }
        Self { r }
    }

    fn eval(&self, theta: f64) -> Vec<f64> {
        let t1 = 1.0 - theta;
        let r = &self.r;
        (0..r[0].len())
            .map(|i| {
                r[0][i] + theta * (r[1][i] + t1 * (r[2][i] + theta * (r[3][i] + t1 * r[4][i])))
            })
            .collect()
    }
}

/// The disease-free equilibrium a converged trajectory approaches, with `y` set to zero and
/// `x` clamped to `[0, x(0)]`.
pub fn limit_equilibrium(traj: &Trajectory) -> Result<EpidemicState> {
    if traj.terminal != Terminal::ConvergedToEquilibrium {
        return Err(Error::Usage(
            "trajectory reached t_max before converging; no limit equilibrium available".into(),
        ));
    }
    let x0 = &traj.initial().x;
    let x = traj
        .last()
        .x
        .iter()
        .zip(x0)
        .map(|(x, x0)| x.clamp(0.0, *x0))
        .collect();
    Ok(EpidemicState::disease_free(x))
}

/// Writes `t, x_1..x_n, y_1..y_n[, ybar]` rows with 17 significant digits.
pub fn write_csv(traj: &Trajectory, ybar: Option<&[f64]>, mut w: impl Write) -> Result<()> {
    let n = traj.initial().n();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("y_{i}")));
    if ybar.is_some() {
        header.push("ybar".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        row.extend(s.x.iter().chain(&s.y).map(|v| format!("{v:.16e}")));
        if let Some(b) = ybar {
            row.push(format!("{:.16e}", b[k]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{FunctionSpec, InteractionSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_sir(beta: f64) -> ModelParams {
        ModelParams::new(
            1.0,
            InteractionSpec::constant(DMatrix::from_element(1, 1, beta)).unwrap(),
        )
        .unwrap()
    }

    fn final_size_oracle(beta: f64, x0: f64, y0: f64) -> f64 {
        // root of x - x0 exp(-beta (x0 + y0 - x)) below 1/beta
        let g = |x: f64| x - x0 * (-beta * (x0 + y0 - x)).exp();
        let (mut lo, mut hi) = (0.0, 1.0 / beta);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn scalar_final_size() {
        let params = scalar_sir(3.0);
        let s0 = EpidemicState::new(vec![0.99], vec![0.01]).unwrap();
        let traj = integrate(&params, &s0, &IntegratorOptions::for_gamma(1.0)).unwrap();
        assert_eq!(traj.terminal, Terminal::ConvergedToEquilibrium);
        let x_star = limit_equilibrium(&traj).unwrap();
        let oracle = final_size_oracle(3.0, 0.99, 0.01);
        assert!((oracle - 0.0595).abs() < 1e-3);
        assert!(
            (x_star.x[0] - oracle).abs() < 1e-7,
            "{} vs {oracle}",
            x_star.x[0]
        );
        assert_eq!(x_star.y, vec![0.0]);
    }

    #[test]
    fn tiny_infected_fractions_stay_positive() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 2.0, 0.0, 0.0, 0.0, 0.5]);
        let params = ModelParams::new(1.7, InteractionSpec::constant(a).unwrap()).unwrap();
        let s0 = EpidemicState::new(vec![0.5, 0.5, 0.05], vec![0.4, 0.2, 1e-13]).unwrap();
        let traj = integrate(&params, &s0, &IntegratorOptions::for_gamma(1.7)).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!(
                s.y[2] >= 1e-13 * (-1.7 * t).exp() * (1.0 - 1e-12),
                "t = {t}: {:?}",
                s.y
            );
        }
    }

    #[test]
    fn equilibrium_start_is_single_sample() {
        let params = scalar_sir(3.0);
        let s0 = EpidemicState::new(vec![0.4], vec![0.0]).unwrap();
        let traj = integrate(&params, &s0, &IntegratorOptions::for_gamma(1.0)).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.terminal, Terminal::ConvergedToEquilibrium);
        assert_eq!(limit_equilibrium(&traj).unwrap(), s0);
    }

    fn rk4_reciprocal_oracle(x0: [f64; 2], y0: [f64; 2], h: f64) -> [f64; 2] {
        let f = |u: [f64; 4]| {
            let pressure = (0..2)
                .map(|j| u[2 + j] / (1.0 + 1.5 * u[2 + j]))
                .sum::<f64>();
            let mut d = [0.0; 4];
            for i in 0..2 {
                let inc = u[i] * (1.0 + u[i]) * pressure;
                d[i] = -inc;
                d[2 + i] = inc - u[2 + i];
            }
            d
        };
        let add = |u: [f64; 4], k: [f64; 4], s: f64| {
            std::array::from_fn::<f64, 4, _>(|i| u[i] + s * k[i])
        };
        let mut u = [x0[0], x0[1], y0[0], y0[1]];
        while u[2].max(u[3]) >= 1e-10 {
            let k1 = f(u);
            let k2 = f(add(u, k1, h / 2.0));
            let k3 = f(add(u, k2, h / 2.0));
            let k4 = f(add(u, k3, h));
            u = std::array::from_fn(|i| {
                u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            });
        }
        [u[0], u[1]]
    }

    fn reciprocal_feedback() -> ModelParams {
        let spec = InteractionSpec::rank1_local(
            vec![FunctionSpec::parse("1 + x").unwrap(); 2],
            vec![FunctionSpec::parse("1/(1+1.5*y)").unwrap(); 2],
        )
        .unwrap();
        ModelParams::new(1.0, spec).unwrap()
    }

    #[test]
    fn reciprocal_feedback_matches_fixed_step_oracle() {
        let params = reciprocal_feedback();
        let s0 = EpidemicState::new(vec![0.9, 0.9], vec![0.05, 0.05]).unwrap();
        let traj = integrate(&params, &s0, &IntegratorOptions::for_gamma(1.0)).unwrap();
        assert_eq!(traj.terminal, Terminal::ConvergedToEquilibrium);
        assert!(traj.last().max_infected() < 1e-10);
        let x_star = limit_equilibrium(&traj).unwrap();
        let oracle = rk4_reciprocal_oracle([0.9, 0.9], [0.05, 0.05], 1e-4);
        for i in 0..2 {
            assert!(x_star.x[i] <= 0.9);
            assert!(
                (x_star.x[i] - oracle[i]).abs() < 1e-7,
                "{:?} vs {oracle:?}",
                x_star.x
            );
        }
    }

    #[test]
    fn tighter_tolerance_is_self_consistent() {
        let params = reciprocal_feedback();
        let s0 = EpidemicState::new(vec![0.7, 0.95], vec![0.2, 0.01]).unwrap();
        let opts = IntegratorOptions::for_gamma(1.0);
        let a = limit_equilibrium(&integrate(&params, &s0, &opts).unwrap()).unwrap();
        let b = limit_equilibrium(&integrate(&params, &s0, &opts.tightened(2.0)).unwrap()).unwrap();
        for i in 0..2 {
            assert!((a.x[i] - b.x[i]).abs() < 10.0 * opts.abs_tol);
        }
    }

    #[test]
    fn samples_are_dense() {
        let params = reciprocal_feedback();
        let s0 = EpidemicState::new(vec![0.5, 0.6], vec![0.3, 0.2]).unwrap();
        let opts = IntegratorOptions {
            max_step: 0.01,
            ..IntegratorOptions::for_gamma(1.0)
        };
        let traj = integrate(&params, &s0, &opts).unwrap();
        assert!(traj
            .times
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 0.01 + 1e-12));
    }

    #[test]
    fn t_max_truncation() {
        let params = scalar_sir(3.0);
        let s0 = EpidemicState::new(vec![0.99], vec![0.01]).unwrap();
        let opts = IntegratorOptions {
            t_max: 2.0,
            ..IntegratorOptions::for_gamma(1.0)
        };
        let traj = integrate(&params, &s0, &opts).unwrap();
        assert_eq!(traj.terminal, Terminal::ReachedTMax);
        assert_eq!(*traj.times.last().unwrap(), 2.0);
        assert!(matches!(limit_equilibrium(&traj), Err(Error::Usage(_))));
    }

    #[test]
    fn option_validation() {
        let mut o = IntegratorOptions::for_gamma(1.0);
        o.rel_tol = 1e-2;
        assert!(o.validate().is_err());
        o.rel_tol = -1.0;
        assert!(o.validate().is_err());
        let params = scalar_sir(1.0);
        let bad = EpidemicState::new(vec![0.7], vec![0.5]).unwrap();
        assert!(matches!(
            integrate(&params, &bad, &IntegratorOptions::for_gamma(1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let params = scalar_sir(3.0);
        let s0 = EpidemicState::new(vec![0.5], vec![0.0]).unwrap();
        let traj = integrate(&params, &s0, &IntegratorOptions::for_gamma(1.0)).unwrap();
        let mut out = Vec::new();
        write_csv(&traj, Some(&[0.0]), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "t,x_1,y_1,ybar\n0.0000000000000000e0,5.0000000000000000e-1,0.0000000000000000e0,0.0000000000000000e0\n"
        );
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize) -> ModelParams {
        let spec = match rng.gen_range(0..4) {
            0 => InteractionSpec::constant(DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..4.0)))
                .unwrap(),
            1 => InteractionSpec::rank1_local(
                (0..n)
                    .map(|_| FunctionSpec::affine(rng.gen_range(0.1..2.0), rng.gen_range(0.0..2.0)))
                    .collect(),
                (0..n)
                    .map(|_| {
                        FunctionSpec::reciprocal_affine(
                            rng.gen_range(0.1..2.0),
                            rng.gen_range(0.0..5.0),
                        )
                    })
                    .collect(),
            )
            .unwrap(),
            2 => InteractionSpec::outer_product(n, rng.gen_range(0.5..6.0)).unwrap(),
            _ => InteractionSpec::scalar_scaled(
                (0..n)
                    .map(|_| FunctionSpec::affine(rng.gen_range(1.0..3.0), -1.0))
                    .collect(),
                &format!("1 + {}*y1", rng.gen_range(0.0..3.0)),
            )
            .unwrap(),
        };
        ModelParams::new(rng.gen_range(0.3..2.0), spec).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn trajectories_respect_invariants(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..4);
            let params = random_model(&mut rng, n);
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|xi| rng.gen::<f64>() * (1.0 - xi)).collect();
            let s0 = EpidemicState::new(x, y).unwrap();
            let opts = IntegratorOptions::for_gamma(params.gamma());
            let traj = integrate(&params, &s0, &opts).unwrap();
            let slack = 10.0 * opts.abs_tol;
            for s in &traj.states {
                prop_assert!(s.is_feasible(opts.clamp_eps));
            }
            for w in traj.states.windows(2) {
                for i in 0..n {
                    prop_assert!(w[1].x[i] <= w[0].x[i] + slack);
                    prop_assert!(w[1].x[i] + w[1].y[i] <= w[0].x[i] + w[0].y[i] + slack);
                }
            }
            for i in 0..n {
                if s0.y[i] > 0.0 {
                    prop_assert!(traj.states.iter().all(|s| s.y[i] > 0.0));
                }
            }
            prop_assert_eq!(traj.terminal, Terminal::ConvergedToEquilibrium);
            let x_star = limit_equilibrium(&traj).unwrap();
            for i in 0..n {
                prop_assert!(x_star.x[i] >= 0.0 && x_star.x[i] <= s0.x[i]);
            }
        }
    }
}
