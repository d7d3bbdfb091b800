//! Oracles and random model generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};
use nbfsir::dsl::{FunctionSpec, InteractionSpec};
use nbfsir::ModelParams;
use rand::Rng;

/// Dominant eigenvalue of `diag(x) [[a, b], [c, d]]` in closed form.
pub fn two_node_lambda(a: f64, b: f64, c: f64, d: f64, x1: f64, x2: f64) -> f64 {
    let half = (a * x1 + d * x2) / 2.0;
    let delta = a * d - b * c;
    half + (half * half - delta * x1 * x2).max(0.0).sqrt()
}

/// Largest `x2` in `[0, 1]` with `lambda(x1, x2) <= gamma`, for `lambda` nondecreasing in
/// `x2`; `None` when even `x2 = 0` is unstable.
pub fn stable_frontier(lambda: impl Fn(f64, f64) -> f64, x1: f64, gamma: f64) -> Option<f64> {
    if lambda(x1, 0.0) > gamma {
        return None;
    }
    if lambda(x1, 1.0) <= gamma {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lambda(x1, mid) <= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(lo)
}

/// Maximizes `(x1 + x2) / 2` over `{lambda <= gamma}` by sweeping `x1` on a fine grid and
/// solving for the frontier in `x2`. Returns the maximum and every sweep point whose mean is
/// within `tie_tol` of it.
pub fn max_mean_oracle(
    lambda: impl Fn(f64, f64) -> f64,
    gamma: f64,
    sweep: usize,
    tie_tol: f64,
) -> (f64, Vec<[f64; 2]>) {
    let pts: Vec<[f64; 2]> = (0..=sweep)
        .filter_map(|k| {
            let x1 = k as f64 / sweep as f64;
            stable_frontier(&lambda, x1, gamma).map(|x2| [x1, x2])
        })
        .collect();
    let best = pts
        .iter()
        .map(|p| (p[0] + p[1]) / 2.0)
        .fold(f64::MIN, f64::max);
    let ties = pts
        .into_iter()
        .filter(|p| (p[0] + p[1]) / 2.0 >= best - tie_tol)
        .collect();
    (best, ties)
}

/// Characteristic polynomial coefficients `c_0..c_n` (monic, `c_0 = 1`) of
/// `det(zI - M) = sum c_k z^(n-k)` by the Faddeev-LeVerrier recursion.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        mk = m * (&mk + DMatrix::identity(n, n) * coeffs[k - 1]);
        coeffs.push(-mk.trace() / k as f64);
    }
    coeffs
}

/// Roots of the monic polynomial `sum c_k z^(n-k)` by Durand-Kerner iteration.
pub fn durand_kerner(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex<f64>| {
        coeffs
            .iter()
            .fold(Complex::new(0.0, 0.0), |acc, c| acc * z + c)
    };
    let bound = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32) * bound).collect();
    for _ in 0..5000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let zi = roots[i];
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(Complex::new(1.0, 0.0), |acc, j| acc * (zi - roots[j]));
            if denom.norm() == 0.0 {
                continue;
            }
            let step = eval(zi) / denom;
            roots[i] = zi - step;
            change = change.max(step.norm());
        }
        if change < 1e-15 {
            break;
        }
    }
    roots
}

/// Largest distance from a point of `a` to its greedily matched partner in `b`.
pub fn spectrum_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for za in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, zb)| (j, (za - zb).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("same length");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn random_affine_g(rng: &mut impl Rng) -> FunctionSpec {
    FunctionSpec::affine(rng.gen_range(0.2..2.0), rng.gen_range(0.0..2.0))
}

/// `g_i(x) / (1 + alpha y_j)` with nondecreasing positive affine `g_i`.
pub fn reciprocal_feedback_family(rng: &mut impl Rng, n: usize, alpha: f64) -> InteractionSpec {
    let g = (0..n).map(|_| random_affine_g(rng)).collect();
    let f = vec![FunctionSpec::reciprocal_affine(1.0, alpha); n];
    InteractionSpec::rank1_local(g, f).expect("positive factors")
}

/// One of several interaction kinds with random positive parameters.
pub fn random_spec(rng: &mut impl Rng, n: usize) -> InteractionSpec {
    match rng.gen_range(0..5) {
        0 => InteractionSpec::constant(DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.05..3.0)))
            .expect("positive matrix"),
        1 => {
            let alpha = rng.gen_range(0.0..5.0);
            reciprocal_feedback_family(rng, n, alpha)
        }
        2 => InteractionSpec::outer_product(n, rng.gen_range(0.2..4.0)).expect("positive scale"),
        3 => {
            let nums = (0..n)
                .map(|_| {
                    let q = rng.gen_range(0.0..1.0);
                    FunctionSpec::affine(q + rng.gen_range(0.2..2.0), -q)
                })
                .collect();
            let denom: Vec<String> = (1..=n).map(|j| format!("y{j}")).collect();
            InteractionSpec::scalar_scaled(nums, &format!("1 + {}", denom.join(" + ")))
                .expect("positive numerators")
        }
        _ => {
            let entries: Vec<String> = (0..n * n)
                .map(|k| {
                    let (i, j) = (k / n + 1, k % n + 1);
                    let c: f64 = rng.gen_range(0.2..2.5);
                    format!("{c:.3} * exp(-x{j} * y{i}) * (1 + 0.5*x{i}) / (1 + y{j}^2)")
                })
                .collect();
            InteractionSpec::expression_matrix(n, &entries).expect("positive entries")
        }
    }
}

pub fn random_model(rng: &mut impl Rng, n: usize) -> ModelParams {
    let spec = random_spec(rng, n);
    ModelParams::new(rng.gen_range(0.3..2.0), spec).expect("valid model")
}
