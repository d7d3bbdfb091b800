//! Perron root and left Perron vector of nonnegative matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RAYLEIGH_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DominantEigen {
    /// Spectral radius.
    pub lambda: f64,
    /// Positive left eigenvector normalized to sum 1; `None` for reducible matrices.
    pub left_vector: Option<Vec<f64>>,
}

/// Spectral radius of a nonnegative square matrix and, when the matrix is irreducible, its
/// left Perron vector.
///
/// Irreducible blocks are handled by power iteration on `M^T + cI` with
/// `c = 1 + max row sum`. A reducible matrix is split into the strongly connected
/// components of its support graph and the largest block root is returned.
pub fn dominant_eigen(m: &DMatrix<f64>) -> Result<DominantEigen> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Usage(format!(
            "dominant eigenvalue needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Usage(format!(
            "dominant eigenvalue needs finite nonnegative entries, found {v}"
        )));
    }
    let n = m.nrows();
    let components = strongly_connected_components(m);
    if components.len() == 1 && (n > 1 || m[(0, 0)] > 0.0) {
        let (lambda, v) = power_iteration(m)?;
        return Ok(DominantEigen {
            lambda,
            left_vector: Some(v),
        });
    }
    let mut lambda: f64 = 0.0;
    for comp in components {
        let block_root = if comp.len() == 1 {
            m[(comp[0], comp[0])]
        } else {
            let block = DMatrix::from_fn(comp.len(), comp.len(), |a, b| m[(comp[a], comp[b])]);
            power_iteration(&block)?.0
        };
        lambda = lambda.max(block_root);
    }
    Ok(DominantEigen {
        lambda,
        left_vector: None,
    })
}

fn power_iteration(m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let n = m.nrows();
    let shift = 1.0
        + m.row_iter()
            .map(|r| r.iter().sum::<f64>())
            .fold(0.0, f64::max);
    let mt = m.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut prev: Option<f64> = None;
    let mut prev_delta: Option<f64> = None;
    let mut rayleigh = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let mv = &mt * &v;
        rayleigh = v.dot(&mv) / v.dot(&v);
        let w = mv + &v * shift;
        v = &w / w.sum();
        if let Some(p) = prev {
            let delta = (rayleigh - p).abs();
            let noise = 4.0 * f64::EPSILON * shift;
            let converged = delta <= noise
                || match prev_delta {
                    Some(pd) if pd > 0.0 && delta < RAYLEIGH_TOL => {
                        let r = delta / pd;
                        r < 1.0 && delta * r / (1.0 - r) < RAYLEIGH_TOL
                    }
                    _ => false,
                };
            if converged {
                return Ok((rayleigh.max(0.0), v.iter().copied().collect()));
            }
            prev_delta = Some(delta);
        }
        prev = Some(rayleigh);
    }
    Err(Error::Numerical {
        message: format!("power iteration did not converge in {MAX_ITERATIONS} iterations"),
        best_estimate: rayleigh,
    })
}

/// Strongly connected components of the graph with an edge `i -> j` when `m[i][j] > 0`,
/// each sorted, listed by smallest member.
fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        row[s] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if m[(i, j)] > 0.0 && !row[j] {
                    row[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let comp: Vec<usize> = (i..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            assigned[j] = true;
        }
        out.push(comp);
    }
    out
}
