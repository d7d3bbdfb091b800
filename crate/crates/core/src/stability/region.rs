//! Grid classification of equilibria, boundary tracing and the optimal-equilibrium set.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{dominant_eigen, next_generation_matrix, Classification, DEFAULT_MARGINAL_BAND};
use crate::error::{Error, Result};
use crate::state::ModelParams;

const MAX_GRID_POINTS: usize = 20_000_000;
/// Adjacent boundary vertices whose objectives differ by at most this form one plateau.
const FLAT_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionOptions {
    pub grid_resolution: usize,
    pub boundary_tol: f64,
    pub tie_tol: f64,
    pub marginal_band: f64,
    /// Subpopulation weights of the averaged susceptible fraction; uniform when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 201,
            boundary_tol: 1e-10,
            tie_tol: 1e-6,
            marginal_band: DEFAULT_MARGINAL_BAND,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionScan {
    pub resolution: usize,
    pub n: usize,
    pub gamma: f64,
    /// Grid classes with the first coordinate varying fastest.
    pub classes: Vec<Classification>,
    pub lambdas: Vec<f64>,
    pub boundary: Vec<Polyline>,
    pub x_star_set: Vec<Vec<f64>>,
}

impl RegionScan {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.resolution - 1) as f64
    }

    pub fn grid_point(&self, k: usize) -> Vec<f64> {
        grid_point(k, self.n, self.resolution)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &c| acc * self.resolution + c)
    }

    /// All traced boundary vertices, polyline after polyline.
    pub fn boundary_points(&self) -> Vec<[f64; 2]> {
        self.boundary
            .iter()
            .flat_map(|p| p.points.iter().copied())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct View<'a> {
            resolution: usize,
            n: usize,
            gamma: f64,
            classes: Vec<&'static str>,
            boundary: Vec<[f64; 2]>,
            boundary_polylines: Vec<PolylineView>,
            x_star_set: &'a [Vec<f64>],
        }
        #[derive(Serialize)]
        struct PolylineView {
            start: usize,
            len: usize,
            closed: bool,
        }
        let mut start = 0;
        let boundary_polylines = self
            .boundary
            .iter()
            .map(|p| {
                let v = PolylineView {
                    start,
                    len: p.points.len(),
                    closed: p.closed,
                };
                start += p.points.len();
                v
            })
            .collect();
        serde_json::to_value(View {
            resolution: self.resolution,
            n: self.n,
            gamma: self.gamma,
            classes: self.classes.iter().map(|c| c.code()).collect(),
            boundary: self.boundary_points(),
            boundary_polylines,
            x_star_set: &self.x_star_set,
        })
        .expect("region scan serializes")
    }
}

fn grid_point(mut k: usize, n: usize, res: usize) -> Vec<f64> {
    let h = 1.0 / (res - 1) as f64;
    (0..n)
        .map(|_| {
            let c = k % res;
            k /= res;
            c as f64 * h
        })
        .collect()
}

fn lambda_at(params: &ModelParams, x: &[f64]) -> Result<f64> {
    Ok(dominant_eigen(&next_generation_matrix(params, x)?)?.lambda)
}

/// Classifies every point of a uniform grid over `[0,1]^n`. For two subpopulations it also
/// traces the level set `lambda_max = gamma` and collects the boundary points that maximize
/// the (weighted) mean susceptible fraction.
pub fn scan_region(params: &ModelParams, opts: &RegionOptions) -> Result<RegionScan> {
    let n = params.n();
    let res = opts.grid_resolution;
    if res < 11 {
        return Err(Error::Usage(format!(
            "grid resolution must be at least 11, got {res}"
        )));
    }
    if !(opts.boundary_tol > 0.0) || !(opts.tie_tol >= 0.0) || !(opts.marginal_band >= 0.0) {
        return Err(Error::Usage(
            "boundary_tol must be positive; tie_tol and marginal_band nonnegative".into(),
        ));
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
            return Err(Error::Config(format!(
                "weights must be {n} positive numbers"
            )))
        }
        Some(w) => w.clone(),
        None => vec![1.0; n],
    };
    let total = (res as f64).powi(n as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(Error::Usage(format!(
            "grid of {res}^{n} points is too large"
        )));
    }
    let total = total as usize;
    let gamma = params.gamma();
    let lambdas = (0..total)
        .into_par_iter()
        .map(|k| lambda_at(params, &grid_point(k, n, res)))
        .collect::<Result<Vec<f64>>>()?;
    let classes: Vec<Classification> = lambdas
        .iter()
        .map(|&l| Classification::from_lambda(l, gamma, opts.marginal_band))
        .collect();

    let mut boundary = Vec::new();
    let mut x_star_set = Vec::new();
    if n == 2 {
        let phi = |p: [f64; 2]| lambda_at(params, &p).map(|l| l - gamma);
        boundary = trace_boundary(&lambdas, res, gamma, opts.boundary_tol, &phi)?;
        x_star_set = optimal_points(&mut boundary, &weights, res, opts, &phi)?;
    }
    if boundary.is_empty() && classes.iter().all(|c| *c == Classification::Stable) {
        x_star_set = vec![vec![1.0; n]];
    }
    Ok(RegionScan {
        resolution: res,
        n,
        gamma,
        classes,
        lambdas,
        boundary,
        x_star_set,
    })
}

/// `H(c, r)` joins grid points `(c, r)` and `(c + 1, r)`; `V(c, r)` joins `(c, r)` and `(c, r + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EdgeId {
    H(usize, usize),
    V(usize, usize),
}

fn trace_boundary(
    lambdas: &[f64],
    res: usize,
    gamma: f64,
    tol: f64,
    phi: &(impl Fn([f64; 2]) -> Result<f64> + Sync),
) -> Result<Vec<Polyline>> {
    let h = 1.0 / (res - 1) as f64;
    let inside = |c: usize, r: usize| lambdas[r * res + c] - gamma >= 0.0;
    let point = |c: usize, r: usize| [c as f64 * h, r as f64 * h];

    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for r in 0..res - 1 {
        for c in 0..res - 1 {
            let case = inside(c, r) as u8
                | (inside(c + 1, r) as u8) << 1
                | (inside(c + 1, r + 1) as u8) << 2
                | (inside(c, r + 1) as u8) << 3;
            let bottom = EdgeId::H(c, r);
            let top = EdgeId::H(c, r + 1);
            let left = EdgeId::V(c, r);
            let right = EdgeId::V(c + 1, r);
            let center_inside = || -> Result<bool> {
                Ok(phi([(c as f64 + 0.5) * h, (r as f64 + 0.5) * h])? >= 0.0)
            };
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if center_inside()? {
                        segments.extend([(bottom, right), (left, top)]);
                    } else {
                        segments.extend([(left, bottom), (right, top)]);
                    }
                }
                10 => {
                    if center_inside()? {
                        segments.extend([(left, bottom), (top, right)]);
                    } else {
                        segments.extend([(bottom, right), (left, top)]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let edges: BTreeSet<EdgeId> = segments.iter().flat_map(|&(a, b)| [a, b]).collect();
    let edges: Vec<EdgeId> = edges.into_iter().collect();
    let crossings = edges
        .par_iter()
        .map(|&e| {
            let (a, b) = match e {
                EdgeId::H(c, r) => ((c, r), (c + 1, r)),
                EdgeId::V(c, r) => ((c, r), (c, r + 1)),
            };
            let (out, inn) = if inside(a.0, a.1) { (b, a) } else { (a, b) };
            let p = bisect_segment(point(out.0, out.1), point(inn.0, inn.1), phi)?;
            Ok((e, (phi(p)?.abs() <= tol).then_some(p)))
        })
        .collect::<Result<BTreeMap<EdgeId, Option<[f64; 2]>>>>()?;

    let mut adjacency: BTreeMap<EdgeId, Vec<EdgeId>> = BTreeMap::new();
    for (a, b) in segments {
        if crossings[&a].is_some() && crossings[&b].is_some() {
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
    }

    let mut visited = BTreeSet::new();
    let mut polylines = Vec::new();
    let walk = |start: EdgeId, visited: &mut BTreeSet<EdgeId>| {
        let mut pts = Vec::new();
        let mut cur = Some(start);
        while let Some(e) = cur {
            visited.insert(e);
            pts.push(crossings[&e].expect("linked edges have crossings"));
            cur = adjacency[&e].iter().copied().find(|x| !visited.contains(x));
        }
        pts
    };
    let open_starts: Vec<EdgeId> = adjacency
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    for e in open_starts {
        if !visited.contains(&e) {
            let points = dedup(walk(e, &mut visited), false);
            polylines.push(Polyline {
                points,
                closed: false,
            });
        }
    }
    let remaining: Vec<EdgeId> = adjacency.keys().copied().collect();
    for e in remaining {
        if !visited.contains(&e) {
            let points = dedup(walk(e, &mut visited), true);
            polylines.push(Polyline {
                points,
                closed: true,
            });
        }
    }
    Ok(polylines)
}

/// Bisects on the sign of `phi` between a point outside (`phi < 0`) and one inside.
fn bisect_segment(
    mut out: [f64; 2],
    mut inn: [f64; 2],
    phi: &impl Fn([f64; 2]) -> Result<f64>,
) -> Result<[f64; 2]> {
    for _ in 0..64 {
        let mid = [0.5 * (out[0] + inn[0]), 0.5 * (out[1] + inn[1])];
        if mid == out || mid == inn {
            break;
        }
        if phi(mid)? >= 0.0 {
            inn = mid;
        } else {
            out = mid;
        }
        if (out[0] - inn[0]).abs().max((out[1] - inn[1]).abs()) <= 1e-15 {
            break;
        }
    }
    let mid = [0.5 * (out[0] + inn[0]), 0.5 * (out[1] + inn[1])];
    Ok(mid)
}

fn dedup(points: Vec<[f64; 2]>, closed: bool) -> Vec<[f64; 2]> {
    let close =
        |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) <= DEDUP_TOL;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| !close(q, &p)) {
            out.push(p);
        }
    }
    if closed && out.len() > 1 && close(&out[0], out.last().unwrap()) {
        out.pop();
    }
    out
}

/// Boundary points maximizing the weighted mean of `x` within `tie_tol`.
///
/// Each polyline is split into plateaus of nearly equal objective. Plateaus that are local
/// maxima and within reach of the best vertex are refined: between the neighboring vertices
/// the boundary is followed along lines of constant `x1 - x2` and the objective maximized by
/// golden-section search. Refined points are inserted into their polyline.
fn optimal_points(
    boundary: &mut [Polyline],
    weights: &[f64],
    res: usize,
    opts: &RegionOptions,
    phi: &impl Fn([f64; 2]) -> Result<f64>,
) -> Result<Vec<Vec<f64>>> {
    let wsum = weights[0] + weights[1];
    let objective = |p: &[f64; 2]| (weights[0] * p[0] + weights[1] * p[1]) / wsum;
    let spacing = 1.0 / (res - 1) as f64;
    let best_vertex = boundary
        .iter()
        .flat_map(|p| p.points.iter())
        .map(objective)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best_vertex.is_finite() {
        return Ok(Vec::new());
    }
    let cutoff = best_vertex - (opts.tie_tol + spacing);
    let mut candidates: Vec<[f64; 2]> = Vec::new();

    for line in boundary.iter_mut() {
        let m = line.points.len();
        if line.closed {
            if let Some(k) = (0..m).find(|&k| {
                let prev = (k + m - 1) % m;
                (objective(&line.points[k]) - objective(&line.points[prev])).abs() > FLAT_TOL
            }) {
                line.points.rotate_left(k);
            }
        }
        let pts = &line.points;
        let vals: Vec<f64> = pts.iter().map(objective).collect();
        let mut units: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for k in 1..=m {
            if k == m || (vals[k] - vals[k - 1]).abs() > FLAT_TOL {
                units.push((start, k - 1));
                start = k;
            }
        }
        let unit_val = |u: &(usize, usize)| {
            vals[u.0..=u.1]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let uv: Vec<f64> = units.iter().map(unit_val).collect();
        let nu = units.len();
        let mut insertions: Vec<(usize, [f64; 2])> = Vec::new();

        for (ui, &(a, b)) in units.iter().enumerate() {
            if uv[ui] < cutoff {
                continue;
            }
            let neighbors: Vec<usize> = if line.closed {
                if nu == 1 {
                    vec![]
                } else {
                    vec![(ui + nu - 1) % nu, (ui + 1) % nu]
                }
            } else {
                [ui.checked_sub(1), (ui + 1 < nu).then_some(ui + 1)]
                    .into_iter()
                    .flatten()
                    .collect()
            };
            if neighbors.iter().any(|&v| uv[v] >= uv[ui]) {
                continue;
            }
            let touches_end = !line.closed && (a == 0 || b == m - 1);
            if touches_end || (line.closed && nu == 1) {
                candidates.extend_from_slice(&pts[a..=b]);
                continue;
            }
            let before = pts[(a + m - 1) % m];
            let after = pts[(b + 1) % m];
            let mut span: Vec<[f64; 2]> = vec![before];
            span.extend_from_slice(&pts[a..=b]);
            span.push(after);
            match refine_plateau(&span, spacing, opts.boundary_tol, &objective, phi)? {
                Some(p) if objective(&p) > uv[ui] + FLAT_TOL => {
                    candidates.push(p);
                    insertions.push((insertion_index(pts, a, b, p), p));
                }
                _ => candidates.extend_from_slice(&pts[a..=b]),
            }
        }
        insertions.sort_by(|x, y| y.0.cmp(&x.0));
        for (at, p) in insertions {
            line.points.insert(at, p);
        }
    }

    let best = candidates
        .iter()
        .map(objective)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<[f64; 2]> = Vec::new();
    for p in candidates {
        if objective(&p) >= best - opts.tie_tol
            && !out
                .iter()
                .any(|q| (q[0] - p[0]).abs().max((q[1] - p[1]).abs()) <= DEDUP_TOL)
        {
            out.push(p);
        }
    }
    Ok(out.into_iter().map(|p| p.to_vec()).collect())
}

/// Position in the polyline (between the plateau's outer neighbors) at which `p` keeps the
/// vertices ordered by `x1 - x2`.
fn insertion_index(pts: &[[f64; 2]], a: usize, b: usize, p: [f64; 2]) -> usize {
    let m = pts.len();
    let s = |q: &[f64; 2]| q[0] - q[1];
    let sp = s(&p);
    let lo = if a == 0 { m - 1 } else { a - 1 };
    let mut prev = lo;
    for k in a..=b + 1 {
        let idx = k % m;
        let (s0, s1) = (s(&pts[prev]), s(&pts[idx]));
        if (s0 <= sp && sp <= s1) || (s1 <= sp && sp <= s0) {
            return if idx == 0 { m } else { idx };
        }
        prev = idx;
    }
    b + 1
}

fn refine_plateau(
    span: &[[f64; 2]],
    spacing: f64,
    tol: f64,
    objective: &impl Fn(&[f64; 2]) -> f64,
    phi: &impl Fn([f64; 2]) -> Result<f64>,
) -> Result<Option<[f64; 2]>> {
    let s_of = |p: &[f64; 2]| p[0] - p[1];
    let m_of = |p: &[f64; 2]| 0.5 * (p[0] + p[1]);
    let s_lo = span.iter().map(s_of).fold(f64::INFINITY, f64::min);
    let s_hi = span.iter().map(s_of).fold(f64::NEG_INFINITY, f64::max);
    let m_lo = span.iter().map(m_of).fold(f64::INFINITY, f64::min) - 2.0 * spacing;
    let m_hi = span.iter().map(m_of).fold(f64::NEG_INFINITY, f64::max) + 2.0 * spacing;
    let at = |m: f64, s: f64| [m + 0.5 * s, m - 0.5 * s];

    let level_point = |s: f64| -> Result<Option<[f64; 2]>> {
        let mut lo = m_lo.max(0.5 * s.abs());
        let mut hi = m_hi.min(1.0 - 0.5 * s.abs());
        if lo >= hi {
            return Ok(None);
        }
        let f_lo = phi(at(lo, s))?;
        let f_hi = phi(at(hi, s))?;
        if (f_lo >= 0.0) == (f_hi >= 0.0) {
            return Ok(None);
        }
        let lo_inside = f_lo >= 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 {
                break;
            }
            if (phi(at(mid, s))? >= 0.0) == lo_inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(at(0.5 * (lo + hi), s)))
    };
    let score = |s: f64| -> Result<(f64, Option<[f64; 2]>)> {
        Ok(match level_point(s)? {
            Some(p) => (objective(&p), Some(p)),
            None => (f64::NEG_INFINITY, None),
        })
    };

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (s_lo, s_hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = score(c)?.0;
    let mut fd = score(d)?.0;
    for _ in 0..100 {
        if b - a <= 1e-13 {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = score(c)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = score(d)?.0;
        }
    }
    let Some(p) = score(0.5 * (a + b))?.1 else {
        return Ok(None);
    };
    Ok((phi(p)?.abs() <= tol).then_some(p))
}

/// Number of grid pairs `(p, q)` of members whose midpoint is a grid point that is not a
/// member. Zero for a convex member set.
pub fn midpoint_convexity_violations(
    scan: &RegionScan,
    member: impl Fn(Classification) -> bool,
) -> Result<u64> {
    if scan.n != 2 {
        return Err(Error::Usage(
            "midpoint convexity check needs two subpopulations".into(),
        ));
    }
    let res = scan.resolution;
    let is_member: Vec<bool> = scan.classes.iter().map(|c| member(*c)).collect();
    let count = (0..res * res)
        .into_par_iter()
        .filter(|&k| !is_member[k])
        .map(|k| {
            let (c, r) = (k % res, k / res);
            let dc_max = c.min(res - 1 - c) as isize;
            let dr_max = r.min(res - 1 - r) as isize;
            let mut v = 0u64;
            for dc in 0..=dc_max {
                let dr_start = if dc == 0 { 1 } else { -dr_max };
                for dr in dr_start..=dr_max {
                    let p = ((r as isize + dr) as usize) * res + (c as isize + dc) as usize;
                    let q = ((r as isize - dr) as usize) * res + (c as isize - dc) as usize;
                    if is_member[p] && is_member[q] {
                        v += 1;
                    }
                }
            }
            v
        })
        .sum();
    Ok(count)
}

/// Number of grid pairs `x <= z` (componentwise) with `z` Stable and `x` Unstable.
pub fn downward_closure_violations(scan: &RegionScan) -> u64 {
    let res = scan.resolution;
    let total = scan.classes.len();
    let mut count: Vec<u64> = scan
        .classes
        .iter()
        .map(|c| (*c == Classification::Stable) as u64)
        .collect();
    let mut stride = 1;
    for _ in 0..scan.n {
        for k in (0..total).rev() {
            if (k / stride) % res < res - 1 {
                count[k] += count[k + stride];
            }
        }
        stride *= res;
    }
    scan.classes
        .iter()
        .zip(&count)
        .filter(|(c, _)| **c == Classification::Unstable)
        .map(|(_, n)| *n)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{FunctionSpec, InteractionSpec};
    use nalgebra::DMatrix;

    fn constant(a: [f64; 4]) -> ModelParams {
        ModelParams::new(
            1.0,
            InteractionSpec::constant(DMatrix::from_row_slice(2, 2, &a)).unwrap(),
        )
        .unwrap()
    }

    fn opts(res: usize) -> RegionOptions {
        RegionOptions {
            grid_resolution: res,
            ..RegionOptions::default()
        }
    }

    #[test]
    fn uniform_matrix_boundary_is_a_segment_of_ties() {
        let scan = scan_region(&constant([1.5; 4]), &opts(51)).unwrap();
        assert_eq!(scan.boundary.len(), 1);
        for p in scan.boundary_points() {
            assert!((p[0] + p[1] - 2.0 / 3.0).abs() < 1e-9);
        }
        assert!(scan.x_star_set.len() >= 51, "{}", scan.x_star_set.len());
        assert!(scan
            .x_star_set
            .iter()
            .all(|p| ((p[0] + p[1]) / 2.0 - 1.0 / 3.0).abs() < 1e-9));
    }

    #[test]
    fn asymmetric_rows_give_single_corner_optimum() {
        let scan = scan_region(&constant([1.0, 2.0, 1.0, 2.0]), &opts(51)).unwrap();
        for p in scan.boundary_points() {
            assert!((p[0] + 2.0 * p[1] - 1.0).abs() < 1e-9);
        }
        assert_eq!(scan.x_star_set.len(), 1);
        let p = &scan.x_star_set[0];
        assert!((p[0] - 1.0).abs() < 1e-9 && p[1].abs() < 1e-9);
    }

    #[test]
    fn reciprocal_feedback_optimum_is_symmetric() {
        let spec = InteractionSpec::rank1_local(
            vec![FunctionSpec::parse("1 + x").unwrap(); 2],
            vec![FunctionSpec::parse("1/(1+1.5*y)").unwrap(); 2],
        )
        .unwrap();
        let scan = scan_region(&ModelParams::new(1.0, spec).unwrap(), &opts(41)).unwrap();
        let t = (3f64.sqrt() - 1.0) / 2.0;
        assert_eq!(scan.x_star_set.len(), 1, "{:?}", scan.x_star_set);
        let p = &scan.x_star_set[0];
        assert!((p[0] - t).abs() < 1e-7 && (p[1] - t).abs() < 1e-7, "{p:?}");
        let on_line = scan
            .boundary_points()
            .iter()
            .any(|q| q[0] == p[0] && q[1] == p[1]);
        assert!(on_line);
    }

    #[test]
    fn all_stable_region_reports_corner() {
        let scan = scan_region(&constant([0.1; 4]), &opts(11)).unwrap();
        assert!(scan.boundary.is_empty());
        assert_eq!(scan.x_star_set, vec![vec![1.0, 1.0]]);
        let scan = scan_region(&constant([5.0; 4]), &opts(11)).unwrap();
        assert!(!scan.boundary.is_empty());
    }

    #[test]
    fn closed_loop_is_traced() {
        // unstable only inside a disk around (0.5, 0.5)
        let spec = InteractionSpec::expression_matrix(
            2,
            &["max(0, 0.04 - (x1-0.5)^2 - (x2-0.5)^2) * 100"; 4],
        )
        .unwrap();
        let p = ModelParams::new(1.0, spec).unwrap();
        let scan = scan_region(&p, &opts(41)).unwrap();
        assert_eq!(scan.boundary.len(), 1);
        assert!(scan.boundary[0].closed);
        // lambda = q(x) (x1 + x2) with q symmetric and maximal on the diagonal
        assert_eq!(scan.x_star_set.len(), 1, "{:?}", scan.x_star_set);
        let q = &scan.x_star_set[0];
        assert!((q[0] - q[1]).abs() < 1e-6);
    }

    #[test]
    fn convexity_and_downward_closure_counts() {
        let scan = scan_region(&constant([3.0, 2.0, 1.0, 2.0]), &opts(41)).unwrap();
        assert_eq!(
            midpoint_convexity_violations(&scan, |c| c == Classification::Stable).unwrap(),
            0
        );
        assert_eq!(downward_closure_violations(&scan), 0);
        let scan = scan_region(&constant([1.0, 2.0, 3.0, 2.0]), &opts(41)).unwrap();
        assert_eq!(
            midpoint_convexity_violations(&scan, |c| c != Classification::Stable).unwrap(),
            0
        );
        assert!(midpoint_convexity_violations(&scan, |c| c == Classification::Stable).unwrap() > 0);
    }

    #[test]
    fn downward_closure_brute_force() {
        // not monotone: unstable band in the middle
        let spec = InteractionSpec::expression_matrix(2, &["8*x1*(1-x1)", "0", "0", "0"]).unwrap();
        let scan = scan_region(&ModelParams::new(1.0, spec).unwrap(), &opts(11)).unwrap();
        let res = scan.resolution;
        let mut brute = 0;
        for x in 0..res * res {
            for z in 0..res * res {
                let le = x % res <= z % res && x / res <= z / res;
                if le
                    && scan.classes[z] == Classification::Stable
                    && scan.classes[x] == Classification::Unstable
                {
                    brute += 1;
                }
            }
        }
        assert!(brute > 0);
        assert_eq!(downward_closure_violations(&scan), brute);
    }

    #[test]
    fn rejects_coarse_grid_and_classifies_higher_dimensions() {
        assert!(matches!(
            scan_region(&constant([1.0; 4]), &opts(5)),
            Err(Error::Usage(_))
        ));
        let p = ModelParams::new(
            1.0,
            InteractionSpec::constant(DMatrix::from_element(3, 3, 1.0)).unwrap(),
        )
        .unwrap();
        let scan = scan_region(&p, &opts(11)).unwrap();
        assert_eq!(scan.classes.len(), 1331);
        assert!(scan.boundary.is_empty() && scan.x_star_set.is_empty());
        // lambda = x1 + x2 + x3 for the all-ones matrix
        let k = scan.index(&[2, 3, 4]);
        assert!((scan.lambdas[k] - 0.9).abs() < 1e-11);
        assert_eq!(scan.grid_point(k), vec![0.2, 0.30000000000000004, 0.4]);
        assert_eq!(downward_closure_violations(&scan), 0);
    }

    #[test]
    fn json_layout() {
        let scan = scan_region(&constant([1.5; 4]), &opts(11)).unwrap();
        let v = scan.to_json();
        assert_eq!(v["resolution"], 11);
        assert_eq!(v["classes"].as_array().unwrap().len(), 121);
        assert_eq!(v["classes"][0], "S");
        assert_eq!(v["classes"][120], "U");
        assert!(v["boundary"][0].as_array().unwrap().len() == 2);
    }
}
