//! The two-dimensional family `x1' = u1`, `x2' = x1^2 + u2 x1^k` with cost
//! `(u1^2 + u2^2) / 2`.
//!
//! Normal extremals keep `p2` constant and move on level sets of the reduced
//! Hamiltonian `H(x1, p1) = p1^2/2 + x1^(2k) p2^2/2 + x1^2 p2`. The cost of
//! reaching `(0, w - delta)` from `(0, w)` is bounded below through the area
//! of the zero level set and through the excursion to its turning point
//! `kappa`. For `k >= 3` that bound does not depend on `p2`, so the cost jumps
//! at `delta = 0`; for `k = 2` it does not.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{entry_seed, optimize_trajectory, OptimizerParams};
use crate::error::{Error, Result};
use crate::systems::{paper_example, Lagrangian};

/// Default chart for the example.
pub const CHART_LOWER: [f64; 2] = [-2.0, -1.5];
pub const CHART_UPPER: [f64; 2] = [2.0, 1.5];

/// Minimum number of restarts for [`discontinuity_demo`].
pub const DEMO_MIN_RESTARTS: usize = 32;

const SIMPSON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleParams {
    pub k: u32,
    pub p2: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl ExampleParams {
    pub fn new(k: u32, p2: f64) -> Result<ExampleParams> {
        ExampleParams::with_chart(k, p2, CHART_LOWER, CHART_UPPER)
    }

    pub fn with_chart(k: u32, p2: f64, lower: [f64; 2], upper: [f64; 2]) -> Result<ExampleParams> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("exponent k must be >= 2, got {k}")));
        }
        if !(p2 < 0.0 && p2.is_finite()) {
            return Err(Error::InvalidInput(format!("p2 must be negative, got {p2}")));
        }
        if !(lower[0] < upper[0] && lower[1] < upper[1]) {
            return Err(Error::InvalidInput("chart bounds are not ordered".into()));
        }
        let params = ExampleParams { k, p2, lower, upper };
        let kappa = params.kappa();
        if kappa >= upper[0] || -kappa <= lower[0] {
            return Err(Error::InvalidInput(format!(
                "turning point {kappa} lies outside the chart"
            )));
        }
        Ok(params)
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.k, self.p2)
    }

    pub fn hamiltonian(&self, x1: f64, p1: f64) -> f64 {
        reduced_hamiltonian(self.k, self.p2, x1, p1)
    }
}

/// Positive zero `(-2/p2)^(1/(2k-2))` of the zero-level branch `p1(x1)`.
pub fn kappa(k: u32, p2: f64) -> f64 {
    (-2.0 / p2).powf(1.0 / (2.0 * k as f64 - 2.0))
}

pub fn reduced_hamiltonian(k: u32, p2: f64, x1: f64, p1: f64) -> f64 {
    0.5 * p1 * p1 + 0.5 * x1.powi(2 * k as i32) * p2 * p2 + x1 * x1 * p2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortraitLevel {
    pub level: f64,
    /// Each polyline is a list of `(x1, p1)` points; closed curves repeat
    /// their first point at the end.
    pub polylines: Vec<Vec<[f64; 2]>>,
}

/// Level sets of the reduced Hamiltonian on `x1_range x p1_range`, traced by
/// marching squares on a `resolution x resolution` cell grid.
pub fn phase_portrait(
    params: &ExampleParams,
    levels: &[f64],
    resolution: usize,
    x1_range: [f64; 2],
    p1_range: [f64; 2],
) -> Result<Vec<PortraitLevel>> {
    if resolution < 64 {
        return Err(Error::InvalidInput(format!("resolution must be >= 64, got {resolution}")));
    }
    if !(x1_range[0] < x1_range[1] && p1_range[0] < p1_range[1]) {
        return Err(Error::InvalidInput("portrait ranges are not ordered".into()));
    }
    let n = resolution;
    let xs: Vec<f64> = (0..=n)
        .map(|i| x1_range[0] + (x1_range[1] - x1_range[0]) * i as f64 / n as f64)
        .collect();
    let ps: Vec<f64> = (0..=n)
        .map(|j| p1_range[0] + (p1_range[1] - p1_range[0]) * j as f64 / n as f64)
        .collect();
    let values: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| ps.iter().map(|&p| params.hamiltonian(x, p)).collect())
        .collect();
    Ok(levels
        .iter()
        .map(|&level| PortraitLevel {
            level,
            polylines: march(&xs, &ps, &values, level, |x, p| params.hamiltonian(x, p)),
        })
        .collect())
}

/// Grid edge: `(i, j, horizontal)`; horizontal edges join `(i, j)`-`(i+1, j)`.
type EdgeId = (usize, usize, bool);

fn march<F: Fn(f64, f64) -> f64>(
    xs: &[f64],
    ps: &[f64],
    v: &[Vec<f64>],
    level: f64,
    h: F,
) -> Vec<Vec<[f64; 2]>> {
    let n = xs.len() - 1;
    let above = |i: usize, j: usize| v[i][j] > level;
    let crossing = |e: EdgeId| -> [f64; 2] {
        let (i, j, horizontal) = e;
        let (i2, j2) = if horizontal { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (v[i][j] - level, v[i2][j2] - level);
        let s = a / (a - b);
        [xs[i] + s * (xs[i2] - xs[i]), ps[j] + s * (ps[j2] - ps[j])]
    };
    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            // corners counterclockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1)
            let bottom = (i, j, true);
            let right = (i + 1, j, false);
            let top = (i, j + 1, true);
            let left = (i, j, false);
            let code = usize::from(above(i, j))
                | usize::from(above(i + 1, j)) << 1
                | usize::from(above(i + 1, j + 1)) << 2
                | usize::from(above(i, j + 1)) << 3;
            match code {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    let centre = h(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ps[j] + ps[j + 1])) > level;
                    // corner (i,j) above for 5; join it with the centre if equal
                    if (code == 5) == centre {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut by_edge: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(s);
        by_edge.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let next_from = |edge: EdgeId, used: &[bool]| -> Option<usize> {
        by_edge[&edge].iter().copied().find(|&s| !used[s])
    };
    // open chains first (start at edges touched once), then loops
    let mut order: Vec<usize> = (0..segments.len())
        .filter(|&s| by_edge[&segments[s].0].len() == 1 || by_edge[&segments[s].1].len() == 1)
        .collect();
    order.extend(0..segments.len());
    for start in order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (first, mut tail) = if by_edge[&b].len() == 1 && by_edge[&a].len() != 1 {
            (b, a)
        } else {
            (a, b)
        };
        let mut edges = vec![first, tail];
        while let Some(s) = next_from(tail, &used) {
            used[s] = true;
            let (c, d) = segments[s];
            tail = if c == tail { d } else { c };
            edges.push(tail);
        }
        lines.push(edges.into_iter().map(crossing).collect());
    }
    lines
}

/// Integral over `[a, b]` by adaptive Simpson with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `int_0^1 (z^2 - z^(2k))^(1/2) dz`.
pub fn area_integral(k: u32) -> f64 {
    let e = 2 * k as i32;
    adaptive_simpson(&|z: f64| (z * z - z.powi(e)).max(0.0).sqrt(), 0.0, 1.0, SIMPSON_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub area: f64,
    pub escape: f64,
    pub combined: f64,
}

pub fn lower_bound(k: u32, p2: f64) -> Result<LowerBound> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("exponent k must be >= 2, got {k}")));
    }
    if !(p2 < 0.0 && p2.is_finite()) {
        return Err(Error::InvalidInput(format!("p2 must be negative, got {p2}")));
    }
    let kf = k as f64;
    let d = 2.0 * kf - 2.0;
    let area = 2f64.powf((kf + 1.0) / d) * (-p2).powf((kf - 3.0) / d) * area_integral(k);
    let escape = 0.5 * kappa(k, p2);
    Ok(LowerBound {
        area,
        escape,
        combined: area.max(escape),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFloor {
    /// Smallest combined bound over the sweep.
    pub floor: f64,
    pub argmin_p2: f64,
    pub samples: Vec<(f64, LowerBound)>,
}

/// Combined bound on `p2 = -10^s` for `samples` values of `s` evenly spread
/// over `[log10_min, log10_max]`.
pub fn bound_floor(k: u32, log10_min: f64, log10_max: f64, samples: usize) -> Result<BoundFloor> {
    if samples < 2 || !(log10_min < log10_max) {
        return Err(Error::InvalidInput("sweep needs at least two samples on an ordered range".into()));
    }
    let integral = area_integral(k);
    let kf = k as f64;
    let d = 2.0 * kf - 2.0;
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let s = log10_min + (log10_max - log10_min) * i as f64 / (samples - 1) as f64;
        let p2 = -(10f64.powf(s));
        let area = 2f64.powf((kf + 1.0) / d) * (-p2).powf((kf - 3.0) / d) * integral;
        let escape = 0.5 * kappa(k, p2);
        out.push((
            p2,
            LowerBound {
                area,
                escape,
                combined: area.max(escape),
            },
        ));
    }
    let (argmin_p2, best) = out
        .iter()
        .min_by(|a, b| a.1.combined.total_cmp(&b.1.combined))
        .copied()
        .expect("nonempty sweep");
    Ok(BoundFloor {
        floor: best.combined,
        argmin_p2,
        samples: out,
    })
}

/// Sweep used for the demo table's bound column.
pub const FLOOR_SWEEP: (f64, f64, usize) = (-6.0, 6.0, 241);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub k: u32,
    pub delta: f64,
    /// Optimized cost of `(0, 0) -> (0, -delta)` in unit time; an upper bound.
    pub cost: f64,
    pub endpoint_residual: f64,
    pub seed: u64,
    /// Floor of the analytic lower bound over `p2 < 0`.
    pub bound: f64,
}

/// Optimized `c_1((0,0), (0,-delta))` for each `delta`, next to the analytic
/// bound floor. Rows run in parallel with seeds derived from `params.seed`.
pub fn discontinuity_demo(k: u32, deltas: &[f64], params: &OptimizerParams) -> Result<Vec<DemoRow>> {
    if params.restarts < DEMO_MIN_RESTARTS {
        return Err(Error::InvalidInput(format!(
            "the demo needs at least {DEMO_MIN_RESTARTS} restarts, got {}",
            params.restarts
        )));
    }
    let system = paper_example(k)?;
    for &d in deltas {
        if !(d >= 0.0) || -d < CHART_LOWER[1] {
            return Err(Error::InvalidInput(format!("delta {d} is negative or leaves the chart")));
        }
    }
    let (lo, hi, n) = FLOOR_SWEEP;
    let bound = bound_floor(k, lo, hi, n)?.floor;
    let lag = Lagrangian::pure_quadratic();
    let rows: Vec<Result<DemoRow>> = deltas
        .par_iter()
        .enumerate()
        .map(|(row, &delta)| {
            let seed = entry_seed(params.seed, k as usize, row);
            let p = OptimizerParams { seed, ..params.clone() };
            let r = optimize_trajectory(&system, &lag, &[0.0, 0.0], &[0.0, -delta], 1.0, &p)?;
            Ok(DemoRow {
                k,
                delta,
                cost: r.cost,
                endpoint_residual: r.endpoint_residual,
                seed,
                bound,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Demo settings used by the acceptance run and the CLI default.
pub fn demo_params(seed: u64) -> OptimizerParams {
    OptimizerParams {
        segments: 32,
        restarts: DEMO_MIN_RESTARTS,
        seed,
        ..OptimizerParams::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_closed_form() {
        assert!((kappa(3, -2.0) - 1.0).abs() < 1e-15);
        assert!((kappa(2, -0.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_level_crosses_p1_axis_at_kappa() {
        let p = ExampleParams::new(3, -2.0).unwrap();
        assert_eq!(p.hamiltonian(0.0, 0.0), 0.0);
        assert!(p.hamiltonian(p.kappa(), 0.0).abs() < 1e-14);
        assert!(p.hamiltonian(-p.kappa(), 0.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_on_polynomial_and_sqrt() {
        let v = adaptive_simpson(&|x: f64| x.powi(3), 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn portrait_is_symmetric() {
        let p = ExampleParams::new(3, -2.0).unwrap();
        let levels = phase_portrait(&p, &[0.0, 0.3], 64, [-1.5, 1.5], [-1.5, 1.5]).unwrap();
        for lvl in &levels {
            assert!(!lvl.polylines.is_empty());
            for line in &lvl.polylines {
                for pt in line {
                    assert!(p.hamiltonian(pt[0], pt[1]).abs() < 0.05 + lvl.level.abs());
                    assert!(p.hamiltonian(pt[0], -pt[1]) - p.hamiltonian(pt[0], pt[1]) == 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ExampleParams::new(1, -1.0).is_err());
        assert!(ExampleParams::new(3, 0.5).is_err());
        // kappa = 2 touches the chart edge
        assert!(ExampleParams::new(3, -0.125).is_err());
        let p = ExampleParams::new(3, -2.0).unwrap();
        assert!(phase_portrait(&p, &[0.0], 32, [-1.0, 1.0], [-1.0, 1.0]).is_err());
        assert!(lower_bound(3, 0.0).is_err());
    }

    #[test]
    fn zero_delta_costs_nothing() {
        let rows = discontinuity_demo(3, &[0.0], &demo_params(5)).unwrap();
        assert_eq!(rows[0].cost, 0.0);
        assert!(rows[0].bound >= 0.5);
    }
}
