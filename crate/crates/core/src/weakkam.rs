//! Lax-Oleinik operator on cost matrices, the critical constant and weak
//! KAM potentials.
//!
//! With `C` the cost matrix at horizon `t`, the operator
//! `(S f)(y) = min_x C[x, y] + f(x)` is min-plus linear. Its eigenvalue is
//! `h t` and its eigenvectors are the discrete weak KAM potentials.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{minplus_compose, CostMatrix};
use crate::error::{Error, Result};
use crate::systems::{eval_hamiltonian, ControlAffineSystem, Lagrangian};
use crate::transport;

/// Values on the grid of a cost matrix, anchored to 0 at `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialField {
    values: Vec<f64>,
    anchor: usize,
}

impl PotentialField {
    /// Shifts `values` so that index 0 holds exactly 0.
    pub fn anchored(values: Vec<f64>) -> Result<PotentialField> {
        Self::anchored_at(values, 0)
    }

    pub fn anchored_at(mut values: Vec<f64>, anchor: usize) -> Result<PotentialField> {
        if anchor >= values.len() {
            return Err(Error::InvalidInput("anchor index out of range".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential values must be finite".into()));
        }
        let base = values[anchor];
        values.iter_mut().for_each(|v| *v -= base);
        values[anchor] = 0.0;
        Ok(PotentialField { values, anchor })
    }

    pub fn zeros(n: usize) -> PotentialField {
        PotentialField {
            values: vec![0.0; n],
            anchor: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(S f)(y) = min_x C[x, y] + f(x)` without re-anchoring.
pub fn lax_oleinik_unanchored(c: &CostMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = c.n();
    if f.len() != n {
        return Err(Error::InvalidInput("potential and matrix sizes differ".into()));
    }
    let mut out = vec![f64::INFINITY; n];
    for (x, fx) in f.iter().enumerate() {
        for (o, cxy) in out.iter_mut().zip(c.row(x)) {
            let v = cxy + fx;
            if v < *o {
                *o = v;
            }
        }
    }
    if let Some(y) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::UnreachablePoint(y));
    }
    Ok(out)
}

/// One Lax-Oleinik step, re-anchored at index 0.
pub fn lax_oleinik(c: &CostMatrix, f: &PotentialField) -> Result<PotentialField> {
    PotentialField::anchored(lax_oleinik_unanchored(c, f.values())?)
}

/// `max_y |(S f)(y) - ht - f(y)|`.
pub fn fixed_point_residual(c: &CostMatrix, f: &[f64], ht: f64) -> Result<f64> {
    let sf = lax_oleinik_unanchored(c, f)?;
    Ok(sf
        .iter()
        .zip(f)
        .map(|(s, v)| (s - ht - v).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub max: f64,
    pub min: f64,
    pub max_rate: f64,
    pub min_rate: f64,
}

/// Extremal entries of `C^{2^d}` over doubling horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubadditiveTrace {
    pub rows: Vec<TraceRow>,
    /// Midpoint of `M_t / t` and `m_t / t` at the deepest horizon.
    pub h: f64,
    /// `(M_t - m_t) / 2` at the deepest horizon.
    pub k_bound: f64,
}

impl SubadditiveTrace {
    /// `(M_t - m_t) / t` at the deepest horizon.
    pub fn rate_spread(&self) -> f64 {
        let last = self.rows.last().expect("trace has rows");
        last.max_rate - last.min_rate
    }
}

/// Repeated min-plus squaring of `generator`, recording `M_t` and `m_t`.
pub fn estimate_h_subadditive(generator: &CostMatrix, doublings: usize) -> Result<SubadditiveTrace> {
    if doublings < 4 {
        return Err(Error::InvalidInput("at least 4 doublings required".into()));
    }
    let mut power = generator.clone();
    let mut rows = Vec::with_capacity(doublings + 1);
    for d in 0..=doublings {
        if d > 0 {
            power = minplus_compose(&power, &power)?.matrix;
        }
        let (Some(max), Some(min)) = (power.max_finite(), power.min_finite()) else {
            return Err(Error::Disconnected(format!(
                "every entry of the 2^{d} power is infinite"
            )));
        };
        let t = power.t();
        rows.push(TraceRow {
            t,
            max,
            min,
            max_rate: max / t,
            min_rate: min / t,
        });
    }
    let last = rows.last().expect("nonempty");
    Ok(SubadditiveTrace {
        h: 0.5 * (last.max_rate + last.min_rate),
        k_bound: 0.5 * (last.max - last.min),
        rows: rows.clone(),
    })
}

/// Minimum cycle mean and one cycle achieving it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanCycle {
    /// Mean weight per arc, i.e. `h t`.
    pub value: f64,
    /// Node sequence; the cycle closes from the last node back to the first.
    pub cycle: Vec<usize>,
}

/// Karp's algorithm with a virtual source joined to every node at cost 0.
pub fn min_mean_cycle(c: &CostMatrix) -> Result<MeanCycle> {
    let n = c.n();
    // d[k][v]: least weight of a k-arc walk ending at v
    let mut d = vec![vec![f64::INFINITY; n]; n + 1];
    let mut pred = vec![vec![usize::MAX; n]; n + 1];
    d[0].iter_mut().for_each(|v| *v = 0.0);
    for k in 1..=n {
        let (prev, cur) = d.split_at_mut(k);
        let prev = &prev[k - 1];
        let cur = &mut cur[0];
        for u in 0..n {
            if prev[u] == f64::INFINITY {
                continue;
            }
            for (v, w) in c.row(u).iter().enumerate() {
                let cand = prev[u] + w;
                if cand < cur[v] {
                    cur[v] = cand;
                    pred[k][v] = u;
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    for v in 0..n {
        if d[n][v] == f64::INFINITY {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            if d[k][v] < f64::INFINITY {
                worst = worst.max((d[n][v] - d[k][v]) / (n - k) as f64);
            }
        }
        best = best.min(worst);
    }
    if best == f64::INFINITY {
        return Err(Error::Disconnected("the matrix has no finite cycle".into()));
    }
    // every n-arc walk repeats a node; collect the cycles on all of them
    let mut chosen: Option<(f64, Vec<usize>)> = None;
    for v in 0..n {
        if d[n][v] == f64::INFINITY {
            continue;
        }
        let mut walk = vec![v];
        let mut node = v;
        for k in (1..=n).rev() {
            node = pred[k][node];
            walk.push(node);
        }
        walk.reverse();
        for cyc in cycles_in_walk(&walk) {
            let mean = cycle_mean(c, &cyc);
            let cyc = rotate_to_min(cyc);
            let replace = match &chosen {
                None => true,
                Some((m, cur)) => mean < *m || (mean == *m && cyc[0] < cur[0]),
            };
            if replace {
                chosen = Some((mean, cyc));
            }
        }
    }
    let (_, cycle) = chosen.expect("a finite n-arc walk contains a cycle");
    Ok(MeanCycle { value: best, cycle })
}

fn cycles_in_walk(walk: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for start in 0..walk.len() {
        if let Some(offset) = walk[start + 1..].iter().position(|&w| w == walk[start]) {
            let cyc = walk[start..start + 1 + offset].to_vec();
            let mut seen = cyc.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() == cyc.len() {
                out.push(cyc);
            }
        }
    }
    out
}

/// Mean arc weight of the closed cycle `nodes[0] -> ... -> nodes[0]`.
pub fn cycle_mean(c: &CostMatrix, nodes: &[usize]) -> f64 {
    let len = nodes.len();
    let total: f64 = (0..len).map(|i| c.get(nodes[i], nodes[(i + 1) % len])).sum();
    total / len as f64
}

fn rotate_to_min(mut cyc: Vec<usize>) -> Vec<usize> {
    let pos = cyc
        .iter()
        .enumerate()
        .min_by_key(|(_, v)| **v)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cyc.rotate_left(pos);
    cyc
}

/// Output of [`weak_kam_potential`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakKamSolution {
    pub potential: PotentialField,
    /// `inf_j [S_{a 2^j} f0 - h a 2^j]` before the fixed-point iteration.
    pub f_bar: PotentialField,
    /// `||S f - ht - f||_inf` of the returned potential.
    pub residual: f64,
    pub iterations: usize,
    /// `"iteration"` or `"critical-distance"` (see [`weak_kam_potential`]).
    pub method: &'static str,
    /// Sup-norm change per iteration.
    pub trace: Vec<f64>,
}

/// Maximum number of fixed-point iterations.
pub const MAX_KAM_ITERATIONS: usize = 10_000;
/// Doublings of the tail horizon used for `f_bar`.
pub const TAIL_DOUBLINGS: u32 = 10;

/// Weak KAM potential from the tail infimum `f_bar` followed by the
/// fixed-point iteration `f <- S f - ht`.
///
/// `tail` is the starting horizon `a`, rounded to a whole number of matrix
/// steps. When the iteration oscillates (a periodic critical graph), the
/// potential is taken as the min-plus eigenvector given by shortest-path
/// distances under `C - ht` from a node on a critical cycle, and certified by
/// its residual like the iterate would be.
pub fn weak_kam_potential(
    c: &CostMatrix,
    ht: f64,
    f0: &PotentialField,
    tail: f64,
) -> Result<WeakKamSolution> {
    let n = c.n();
    if f0.len() != n {
        return Err(Error::InvalidInput("initial potential has the wrong size".into()));
    }
    if !ht.is_finite() || !(tail > 0.0) {
        return Err(Error::InvalidInput("ht must be finite and the tail positive".into()));
    }
    let a_steps = ((tail / c.t()).round() as usize).max(1);
    let last_horizon = a_steps << TAIL_DOUBLINGS;
    let mut f = f0.values().to_vec();
    let mut f_bar = vec![f64::INFINITY; n];
    let mut next_mark = a_steps;
    for step in 1..=last_horizon {
        f = lax_oleinik_unanchored(c, &f)?;
        f.iter_mut().for_each(|v| *v -= ht);
        if step == next_mark {
            for (b, v) in f_bar.iter_mut().zip(&f) {
                *b = b.min(*v);
            }
            next_mark *= 2;
        }
    }
    let f_bar = PotentialField::anchored(f_bar)?;
    let mut f = f_bar.values().to_vec();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_KAM_ITERATIONS {
        let mut next = lax_oleinik_unanchored(c, &f)?;
        next.iter_mut().for_each(|v| *v -= ht);
        let change = next
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        f = next;
        iterations += 1;
        trace.push(change);
        if change < 1e-9 {
            break;
        }
    }
    let residual = fixed_point_residual(c, &f, ht)?;
    if residual <= 1e-9 {
        return Ok(WeakKamSolution {
            potential: PotentialField::anchored(f)?,
            f_bar,
            residual,
            iterations,
            method: "iteration",
            trace,
        });
    }
    let candidate = critical_distance_potential(c, ht)?;
    let cand_residual = match &candidate {
        Some(v) => fixed_point_residual(c, v, ht)?,
        None => f64::INFINITY,
    };
    if let Some(candidate) = candidate.filter(|_| cand_residual <= 1e-6 && cand_residual < residual) {
        return Ok(WeakKamSolution {
            potential: PotentialField::anchored(candidate)?,
            f_bar,
            residual: cand_residual,
            iterations,
            method: "critical-distance",
            trace,
        });
    }
    if residual <= 1e-6 {
        return Ok(WeakKamSolution {
            potential: PotentialField::anchored(f)?,
            f_bar,
            residual,
            iterations,
            method: "iteration",
            trace,
        });
    }
    trace.push(residual.min(cand_residual));
    Err(Error::NonConvergence { trace })
}

/// `v(y)` = least weight under `C - ht` of a path into `y` from a node on a
/// critical cycle (mean `ht`), taking every critical class as a source.
///
/// `None` when some node cannot be reached from any critical cycle; no finite
/// fixed point exists then.
fn critical_distance_potential(c: &CostMatrix, ht: f64) -> Result<Option<Vec<f64>>> {
    let n = c.n();
    let scale = c.max_finite().unwrap_or(0.0).abs().max(c.min_finite().unwrap_or(0.0).abs()) + ht.abs() + 1.0;
    let mut dist = vec![f64::INFINITY; n];
    let mut sources = vec![min_mean_cycle(c)?.cycle[0]];
    loop {
        for &s in &sources {
            dist[s] = 0.0;
        }
        // Bellman-Ford; with ht the minimum cycle mean there are no negative cycles
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for (v, w) in c.row(u).iter().enumerate() {
                    let cand = dist[u] + (w - ht);
                    if cand < dist[v] {
                        dist[v] = cand;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&v| dist[v] == f64::INFINITY).collect();
        if missing.is_empty() {
            return Ok(Some(dist));
        }
        // a critical cycle not reached so far lies among the missing nodes
        let sub = CostMatrix::from_rows(
            missing.iter().map(|&a| missing.iter().map(|&b| c.get(a, b)).collect()).collect(),
            c.t(),
        )?;
        match min_mean_cycle(&sub) {
            Ok(mc) if (mc.value - ht).abs() <= 1e-12 * scale => sources = vec![missing[mc.cycle[0]]],
            Ok(_) | Err(Error::Disconnected(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
}

/// One row of [`viscosity_residual`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscosityRow {
    pub index: usize,
    pub point: Vec<f64>,
    /// Central-difference gradient, when the point is retained.
    pub gradient: Option<Vec<f64>>,
    /// `|H(x, df) + h|`, when the point is retained.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscosityReport {
    pub max_residual: f64,
    pub skipped_fraction: f64,
    /// Every point was skipped; the potential looks nowhere differentiable.
    pub degenerate: bool,
    pub rows: Vec<ViscosityRow>,
}

/// Factor on the grid step used for the differentiability proxy.
pub const DIFFERENTIABILITY_FACTOR: f64 = 10.0;

/// Checks `H(x, df(x)) = -h` at grid points where one-sided difference
/// quotients agree within `DIFFERENTIABILITY_FACTOR * step` on every axis.
pub fn viscosity_residual(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    c: &CostMatrix,
    f: &PotentialField,
    h: f64,
) -> Result<ViscosityReport> {
    let grid = c.grid();
    if grid.space() != Some(&system.space) {
        return Err(Error::InvalidInput(
            "the potential's grid is not a uniform grid on the system's space".into(),
        ));
    }
    if f.len() != grid.len() {
        return Err(Error::InvalidInput("potential and grid sizes differ".into()));
    }
    let m = system.state_dim();
    let vals = f.values();
    let rows: Vec<Result<ViscosityRow>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut grad = Vec::with_capacity(m);
            for axis in 0..m {
                let step = grid.step(axis).expect("uniform grid");
                let (Some(fwd), Some(bwd)) = (grid.neighbor(i, axis, 1), grid.neighbor(i, axis, -1)) else {
                    return Ok(skipped(i, grid.point(i)));
                };
                let dp = (vals[fwd] - vals[i]) / step;
                let dm = (vals[i] - vals[bwd]) / step;
                if (dp - dm).abs() > DIFFERENTIABILITY_FACTOR * step {
                    return Ok(skipped(i, grid.point(i)));
                }
                grad.push(0.5 * (dp + dm));
            }
            let ham = eval_hamiltonian(system, lagrangian, grid.point(i), &grad)?;
            Ok(ViscosityRow {
                index: i,
                point: grid.point(i).to_vec(),
                gradient: Some(grad),
                residual: Some((ham + h).abs()),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let retained: Vec<f64> = rows.iter().filter_map(|r| r.residual).collect();
    let skipped_fraction = 1.0 - retained.len() as f64 / rows.len() as f64;
    Ok(ViscosityReport {
        max_residual: retained.iter().copied().fold(0.0, f64::max),
        skipped_fraction,
        degenerate: retained.is_empty(),
        rows,
    })
}

fn skipped(index: usize, point: &[f64]) -> ViscosityRow {
    ViscosityRow {
        index,
        point: point.to_vec(),
        gradient: None,
        residual: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessCheck {
    /// `|k t - h t|` with `h t` from Karp's algorithm.
    pub gap: f64,
    pub holds: bool,
    /// The constant `S f - f` actually equals (mean over the grid).
    pub eigenvalue_of_f: f64,
}

/// Tolerance on `|k t - h t|`.
pub const UNIQUENESS_TOLERANCE: f64 = 1e-6;

/// Checks a claimed fixed point `S f - k t = f` against the critical value.
///
/// `f` must be a min-plus eigenvector (`S f - f` constant within 1e-8),
/// otherwise the claim is malformed. The claim holds when `k` is the
/// eigenvalue the matrix admits, which is unique.
pub fn verify_h_uniqueness(c: &CostMatrix, f: &[f64], k: f64) -> Result<UniquenessCheck> {
    let sf = lax_oleinik_unanchored(c, f)?;
    let diffs: Vec<f64> = sf.iter().zip(f).map(|(s, v)| s - v).collect();
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "S f - f is not constant (spread {:e}); f is not a fixed point for any k",
            hi - lo
        )));
    }
    let ht = min_mean_cycle(c)?.value;
    let gap = (k * c.t() - ht).abs();
    Ok(UniquenessCheck {
        gap,
        holds: gap <= UNIQUENESS_TOLERANCE,
        eigenvalue_of_f: diffs.iter().sum::<f64>() / diffs.len() as f64 / c.t(),
    })
}

/// The critical constant by three routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValueReport {
    pub h_subadditive: f64,
    pub h_karp: f64,
    pub h_alpha: f64,
    pub t: f64,
    pub doublings: usize,
    /// `(M_t - m_t) / 2` at the deepest horizon.
    pub k_bound: f64,
    /// `(M_t - m_t) / t` at the deepest horizon.
    pub subadditive_window: f64,
    /// Largest pairwise difference among the three estimates.
    pub spread: f64,
    pub karp_cycle: Vec<usize>,
    pub trace: SubadditiveTrace,
}

pub fn critical_value_report(c: &CostMatrix, doublings: usize) -> Result<CriticalValueReport> {
    let trace = estimate_h_subadditive(c, doublings)?;
    let karp = min_mean_cycle(c)?;
    let alpha = transport::alpha_t(c)?;
    let t = c.t();
    let (hs, hk, ha) = (trace.h, karp.value / t, alpha.value);
    let spread = (hs - hk).abs().max((hs - ha).abs()).max((hk - ha).abs());
    Ok(CriticalValueReport {
        h_subadditive: hs,
        h_karp: hk,
        h_alpha: ha,
        t,
        doublings,
        k_bound: trace.k_bound,
        subadditive_window: trace.rate_spread(),
        spread,
        karp_cycle: karp.cycle,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn karp3() -> CostMatrix {
        CostMatrix::from_rows(
            vec![vec![0.0, 1.0, 4.0], vec![2.0, 0.0, 1.0], vec![5.0, 2.0, 0.0]],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn column_minima_from_zero() {
        let c = karp3();
        let s = lax_oleinik_unanchored(&c, &[0.0; 3]).unwrap();
        assert_eq!(s, vec![0.0, 0.0, 0.0]);
        let shifted = lax_oleinik_unanchored(&c, &[1.5, 2.0, -0.5]).unwrap();
        let base = lax_oleinik_unanchored(&c, &[0.0, 0.5, -2.0]).unwrap();
        for (a, b) in shifted.iter().zip(&base) {
            assert_eq!(*a, b + 1.5);
        }
    }

    #[test]
    fn unreachable_column() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![0.0, inf], vec![1.0, inf]], 1.0).unwrap();
        assert_eq!(
            lax_oleinik(&c, &PotentialField::zeros(2)).unwrap_err(),
            Error::UnreachablePoint(1)
        );
    }

    #[test]
    fn two_cycle() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![inf, 3.0], vec![1.0, inf]], 1.0).unwrap();
        let mc = min_mean_cycle(&c).unwrap();
        assert_eq!(mc.value, 2.0);
        assert_eq!(mc.cycle, vec![0, 1]);
    }

    #[test]
    fn no_cycle_is_disconnected() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![inf, 3.0], vec![inf, inf]], 1.0).unwrap();
        assert!(matches!(min_mean_cycle(&c), Err(Error::Disconnected(_))));
    }

    #[test]
    fn constant_matrix() {
        let c = CostMatrix::from_rows(vec![vec![0.7; 4]; 4], 0.5).unwrap();
        let tr = estimate_h_subadditive(&c, 5).unwrap();
        for r in &tr.rows {
            assert_eq!(r.max_rate, 1.4);
            assert_eq!(r.min_rate, 1.4);
        }
        let sol = weak_kam_potential(&c, 0.7, &PotentialField::zeros(4), 0.5).unwrap();
        assert_eq!(sol.potential.values(), &[0.0; 4]);
    }

    #[test]
    fn karp_instance_potential() {
        let c = karp3();
        let mc = min_mean_cycle(&c).unwrap();
        assert_eq!(mc.value, 0.0);
        assert_eq!(mc.cycle, vec![0]);
        let sol = weak_kam_potential(&c, mc.value, &PotentialField::zeros(3), 1.0).unwrap();
        assert!(sol.residual <= 1e-12);
        let chk = verify_h_uniqueness(&c, sol.potential.values(), 0.0).unwrap();
        assert!(chk.holds && chk.gap <= 1e-9);
        let off = verify_h_uniqueness(&c, sol.potential.values(), 0.1).unwrap();
        assert!(!off.holds && (off.gap - 0.1).abs() < 1e-12);
    }

    #[test]
    fn periodic_critical_graph_uses_distance_potential() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![inf, 1.0], vec![3.0, inf]], 1.0).unwrap();
        let f0 = PotentialField::anchored(vec![0.0, 5.0]).unwrap();
        let sol = weak_kam_potential(&c, 2.0, &f0, 1.0).unwrap();
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn malformed_claim_is_rejected() {
        let c = karp3();
        assert!(verify_h_uniqueness(&c, &[0.0, 10.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn every_critical_class_seeds_the_distance_potential() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(
            vec![vec![0.0, inf, 3.0], vec![inf, 0.0, 1.0], vec![inf, inf, 2.0]],
            1.0,
        )
        .unwrap();
        assert_eq!(critical_distance_potential(&c, 0.0).unwrap(), Some(vec![0.0, 0.0, 1.0]));
    }

    #[test]
    fn no_finite_fixed_point_without_critical_ancestors() {
        // node 0 only feeds itself at mean 1 > h = 0
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![1.0, 0.0], vec![inf, 0.0]], 1.0).unwrap();
        assert_eq!(critical_distance_potential(&c, 0.0).unwrap(), None);
        let err = weak_kam_potential(&c, 0.0, &PotentialField::zeros(2), 1.0).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}
