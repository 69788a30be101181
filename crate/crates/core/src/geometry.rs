//! Lie brackets, generating checks, pulled-back control fields, commutator
//! control schedules and the control-rescaling law.
//!
//! Bracket words are read right-nested: the word `(i1, ..., il)` stands for
//! `ad_{X_i1} ... ad_{X_i(l-1)} X_il = [X_i1, [X_i2, ..., [X_i(l-1), X_il]]]`
//! with `[X, Y] = (DY) X - (DX) Y`. Channel indices are zero-based.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode;
use crate::schedule::ControlSchedule;
use crate::systems::{ControlAffineSystem, VectorField};

pub const DEFAULT_MAX_WORD_LEN: usize = 4;

/// Relative tolerance for deciding that evaluated brackets span.
pub const SPAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BracketWord(Vec<usize>);

impl BracketWord {
    pub fn new(indices: Vec<usize>, channels: usize) -> Result<Self> {
        Self::with_max_len(indices, channels, DEFAULT_MAX_WORD_LEN)
    }

    pub fn with_max_len(indices: Vec<usize>, channels: usize, max_len: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > max_len {
            return Err(Error::InvalidInput(format!(
                "bracket word length must be in 1..={max_len}"
            )));
        }
        if indices.iter().any(|&i| i >= channels) {
            return Err(Error::InvalidInput(format!(
                "bracket word index out of range for {channels} channels"
            )));
        }
        Ok(BracketWord(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `[X, Y](point) = (DY) X - (DX) Y` from exact Jacobians.
pub fn lie_bracket(x: &VectorField, y: &VectorField, point: &[f64]) -> Vec<f64> {
    let m = x.dim();
    let xv = x.eval(point);
    let yv = y.eval(point);
    let dx = x.jacobian(point);
    let dy = y.jacobian(point);
    (0..m)
        .map(|k| {
            let a: f64 = (0..m).map(|j| dy[k * m + j] * xv[j]).sum();
            let b: f64 = (0..m).map(|j| dx[k * m + j] * yv[j]).sum();
            a - b
        })
        .collect()
}

/// Symbolic field of a bracket word.
pub fn word_field(fields: &[VectorField], word: &BracketWord) -> VectorField {
    let idx = word.indices();
    let mut acc = fields[idx[idx.len() - 1]].clone();
    for &i in idx[..idx.len() - 1].iter().rev() {
        acc = fields[i].bracket(&acc);
    }
    acc
}

/// All words of length `1..=k_max` in length-then-lexicographic order,
/// paired with their symbolic fields.
pub fn word_fields(fields: &[VectorField], k_max: usize) -> Vec<(BracketWord, VectorField)> {
    let n = fields.len();
    let mut out: Vec<(BracketWord, VectorField)> = Vec::new();
    let mut prev: Vec<(Vec<usize>, VectorField)> =
        (0..n).map(|i| (vec![i], fields[i].clone())).collect();
    for (w, f) in &prev {
        out.push((BracketWord(w.clone()), f.clone()));
    }
    for _ in 2..=k_max {
        let mut next = Vec::new();
        for i in 0..n {
            for (w, f) in &prev {
                let mut word = vec![i];
                word.extend_from_slice(w);
                next.push((word, fields[i].bracket(f)));
            }
        }
        for (w, f) in &next {
            out.push((BracketWord(w.clone()), f.clone()));
        }
        prev = next;
    }
    out
}

/// Spanning words when brackets of length `<= k` span `R^m` at `point`.
pub fn k_generating_check(
    fields: &[VectorField],
    point: &[f64],
    k: usize,
) -> Option<Vec<BracketWord>> {
    let m = point.len();
    let wf = word_fields(fields, k.max(1));
    k_generating_with(&wf, point, k, m)
}

pub(crate) fn k_generating_with(
    word_fields: &[(BracketWord, VectorField)],
    point: &[f64],
    k: usize,
    m: usize,
) -> Option<Vec<BracketWord>> {
    let selected: Vec<&(BracketWord, VectorField)> =
        word_fields.iter().filter(|(w, _)| w.len() <= k).collect();
    let vectors: Vec<Vec<f64>> = selected.iter().map(|(_, f)| f.eval(point)).collect();
    let kept = linalg::independent_subset(&vectors, SPAN_TOLERANCE);
    (kept.len() == m).then(|| kept.into_iter().map(|i| selected[i].0.clone()).collect())
}

/// Flow of `F_{u(t)}` and its Jacobian from `0` to `t` starting at `x`.
///
/// Returns `(Phi_t(x), D Phi_t(x))` with the Jacobian row-major.
pub fn flow_with_jacobian(
    system: &ControlAffineSystem,
    schedule: &ControlSchedule,
    x: &[f64],
    t: f64,
    total_steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = system.state_dim();
    let mut z = vec![0.0; m + m * m];
    z[..m].copy_from_slice(x);
    for i in 0..m {
        z[m + i * m + i] = 1.0;
    }
    let steps = ode::steps_per_segment(schedule.breakpoints(), total_steps);
    for ((a, b, u), n_steps) in schedule.segments().zip(steps) {
        if a >= t {
            break;
        }
        let end = b.min(t);
        let n_here = ((n_steps as f64) * (end - a) / (b - a)).ceil().max(1.0) as usize;
        let mut rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
            let (xs, js) = s.split_at(m);
            system.velocity_into(xs, u, &mut ds[..m]);
            let df = system.state_jacobian(xs, u);
            for r in 0..m {
                for c in 0..m {
                    ds[m + r * m + c] = (0..m).map(|k| df[r * m + k] * js[k * m + c]).sum();
                }
            }
        };
        let h = (end - a) / n_here as f64;
        for k in 0..n_here {
            ode::rk4_step(&mut rhs, a + k as f64 * h, &mut z, h);
            if !system.space.is_torus() && !system.space.contains(&z[..m]) {
                return Err(Error::Domain(format!(
                    "flow left the chart at t = {}",
                    a + (k + 1) as f64 * h
                )));
            }
        }
    }
    let jac = z.split_off(m);
    Ok((z, jac))
}

/// Pulled-back control fields `g_i^t(x) = (D Phi_t)^{-1} X_i(Phi_t(x))`.
pub fn pullback_at(
    system: &ControlAffineSystem,
    schedule: &ControlSchedule,
    t: f64,
    x: &[f64],
    total_steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let (y, jac) = flow_with_jacobian(system, schedule, x, t, total_steps)?;
    system
        .controls
        .iter()
        .map(|field| {
            linalg::solve(&jac, &field.eval(&y))
                .ok_or_else(|| Error::Domain("flow Jacobian became singular".into()))
        })
        .collect()
}

/// Table of pulled-back fields at query times and points.
#[derive(Debug, Clone, Serialize)]
pub struct PullbackField {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `values[t][p][i]` is `g_i^{times[t]}(points[p])`.
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

pub const PULLBACK_STEPS: usize = 2000;

pub fn pullback_fields(
    system: &ControlAffineSystem,
    schedule: &ControlSchedule,
    query_times: &[f64],
    query_points: &[Vec<f64>],
) -> Result<PullbackField> {
    let horizon = schedule.horizon();
    if query_times.iter().any(|&t| t < 0.0 || t > horizon) {
        return Err(Error::InvalidInput(
            "query time outside the schedule horizon".into(),
        ));
    }
    let values = query_times
        .iter()
        .map(|&t| {
            query_points
                .iter()
                .map(|p| pullback_at(system, schedule, t, p, PULLBACK_STEPS))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackField {
        times: query_times.to_vec(),
        points: query_points.to_vec(),
        values,
    })
}

/// Raw commutator schedule: segments `(duration, channel, sign)` with the
/// product of amplitude and duration of the leading bracket term.
fn chow_raw(word: &[usize]) -> (Vec<(f64, usize, f64)>, f64) {
    if word.len() == 1 {
        return (vec![(1.0, word[0], 1.0)], 1.0);
    }
    let (q, c_q) = chow_raw(&word[1..]);
    let d_q: f64 = q.iter().map(|s| s.0).sum();
    let pieces = q.len();
    let p_block: Vec<(f64, usize, f64)> = (0..pieces)
        .map(|_| (d_q / pieces as f64, word[0], 1.0))
        .collect();
    let inverse = |block: &[(f64, usize, f64)]| -> Vec<(f64, usize, f64)> {
        block.iter().rev().map(|&(d, c, s)| (d, c, -s)).collect()
    };
    let mut out = inverse(&p_block);
    out.extend(inverse(&q));
    out.extend(p_block.iter().copied());
    out.extend(q.iter().copied());
    (out, d_q * c_q)
}

/// Piecewise-constant control realizing the bracket of `word` at order
/// `eps^len` with unit coefficient.
///
/// A length-1 word is the constant control on its channel. Longer words
/// concatenate the inverse of the head block, the inverse of the tail block,
/// the head block and the tail block; the inverse of a block is its
/// time-reversed negation, so the four blocks form a group commutator. The
/// result is rescaled to horizon `T` and amplitude-normalized so that
/// `f(end) = f(x0) + eps^l (ad-word f)(x0) + o(eps^l)`.
pub fn chow_control(word: &BracketWord, horizon: f64, channels: usize) -> Result<ControlSchedule> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if word.indices().iter().any(|&i| i >= channels) {
        return Err(Error::InvalidInput("word index exceeds channel count".into()));
    }
    let (raw, coef) = chow_raw(word.indices());
    let l = word.len() as f64;
    let total: f64 = raw.iter().map(|s| s.0).sum();
    let time_scale = horizon / total;
    let amplitude = coef.powf(-1.0 / l) / time_scale;
    let mut bps = vec![0.0];
    let mut vals = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for (k, (d, c, s)) in raw.iter().enumerate() {
        acc += d;
        bps.push(if k + 1 == raw.len() {
            horizon
        } else {
            acc * time_scale
        });
        let mut v = vec![0.0; channels];
        v[*c] = s * amplitude;
        vals.push(v);
    }
    ControlSchedule::new(bps, vals)
}

/// Smooth test functions used to probe flow expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    Coordinate { axis: usize },
    Product { a: usize, b: usize },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TestFunction::Coordinate { axis } => x[axis],
            TestFunction::Product { a, b } => x[a] * x[b],
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match *self {
            TestFunction::Coordinate { axis } => g[axis] = 1.0,
            TestFunction::Product { a, b } => {
                g[a] += x[b];
                g[b] += x[a];
            }
        }
        g
    }

    /// Derivative of the function along `field` at `x`.
    pub fn derivative_along(&self, field: &VectorField, x: &[f64]) -> f64 {
        self.gradient(x)
            .iter()
            .zip(field.eval(x))
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionFit {
    /// `(epsilon, f(end) - f(x0))` per probe.
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
    pub coefficient: f64,
}

/// Signal floor below which an endpoint change is treated as zero.
pub const EXPANSION_SIGNAL_FLOOR: f64 = 1e-13;

/// `2^-10, ..., 2^-15`; larger probes are biased by the next bracket order.
pub fn default_epsilons() -> Vec<f64> {
    (10..=15).map(|k| 2f64.powi(-k)).collect()
}

/// Integrates `x' = eps * sum_i w_i(t) g_i(x)` for each `eps` and fits
/// `log |f(end) - f(x0)|` against `log eps`.
///
/// The coefficient is `sign * exp(intercept)` where the sign is taken from
/// the smallest probe with a usable signal.
pub fn verify_bracket_expansion(
    fields: &[VectorField],
    schedule: &ControlSchedule,
    x0: &[f64],
    test: TestFunction,
    epsilons: &[f64],
) -> Result<ExpansionFit> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidInput("need at least two epsilons".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("epsilons must be positive and decreasing".into()));
    }
    if schedule.channels() != fields.len() {
        return Err(Error::InvalidInput("schedule channels do not match fields".into()));
    }
    let m = x0.len();
    let f0 = test.eval(x0);
    let rows: Vec<(f64, f64)> = epsilons
        .par_iter()
        .map(|&eps| {
            let mut x = x0.to_vec();
            let mut tmp = vec![0.0; m];
            for (a, b, w) in schedule.segments() {
                let mut rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
                    ds.iter_mut().for_each(|v| *v = 0.0);
                    for (wi, g) in w.iter().zip(fields) {
                        if *wi != 0.0 {
                            g.eval_into(s, &mut tmp);
                            for k in 0..m {
                                ds[k] += eps * wi * tmp[k];
                            }
                        }
                    }
                };
                ode::integrate(&mut rhs, a, b, &mut x, 64);
            }
            (eps, test.eval(&x) - f0)
        })
        .collect();
    let usable: Vec<(f64, f64)> = rows
        .iter()
        .copied()
        .filter(|(_, d)| d.abs() > EXPANSION_SIGNAL_FLOOR)
        .collect();
    if usable.len() < 2 {
        return Err(Error::IndeterminateExpansion {
            threshold: EXPANSION_SIGNAL_FLOOR,
        });
    }
    let (slope, intercept) = least_squares(
        &usable
            .iter()
            .map(|(e, d)| (e.ln(), d.abs().ln()))
            .collect::<Vec<_>>(),
    );
    let sign = usable.last().map(|(_, d)| d.signum()).unwrap_or(1.0);
    Ok(ExpansionFit {
        rows,
        slope,
        coefficient: sign * intercept.exp(),
    })
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `v_eps(t) = eps^-alpha v((t - tau) / eps^beta)` on `(tau, tau + eps^beta T)`,
/// zero elsewhere on `[0, horizon]`.
pub fn rescale_control(
    v: &ControlSchedule,
    tau: f64,
    alpha: f64,
    beta: f64,
    eps: f64,
    horizon: f64,
) -> Result<ControlSchedule> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput("epsilon must lie in (0, 1]".into()));
    }
    if !(beta > 0.0) || alpha < 0.0 {
        return Err(Error::InvalidInput("need alpha >= 0 and beta > 0".into()));
    }
    if tau < 0.0 {
        return Err(Error::InvalidInput("tau must be non-negative".into()));
    }
    let time_scale = eps.powf(beta);
    let amp = eps.powf(-alpha);
    let end = tau + time_scale * v.horizon();
    if end > horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "rescaled support ends at {end}, beyond horizon {horizon}"
        )));
    }
    let n = v.channels();
    let mut bps = vec![0.0];
    let mut vals = Vec::new();
    if tau > 0.0 {
        bps.push(tau);
        vals.push(vec![0.0; n]);
    }
    for (_, b, val) in v.segments() {
        bps.push(tau + time_scale * b);
        vals.push(val.iter().map(|x| amp * x).collect());
    }
    if end < horizon {
        bps.push(horizon);
        vals.push(vec![0.0; n]);
    }
    ControlSchedule::new(bps, vals)
}

/// Exponent pair for the rescaling law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaleExponents {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub p: f64,
}

fn rational(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite value")
}

/// Exact check of `3b - 2a > k(b - a) > 0`, `b - a p > 0`, `p <= 2`, `a >= 0`, `b > 0`.
pub fn exponents_valid(alpha: &BigRational, beta: &BigRational, k: usize, p: &BigRational) -> bool {
    let kk = BigRational::from_integer(BigInt::from(k));
    let two = BigRational::from_integer(BigInt::from(2));
    let three = BigRational::from_integer(BigInt::from(3));
    let lhs = &three * beta - &two * alpha;
    let mid = &kk * (beta - alpha);
    *alpha >= BigRational::zero()
        && *beta > BigRational::zero()
        && lhs > mid
        && mid > BigRational::zero()
        && beta - alpha * p > BigRational::zero()
        && *p <= two
}

/// Grid denominator for the exponent search.
pub const EXPONENT_GRID: i64 = 48;

/// Searches `alpha, beta in {j / 48 : 0 <= j <= 96}` for a pair satisfying
/// the rescaling inequalities exactly (rational arithmetic).
pub fn exponent_feasible(k: usize, p: f64) -> Option<RescaleExponents> {
    if k < 3 || !(p >= 1.0) {
        return None;
    }
    let pr = rational(p);
    let d = EXPONENT_GRID;
    for b in 1..=2 * d {
        for a in 0..=2 * d {
            let alpha = BigRational::new(BigInt::from(a), BigInt::from(d));
            let beta = BigRational::new(BigInt::from(b), BigInt::from(d));
            if exponents_valid(&alpha, &beta, k, &pr) {
                return Some(RescaleExponents {
                    alpha: a as f64 / d as f64,
                    beta: b as f64 / d as f64,
                    k,
                    p,
                });
            }
        }
    }
    None
}

/// The case table: `k = 3, p <= 2` or `k > 3, p < (k-2)/(k-3)`.
pub fn continuity_case_holds(k: usize, p: f64) -> bool {
    match k {
        0..=2 => false,
        3 => p <= 2.0,
        _ => {
            let pr = rational(p);
            let bound = BigRational::new(BigInt::from(k - 2), BigInt::from(k - 3));
            pr < bound
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::paper_example;

    fn example_fields(k: u32) -> Vec<VectorField> {
        paper_example(k).unwrap().controls
    }

    #[test]
    fn bracket_of_example_fields() {
        let f = example_fields(2);
        assert_eq!(lie_bracket(&f[0], &f[1], &[1.0, 0.0]), vec![0.0, 2.0]);
        assert_eq!(lie_bracket(&f[1], &f[1], &[0.3, 0.4]), vec![0.0, 0.0]);
        let c1 = VectorField::parse(&["1", "2"]).unwrap();
        let c2 = VectorField::parse(&["-3", "0.5"]).unwrap();
        assert_eq!(lie_bracket(&c1, &c2, &[0.1, 0.2]), vec![0.0, 0.0]);
    }

    #[test]
    fn generating_order_of_example() {
        let f = example_fields(2);
        let words = k_generating_check(&f, &[0.0, 0.0], 3).unwrap();
        let idx: Vec<Vec<usize>> = words.iter().map(|w| w.indices().to_vec()).collect();
        assert_eq!(idx, vec![vec![0], vec![0, 0, 1]]);
        assert!(k_generating_check(&f, &[0.0, 0.0], 2).is_none());
    }

    #[test]
    fn single_constant_field_never_spans() {
        let f = vec![VectorField::parse(&["1", "0"]).unwrap()];
        for k in 1..=4 {
            assert!(k_generating_check(&f, &[0.2, 0.3], k).is_none());
        }
    }

    #[test]
    fn chow_schedule_shapes() {
        let w1 = BracketWord::new(vec![1], 2).unwrap();
        let s1 = chow_control(&w1, 1.0, 2).unwrap();
        assert_eq!(s1.segment_count(), 1);
        assert_eq!(s1.values()[0], vec![0.0, 1.0]);

        let w12 = BracketWord::new(vec![0, 1], 2).unwrap();
        let s = chow_control(&w12, 1.0, 2).unwrap();
        assert_eq!(s.segment_count(), 4);
        let signs: Vec<(usize, f64)> = s
            .values()
            .iter()
            .map(|v| {
                let c = v.iter().position(|x| *x != 0.0).unwrap();
                (c, v[c].signum())
            })
            .collect();
        assert_eq!(signs, vec![(0, -1.0), (1, -1.0), (0, 1.0), (1, 1.0)]);

        let w112 = BracketWord::new(vec![0, 0, 1], 2).unwrap();
        let s = chow_control(&w112, 1.0, 2).unwrap();
        assert_eq!(s.segment_count(), 16);
        for v in s.values() {
            assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        }
        for c in 0..2 {
            assert!(s.channel_integral(c).abs() < 1e-12);
        }
    }

    #[test]
    fn exponent_table() {
        assert!(exponent_feasible(3, 2.0).is_some());
        assert!(exponent_feasible(4, 2.0).is_none());
        assert!(exponent_feasible(3, 3.0).is_none());
        let w = exponent_feasible(3, 1.5).unwrap();
        assert!(exponents_valid(&rational(w.alpha), &rational(w.beta), 3, &rational(1.5)));
    }

    #[test]
    fn rescale_identity_and_half() {
        let v = ControlSchedule::new(vec![0.0, 0.3, 1.0], vec![vec![1.0, -2.0], vec![0.5, 0.0]]).unwrap();
        let same = rescale_control(&v, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((same.lp_norm(2.0) - v.lp_norm(2.0)).abs() < 1e-15);
        let r = rescale_control(&v, 0.25, 0.0, 1.0, 0.25, 1.0).unwrap();
        assert!((r.lp_norm(2.0) / v.lp_norm(2.0) - 0.5).abs() < 1e-14);
        assert!(rescale_control(&v, 0.9, 0.0, 1.0, 0.5, 1.0).is_err());
    }
}
