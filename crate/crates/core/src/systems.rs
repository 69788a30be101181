//! Control-affine systems, Lagrangians and their control Hamiltonians.
//!
//! A system is `x' = X0(x) + sum_i u_i X_i(x)` on a flat torus or on a
//! bounded rectangular chart. Fields are expression vectors (see
//! [`crate::expr`]) with precomputed symbolic Jacobians.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{self, BracketWord};
use crate::linalg;

/// State space: a flat torus with per-axis periods, or a box chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpace {
    FlatTorus { periods: Vec<f64> },
    BoxChart { lower: Vec<f64>, upper: Vec<f64> },
}

impl StateSpace {
    pub fn torus(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() || periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidInput(
                "torus periods must be finite and strictly positive".into(),
            ));
        }
        Ok(StateSpace::FlatTorus { periods })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty()
            || lower.len() != upper.len()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l))
        {
            return Err(Error::InvalidInput(
                "box chart needs matching finite bounds with upper > lower".into(),
            ));
        }
        Ok(StateSpace::BoxChart { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSpace::FlatTorus { periods } => periods.len(),
            StateSpace::BoxChart { lower, .. } => lower.len(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, StateSpace::FlatTorus { .. })
    }

    /// Per-axis period (torus) or width (box).
    pub fn extent(&self, axis: usize) -> f64 {
        match self {
            StateSpace::FlatTorus { periods } => periods[axis],
            StateSpace::BoxChart { lower, upper } => upper[axis] - lower[axis],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            StateSpace::FlatTorus { .. } => x.iter().all(|v| v.is_finite()),
            StateSpace::BoxChart { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u),
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "state has dimension {}, space has {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!("state {x:?} outside the chart")));
        }
        Ok(())
    }

    /// Torus coordinates reduced to `[0, period)`; box states unchanged.
    pub fn canonicalize(&self, x: &mut [f64]) {
        if let StateSpace::FlatTorus { periods } = self {
            for (v, p) in x.iter_mut().zip(periods) {
                let mut r = v.rem_euclid(*p);
                if r >= *p {
                    r = 0.0;
                }
                *v = r;
            }
        }
    }

    /// Displacement `to - from`, wrapped to the shortest representative on a torus.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
        if let StateSpace::FlatTorus { periods } = self {
            for (v, p) in d.iter_mut().zip(periods) {
                *v -= p * (*v / p).round();
            }
        }
        d
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A smooth vector field given by one expression per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Self {
        let m = components.len();
        let jacobian = components
            .iter()
            .map(|c| (0..m).map(|j| c.diff(j)).collect())
            .collect();
        VectorField {
            components,
            jacobian,
        }
    }

    pub fn parse(src: &[&str]) -> Result<Self> {
        let m = src.len();
        let comps = src
            .iter()
            .map(|s| Expr::parse_state(s, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField::new(comps))
    }

    pub fn zero(m: usize) -> Self {
        VectorField::new(vec![Expr::zero(); m])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    /// Row-major Jacobian `J[k][j] = d F_k / d x_j`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        self.jacobian
            .iter()
            .flat_map(|row| row.iter().map(|e| e.eval(x)))
            .collect()
    }

    /// Adds `scale * J(x)` into `out` (row-major, `m*m`).
    pub fn add_jacobian_into(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        if scale == 0.0 {
            return;
        }
        let m = self.dim();
        for (k, row) in self.jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if !e.is_zero() {
                    out[k * m + j] += scale * e.eval(x);
                }
            }
        }
    }

    /// Symbolic Lie bracket `[self, other] = (D other) self - (D self) other`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        let m = self.dim();
        let comps = (0..m)
            .map(|k| {
                let mut acc = Expr::zero();
                for j in 0..m {
                    acc = Expr::add(
                        acc,
                        Expr::mul(self.components[j].clone(), other.jacobian[k][j].clone()),
                    );
                    acc = Expr::sub(
                        acc,
                        Expr::mul(other.components[j].clone(), self.jacobian[k][j].clone()),
                    );
                }
                acc
            })
            .collect();
        VectorField::new(comps)
    }
}

/// `x' = X0(x) + sum_i u_i X_i(x)`.
#[derive(Debug, Clone)]
pub struct ControlAffineSystem {
    pub name: String,
    pub space: StateSpace,
    pub drift: VectorField,
    pub controls: Vec<VectorField>,
}

impl ControlAffineSystem {
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        drift: VectorField,
        controls: Vec<VectorField>,
    ) -> Result<Self> {
        let m = space.dim();
        if controls.is_empty() {
            return Err(Error::InvalidInput("at least one control field required".into()));
        }
        if drift.dim() != m || controls.iter().any(|c| c.dim() != m) {
            return Err(Error::InvalidInput(
                "all fields must share the state-space dimension".into(),
            ));
        }
        let max_var = drift
            .components()
            .iter()
            .chain(controls.iter().flat_map(|c| c.components()))
            .filter_map(Expr::max_var)
            .max();
        if max_var.is_some_and(|v| v >= m) {
            return Err(Error::InvalidInput(
                "field expression references a coordinate beyond the dimension".into(),
            ));
        }
        Ok(ControlAffineSystem {
            name: name.into(),
            space,
            drift,
            controls,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.space.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    /// Velocity without domain checks; writes into `out`.
    pub fn velocity_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.drift.eval_into(x, out);
        let m = out.len();
        let mut tmp = [0.0; 8];
        for (ui, field) in u.iter().zip(&self.controls) {
            if *ui == 0.0 {
                continue;
            }
            if m <= 8 {
                field.eval_into(x, &mut tmp[..m]);
                for k in 0..m {
                    out[k] += ui * tmp[k];
                }
            } else {
                for (o, v) in out.iter_mut().zip(field.eval(x)) {
                    *o += ui * v;
                }
            }
        }
    }

    /// State Jacobian of `F(x, u)`, row-major.
    pub fn state_jacobian(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut j = self.drift.jacobian(x);
        for (ui, field) in u.iter().zip(&self.controls) {
            field.add_jacobian_into(x, *ui, &mut j);
        }
        j
    }

    /// Control fields evaluated at `x`, one vector per channel.
    pub fn control_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.controls.iter().map(|f| f.eval(x)).collect()
    }
}

/// `X0(x) + sum_i u_i X_i(x)`, failing for states outside a box chart.
pub fn eval_dynamics(system: &ControlAffineSystem, state: &[f64], control: &[f64]) -> Result<Vec<f64>> {
    system.space.check(state)?;
    if control.len() != system.control_dim() {
        return Err(Error::InvalidInput(format!(
            "control has {} channels, system has {}",
            control.len(),
            system.control_dim()
        )));
    }
    if control.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("control must be finite".into()));
    }
    let mut out = vec![0.0; system.state_dim()];
    system.velocity_into(state, control, &mut out);
    Ok(out)
}

/// Search settings for the Hamiltonian of a general Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximizerSearch {
    /// Half-width of the control box searched.
    pub bound: f64,
    /// Values above this are reported as a divergent supremum.
    pub cap: f64,
}

impl Default for MaximizerSearch {
    fn default() -> Self {
        MaximizerSearch {
            bound: 1e6,
            cap: 1e9,
        }
    }
}

/// Running cost `L(x, u)`.
#[derive(Debug, Clone)]
pub enum Lagrangian {
    /// `|u|^2 / 2`.
    PureQuadratic,
    /// `u^T A(x) u / 2 + b(x)`, `A(x)` symmetric positive definite.
    StateWeighted {
        weight: Vec<Vec<Expr>>,
        offset: Expr,
        offset_grad: Vec<Expr>,
        weight_grad: Vec<Vec<Vec<Expr>>>,
    },
    /// Arbitrary expression in `(x_1..x_m, u_1..u_n)`.
    General(Box<GeneralLagrangian>),
}

#[derive(Debug, Clone)]
pub struct GeneralLagrangian {
    pub expr: Expr,
    pub m: usize,
    pub n: usize,
    pub search: MaximizerSearch,
    grad_x: Vec<Expr>,
    grad_u: Vec<Expr>,
    hess_u: Vec<Vec<Expr>>,
}

impl Lagrangian {
    pub fn pure_quadratic() -> Self {
        Lagrangian::PureQuadratic
    }

    /// `u^T A(x) u / 2 + b(x)`; expressions are in state coordinates.
    pub fn state_weighted(weight: Vec<Vec<Expr>>, offset: Expr, m: usize) -> Result<Self> {
        let n = weight.len();
        if n == 0 || weight.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("weight matrix must be square and nonempty".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if weight[i][j] != weight[j][i] {
                    return Err(Error::InvalidInput("weight matrix must be symmetric".into()));
                }
            }
        }
        let offset_grad = (0..m).map(|j| offset.diff(j)).collect();
        let weight_grad = weight
            .iter()
            .map(|row| row.iter().map(|e| (0..m).map(|j| e.diff(j)).collect()).collect())
            .collect();
        Ok(Lagrangian::StateWeighted {
            weight,
            offset,
            offset_grad,
            weight_grad,
        })
    }

    /// `|u|^2/2 + b(x)` with identity weight.
    pub fn quadratic_plus(offset: Expr, m: usize, n: usize) -> Self {
        let weight = (0..n)
            .map(|i| (0..n).map(|j| Expr::Const(if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        Lagrangian::state_weighted(weight, offset, m).expect("identity weight is valid")
    }

    pub fn general(expr: Expr, m: usize, n: usize, search: MaximizerSearch) -> Result<Self> {
        if expr.max_var().is_some_and(|v| v >= m + n) {
            return Err(Error::InvalidInput(
                "lagrangian references variables beyond (x, u)".into(),
            ));
        }
        let grad_x = (0..m).map(|j| expr.diff(j)).collect();
        let grad_u: Vec<Expr> = (0..n).map(|i| expr.diff(m + i)).collect();
        let hess_u = grad_u
            .iter()
            .map(|g| (0..n).map(|k| g.diff(m + k)).collect())
            .collect();
        Ok(Lagrangian::General(Box::new(GeneralLagrangian {
            expr,
            m,
            n,
            search,
            grad_x,
            grad_u,
            hess_u,
        })))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Lagrangian::PureQuadratic => "pure-quadratic",
            Lagrangian::StateWeighted { .. } => "quadratic-with-state-weight",
            Lagrangian::General(_) => "general-expression",
        }
    }

    /// True when `u*(x, p)` has a closed form (kinds 1 and 2).
    pub fn is_quadratic(&self) -> bool {
        !matches!(self, Lagrangian::General(_))
    }

    fn weight_matrix(weight: &[Vec<Expr>], x: &[f64]) -> Vec<f64> {
        weight
            .iter()
            .flat_map(|row| row.iter().map(|e| e.eval(x)))
            .collect()
    }

    pub fn value(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Lagrangian::PureQuadratic => 0.5 * u.iter().map(|v| v * v).sum::<f64>(),
            Lagrangian::StateWeighted { weight, offset, .. } => {
                let n = u.len();
                let a = Self::weight_matrix(weight, x);
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += u[i] * a[i * n + j] * u[j];
                    }
                }
                0.5 * q + offset.eval(x)
            }
            Lagrangian::General(g) => g.expr.eval(&join(x, u)),
        }
    }

    pub fn grad_x(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            Lagrangian::PureQuadratic => out.iter_mut().for_each(|v| *v = 0.0),
            Lagrangian::StateWeighted {
                offset_grad,
                weight_grad,
                ..
            } => {
                let n = u.len();
                for (j, o) in out.iter_mut().enumerate() {
                    let mut s = offset_grad[j].eval(x);
                    for a in 0..n {
                        for b in 0..n {
                            let d = &weight_grad[a][b][j];
                            if !d.is_zero() {
                                s += 0.5 * u[a] * d.eval(x) * u[b];
                            }
                        }
                    }
                    *o = s;
                }
            }
            Lagrangian::General(g) => {
                let v = join(x, u);
                for (o, e) in out.iter_mut().zip(&g.grad_x) {
                    *o = e.eval(&v);
                }
            }
        }
    }

    pub fn grad_u(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            Lagrangian::PureQuadratic => out.copy_from_slice(u),
            Lagrangian::StateWeighted { weight, .. } => {
                let n = u.len();
                let a = Self::weight_matrix(weight, x);
                for i in 0..n {
                    out[i] = (0..n).map(|j| a[i * n + j] * u[j]).sum();
                }
            }
            Lagrangian::General(g) => {
                let v = join(x, u);
                for (o, e) in out.iter_mut().zip(&g.grad_u) {
                    *o = e.eval(&v);
                }
            }
        }
    }

    /// Hessian in `u`, row-major `n*n`.
    pub fn hess_u(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = u.len();
        match self {
            Lagrangian::PureQuadratic => {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = 1.0;
                }
                h
            }
            Lagrangian::StateWeighted { weight, .. } => Self::weight_matrix(weight, x),
            Lagrangian::General(g) => {
                let v = join(x, u);
                g.hess_u
                    .iter()
                    .flat_map(|row| row.iter().map(|e| e.eval(&v)))
                    .collect()
            }
        }
    }

    /// Maximizer `u* = A(x)^{-1} q` of `q.u - L(x, u)` for quadratic kinds.
    pub fn quadratic_maximizer(&self, x: &[f64], q: &[f64]) -> Option<Vec<f64>> {
        match self {
            Lagrangian::PureQuadratic => Some(q.to_vec()),
            Lagrangian::StateWeighted { weight, .. } => {
                linalg::solve(&Self::weight_matrix(weight, x), q)
            }
            Lagrangian::General(_) => None,
        }
    }
}

fn join(x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + u.len());
    v.extend_from_slice(x);
    v.extend_from_slice(u);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sup_u [p . F(x, u) - L(x, u)]`.
///
/// Closed form for the quadratic kinds; damped Newton with multistart for a
/// general Lagrangian.
pub fn eval_hamiltonian(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    state: &[f64],
    covector: &[f64],
) -> Result<f64> {
    let drift = system.drift.eval(state);
    let q: Vec<f64> = system
        .controls
        .iter()
        .map(|f| dot(covector, &f.eval(state)))
        .collect();
    let base = dot(covector, &drift);
    let n = q.len();
    if lagrangian.is_quadratic() {
        let u = lagrangian
            .quadratic_maximizer(state, &q)
            .ok_or_else(|| Error::Domain("weight matrix singular".into()))?;
        // q.u - u^T A u / 2 - b with A u = q  ==>  q.u/2 - b
        let offset = lagrangian.value(state, &vec![0.0; n]);
        return Ok(base + 0.5 * dot(&q, &u) - offset);
    }
    let Lagrangian::General(g) = lagrangian else {
        unreachable!()
    };
    let objective = |u: &[f64]| base + dot(&q, u) - lagrangian.value(state, u);
    let search = &g.search;
    let mut starts = vec![vec![0.0; n]];
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut u = vec![0.0; n];
            u[i] = s;
            starts.push(u);
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut grad = vec![0.0; n];
    for start in starts {
        let mut u = start;
        let mut val = objective(&u);
        let mut reach = 1.0;
        for _ in 0..200 {
            lagrangian.grad_u(state, &u, &mut grad);
            let ascent: Vec<f64> = q.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let gnorm = ascent.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if gnorm < 1e-13 * (1.0 + val.abs()) {
                break;
            }
            let h = lagrangian.hess_u(state, &u);
            let newton = linalg::is_positive_definite(&h, n);
            let dir = if newton {
                linalg::solve(&h, &ascent).unwrap_or_else(|| ascent.clone())
            } else {
                ascent.clone()
            };
            let mut step = if newton { 1.0 } else { reach };
            let mut improved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = u
                    .iter()
                    .zip(&dir)
                    .map(|(a, d)| (a + step * d).clamp(-search.bound, search.bound))
                    .collect();
                let cv = objective(&cand);
                if cv > search.cap {
                    return Err(Error::Divergence {
                        value: cv,
                        cap: search.cap,
                    });
                }
                if cv > val {
                    u = cand;
                    val = cv;
                    improved = true;
                    // without curvature, grow the step while the full step keeps paying off
                    if !newton && step == reach {
                        reach *= 2.0;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if val > search.cap {
            return Err(Error::Divergence {
                value: val,
                cap: search.cap,
            });
        }
        best = best.max(val);
    }
    Ok(best)
}

/// Status of one checked hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ConditionStatus {
    Satisfied,
    Violated {
        witness_x: Vec<f64>,
        witness_u: Vec<f64>,
        detail: String,
    },
    Unchecked {
        reason: String,
    },
}

impl ConditionStatus {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, ConditionStatus::Satisfied)
    }

    pub fn label(&self) -> &'static str {
        match self {
            ConditionStatus::Satisfied => "satisfied",
            ConditionStatus::Violated { .. } => "violated",
            ConditionStatus::Unchecked { .. } => "unchecked",
        }
    }
}

/// Constants fitted over the sample set; `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedConstants {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub q: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub lower_growth: ConditionStatus,
    pub upper_growth: ConditionStatus,
    pub state_derivative: ConditionStatus,
    pub hessian: ConditionStatus,
    /// Control fields 3-generating at every sampled point.
    pub three_generating: ConditionStatus,
    pub constants: FittedConstants,
    /// Smallest `k <= k_max` at which the fields are k-generating at every sample.
    pub generating_order: Option<usize>,
    /// Spanning words at the first sample point for `generating_order`.
    pub spanning_words: Vec<BracketWord>,
    /// Whether `(generating_order, p)` falls in a case of the exponent table.
    pub exponent_case_feasible: Option<bool>,
    pub k_max: usize,
    pub sample_points: usize,
    pub control_samples: usize,
}

const CONTROL_RADII: [f64; 8] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

fn control_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n > 1 {
        let c = 1.0 / (n as f64).sqrt();
        dirs.push(vec![c; n]);
        dirs.push((0..n).map(|i| if i % 2 == 0 { c } else { -c }).collect());
    }
    dirs
}

struct Sample {
    x: Vec<f64>,
    u: Vec<f64>,
    r: f64,
    l: f64,
    base: f64,
}

/// Fits the growth/convexity constants over `sample_grid` x a fixed control
/// sample and determines the generating order of the control fields.
pub fn check_conditions(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    sample_grid: &[Vec<f64>],
    k_max: usize,
) -> Result<ConditionReport> {
    if sample_grid.is_empty() {
        return Err(Error::InvalidInput("sample grid is empty".into()));
    }
    let n = system.control_dim();
    let m = system.state_dim();
    let dirs = control_directions(n);
    let mut samples = Vec::new();
    for x in sample_grid {
        if x.len() != m {
            return Err(Error::InvalidInput("sample point dimension mismatch".into()));
        }
        let base = lagrangian.value(x, &vec![0.0; n]);
        samples.push(Sample {
            x: x.clone(),
            u: vec![0.0; n],
            r: 0.0,
            l: base,
            base,
        });
        for &r in &CONTROL_RADII[1..] {
            for d in &dirs {
                let u: Vec<f64> = d.iter().map(|v| v * r).collect();
                let l = lagrangian.value(x, &u);
                samples.push(Sample {
                    x: x.clone(),
                    u,
                    r,
                    l,
                    base,
                });
            }
        }
    }
    let r_top = CONTROL_RADII[CONTROL_RADII.len() - 1];
    let r_next = CONTROL_RADII[CONTROL_RADII.len() - 2];
    let ratio_at = |r: f64, k: f64, f: &dyn Fn(&Sample) -> f64, pick_max: bool| -> (f64, usize) {
        let mut best = if pick_max { f64::NEG_INFINITY } else { f64::INFINITY };
        let mut arg = 0;
        for (i, s) in samples.iter().enumerate() {
            if s.r == r {
                let v = f(s) / r.powf(k);
                if (pick_max && v > best) || (!pick_max && v < best) {
                    best = v;
                    arg = i;
                }
            }
        }
        (best, arg)
    };

    // lower bound C1 |u|^q + K1 <= L
    let l_min = samples.iter().map(|s| s.l).fold(f64::INFINITY, f64::min);
    let shifted = |s: &Sample| s.l - l_min;
    let mut lower = None;
    for q in [2.0, 1.75, 1.5, 1.25, 1.1] {
        let (top, _) = ratio_at(r_top, q, &shifted, false);
        let (next, _) = ratio_at(r_next, q, &shifted, false);
        let c1 = samples
            .iter()
            .filter(|s| s.r >= 1.0)
            .map(|s| (s.l - l_min) / s.r.powf(q))
            .fold(f64::INFINITY, f64::min);
        if c1 > 0.0 && top >= next * (1.0 - 1e-9) {
            let k1 = samples
                .iter()
                .map(|s| s.l - c1 * s.r.powf(q))
                .fold(f64::INFINITY, f64::min);
            lower = Some((q, c1, k1));
            break;
        }
    }
    let lower_growth = match lower {
        Some(_) => ConditionStatus::Satisfied,
        None => {
            let (_, arg) = ratio_at(r_top, 1.1, &shifted, false);
            ConditionStatus::Violated {
                witness_x: samples[arg].x.clone(),
                witness_u: samples[arg].u.clone(),
                detail: "L does not grow like |u|^q for any sampled q > 1".into(),
            }
        }
    };

    // upper bound L <= C2 |u|^p + K2, growth read off L(x,u) - L(x,0)
    let excess = |s: &Sample| s.l - s.base;
    let mut upper = None;
    for p in [1.0, 1.25, 1.5, 1.75, 2.0] {
        let (top, _) = ratio_at(r_top, p, &excess, true);
        let (next, _) = ratio_at(r_next, p, &excess, true);
        if top <= next.max(0.0) * (1.0 + 1e-9) + 1e-12 {
            let c2 = samples
                .iter()
                .filter(|s| s.r > 0.0)
                .map(|s| excess(s) / s.r.powf(p))
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            let k2 = samples
                .iter()
                .map(|s| s.l - c2 * s.r.powf(p))
                .fold(f64::NEG_INFINITY, f64::max);
            upper = Some((p, c2, k2));
            break;
        }
    }
    let upper_growth = match upper {
        Some(_) => ConditionStatus::Satisfied,
        None => {
            let (_, arg) = ratio_at(r_top, 2.0, &excess, true);
            ConditionStatus::Violated {
                witness_x: samples[arg].x.clone(),
                witness_u: samples[arg].u.clone(),
                detail: "L grows faster than |u|^2".into(),
            }
        }
    };

    // |dL/dx| <= C3 |u|^2
    let mut gx = vec![0.0; m];
    let mut worst_zero: Option<(usize, f64)> = None;
    let mut c3: f64 = 0.0;
    let mut top_ratio: f64 = 0.0;
    let mut next_ratio: f64 = 0.0;
    let mut top_arg = 0;
    for (i, s) in samples.iter().enumerate() {
        lagrangian.grad_x(&s.x, &s.u, &mut gx);
        let g = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s.r == 0.0 {
            if g > 1e-12 * (1.0 + s.l.abs()) && worst_zero.is_none_or(|(_, w)| g > w) {
                worst_zero = Some((i, g));
            }
        } else {
            let ratio = g / (s.r * s.r);
            c3 = c3.max(ratio);
            if s.r == r_top && ratio > top_ratio {
                top_ratio = ratio;
                top_arg = i;
            }
            if s.r == r_next {
                next_ratio = next_ratio.max(ratio);
            }
        }
    }
    let state_derivative = if let Some((i, g)) = worst_zero {
        ConditionStatus::Violated {
            witness_x: samples[i].x.clone(),
            witness_u: samples[i].u.clone(),
            detail: format!("|dL/dx| = {g:.6e} > 0 at u = 0"),
        }
    } else if top_ratio > next_ratio * (1.0 + 1e-9) && top_ratio > 0.0 {
        ConditionStatus::Violated {
            witness_x: samples[top_arg].x.clone(),
            witness_u: samples[top_arg].u.clone(),
            detail: "|dL/dx| grows faster than |u|^2".into(),
        }
    } else {
        ConditionStatus::Satisfied
    };

    let mut hessian = ConditionStatus::Satisfied;
    for s in &samples {
        let h = lagrangian.hess_u(&s.x, &s.u);
        if !linalg::is_positive_definite(&h, n) {
            hessian = ConditionStatus::Violated {
                witness_x: s.x.clone(),
                witness_u: s.u.clone(),
                detail: "Hessian in u is not positive definite".into(),
            };
            break;
        }
    }

    // generating order
    let words_fields = geometry::word_fields(&system.controls, k_max.max(1));
    let mut generating_order = None;
    let mut spanning_words = Vec::new();
    let mut first_fail_at_three: Option<Vec<f64>> = None;
    for k in 1..=k_max {
        let mut ok = true;
        let mut words_here = Vec::new();
        for (pi, x) in sample_grid.iter().enumerate() {
            let res = geometry::k_generating_with(&words_fields, x, k, m);
            if pi == 0 {
                words_here = res.clone().unwrap_or_default();
            }
            if res.is_none() {
                ok = false;
                if k == 3 && first_fail_at_three.is_none() {
                    first_fail_at_three = Some(x.clone());
                }
                break;
            }
        }
        if ok {
            generating_order = Some(k);
            spanning_words = words_here;
            break;
        }
    }
    let three_generating = match generating_order {
        Some(k) if k <= 3 => ConditionStatus::Satisfied,
        _ if k_max < 3 && generating_order.is_none() => ConditionStatus::Unchecked {
            reason: format!("k_max = {k_max} < 3"),
        },
        _ => {
            let x = first_fail_at_three.unwrap_or_else(|| sample_grid[0].clone());
            ConditionStatus::Violated {
                witness_x: x,
                witness_u: vec![0.0; n],
                detail: "brackets of length <= 3 do not span".into(),
            }
        }
    };

    let p_fit = upper.map(|(p, _, _)| p);
    let exponent_case_feasible = match (generating_order, p_fit) {
        (Some(k), Some(p)) => Some(geometry::exponent_feasible(k.max(3), p).is_some()),
        _ => None,
    };

    Ok(ConditionReport {
        lower_growth,
        upper_growth,
        state_derivative,
        hessian,
        three_generating,
        constants: FittedConstants {
            c1: lower.map(|(_, c, _)| c),
            c2: upper.map(|(_, c, _)| c),
            c3: if worst_zero.is_none() { Some(c3) } else { None },
            k1: lower.map(|(_, _, k)| k),
            k2: upper.map(|(_, _, k)| k),
            q: lower.map(|(q, _, _)| q),
            p: p_fit,
        },
        generating_order,
        spanning_words,
        exponent_case_feasible,
        k_max,
        sample_points: sample_grid.len(),
        control_samples: samples.len() / sample_grid.len(),
    })
}

/// Built-in systems: `integrator-1d`, `paper-example-k{2,3,4}` (and any
/// `paper-example-kN` with N >= 2), `torus-2d-heisenberg-like`.
pub fn catalog_system(name: &str) -> Result<ControlAffineSystem> {
    if name == "integrator-1d" {
        return ControlAffineSystem::new(
            name,
            StateSpace::torus(vec![2.0 * std::f64::consts::PI])?,
            VectorField::parse(&["0"])?,
            vec![VectorField::parse(&["1"])?],
        );
    }
    if name == "torus-2d-heisenberg-like" {
        let tau = 2.0 * std::f64::consts::PI;
        return ControlAffineSystem::new(
            name,
            StateSpace::torus(vec![tau, tau])?,
            VectorField::zero(2),
            vec![
                VectorField::parse(&["1", "0"])?,
                VectorField::parse(&["0", "sin(x1)"])?,
            ],
        );
    }
    if let Some(k) = name
        .strip_prefix("paper-example-k")
        .and_then(|s| s.parse::<u32>().ok())
    {
        if k >= 2 {
            return paper_example(k);
        }
    }
    Err(Error::InvalidInput(format!("unknown catalog system '{name}'")))
}

pub const CATALOG_NAMES: [&str; 5] = [
    "integrator-1d",
    "paper-example-k2",
    "paper-example-k3",
    "paper-example-k4",
    "torus-2d-heisenberg-like",
];

/// `x1' = u1`, `x2' = x1^2 + u2 x1^k` on the chart `[-2,2] x [-1.5,1.5]`.
pub fn paper_example(k: u32) -> Result<ControlAffineSystem> {
    ControlAffineSystem::new(
        format!("paper-example-k{k}"),
        StateSpace::boxed(vec![-2.0, -1.5], vec![2.0, 1.5])?,
        VectorField::parse(&["0", "x1^2"])?,
        vec![
            VectorField::parse(&["1", "0"])?,
            VectorField::parse(&["0", &format!("x1^{k}")])?,
        ],
    )
}
