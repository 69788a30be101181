//! Fixed-horizon control costs `c_T(x, y)`.
//!
//! The direct method optimizes piecewise-constant controls; the cost is the
//! RK4 quadrature of `L` along the RK4 trajectory, and its gradient is the
//! exact discrete adjoint of that scheme. The endpoint constraint is handled
//! with an augmented Lagrangian. All costs produced this way are upper bounds
//! for the continuum infimum (the discretization gap is not quantified).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lbfgs::{self, LbfgsOptions};
use crate::ode;
use crate::schedule::ControlSchedule;
use crate::systems::{eval_hamiltonian, ControlAffineSystem, Lagrangian};

/// Endpoint residual below which a solve counts as converged.
pub const CONVERGED_RESIDUAL: f64 = 1e-6;
/// Endpoint residual above which a solve counts as unreached.
pub const UNREACHED_RESIDUAL: f64 = 1e-3;
/// RK4 steps used by [`pmp_shoot`] over the whole horizon.
pub const SHOOTING_STEPS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerParams {
    /// Piecewise-constant segments `N`.
    pub segments: usize,
    /// Restarts `R`; restart 0 starts from `u = 0`.
    pub restarts: usize,
    pub seed: u64,
    /// RK4 steps per segment.
    pub substeps: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Controls beyond this magnitude are penalized quadratically.
    pub control_bound: f64,
    /// Standard deviation of random initial controls, in units of the
    /// straight-line speed `1 + d(x, y) / T`.
    pub init_scale: f64,
    pub initial_penalty: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            segments: 16,
            restarts: 4,
            seed: 0,
            substeps: 4,
            max_outer: 12,
            max_inner: 300,
            control_bound: 1e3,
            init_scale: 1.0,
            initial_penalty: 10.0,
        }
    }
}

impl OptimizerParams {
    fn validate(&self) -> Result<()> {
        if self.segments < 4 {
            return Err(Error::InvalidInput("segments must be at least 4".into()));
        }
        if self.restarts == 0 || self.substeps == 0 || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidInput(
                "restarts, substeps and iteration limits must be positive".into(),
            ));
        }
        if !(self.control_bound > 0.0 && self.init_scale >= 0.0 && self.initial_penalty > 0.0) {
            return Err(Error::InvalidInput(
                "control bound and penalty must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryResult {
    pub cost: f64,
    pub schedule: ControlSchedule,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub endpoint_residual: f64,
    pub converged: bool,
    pub restarts_used: usize,
    pub best_restart: usize,
    /// Quasi-Newton iterations spent on the winning start.
    pub inner_iterations: usize,
    /// Sup-norm of the merit gradient at the end of the last inner solve.
    pub final_merit_gradient: f64,
}

/// Discretized transcription of one boundary value problem.
struct Transcription<'a> {
    system: &'a ControlAffineSystem,
    lagrangian: &'a Lagrangian,
    target: &'a [f64],
    x0: &'a [f64],
    m: usize,
    n: usize,
    segments: usize,
    substeps: usize,
    h: f64,
    control_bound: f64,
    /// Endpoint residuals are divided by this before entering the merit, so
    /// the penalty does not fade for nearby endpoints.
    scale: f64,
}

struct Forward {
    cost: f64,
    /// State at the start of every RK4 step plus the final state.
    nodes: Vec<f64>,
    residual: Vec<f64>,
}

impl Transcription<'_> {
    fn rhs(&self, z: &[f64], u: &[f64], dz: &mut [f64]) -> f64 {
        self.system.velocity_into(z, u, dz);
        self.lagrangian.value(z, u)
    }

    /// `(DF_x^T a + aj grad_x L, B^T a + aj grad_u L)` at `(z, u)`.
    fn vjp(&self, z: &[f64], u: &[f64], a: &[f64], aj: f64, out_z: &mut [f64], out_u: &mut [f64]) {
        let m = self.m;
        let df = self.system.state_jacobian(z, u);
        self.lagrangian.grad_x(z, u, out_z);
        for c in 0..m {
            let mut s = aj * out_z[c];
            for r in 0..m {
                s += df[r * m + c] * a[r];
            }
            out_z[c] = s;
        }
        self.lagrangian.grad_u(z, u, out_u);
        let mut col = vec![0.0; m];
        for (i, field) in self.system.controls.iter().enumerate() {
            field.eval_into(z, &mut col);
            out_u[i] = aj * out_u[i] + col.iter().zip(a).map(|(c, v)| c * v).sum::<f64>();
        }
    }

    fn forward(&self, v: &[f64]) -> Option<Forward> {
        let (m, n, h) = (self.m, self.n, self.h);
        let steps = self.segments * self.substeps;
        let mut nodes = Vec::with_capacity((steps + 1) * m);
        let mut x = self.x0.to_vec();
        nodes.extend_from_slice(&x);
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut z = vec![0.0; m];
        let mut cost = 0.0;
        let confined = !self.system.space.is_torus();
        for seg in 0..self.segments {
            let u = &v[seg * n..(seg + 1) * n];
            for _ in 0..self.substeps {
                let l1 = self.rhs(&x, u, &mut k1);
                for i in 0..m {
                    z[i] = x[i] + 0.5 * h * k1[i];
                }
                let l2 = self.rhs(&z, u, &mut k2);
                for i in 0..m {
                    z[i] = x[i] + 0.5 * h * k2[i];
                }
                let l3 = self.rhs(&z, u, &mut k3);
                for i in 0..m {
                    z[i] = x[i] + h * k3[i];
                }
                let l4 = self.rhs(&z, u, &mut k4);
                for i in 0..m {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                cost += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                if !x.iter().all(|c| c.is_finite()) || (confined && !self.system.space.contains(&x)) {
                    return None;
                }
                nodes.extend_from_slice(&x);
            }
        }
        let residual = self.system.space.displacement(self.target, &x);
        Some(Forward {
            cost,
            nodes,
            residual,
        })
    }

    fn penalty(&self, v: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let b = self.control_bound;
        let mut total = 0.0;
        match grad {
            Some(g) => {
                for (gi, vi) in g.iter_mut().zip(v) {
                    let over = vi.abs() - b;
                    if over > 0.0 {
                        total += over * over;
                        *gi += 2.0 * over * vi.signum();
                    }
                }
            }
            None => {
                for vi in v {
                    let over = vi.abs() - b;
                    if over > 0.0 {
                        total += over * over;
                    }
                }
            }
        }
        total
    }

    /// Augmented Lagrangian `J + lam.r + mu/2 |r|^2 + penalty` and its gradient.
    fn merit(&self, v: &[f64], lam: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let Some(fw) = self.forward(v) else {
            return f64::INFINITY;
        };
        let (m, n, h) = (self.m, self.n, self.h);
        let c: Vec<f64> = fw.residual.iter().map(|r| r / self.scale).collect();
        let mut value = fw.cost;
        for i in 0..m {
            value += lam[i] * c[i] + 0.5 * mu * c[i] * c[i];
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut a: Vec<f64> = (0..m).map(|i| (lam[i] + mu * c[i]) / self.scale).collect();
        let (mut k1, mut k2, mut k3) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let (mut z2, mut z3, mut z4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let (mut kb1, mut kb2, mut kb3) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut zb = vec![0.0; m];
        let mut ub = vec![0.0; n];
        let mut xb = vec![0.0; m];
        for seg in (0..self.segments).rev() {
            let u = &v[seg * n..(seg + 1) * n];
            for sub in (0..self.substeps).rev() {
                let step = seg * self.substeps + sub;
                let x = &fw.nodes[step * m..(step + 1) * m];
                self.rhs(x, u, &mut k1);
                for i in 0..m {
                    z2[i] = x[i] + 0.5 * h * k1[i];
                }
                self.rhs(&z2, u, &mut k2);
                for i in 0..m {
                    z3[i] = x[i] + 0.5 * h * k2[i];
                }
                self.rhs(&z3, u, &mut k3);
                for i in 0..m {
                    z4[i] = x[i] + h * k3[i];
                }
                xb.copy_from_slice(&a);
                for i in 0..m {
                    kb1[i] = h / 6.0 * a[i];
                    kb2[i] = h / 3.0 * a[i];
                    kb3[i] = h / 3.0 * a[i];
                }
                let kb4: Vec<f64> = a.iter().map(|ai| h / 6.0 * ai).collect();
                self.vjp(&z4, u, &kb4, h / 6.0, &mut zb, &mut ub);
                for i in 0..m {
                    xb[i] += zb[i];
                    kb3[i] += h * zb[i];
                }
                accumulate(&mut grad[seg * n..(seg + 1) * n], &ub);
                self.vjp(&z3, u, &kb3, h / 3.0, &mut zb, &mut ub);
                for i in 0..m {
                    xb[i] += zb[i];
                    kb2[i] += 0.5 * h * zb[i];
                }
                accumulate(&mut grad[seg * n..(seg + 1) * n], &ub);
                self.vjp(&z2, u, &kb2, h / 3.0, &mut zb, &mut ub);
                for i in 0..m {
                    xb[i] += zb[i];
                    kb1[i] += 0.5 * h * zb[i];
                }
                accumulate(&mut grad[seg * n..(seg + 1) * n], &ub);
                self.vjp(x, u, &kb1, h / 6.0, &mut zb, &mut ub);
                for i in 0..m {
                    xb[i] += zb[i];
                }
                accumulate(&mut grad[seg * n..(seg + 1) * n], &ub);
                a.copy_from_slice(&xb);
            }
        }
        value + self.penalty(v, Some(grad))
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Solve {
    controls: Vec<f64>,
    cost: f64,
    residual: f64,
    iterations: usize,
    merit_grad: f64,
}

fn solve_from(tr: &Transcription<'_>, init: Vec<f64>, params: &OptimizerParams) -> Option<Solve> {
    let mut v = init;
    // shrink starts that leave the chart
    for _ in 0..10 {
        if tr.forward(&v).is_some() {
            break;
        }
        v.iter_mut().for_each(|c| *c *= 0.5);
    }
    let mut lam = vec![0.0; tr.m];
    let mut mu = params.initial_penalty;
    let opts = LbfgsOptions {
        max_iter: params.max_inner,
        ..Default::default()
    };
    let mut fw = tr.forward(&v)?;
    let mut iterations = 0;
    let mut merit_grad = f64::NAN;
    for _ in 0..params.max_outer {
        let out = lbfgs::minimize(|x, g| tr.merit(x, &lam, mu, g), &mut v, &opts);
        iterations += out.iterations;
        merit_grad = out.grad_norm;
        fw = tr.forward(&v)?;
        if norm(&fw.residual) < CONVERGED_RESIDUAL {
            break;
        }
        for (l, r) in lam.iter_mut().zip(&fw.residual) {
            *l += mu * r / tr.scale;
        }
        mu *= 2.0;
    }
    Some(Solve {
        cost: fw.cost + tr.penalty(&v, None),
        residual: norm(&fw.residual),
        controls: v,
        iterations,
        merit_grad,
    })
}

fn constraint_scale(distance: f64) -> f64 {
    if distance > 0.0 {
        distance.clamp(1e-6, 1.0)
    } else {
        1.0
    }
}

/// Deterministic seed for grid entry `(i, j)` under a run seed.
pub fn entry_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random initial controls: white noise per segment, or (when `smooth`) a
/// random combination of the first four cosine/sine modes on `[0, T]`, which
/// produces excursions that white noise averages away.
fn random_start(rng: &mut ChaCha8Rng, segments: usize, n: usize, sigma: f64, smooth: bool) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("finite scale");
    if !smooth {
        return (0..segments * n).map(|_| normal.sample(rng)).collect();
    }
    let modes: Vec<[f64; 8]> = (0..n)
        .map(|_| std::array::from_fn(|_| normal.sample(rng)))
        .collect();
    let mut v = Vec::with_capacity(segments * n);
    for k in 0..segments {
        let s = (k as f64 + 0.5) / segments as f64;
        for coef in &modes {
            let mut u = 0.0;
            for f in 0..4 {
                let w = std::f64::consts::PI * f as f64 * s;
                u += coef[2 * f] * w.cos() + coef[2 * f + 1] * (w + std::f64::consts::PI * s).sin();
            }
            v.push(u / 2.0);
        }
    }
    v
}

/// Minimum over piecewise-constant controls of the discretized cost from
/// `x` to `y` in time `horizon`, best of `params.restarts` starts.
pub fn optimize_trajectory(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    params: &OptimizerParams,
) -> Result<TrajectoryResult> {
    optimize_inner(system, lagrangian, x, y, horizon, params, None)
}

/// As [`optimize_trajectory`], with `warm` tried before the other starts.
/// `warm` is resampled onto `params.segments` uniform segments.
pub fn optimize_trajectory_warm(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    params: &OptimizerParams,
    warm: &ControlSchedule,
) -> Result<TrajectoryResult> {
    if warm.channels() != system.control_dim() {
        return Err(Error::InvalidInput("warm start has the wrong channel count".into()));
    }
    optimize_inner(system, lagrangian, x, y, horizon, params, Some(warm))
}

fn optimize_inner(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    params: &OptimizerParams,
    warm: Option<&ControlSchedule>,
) -> Result<TrajectoryResult> {
    params.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    system.space.check(x)?;
    system.space.check(y)?;
    let (m, n) = (system.state_dim(), system.control_dim());
    let tr = Transcription {
        system,
        lagrangian,
        target: y,
        x0: x,
        m,
        n,
        segments: params.segments,
        substeps: params.substeps,
        h: horizon / (params.segments * params.substeps) as f64,
        control_bound: params.control_bound,
        scale: constraint_scale(system.space.distance(x, y)),
    };
    let dim = params.segments * n;
    let speed = 1.0 + system.space.distance(x, y) / horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm {
        let mid = |k: usize| horizon * (k as f64 + 0.5) / params.segments as f64;
        let scale = w.horizon() / horizon;
        starts.push(
            (0..params.segments)
                .flat_map(|k| w.value_at(mid(k) * scale).to_vec())
                .collect(),
        );
    }
    starts.push(vec![0.0; dim]);
    for r in 1..params.restarts {
        let sigma = params.init_scale * speed * [0.5, 1.0, 2.0, 4.0][r % 4];
        starts.push(random_start(&mut rng, params.segments, n, sigma, r % 2 == 0));
    }

    let mut best: Option<(usize, Solve)> = None;
    let mut best_residual = f64::INFINITY;
    for (idx, init) in starts.into_iter().enumerate() {
        let Some(sol) = solve_from(&tr, init, params) else {
            continue;
        };
        best_residual = best_residual.min(sol.residual);
        if sol.residual >= UNREACHED_RESIDUAL {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => {
                // prefer converged solves; then lower cost
                let (bc, sc) = (b.residual < CONVERGED_RESIDUAL, sol.residual < CONVERGED_RESIDUAL);
                (sc && !bc) || (sc == bc && sol.cost < b.cost)
            }
        };
        if better {
            best = Some((idx, sol));
        }
    }
    let restarts_used = params.restarts + usize::from(warm.is_some());
    let Some((best_restart, sol)) = best else {
        return Err(Error::Unreached {
            best_residual,
            restarts: restarts_used,
        });
    };
    let values: Vec<Vec<f64>> = sol.controls.chunks(n).map(|c| c.to_vec()).collect();
    let schedule = ControlSchedule::uniform(horizon, values)?;
    let fw = tr.forward(&sol.controls).expect("accepted solution re-simulates");
    let steps = params.segments * params.substeps;
    let times = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
    let states = fw.nodes.chunks(m).map(|c| c.to_vec()).collect();
    Ok(TrajectoryResult {
        cost: sol.cost,
        schedule,
        times,
        states,
        endpoint_residual: sol.residual,
        converged: sol.residual < CONVERGED_RESIDUAL,
        restarts_used,
        best_restart,
        inner_iterations: sol.iterations,
        final_merit_gradient: sol.merit_grad,
    })
}

/// Pontryagin extremal integrated from `(x, p0)`.
#[derive(Debug, Clone, Serialize)]
pub struct ExtremalArc {
    /// `-1` for normal arcs, `0` for the abnormal diagnostic.
    pub nu: i8,
    pub p0: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub covectors: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub running_cost: f64,
    pub hamiltonian: Vec<f64>,
}

impl ExtremalArc {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("arc has states")
    }

    /// `max_t |H(t) - H(0)|`.
    pub fn hamiltonian_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }
}

fn maximizing_control(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    x: &[f64],
    p: &[f64],
    nu: i8,
) -> Result<Vec<f64>> {
    if nu == 0 {
        return Ok(vec![0.0; system.control_dim()]);
    }
    let q: Vec<f64> = system
        .controls
        .iter()
        .map(|f| f.eval(x).iter().zip(p).map(|(a, b)| a * b).sum())
        .collect();
    lagrangian
        .quadratic_maximizer(x, &q)
        .ok_or_else(|| Error::Domain("weight matrix singular along the arc".into()))
}

/// Integrates the maximized Hamiltonian system with `SHOOTING_STEPS` RK4 steps.
///
/// `nu = -1` gives normal extremals with `u* = A(x)^{-1} (p . X_i)`; `nu = 0`
/// prescribes `u = 0` and flows `H^0 = p . X0`.
pub fn pmp_shoot(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    x: &[f64],
    p0: &[f64],
    horizon: f64,
    nu: i8,
) -> Result<ExtremalArc> {
    if !lagrangian.is_quadratic() {
        return Err(Error::InvalidInput(
            "shooting needs a closed-form maximizer (quadratic Lagrangian)".into(),
        ));
    }
    if nu != 0 && nu != -1 {
        return Err(Error::InvalidInput("nu must be 0 or -1".into()));
    }
    let m = system.state_dim();
    if p0.len() != m {
        return Err(Error::InvalidInput("covector dimension mismatch".into()));
    }
    if nu == 0 && p0.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("abnormal arcs need a nonzero covector".into()));
    }
    system.space.check(x)?;
    let n = system.control_dim();
    let hamiltonian_at = |z: &[f64], p: &[f64]| -> Result<f64> {
        if nu == 0 {
            Ok(system.drift.eval(z).iter().zip(p).map(|(a, b)| a * b).sum())
        } else {
            eval_hamiltonian(system, lagrangian, z, p)
        }
    };
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let mut rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
        let (z, p) = (&s[..m], &s[m..2 * m]);
        let u = match maximizing_control(system, lagrangian, z, p, nu) {
            Ok(u) => u,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                vec![0.0; n]
            }
        };
        system.velocity_into(z, &u, &mut ds[..m]);
        let df = system.state_jacobian(z, &u);
        let mut lx = vec![0.0; m];
        if nu == -1 {
            lagrangian.grad_x(z, &u, &mut lx);
        }
        for c in 0..m {
            let pf: f64 = (0..m).map(|r| df[r * m + c] * p[r]).sum();
            ds[m + c] = -(pf - lx[c]);
        }
        ds[2 * m] = lagrangian.value(z, &u);
    };
    let mut s = vec![0.0; 2 * m + 1];
    s[..m].copy_from_slice(x);
    s[m..2 * m].copy_from_slice(p0);
    let h = horizon / SHOOTING_STEPS as f64;
    let mut times = vec![0.0];
    let mut states = vec![x.to_vec()];
    let mut covectors = vec![p0.to_vec()];
    let mut controls = vec![maximizing_control(system, lagrangian, x, p0, nu)?];
    let mut hamiltonian = vec![hamiltonian_at(x, p0)?];
    for k in 0..SHOOTING_STEPS {
        ode::rk4_step(&mut rhs, k as f64 * h, &mut s, h);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let t = (k + 1) as f64 * h;
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("arc blew up at t = {t}")));
        }
        if !system.space.is_torus() && !system.space.contains(&s[..m]) {
            return Err(Error::Domain(format!("arc left the chart at t = {t}")));
        }
        times.push(t);
        states.push(s[..m].to_vec());
        covectors.push(s[m..2 * m].to_vec());
        controls.push(maximizing_control(system, lagrangian, &s[..m], &s[m..2 * m], nu)?);
        hamiltonian.push(hamiltonian_at(&s[..m], &s[m..2 * m])?);
    }
    Ok(ExtremalArc {
        nu,
        p0: p0.to_vec(),
        times,
        states,
        covectors,
        controls,
        running_cost: s[2 * m],
        hamiltonian,
    })
}

/// Square cost matrix on a grid at horizon `t`; `+inf` marks unresolved pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    grid: Grid,
    t: f64,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(grid: Grid, t: f64, data: Vec<f64>) -> Result<CostMatrix> {
        let n = grid.len();
        if n == 0 || data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "cost matrix needs {n}x{n} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidInput("cost entries must be finite or +inf".into()));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput("matrix horizon must be positive".into()));
        }
        Ok(CostMatrix { grid, t, data })
    }

    /// Matrix on an abstract grid of `rows.len()` nodes.
    pub fn from_rows(rows: Vec<Vec<f64>>, t: f64) -> Result<CostMatrix> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("cost matrix must be square".into()));
        }
        CostMatrix::new(Grid::abstract_nodes(n), t, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n()).map(|r| r.to_vec()).collect()
    }

    /// Largest finite entry, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.data.iter().copied().filter(|v| v.is_finite()).reduce(f64::max)
    }

    pub fn min_finite(&self) -> Option<f64> {
        self.data.iter().copied().filter(|v| v.is_finite()).reduce(f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same entries relabelled with a new horizon.
    pub fn with_horizon(&self, t: f64) -> Result<CostMatrix> {
        CostMatrix::new(self.grid.clone(), t, self.data.clone())
    }

    /// Adds `c` to every finite entry.
    pub fn shifted(&self, c: f64) -> CostMatrix {
        CostMatrix {
            grid: self.grid.clone(),
            t: self.t,
            data: self.data.iter().map(|v| v + c).collect(),
        }
    }
}

/// Per-entry bookkeeping from [`build_cost_matrix`].
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    /// `(i, j, best residual)` for entries left at `+inf`.
    pub unreached: Vec<(usize, usize, f64)>,
    pub max_residual: f64,
    pub converged_entries: usize,
}

/// `C[i, j] = c_t(x_i, x_j)` by direct optimization; unreached pairs are `+inf`.
///
/// Entry `(i, j)` uses seed [`entry_seed`]`(params.seed, i, j)`, so the result
/// does not depend on scheduling.
pub fn build_cost_matrix(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    grid: &Grid,
    t_short: f64,
    params: &OptimizerParams,
) -> Result<(CostMatrix, BuildReport)> {
    params.validate()?;
    if grid.space() != Some(&system.space) {
        return Err(Error::InvalidInput("grid was not built on the system's state space".into()));
    }
    let n = grid.len();
    let entries: Vec<Result<std::result::Result<TrajectoryResult, f64>>> = (0..n * n)
        .into_par_iter()
        .map(|e| {
            let (i, j) = (e / n, e % n);
            let p = OptimizerParams {
                seed: entry_seed(params.seed, i, j),
                ..params.clone()
            };
            match optimize_trajectory(system, lagrangian, grid.point(i), grid.point(j), t_short, &p) {
                Ok(r) => Ok(Ok(r)),
                Err(Error::Unreached { best_residual, .. }) => Ok(Err(best_residual)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    let mut report = BuildReport {
        unreached: Vec::new(),
        max_residual: 0.0,
        converged_entries: 0,
    };
    for (e, entry) in entries.into_iter().enumerate() {
        match entry? {
            Ok(r) => {
                report.max_residual = report.max_residual.max(r.endpoint_residual);
                report.converged_entries += usize::from(r.converged);
                data.push(r.cost);
            }
            Err(res) => {
                report.unreached.push((e / n, e % n, res));
                data.push(f64::INFINITY);
            }
        }
    }
    Ok((CostMatrix::new(grid.clone(), t_short, data)?, report))
}

/// Min-plus product with the minimizing midpoint of every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MinPlusProduct {
    pub matrix: CostMatrix,
    /// Row-major; `None` where the entry is `+inf`.
    pub argmin: Vec<Option<usize>>,
}

/// `C[i, j] = min_z A[i, z] + B[z, j]` at horizon `s + t`; ties go to the
/// smallest `z`.
pub fn minplus_compose(a: &CostMatrix, b: &CostMatrix) -> Result<MinPlusProduct> {
    if a.grid != b.grid {
        return Err(Error::InvalidInput("min-plus composition needs a shared grid".into()));
    }
    let n = a.n();
    let rows: Vec<(Vec<f64>, Vec<Option<usize>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            let mut vals = vec![f64::INFINITY; n];
            let mut arg = vec![None; n];
            for (z, &az) in ai.iter().enumerate() {
                if az == f64::INFINITY {
                    continue;
                }
                for (j, &bzj) in b.row(z).iter().enumerate() {
                    let v = az + bzj;
                    if v < vals[j] {
                        vals[j] = v;
                        arg[j] = Some(z);
                    }
                }
            }
            (vals, arg)
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    let mut argmin = Vec::with_capacity(n * n);
    for (v, g) in rows {
        data.extend(v);
        argmin.extend(g);
    }
    Ok(MinPlusProduct {
        matrix: CostMatrix::new(a.grid.clone(), a.t + b.t, data)?,
        argmin,
    })
}

/// `0` on the diagonal, `+inf` elsewhere; the unit of min-plus products.
pub fn minplus_identity(grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    (0..n * n)
        .map(|e| if e / n == e % n { 0.0 } else { f64::INFINITY })
        .collect()
}

/// Outcome of [`calibrate_t_short`].
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub t_short: f64,
    /// `(candidate t, median mean control magnitude)`.
    pub table: Vec<(f64, f64)>,
    pub pairs: usize,
}

/// Picks the candidate horizon whose median mean control magnitude over
/// random grid pairs is closest to 1 on a log scale.
pub fn calibrate_t_short(
    system: &ControlAffineSystem,
    lagrangian: &Lagrangian,
    grid: &Grid,
    candidates: &[f64],
    pairs: usize,
    params: &OptimizerParams,
) -> Result<Calibration> {
    if candidates.is_empty() || pairs == 0 || grid.len() < 2 {
        return Err(Error::InvalidInput(
            "calibration needs candidates, pairs and at least two grid points".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(entry_seed(params.seed, usize::MAX, usize::MAX));
    let picks: Vec<(usize, usize)> = (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..grid.len());
            let mut j = rng.random_range(0..grid.len() - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    let mut table = Vec::new();
    for &t in candidates {
        let mut mags: Vec<f64> = picks
            .par_iter()
            .filter_map(|&(i, j)| {
                let p = OptimizerParams {
                    seed: entry_seed(params.seed, i, j),
                    ..params.clone()
                };
                optimize_trajectory(system, lagrangian, grid.point(i), grid.point(j), t, &p)
                    .ok()
                    .map(|r| r.schedule.lp_norm(1.0) / t)
            })
            .collect();
        if mags.is_empty() {
            table.push((t, f64::INFINITY));
            continue;
        }
        mags.sort_by(f64::total_cmp);
        table.push((t, mags[mags.len() / 2]));
    }
    let score = |m: f64| if m > 0.0 && m.is_finite() { m.ln().abs() } else { f64::INFINITY };
    let (t_short, _) = table
        .iter()
        .copied()
        .min_by(|a, b| score(a.1).total_cmp(&score(b.1)))
        .expect("nonempty table");
    if !score(table.iter().find(|r| r.0 == t_short).unwrap().1).is_finite() {
        return Err(Error::Unreached {
            best_residual: f64::INFINITY,
            restarts: params.restarts,
        });
    }
    Ok(Calibration {
        t_short,
        table,
        pairs,
    })
}
