//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! The objective may return `f64::INFINITY` for rejected points (for example
//! a trajectory leaving the chart); the line search then shrinks the step.

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 8,
            max_iter: 300,
            grad_tol: 1e-10,
            rel_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    #[allow(dead_code)]
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` in place. `f(x, grad)` returns the value and fills `grad`.
pub fn minimize<F>(mut f: F, x: &mut [f64], opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut val = f(x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    let mut iterations = 0;
    if !val.is_finite() {
        return LbfgsOutcome {
            value: val,
            iterations,
            grad_norm: f64::INFINITY,
        };
    }
    while iterations < opts.max_iter {
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm <= opts.grad_tol * (1.0 + val.abs()) {
            break;
        }
        // two-loop recursion
        dir.copy_from_slice(&g);
        let k = s_hist.len();
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= alpha[i] * y;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[i]) {
                *d += s * (alpha[i] - beta);
            }
        }
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi;
            }
            slope = -dot(&g, &g);
        }
        let mut step = if k == 0 {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            let tv = f(&trial, &mut g_trial);
            if tv.is_finite() && tv <= val + 1e-4 * step * slope {
                accepted = Some(tv);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some(tv) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        let improvement = val - tv;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        val = tv;
        if dot(&s, &y) > 1e-300 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        if improvement <= opts.rel_tol * (1.0 + val.abs()) {
            break;
        }
    }
    let grad_norm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    LbfgsOutcome {
        value: val,
        iterations,
        grad_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let mut x = [-1.2, 1.0];
        let out = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &mut x,
            &LbfgsOptions {
                max_iter: 1000,
                ..Default::default()
            },
        );
        assert!(out.value < 1e-16, "{out:?}");
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn respects_rejected_region() {
        // minimum of (x-2)^2 restricted to x < 1 by an infinite wall
        let mut x = [0.0];
        let out = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 2.0);
                if x[0] >= 1.0 {
                    f64::INFINITY
                } else {
                    (x[0] - 2.0).powi(2)
                }
            },
            &mut x,
            &LbfgsOptions::default(),
        );
        assert!(x[0] < 1.0 && out.value.is_finite());
    }
}
