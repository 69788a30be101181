//! Fixed-step RK4 for small autonomous or time-dependent systems.

/// One classical RK4 step of `x' = f(t, x)`; `x` is updated in place.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &mut [f64], h: f64)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `x' = f(t, x)` from `t0` to `t1` with `steps` equal steps.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, x: &mut [f64], steps: usize)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        rk4_step(&mut f, t0 + k as f64 * h, x, h);
    }
}

/// Step counts per segment so that the whole horizon uses about `total`
/// steps while every step stays inside one segment.
pub fn steps_per_segment(breakpoints: &[f64], total: usize) -> Vec<usize> {
    let horizon = breakpoints[breakpoints.len() - 1] - breakpoints[0];
    breakpoints
        .windows(2)
        .map(|w| ((total as f64 * (w[1] - w[0]) / horizon).ceil() as usize).max(1))
        .collect()
}
