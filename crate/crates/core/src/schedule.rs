use serde::Serialize;

use crate::error::{Error, Result};

/// Piecewise-constant control `u(t)` on `[0, T]`.
///
/// Segment `k` covers `[breakpoints[k], breakpoints[k+1])` and carries the
/// n-vector `values[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSchedule {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(
                "schedule needs one value per segment and at least one segment".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidInput("schedule must start at t = 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidInput(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput(
                "segment values must be finite vectors of equal length".into(),
            ));
        }
        Ok(ControlSchedule { breakpoints, values })
    }

    /// `segments` equal-length pieces on `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let l = values.len();
        if l == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidInput("uniform schedule needs segments and T > 0".into()));
        }
        let mut bps: Vec<f64> = (0..=l).map(|k| horizon * k as f64 / l as f64).collect();
        bps[l] = horizon;
        ControlSchedule::new(bps, values)
    }

    pub fn zeros(horizon: f64, segments: usize, channels: usize) -> Result<Self> {
        ControlSchedule::uniform(horizon, vec![vec![0.0; channels]; segments])
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn channels(&self) -> usize {
        self.values[0].len()
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `(start, end, value)` per segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (w[0], w[1], v.as_slice()))
    }

    /// Value at time `t` (right-continuous; the last segment includes `T`).
    pub fn value_at(&self, t: f64) -> &[f64] {
        let idx = match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        &self.values[idx.min(self.values.len() - 1)]
    }

    /// `(int_0^T |u(t)|^p dt)^(1/p)` with the Euclidean norm on channels.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.segments()
            .map(|(a, b, v)| {
                let mag = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (b - a) * mag.powf(p)
            })
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// `int_0^T u_i(t) dt`.
    pub fn channel_integral(&self, channel: usize) -> f64 {
        self.segments().map(|(a, b, v)| (b - a) * v[channel]).sum()
    }

    /// Split each segment into `factor` equal pieces (same function of time).
    pub fn refine(&self, factor: usize) -> ControlSchedule {
        let mut bps = vec![0.0];
        let mut vals = Vec::new();
        for (a, b, v) in self.segments() {
            for k in 1..=factor {
                bps.push(if k == factor {
                    b
                } else {
                    a + (b - a) * k as f64 / factor as f64
                });
                vals.push(v.to_vec());
            }
        }
        ControlSchedule {
            breakpoints: bps,
            values: vals,
        }
    }
}
