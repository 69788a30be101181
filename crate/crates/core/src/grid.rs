//! Uniform tensor grids on a torus or a box chart.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::systems::StateSpace;

/// Grid points with their tensor shape.
///
/// Torus axes use `i * P / n` for `i < n`; box axes are inclusive linspaces.
/// An abstract grid carries no geometry, only `n` labelled nodes, and is used
/// for hand-built matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    space: Option<StateSpace>,
    shape: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl Grid {
    pub fn uniform(space: &StateSpace, counts: &[usize]) -> Result<Grid> {
        let m = space.dim();
        if counts.len() != m {
            return Err(Error::InvalidInput(format!(
                "grid needs {m} axis counts, got {}",
                counts.len()
            )));
        }
        let mut axes = Vec::with_capacity(m);
        for (axis, &n) in counts.iter().enumerate() {
            let values: Vec<f64> = match space {
                StateSpace::FlatTorus { periods } => {
                    if n == 0 {
                        return Err(Error::InvalidInput("torus axis needs n >= 1".into()));
                    }
                    (0..n).map(|i| periods[axis] * i as f64 / n as f64).collect()
                }
                StateSpace::BoxChart { lower, upper } => {
                    if n < 2 {
                        return Err(Error::InvalidInput("box axis needs n >= 2".into()));
                    }
                    let (a, b) = (lower[axis], upper[axis]);
                    (0..n)
                        .map(|i| {
                            if i + 1 == n {
                                b
                            } else {
                                a + (b - a) * i as f64 / (n - 1) as f64
                            }
                        })
                        .collect()
                }
            };
            axes.push(values);
        }
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unflatten(flat, counts);
            points.push(idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect());
        }
        Ok(Grid {
            space: Some(space.clone()),
            shape: counts.to_vec(),
            points,
        })
    }

    /// `n` nodes without geometry; point `i` is `[i]`.
    pub fn abstract_nodes(n: usize) -> Grid {
        Grid {
            space: None,
            shape: vec![n],
            points: (0..n).map(|i| vec![i as f64]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn space(&self) -> Option<&StateSpace> {
        self.space.as_ref()
    }

    /// Spacing along `axis`, if the grid has geometry.
    pub fn step(&self, axis: usize) -> Option<f64> {
        let n = self.shape[axis];
        match self.space.as_ref()? {
            StateSpace::FlatTorus { periods } => Some(periods[axis] / n as f64),
            StateSpace::BoxChart { lower, upper } => {
                Some((upper[axis] - lower[axis]) / (n - 1) as f64)
            }
        }
    }

    /// Neighbour of `flat` shifted by `delta` along `axis`; wraps on a torus,
    /// `None` past a box edge.
    pub fn neighbor(&self, flat: usize, axis: usize, delta: isize) -> Option<usize> {
        let mut idx = unflatten(flat, &self.shape);
        let n = self.shape[axis] as isize;
        let shifted = idx[axis] as isize + delta;
        let torus = self.space.as_ref().is_some_and(|s| s.is_torus());
        idx[axis] = if torus {
            shifted.rem_euclid(n) as usize
        } else if (0..n).contains(&shifted) {
            shifted as usize
        } else {
            return None;
        };
        Some(flatten(&idx, &self.shape))
    }
}

/// Row-major (last axis fastest) multi-index of a flat index.
pub fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

pub fn flatten(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_grid_excludes_the_period() {
        let g = Grid::uniform(&StateSpace::torus(vec![1.0]).unwrap(), &[4]).unwrap();
        assert_eq!(g.points(), &[vec![0.0], vec![0.25], vec![0.5], vec![0.75]]);
        assert_eq!(g.neighbor(0, 0, -1), Some(3));
        assert_eq!(g.step(0), Some(0.25));
    }

    #[test]
    fn box_grid_is_inclusive() {
        let s = StateSpace::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let g = Grid::uniform(&s, &[3, 2]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(1), &[-1.0, 2.0]);
        assert_eq!(g.point(5), &[1.0, 2.0]);
        assert_eq!(g.neighbor(0, 0, -1), None);
        assert_eq!(g.neighbor(0, 0, 1), Some(2));
    }

    #[test]
    fn flatten_roundtrip() {
        let shape = [3, 4, 5];
        for f in 0..60 {
            assert_eq!(flatten(&unflatten(f, &shape), &shape), f);
        }
    }
}
