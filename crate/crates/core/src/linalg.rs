//! Small dense linear algebra on row-major `Vec<f64>` matrices.
//!
//! Every system handled here is tiny (state dimension, control count), so
//! plain Gaussian elimination with partial pivoting is all that is needed.

/// Solve `a x = b` for square `a` (row-major, `n*n`). Returns `None` when a
/// pivot falls below `1e-14` times the largest entry.
pub fn solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[piv * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

/// Cholesky factor test: true when the symmetric matrix is positive definite.
pub fn is_positive_definite(a: &[f64], n: usize) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// Greedy pivoted elimination: walks `vectors` in order and keeps those that
/// increase the rank. A vector counts as independent when its residual after
/// elimination exceeds `rel_tol` times the largest input norm.
///
/// Returns the indices of the kept vectors.
pub fn independent_subset(vectors: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    let scale = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let tol = rel_tol * scale;
    // Reduced basis rows with their pivot column.
    let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut kept = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let mut r = v.clone();
        for (pc, b) in &basis {
            let f = r[*pc] / b[*pc];
            if f != 0.0 {
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= f * bi;
                }
            }
        }
        let (pc, pv) = r
            .iter()
            .enumerate()
            .map(|(i, x)| (i, x.abs()))
            .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pv > tol {
            basis.push((pc, r));
            kept.push(idx);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn rank_selection() {
        let v = vec![
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ];
        assert_eq!(independent_subset(&v, 1e-10), vec![0, 3]);
    }

    #[test]
    fn positive_definite() {
        assert!(is_positive_definite(&[2.0, 0.5, 0.5, 1.0], 2));
        assert!(!is_positive_definite(&[1.0, 2.0, 2.0, 1.0], 2));
    }
}
