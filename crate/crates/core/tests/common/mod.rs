//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use kamlab_core::cost::CostMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix with entries in `[lo, hi)`; off-diagonal entries are `+inf`
/// with probability `p_inf`. The diagonal stays finite so a cycle exists.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, p_inf: f64, t: f64) -> CostMatrix {
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i != j && rng.random::<f64>() < p_inf {
                        f64::INFINITY
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect()
        })
        .collect();
    CostMatrix::from_rows(rows, t).unwrap()
}

/// Small integer entries, so cycle means and potentials are exact dyadics
/// or short rationals.
pub fn integer_matrix(rng: &mut ChaCha8Rng, n: usize, max: u32, p_inf: f64) -> CostMatrix {
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i != j && rng.random::<f64>() < p_inf {
                        f64::INFINITY
                    } else {
                        rng.random_range(0..=max) as f64
                    }
                })
                .collect()
        })
        .collect();
    CostMatrix::from_rows(rows, 1.0).unwrap()
}

/// Forces the cycle `0 -> 1 -> ... -> n-1 -> 0` to be finite, so every node
/// reaches every other one and a finite min-plus eigenvector exists.
pub fn make_irreducible(rng: &mut ChaCha8Rng, c: CostMatrix, lo: f64, hi: f64) -> CostMatrix {
    let n = c.n();
    let mut rows = c.rows();
    for i in 0..n {
        let j = (i + 1) % n;
        if rows[i][j] == f64::INFINITY {
            rows[i][j] = rng.random_range(lo..hi).round();
        }
    }
    CostMatrix::from_rows(rows, c.t()).unwrap()
}

pub fn random_probability(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    // exact total mass
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    w
}

/// Minimum mean over all simple cycles, by depth-first enumeration.
pub fn brute_force_min_mean(c: &CostMatrix) -> Option<f64> {
    let n = c.n();
    let mut best: Option<f64> = None;
    fn dfs(c: &CostMatrix, start: usize, node: usize, len: usize, sum: f64, used: &mut [bool], best: &mut Option<f64>) {
        let n = c.n();
        let back = c.get(node, start);
        if back.is_finite() {
            let mean = (sum + back) / (len as f64);
            if best.is_none_or(|b| mean < b) {
                *best = Some(mean);
            }
        }
        for next in start + 1..n {
            let w = c.get(node, next);
            if !used[next] && w.is_finite() {
                used[next] = true;
                dfs(c, start, next, len + 1, sum + w, used, best);
                used[next] = false;
            }
        }
    }
    for start in 0..n {
        let mut used = vec![false; n];
        used[start] = true;
        dfs(c, start, start, 1, 0.0, &mut used, &mut best);
    }
    best
}

/// Optimal cost between uniform marginals: the minimum over permutations
/// (the vertices of the Birkhoff polytope) of the mean assignment cost.
pub fn permutation_ot(c: &CostMatrix) -> f64 {
    let n = c.n();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    fn rec(c: &CostMatrix, k: usize, perm: &mut Vec<usize>, best: &mut f64) {
        let n = perm.len();
        if k == n {
            let v: f64 = (0..n).map(|i| c.get(i, perm[i])).sum::<f64>() / n as f64;
            if v < *best {
                *best = v;
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            rec(c, k + 1, perm, best);
            perm.swap(k, i);
        }
    }
    rec(c, 0, &mut perm, &mut best);
    best
}

/// Optimal cost by enumerating every basis (spanning tree of `2n - 1`
/// cells) of the transportation polytope and keeping feasible vertices.
pub fn basis_enumeration_ot(c: &CostMatrix, mu: &[f64], nu: &[f64]) -> f64 {
    let n = c.n();
    let cells = n * n;
    let size = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(size);
    fn rec(
        start: usize,
        cells: usize,
        size: usize,
        chosen: &mut Vec<usize>,
        eval: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == size {
            eval(chosen);
            return;
        }
        for e in start..cells {
            if cells - e < size - chosen.len() {
                break;
            }
            chosen.push(e);
            rec(e + 1, cells, size, chosen, eval);
            chosen.pop();
        }
    }
    let mut eval = |basis: &[usize]| {
        // peel leaves: a row or column with one remaining cell fixes it
        let mut supply = mu.to_vec();
        let mut demand = nu.to_vec();
        let mut left: Vec<usize> = basis.to_vec();
        let mut flow = vec![0.0; n * n];
        while !left.is_empty() {
            let mut progressed = false;
            for pos in 0..left.len() {
                let e = left[pos];
                let (i, j) = (e / n, e % n);
                let row_count = left.iter().filter(|&&f| f / n == i).count();
                let col_count = left.iter().filter(|&&f| f % n == j).count();
                let q = if row_count == 1 {
                    supply[i]
                } else if col_count == 1 {
                    demand[j]
                } else {
                    continue;
                };
                flow[e] = q;
                supply[i] -= q;
                demand[j] -= q;
                left.swap_remove(pos);
                progressed = true;
                break;
            }
            if !progressed {
                return; // contains a cycle: not a basis
            }
        }
        if flow.iter().any(|f| *f < -1e-12)
            || supply.iter().chain(&demand).any(|r| r.abs() > 1e-12)
        {
            return;
        }
        let mut cost = 0.0;
        for (e, f) in flow.iter().enumerate() {
            if *f > 1e-15 {
                cost += f * c.get(e / n, e % n);
            }
        }
        if cost < best {
            best = cost;
        }
    };
    rec(0, cells, size, &mut chosen, &mut eval);
    best
}

/// `int_0^1 (z^2 - z^(2k))^(1/2) dz` from the binomial series of
/// `(1/2) int_0^1 (1 - w^(k-1))^(1/2) dw`, with an integral tail estimate.
pub fn area_integral_series(k: u32) -> f64 {
    let a = (k - 1) as f64;
    let terms = 2_000_000usize;
    let mut coef = 1.0f64; // (-1)^n binom(1/2, n)
    let mut sum = 0.0;
    for n in 0..terms {
        sum += coef / (a * n as f64 + 1.0);
        coef *= (n as f64 - 0.5) / (n as f64 + 1.0);
    }
    // remaining terms ~ -n^(-5/2) / (2 sqrt(pi) a)
    let nn = terms as f64;
    let tail = -(1.0 / (2.0 * std::f64::consts::PI.sqrt() * a)) * (2.0 / 3.0) * (nn - 0.5).powf(-1.5);
    0.5 * (sum + tail)
}

/// Cost `t + d^2 / (2t)` of the straight path for `x' = u`, `L = u^2/2 + 1`.
pub fn circle_cost(d: f64, t: f64) -> f64 {
    t + d * d / (2.0 * t)
}
