//! Discrete Monge-Kantorovich problems on cost matrices.
//!
//! `solve_ot` is a transportation simplex (northwest-corner start, MODI
//! duals, Bland's rule). `alpha_t` minimizes `<C, P>` over stationary plans
//! (equal marginals), which reduces to a minimum mean cycle; it is solved by
//! Howard policy iteration so that it stays independent of Karp's algorithm
//! in [`crate::weakkam`].

use serde::Serialize;

use crate::cost::{CostMatrix, MinPlusProduct};
use crate::error::{Error, Result};
use crate::weakkam;

/// Plan entries above this weight count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<DiscreteMeasure> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("measure weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("measure has total mass {total}, expected 1")));
        }
        Ok(DiscreteMeasure { weights })
    }

    pub fn uniform(n: usize) -> DiscreteMeasure {
        DiscreteMeasure {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dirac(n: usize, i: usize) -> DiscreteMeasure {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        DiscreteMeasure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Coupling on an `n x n` grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    n: usize,
    weights: Vec<f64>,
}

impl TransportPlan {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<TransportPlan> {
        if weights.len() != n * n || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("plan must be n x n with nonnegative weights".into()));
        }
        Ok(TransportPlan { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.weights.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for r in self.weights.chunks(self.n) {
            for (o, w) in out.iter_mut().zip(r) {
                *o += w;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `<C, P>`; `+inf` if the plan charges an infinite entry.
    pub fn cost(&self, c: &CostMatrix) -> f64 {
        self.weights
            .iter()
            .zip(c.data())
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// `(i, j, weight)` for entries above [`SUPPORT_THRESHOLD`].
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > SUPPORT_THRESHOLD)
            .map(|(e, w)| (e / self.n, e % self.n, *w))
            .collect()
    }

    /// Largest deviation of the marginals from `mu` and `nu`.
    pub fn marginal_error(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let r = self.row_sums().iter().zip(mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }
}

/// Kantorovich potentials with `g(y) - f(x) <= C[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPair {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl DualPair {
    /// `sum g nu - sum f mu`.
    pub fn objective(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let gn: f64 = self.g.iter().zip(nu).map(|(a, b)| a * b).sum();
        let fm: f64 = self.f.iter().zip(mu).map(|(a, b)| a * b).sum();
        gn - fm
    }

    /// `max(0, g(y) - f(x) - C[x, y])` over finite entries.
    pub fn feasibility_violation(&self, c: &CostMatrix) -> f64 {
        let n = c.n();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                let cxy = c.get(x, y);
                if cxy.is_finite() {
                    worst = worst.max(self.g[y] - self.f[x] - cxy);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OtSolution {
    pub plan: TransportPlan,
    pub primal: f64,
    pub dual: DualPair,
    pub dual_value: f64,
    pub gap: f64,
    /// Max of `|g(y) - f(x) - C[x, y]|` over the plan's support.
    pub slackness_violation: f64,
    pub pivots: usize,
}

/// Optimal coupling of `mu` and `nu` under `C`, with optimal potentials.
pub fn solve_ot(c: &CostMatrix, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<OtSolution> {
    let n = c.n();
    if mu.len() != n || nu.len() != n {
        return Err(Error::InvalidInput("measures and matrix sizes differ".into()));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mu.weights[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nu.weights[j] > 0.0).collect();
    for &i in &rows {
        if cols.iter().all(|&j| c.get(i, j) == f64::INFINITY) {
            return Err(Error::Infeasible(format!("source {i} has no finite edge to the target support")));
        }
    }
    for &j in &cols {
        if rows.iter().all(|&i| c.get(i, j) == f64::INFINITY) {
            return Err(Error::Infeasible(format!("target {j} has no finite edge from the source support")));
        }
    }
    let max_abs = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| c.get(i, j))
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let big_m = (max_abs + 1.0) * 1e6;
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            cols.iter()
                .map(|&j| {
                    let v = c.get(i, j);
                    if v.is_finite() {
                        v
                    } else {
                        big_m
                    }
                })
                .collect()
        })
        .collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights[j]).collect();
    let tol = 1e-13 * (1.0 + max_abs);
    let ts = transportation_simplex(&cost, &supply, &demand, tol)?;

    let mut weights = vec![0.0; n * n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let w = ts.flow[a][b];
            if w > 0.0 {
                if !c.get(i, j).is_finite() && w > SUPPORT_THRESHOLD {
                    return Err(Error::Infeasible(
                        "marginals cannot be coupled through finite entries".into(),
                    ));
                }
                if c.get(i, j).is_finite() {
                    weights[i * n + j] = w;
                }
            }
        }
    }
    let plan = TransportPlan::new(n, weights)?;

    // potentials on the supports, then c-transforms elsewhere
    let mut f = vec![f64::NAN; n];
    let mut g = vec![f64::NAN; n];
    // shortest-path potentials on the residual graph stay of the size of the
    // finite costs, while simplex duals can carry the big-M of a degenerate cell
    let (fu, gv) = residual_potentials(c, &rows, &cols, &ts.flow)
        .unwrap_or_else(|| (ts.u.iter().map(|u| -u).collect(), ts.v.clone()));
    for (a, &i) in rows.iter().enumerate() {
        f[i] = fu[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        g[j] = gv[b];
    }
    for j in 0..n {
        if g[j].is_nan() {
            g[j] = rows
                .iter()
                .filter(|&&i| c.get(i, j).is_finite())
                .map(|&i| c.get(i, j) + f[i])
                .fold(f64::INFINITY, f64::min);
            if !g[j].is_finite() {
                g[j] = 0.0;
            }
        }
    }
    for i in 0..n {
        if f[i].is_nan() {
            f[i] = (0..n)
                .filter(|&j| c.get(i, j).is_finite())
                .map(|j| g[j] - c.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            if !f[i].is_finite() {
                f[i] = 0.0;
            }
        }
    }
    let dual = DualPair { f, g };
    let primal = plan.cost(c);
    let dual_value = dual.objective(mu.weights(), nu.weights());
    let slackness_violation = plan
        .support()
        .iter()
        .map(|&(i, j, _)| (dual.g[j] - dual.f[i] - c.get(i, j)).abs())
        .fold(0.0, f64::max);
    Ok(OtSolution {
        gap: (primal - dual_value).abs(),
        plan,
        primal,
        dual,
        dual_value,
        slackness_violation,
        pivots: ts.pivots,
    })
}

/// Bellman-Ford on the residual graph of an optimal flow: row `i` to column
/// `j` at cost `c_ij` on finite cells, column back to row at `-c_ij` where the
/// flow is positive. Returns `None` if roundoff leaves a negative cycle.
fn residual_potentials(
    c: &CostMatrix,
    rows: &[usize],
    cols: &[usize],
    flow: &[Vec<f64>],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, k) = (rows.len(), cols.len());
    let mut pr = vec![0.0; m];
    let mut pc = vec![0.0; k];
    for _ in 0..=(m + k) {
        let mut changed = false;
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                let w = c.get(i, j);
                if !w.is_finite() {
                    continue;
                }
                if pr[a] + w < pc[b] - 1e-15 * (1.0 + w.abs()) {
                    pc[b] = pr[a] + w;
                    changed = true;
                }
                if flow[a][b] > 0.0 && pc[b] - w < pr[a] - 1e-15 * (1.0 + w.abs()) {
                    pr[a] = pc[b] - w;
                    changed = true;
                }
            }
        }
        if !changed {
            return Some((pr, pc));
        }
    }
    None
}

struct SimplexResult {
    flow: Vec<Vec<f64>>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
}

/// Balanced transportation problem; `cost` is finite (`m x k`).
fn transportation_simplex(cost: &[Vec<f64>], supply: &[f64], demand: &[f64], tol: f64) -> Result<SimplexResult> {
    let m = supply.len();
    let k = demand.len();
    let mut flow = vec![vec![0.0; k]; m];
    let mut basic = vec![vec![false; k]; m];

    // northwest corner; exactly m + k - 1 basic cells
    let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = s[i].min(d[j]);
        flow[i][j] = q;
        basic[i][j] = true;
        s[i] -= q;
        d[j] -= q;
        if i == m - 1 && j == k - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == k - 1 {
            i += 1;
        } else if s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let max_pivots = 50 * (m * k).pow(2) + 1000;
    let mut pivots = 0;
    loop {
        let (u, v) = modi_duals(cost, &basic)?;
        // Bland: first improving cell in row-major order
        let entering = (0..m)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .find(|&(a, b)| !basic[a][b] && cost[a][b] - u[a] - v[b] < -tol);
        let Some((ei, ej)) = entering else {
            return Ok(SimplexResult { flow, u, v, pivots });
        };
        if pivots >= max_pivots {
            return Err(Error::NonConvergence {
                trace: vec![pivots as f64],
            });
        }
        pivots += 1;
        let cycle = basis_cycle(&basic, ei, ej);
        // cycle[0] is the entering cell (+); signs alternate
        let mut theta = f64::INFINITY;
        let mut leaving = None;
        for (pos, &(a, b)) in cycle.iter().enumerate().skip(1).step_by(2) {
            let w = flow[a][b];
            let better = match leaving {
                None => true,
                Some((la, lb, _)) => w < theta || (w == theta && (a, b) < (la, lb)),
            };
            if better {
                theta = w;
                leaving = Some((a, b, pos));
            }
        }
        let (la, lb, _) = leaving.expect("cycle has a minus cell");
        for (pos, &(a, b)) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                flow[a][b] += theta;
            } else {
                flow[a][b] -= theta;
            }
        }
        flow[la][lb] = 0.0;
        basic[la][lb] = false;
        basic[ei][ej] = true;
    }
}

/// `u_i + v_j = c_ij` on basic cells, `u_0 = 0`, solved along the tree.
fn modi_duals(cost: &[Vec<f64>], basic: &[Vec<bool>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = cost.len();
    let k = cost[0].len();
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; k];
    u[0] = 0.0;
    let mut stack = vec![(true, 0usize)];
    while let Some((is_row, idx)) = stack.pop() {
        if is_row {
            for b in 0..k {
                if basic[idx][b] && v[b].is_nan() {
                    v[b] = cost[idx][b] - u[idx];
                    stack.push((false, b));
                }
            }
        } else {
            for a in 0..m {
                if basic[a][idx] && u[a].is_nan() {
                    u[a] = cost[a][idx] - v[idx];
                    stack.push((true, a));
                }
            }
        }
    }
    if u.iter().chain(&v).any(|x| x.is_nan()) {
        return Err(Error::NonConvergence { trace: vec![] });
    }
    Ok((u, v))
}

/// Cycle through the entering cell `(ei, ej)` and basic cells, alternating
/// row and column moves, starting with the entering cell.
fn basis_cycle(basic: &[Vec<bool>], ei: usize, ej: usize) -> Vec<(usize, usize)> {
    let m = basic.len();
    let k = basic[0].len();
    // BFS on the bipartite basis tree from column ej to row ei
    // node ids: rows 0..m, columns m..m+k
    let mut prev = vec![usize::MAX; m + k];
    let start = m + ej;
    prev[start] = start;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == ei {
            break;
        }
        if node < m {
            for b in 0..k {
                if basic[node][b] && prev[m + b] == usize::MAX {
                    prev[m + b] = node;
                    queue.push_back(m + b);
                }
            }
        } else {
            let b = node - m;
            for a in 0..m {
                if basic[a][b] && prev[a] == usize::MAX {
                    prev[a] = node;
                    queue.push_back(a);
                }
            }
        }
    }
    // path ei -> ... -> column ej, read back through prev
    let mut path = vec![ei];
    let mut node = ei;
    while node != start {
        node = prev[node];
        path.push(node);
    }
    let mut cycle = vec![(ei, ej)];
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        cycle.push(if a < m { (a, b - m) } else { (b, a - m) });
    }
    cycle
}

/// Stationary plan minimizing `<C, P>` and its value per unit time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSolution {
    /// `alpha_T = <C, P> / t`.
    pub value: f64,
    /// `<C, P>`, the mean cycle weight.
    pub mean: f64,
    pub plan: TransportPlan,
    pub cycle: Vec<usize>,
    pub policy_iterations: usize,
}

/// `min <C, P>` over probability plans with equal marginals, divided by `t`.
///
/// Extreme points of this polytope are uniform measures on simple cycles, so
/// the optimum is a minimum mean cycle; Howard policy iteration finds it.
pub fn alpha_t(c: &CostMatrix) -> Result<AlphaSolution> {
    let n = c.n();
    let (cycle, iterations) = howard_min_mean_cycle(c)?;
    let mean = weakkam::cycle_mean(c, &cycle);
    let mut weights = vec![0.0; n * n];
    let w = 1.0 / cycle.len() as f64;
    for (idx, &a) in cycle.iter().enumerate() {
        let b = cycle[(idx + 1) % cycle.len()];
        weights[a * n + b] += w;
    }
    Ok(AlphaSolution {
        value: mean / c.t(),
        mean,
        plan: TransportPlan::new(n, weights)?,
        cycle,
        policy_iterations: iterations,
    })
}

fn howard_min_mean_cycle(c: &CostMatrix) -> Result<(Vec<usize>, usize)> {
    let n = c.n();
    // nodes that can lie on a cycle: repeatedly drop nodes without finite
    // successors among the survivors
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for u in 0..n {
            if alive[u] && !(0..n).any(|v| alive[v] && c.get(u, v).is_finite()) {
                alive[u] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !alive.iter().any(|a| *a) {
        return Err(Error::Disconnected("the matrix has no finite cycle".into()));
    }
    let nodes: Vec<usize> = (0..n).filter(|&u| alive[u]).collect();
    let scale = c.max_finite().unwrap_or(0.0).abs().max(c.min_finite().unwrap_or(0.0).abs()) + 1.0;
    let eps = 1e-12 * scale;
    let mut policy = vec![usize::MAX; n];
    for &u in &nodes {
        policy[u] = nodes
            .iter()
            .copied()
            .filter(|&v| c.get(u, v).is_finite())
            .min_by(|&a, &b| c.get(u, a).total_cmp(&c.get(u, b)))
            .expect("alive node has a successor");
    }
    let mut eta = vec![0.0; n];
    let mut bias = vec![0.0; n];
    let max_iter = 100 * n * n + 100;
    for iteration in 1..=max_iter {
        evaluate_policy(c, &nodes, &policy, &mut eta, &mut bias);
        let mut changed = false;
        // first improve the cycle value reachable from each node
        for &u in &nodes {
            for &v in &nodes {
                if c.get(u, v).is_finite() && eta[v] < eta[u] - eps {
                    policy[u] = v;
                    eta[u] = eta[v];
                    changed = true;
                }
            }
        }
        if !changed {
            for &u in &nodes {
                for &v in &nodes {
                    let w = c.get(u, v);
                    if w.is_finite() && (eta[v] - eta[u]).abs() <= eps {
                        let cand = w - eta[u] + bias[v];
                        if cand < bias[u] - eps {
                            bias[u] = cand;
                            policy[u] = v;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            let best = nodes
                .iter()
                .copied()
                .min_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(a.cmp(&b)))
                .expect("nonempty");
            let mut cycle = policy_cycle(&policy, best);
            let pos = cycle.iter().enumerate().min_by_key(|(_, v)| **v).map(|(i, _)| i).unwrap_or(0);
            cycle.rotate_left(pos);
            return Ok((cycle, iteration));
        }
    }
    Err(Error::NonConvergence { trace: vec![max_iter as f64] })
}

/// Cycle reached from `start` following `policy`.
fn policy_cycle(policy: &[usize], start: usize) -> Vec<usize> {
    let mut seen = std::collections::HashMap::new();
    let mut order = Vec::new();
    let mut node = start;
    while !seen.contains_key(&node) {
        seen.insert(node, order.len());
        order.push(node);
        node = policy[node];
    }
    order[seen[&node]..].to_vec()
}

/// Cycle mean `eta` reached from each node and the bias `x` with
/// `x(u) = C[u, pi(u)] - eta(u) + x(pi(u))`, zero at one node per cycle.
fn evaluate_policy(c: &CostMatrix, nodes: &[usize], policy: &[usize], eta: &mut [f64], bias: &mut [f64]) {
    let n = c.n();
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
    for &start in nodes {
        if state[start] == 2 {
            continue;
        }
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = policy[node];
        }
        if state[node] == 1 {
            // new cycle starting at `node`
            let pos = path.iter().position(|&p| p == node).expect("on path");
            let cyc = &path[pos..];
            let mean = weakkam::cycle_mean(c, cyc);
            let handle = *cyc.iter().min().expect("nonempty");
            let hpos = cyc.iter().position(|&p| p == handle).unwrap();
            eta[handle] = mean;
            bias[handle] = 0.0;
            // walk the cycle backwards from the handle
            let len = cyc.len();
            for step in 1..len {
                let u = cyc[(hpos + len - step) % len];
                let next = policy[u];
                eta[u] = mean;
                bias[u] = c.get(u, next) - mean + bias[next];
            }
            for &u in cyc {
                state[u] = 2;
            }
            path.truncate(pos);
        }
        for &u in path.iter().rev() {
            let next = policy[u];
            eta[u] = eta[next];
            bias[u] = c.get(u, next) - eta[u] + bias[next];
            state[u] = 2;
        }
    }
}

/// Glues `P1` (nu1 -> nu) and `P2` (nu -> nu2) through their common marginal.
pub fn interpolate_measure(p1: &TransportPlan, p2: &TransportPlan) -> Result<TransportPlan> {
    let n = p1.n;
    if p2.n != n {
        return Err(Error::InvalidInput("plans live on different grids".into()));
    }
    let nu = p1.col_sums();
    let nu2 = p2.row_sums();
    let mismatch = nu.iter().zip(&nu2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if mismatch > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "middle marginals differ by {mismatch:e}"
        )));
    }
    let mut weights = vec![0.0; n * n];
    for z in 0..n {
        if nu[z] <= 0.0 {
            continue;
        }
        for x in 0..n {
            let a = p1.get(x, z);
            if a == 0.0 {
                continue;
            }
            for y in 0..n {
                weights[x * n + y] += a * p2.get(z, y) / nu[z];
            }
        }
    }
    TransportPlan::new(n, weights)
}

/// Splits a plan for `C_{s+t} = C_s (x) C_t` through the recorded argmin
/// midpoints: each pair `(x, y)` routes its mass via `z = argmin[x, y]`.
pub fn split_through_midpoints(
    product: &MinPlusProduct,
    plan: &TransportPlan,
) -> Result<(TransportPlan, TransportPlan)> {
    let n = plan.n;
    if product.matrix.n() != n {
        return Err(Error::InvalidInput("plan and product sizes differ".into()));
    }
    let mut w1 = vec![0.0; n * n];
    let mut w2 = vec![0.0; n * n];
    for (x, y, w) in plan.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(e, w)| (e / n, e % n, *w)) {
        let z = product.argmin[x * n + y]
            .ok_or_else(|| Error::InvalidInput(format!("plan charges the infinite entry ({x}, {y})")))?;
        w1[x * n + z] += w;
        w2[z * n + y] += w;
    }
    Ok((TransportPlan::new(n, w1)?, TransportPlan::new(n, w2)?))
}

/// `max |C[x, y] - g(y) + g(x) - ht|` over the support of `plan`.
pub fn support_violation(plan: &TransportPlan, g: &[f64], ht: f64, c: &CostMatrix) -> f64 {
    plan.support()
        .iter()
        .map(|&(x, y, _)| (c.get(x, y) - g[y] + g[x] - ht).abs())
        .fold(0.0, f64::max)
}

/// [`support_violation`] after checking that `g` is a fixed point and that
/// `plan` is stationary and optimal.
pub fn mather_support_check(plan: &TransportPlan, g: &[f64], ht: f64, c: &CostMatrix) -> Result<f64> {
    if g.len() != c.n() || plan.n != c.n() {
        return Err(Error::InvalidInput("plan, potential and matrix sizes differ".into()));
    }
    let eigen_defect = weakkam::fixed_point_residual(c, g, ht)?;
    if eigen_defect > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "potential is not a fixed point: defect {eigen_defect:e}"
        )));
    }
    let stationarity = plan.marginal_error(&plan.row_sums(), &plan.row_sums()).max(
        plan.row_sums()
            .iter()
            .zip(plan.col_sums())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    );
    if stationarity > 1e-10 || (plan.total() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "plan is not a stationary probability: marginal defect {stationarity:e}"
        )));
    }
    let value_defect = (plan.cost(c) - ht).abs() / c.t();
    if value_defect > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "plan average cost misses h: defect {value_defect:e}"
        )));
    }
    Ok(support_violation(plan, g, ht, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_to_dirac() {
        let c = CostMatrix::from_rows(vec![vec![0.5, 2.0], vec![1.0, 3.0]], 1.0).unwrap();
        let s = solve_ot(&c, &DiscreteMeasure::dirac(2, 1), &DiscreteMeasure::dirac(2, 1)).unwrap();
        assert_eq!(s.primal, 3.0);
        assert_eq!(s.plan.get(1, 1), 1.0);
        assert!(s.gap < 1e-12);
    }

    #[test]
    fn two_point_swap() {
        let c = CostMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1.0).unwrap();
        let u = DiscreteMeasure::uniform(2);
        let s = solve_ot(&c, &u, &u).unwrap();
        assert_eq!(s.primal, 0.0);
        assert_eq!(s.plan.get(0, 0), 0.5);
        assert_eq!(s.plan.get(1, 1), 0.5);
        assert!(s.slackness_violation < 1e-12);
        assert!(s.dual.feasibility_violation(&c) <= 1e-12);
    }

    #[test]
    fn infinite_entries_are_avoided() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(
            vec![vec![inf, 1.0, 5.0], vec![2.0, inf, 1.0], vec![1.0, 4.0, inf]],
            1.0,
        )
        .unwrap();
        let u = DiscreteMeasure::uniform(3);
        let s = solve_ot(&c, &u, &u).unwrap();
        assert!((s.primal - 1.0).abs() < 1e-12);
        assert!(s.gap < 1e-10);
    }

    #[test]
    fn infeasible_coupling() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![0.0, inf], vec![inf, inf]], 1.0).unwrap();
        let err = solve_ot(&c, &DiscreteMeasure::dirac(2, 0), &DiscreteMeasure::dirac(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn alpha_on_two_cycle() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(vec![vec![inf, 3.0], vec![1.0, inf]], 2.0).unwrap();
        let a = alpha_t(&c).unwrap();
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.value, 1.0);
        assert_eq!(a.plan.get(0, 1), 0.5);
        assert_eq!(a.plan.get(1, 0), 0.5);
    }

    #[test]
    fn alpha_prefers_cheapest_self_loop() {
        let c = CostMatrix::from_rows(vec![vec![2.0, 1.5], vec![1.5, 0.25]], 0.5).unwrap();
        let a = alpha_t(&c).unwrap();
        assert_eq!(a.cycle, vec![1]);
        assert_eq!(a.value, 0.5);
        assert_eq!(a.plan.get(1, 1), 1.0);
    }

    #[test]
    fn gluing_through_a_dirac_gives_the_product() {
        let n = 3;
        let mut w1 = vec![0.0; 9];
        let mut w2 = vec![0.0; 9];
        for x in 0..n {
            w1[x * n + 1] = [0.2, 0.3, 0.5][x];
            w2[n + x] = [0.6, 0.1, 0.3][x];
        }
        let p = interpolate_measure(&TransportPlan::new(n, w1).unwrap(), &TransportPlan::new(n, w2).unwrap()).unwrap();
        for x in 0..n {
            for y in 0..n {
                let want = [0.2, 0.3, 0.5][x] * [0.6, 0.1, 0.3][y];
                assert!((p.get(x, y) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gluing_rejects_mismatch() {
        let p1 = TransportPlan::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let p2 = TransportPlan::new(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(interpolate_measure(&p1, &p2).is_err());
    }

    #[test]
    fn mather_on_constant_matrix() {
        let c = CostMatrix::from_rows(vec![vec![0.3; 3]; 3], 1.0).unwrap();
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let plan = TransportPlan::new(3, w).unwrap();
        assert_eq!(mather_support_check(&plan, &[0.0; 3], 0.3, &c).unwrap(), 0.0);
    }
}
