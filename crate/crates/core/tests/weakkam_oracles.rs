mod common;

use common::*;
use kamlab_core::cost::{minplus_compose, CostMatrix};
use kamlab_core::weakkam::{
    critical_value_report, cycle_mean, estimate_h_subadditive, fixed_point_residual, lax_oleinik_unanchored,
    min_mean_cycle, verify_h_uniqueness, weak_kam_potential, PotentialField,
};
use kamlab_core::Error;
use rand::Rng;

#[test]
fn karp_matches_cycle_enumeration() {
    let mut r = rng(11);
    for i in 0..200 {
        let n = 1 + i % 7;
        let c = random_matrix(&mut r, n, -5.0, 5.0, 0.5, 1.0);
        let karp = min_mean_cycle(&c).unwrap();
        let brute = brute_force_min_mean(&c).unwrap();
        assert!((karp.value - brute).abs() < 1e-10, "instance {i}");
        assert!((cycle_mean(&c, &karp.cycle) - karp.value).abs() < 1e-10);
        let start = karp.cycle[0];
        assert_eq!(start, *karp.cycle.iter().min().unwrap());
    }
}

#[test]
fn acyclic_graph_is_disconnected() {
    let inf = f64::INFINITY;
    let c = CostMatrix::from_rows(vec![vec![inf, 1.0, inf], vec![inf, inf, 2.0], vec![inf, inf, inf]], 1.0).unwrap();
    assert!(matches!(min_mean_cycle(&c), Err(Error::Disconnected(_))));
}

#[test]
fn potentials_are_fixed_points() {
    let mut r = rng(12);
    for i in 0..60 {
        let n = 2 + i % 9;
        let t = r.random_range(0.5..2.0);
        let c = random_matrix(&mut r, n, 0.0, 10.0, 0.3, t);
        let c = make_irreducible(&mut r, c, 0.0, 10.0);
        let ht = min_mean_cycle(&c).unwrap().value;
        let f0: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let sol = weak_kam_potential(&c, ht, &PotentialField::anchored(f0).unwrap(), t).unwrap();
        assert!(sol.residual <= 1e-9, "instance {i}: {} via {}", sol.residual, sol.method);
        assert!(fixed_point_residual(&c, sol.potential.values(), ht).unwrap() <= 1e-9);
        assert_eq!(sol.potential.values()[sol.potential.anchor()], 0.0);
        let u = verify_h_uniqueness(&c, sol.potential.values(), ht / t).unwrap();
        assert!(u.holds && u.gap <= 1e-6);
        let wrong = verify_h_uniqueness(&c, sol.potential.values(), ht / t + 0.5).unwrap();
        assert!(!wrong.holds);
    }
}

#[test]
fn potential_is_unique_up_to_constants_on_a_single_critical_cycle() {
    // one critical self-loop at node 0: eigenvectors differ by constants
    let c = CostMatrix::from_rows(
        vec![vec![0.0, 2.0, 3.0], vec![1.0, 1.0, 4.0], vec![2.5, 1.5, 2.0]],
        1.0,
    )
    .unwrap();
    let a = weak_kam_potential(&c, 0.0, &PotentialField::zeros(3), 1.0).unwrap();
    let b = weak_kam_potential(&c, 0.0, &PotentialField::anchored(vec![5.0, -1.0, 2.0]).unwrap(), 1.0).unwrap();
    let d: Vec<f64> = a.potential.values().iter().zip(b.potential.values()).map(|(x, y)| x - y).collect();
    assert!(d.iter().all(|v| (v - d[0]).abs() < 1e-12));
    // the critical-distance eigenvector from node 0
    assert_eq!(a.potential.values(), &[0.0, 2.0, 3.0]);
}

#[test]
fn subadditive_rates_bracket_the_eigenvalue() {
    let mut r = rng(13);
    for _ in 0..30 {
        let n = 2 + r.random_range(0..6);
        let c = random_matrix(&mut r, n, 0.0, 4.0, 0.0, 0.5);
        let trace = estimate_h_subadditive(&c, 8).unwrap();
        let h = min_mean_cycle(&c).unwrap().value / c.t();
        let last = trace.rows.last().unwrap();
        assert!(last.min_rate <= h + 1e-12 && h <= last.max_rate + 1e-12);
        assert!((trace.h - h).abs() <= trace.rate_spread() + 1e-12);
        // M_t / t decreases and m_t / t increases along doublings
        for w in trace.rows.windows(2) {
            assert!(w[1].max_rate <= w[0].max_rate + 1e-12);
            assert!(w[1].min_rate >= w[0].min_rate - 1e-12);
        }
    }
}

#[test]
fn report_routes_agree() {
    let mut r = rng(14);
    let c = random_matrix(&mut r, 6, 0.0, 3.0, 0.0, 1.0);
    let rep = critical_value_report(&c, 10).unwrap();
    assert!((rep.h_karp - rep.h_alpha).abs() < 1e-12);
    assert!((rep.h_subadditive - rep.h_karp).abs() <= rep.subadditive_window + 1e-12);
}

#[test]
fn lax_oleinik_of_a_product_is_the_composed_operator() {
    let mut r = rng(15);
    let a = random_matrix(&mut r, 5, 0.0, 3.0, 0.3, 1.0);
    let b = random_matrix(&mut r, 5, 0.0, 3.0, 0.3, 1.0);
    let f: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
    let ab = minplus_compose(&a, &b).unwrap().matrix;
    let two_steps = lax_oleinik_unanchored(&b, &lax_oleinik_unanchored(&a, &f).unwrap()).unwrap();
    let one_step = lax_oleinik_unanchored(&ab, &f).unwrap();
    for (x, y) in two_steps.iter().zip(&one_step) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn unreachable_column_is_reported() {
    let inf = f64::INFINITY;
    let c = CostMatrix::from_rows(vec![vec![0.0, inf], vec![1.0, inf]], 1.0).unwrap();
    assert!(matches!(lax_oleinik_unanchored(&c, &[0.0, 0.0]), Err(Error::UnreachablePoint(1))));
}
