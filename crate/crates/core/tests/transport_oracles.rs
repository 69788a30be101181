mod common;

use common::*;
use kamlab_core::cost::{minplus_compose, CostMatrix};
use kamlab_core::transport::{
    alpha_t, interpolate_measure, mather_support_check, solve_ot, split_through_midpoints, support_violation,
    DiscreteMeasure, TransportPlan,
};
use kamlab_core::weakkam::{min_mean_cycle, weak_kam_potential, PotentialField};
use kamlab_core::Error;
use rand::Rng;

#[test]
fn uniform_marginals_match_permutations() {
    let mut r = rng(1);
    for i in 0..40 {
        let n = 2 + i % 5;
        let c = random_matrix(&mut r, n, -3.0, 7.0, 0.2, 1.0);
        let u = DiscreteMeasure::uniform(n);
        let s = solve_ot(&c, &u, &u).unwrap();
        assert!((s.primal - permutation_ot(&c)).abs() < 1e-10, "instance {i}");
        assert!(s.gap < 1e-10);
        assert!(s.plan.marginal_error(u.weights(), u.weights()) < 1e-14);
    }
}

#[test]
fn general_marginals_match_basis_enumeration() {
    let mut r = rng(2);
    for i in 0..30 {
        let n = 2 + i % 3;
        let c = random_matrix(&mut r, n, 0.0, 4.0, 0.0, 1.0);
        let mu = random_probability(&mut r, n);
        let nu = random_probability(&mut r, n);
        let s = solve_ot(
            &c,
            &DiscreteMeasure::new(mu.clone()).unwrap(),
            &DiscreteMeasure::new(nu.clone()).unwrap(),
        )
        .unwrap();
        assert!((s.primal - basis_enumeration_ot(&c, &mu, &nu)).abs() < 1e-10, "instance {i}");
        assert!(s.slackness_violation < 1e-10);
        assert!(s.dual.feasibility_violation(&c) < 1e-10);
    }
}

#[test]
fn degenerate_marginals_keep_duals_feasible() {
    // zero-mass points get their potentials from c-transforms
    let mut r = rng(3);
    for _ in 0..20 {
        let n = 5;
        let c = random_matrix(&mut r, n, 0.0, 5.0, 0.0, 1.0);
        let mut mu = vec![0.0; n];
        let mut nu = vec![0.0; n];
        mu[r.random_range(0..n)] = 0.5;
        mu[r.random_range(0..n)] += 0.5;
        nu[r.random_range(0..n)] = 1.0;
        let s = solve_ot(&c, &DiscreteMeasure::new(mu).unwrap(), &DiscreteMeasure::new(nu).unwrap()).unwrap();
        assert!(s.gap < 1e-12);
        assert!(s.dual.feasibility_violation(&c) < 1e-12);
    }
}

#[test]
fn size_mismatch_is_rejected() {
    let c = CostMatrix::from_rows(vec![vec![0.0; 3]; 3], 1.0).unwrap();
    let err = solve_ot(&c, &DiscreteMeasure::uniform(2), &DiscreteMeasure::uniform(3)).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
    assert!(DiscreteMeasure::new(vec![0.5, 0.6]).is_err());
    assert!(DiscreteMeasure::new(vec![1.5, -0.5]).is_err());
}

#[test]
fn alpha_matches_karp_and_brute_force() {
    let mut r = rng(4);
    for i in 0..150 {
        let n = 1 + i % 7;
        let t = r.random_range(0.25..3.0);
        let c = random_matrix(&mut r, n, -4.0, 6.0, 0.4, t);
        let a = alpha_t(&c).unwrap();
        let karp = min_mean_cycle(&c).unwrap();
        let brute = brute_force_min_mean(&c).unwrap();
        assert!((a.mean - karp.value).abs() < 1e-9, "instance {i}");
        assert!((a.mean - brute).abs() < 1e-9, "instance {i}");
        assert!((a.value - a.mean / t).abs() < 1e-12);
        // the plan is a stationary probability
        let rows = a.plan.row_sums();
        let cols = a.plan.col_sums();
        assert!(rows.iter().zip(&cols).all(|(x, y)| (x - y).abs() < 1e-15));
        assert!((a.plan.total() - 1.0).abs() < 1e-12);
        assert!((a.plan.cost(&c) - a.mean).abs() < 1e-9);
    }
}

#[test]
fn alpha_is_the_minimum_over_stationary_plans() {
    // any permutation plan is stationary; none beats alpha
    let mut r = rng(5);
    for _ in 0..30 {
        let n = 4;
        let c = random_matrix(&mut r, n, 0.0, 5.0, 0.0, 1.0);
        let a = alpha_t(&c).unwrap();
        let u = DiscreteMeasure::uniform(n);
        let best_perm = solve_ot(&c, &u, &u).unwrap().primal;
        assert!(a.mean <= best_perm + 1e-12);
    }
}

#[test]
fn splitting_and_gluing_reproduce_composed_costs() {
    let mut r = rng(6);
    for i in 0..25 {
        let n = 3 + i % 6;
        let a = random_matrix(&mut r, n, 0.0, 5.0, 0.0, 0.4);
        let b = random_matrix(&mut r, n, 0.0, 5.0, 0.0, 0.6);
        let prod = minplus_compose(&a, &b).unwrap();
        let mu = DiscreteMeasure::new(random_probability(&mut r, n)).unwrap();
        let nu = DiscreteMeasure::new(random_probability(&mut r, n)).unwrap();
        let full = solve_ot(&prod.matrix, &mu, &nu).unwrap();
        let (p1, p2) = split_through_midpoints(&prod, &full.plan).unwrap();
        assert!((full.primal - p1.cost(&a) - p2.cost(&b)).abs() < 1e-10);
        assert!(p1.marginal_error(mu.weights(), &p1.col_sums()) < 1e-14);
        let glued = interpolate_measure(&p1, &p2).unwrap();
        assert!(glued.marginal_error(mu.weights(), nu.weights()) < 1e-12);
        assert!(glued.cost(&prod.matrix) <= p1.cost(&a) + p2.cost(&b) + 1e-10);
        assert!(glued.cost(&prod.matrix) >= full.primal - 1e-10);
    }
}

#[test]
fn split_rejects_infinite_support() {
    let inf = f64::INFINITY;
    let a = CostMatrix::from_rows(vec![vec![0.0, inf], vec![inf, 0.0]], 1.0).unwrap();
    let prod = minplus_compose(&a, &a).unwrap();
    let plan = TransportPlan::new(2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!(split_through_midpoints(&prod, &plan).is_err());
}

#[test]
fn mather_support_on_exact_instances() {
    let mut r = rng(7);
    for i in 0..40 {
        let c = integer_matrix(&mut r, 2 + i % 6, 9, 0.3);
        let c = make_irreducible(&mut r, c, 0.0, 9.0);
        let ht = min_mean_cycle(&c).unwrap().value;
        let g = weak_kam_potential(&c, ht, &PotentialField::zeros(c.n()), 1.0).unwrap();
        let plan = alpha_t(&c).unwrap().plan;
        let v = mather_support_check(&plan, g.potential.values(), ht, &c).unwrap();
        assert!(v <= 1e-8, "instance {i}: {v}");
    }
}

#[test]
fn mather_check_rejects_broken_preconditions() {
    let c = CostMatrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]], 1.0).unwrap();
    let good = alpha_t(&c).unwrap().plan;
    // not a fixed point
    assert!(mather_support_check(&good, &[0.0, 5.0], 1.0, &c).is_err());
    // not stationary
    let skew = TransportPlan::new(2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!(mather_support_check(&skew, &[0.0, 0.0], 1.0, &c).is_err());
    // stationary but not optimal
    let swap = TransportPlan::new(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
    assert!(mather_support_check(&swap, &[0.0, 0.0], 1.0, &c).is_err());
    // the raw measure still reports the gap of the shifted potential
    assert_eq!(support_violation(&swap, &[0.0, 0.0], 1.0, &c), 1.0);
}
