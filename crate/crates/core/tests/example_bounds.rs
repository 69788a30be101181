mod common;

use common::*;
use kamlab_core::cost::pmp_shoot;
use kamlab_core::example::{
    area_integral, bound_floor, kappa, lower_bound, phase_portrait, reduced_hamiltonian, ExampleParams,
};
use kamlab_core::systems::{paper_example, Lagrangian};

#[test]
fn area_integral_matches_series() {
    for k in 2..=6 {
        let want = area_integral_series(k);
        assert!((area_integral(k) - want).abs() < 1e-9, "k={k}");
    }
    assert!((2.0 * area_integral_series(3) - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
}

#[test]
fn k3_area_term_is_constant() {
    for p2 in [-1e-4, -0.3, -2.0, -17.0, -1e5] {
        let b = lower_bound(3, p2).unwrap();
        assert!((b.area - std::f64::consts::FRAC_PI_4).abs() < 1e-9, "p2={p2}");
        assert!(b.combined >= 0.5);
    }
    let b = lower_bound(3, -2.0).unwrap();
    assert!((b.escape - 0.5).abs() < 1e-15);
}

#[test]
fn k3_floor_is_pi_over_four_and_k2_degenerates() {
    let f3 = bound_floor(3, -6.0, 6.0, 241).unwrap();
    assert!((f3.floor - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    // both terms decay like (-p2)^(-1/2) for k = 2
    let a = lower_bound(2, -1e2).unwrap();
    let b = lower_bound(2, -1e4).unwrap();
    assert!((a.area / b.area - 10.0).abs() < 1e-9);
    assert!((a.escape / b.escape - 10.0).abs() < 1e-9);
    let f2 = bound_floor(2, -6.0, 6.0, 241).unwrap();
    assert!(f2.floor < 1e-2);
    // for k >= 4 the area term grows with -p2 while the escape term decays
    let c = lower_bound(4, -1e4).unwrap();
    assert!(c.area > lower_bound(4, -1.0).unwrap().area);
}

#[test]
fn zero_level_passes_through_origin_and_turning_points() {
    for (k, p2) in [(2u32, -1.0), (3, -2.0), (4, -0.9)] {
        let params = ExampleParams::new(k, p2).unwrap();
        let kap = kappa(k, p2);
        let levels = phase_portrait(&params, &[0.0], 128, [-1.9, 1.9], [-1.6, 1.6]).unwrap();
        let pts: Vec<[f64; 2]> = levels[0].polylines.iter().flatten().copied().collect();
        let dx = 3.8 / 128.0;
        for target in [0.0, kap, -kap] {
            let near = pts.iter().any(|p| (p[0] - target).abs() < 2.0 * dx && p[1].abs() < 2.0 * dx);
            assert!(near, "k={k} no crossing near x1={target}");
        }
        // crossings of p1 = 0 only near 0 and +-kappa
        for p in &pts {
            if p[1].abs() < 1e-9 {
                let d = [0.0, kap, -kap].iter().map(|t| (p[0] - t).abs()).fold(f64::INFINITY, f64::min);
                assert!(d < 2.0 * dx);
            }
        }
    }
}

#[test]
fn portrait_points_lie_on_their_levels() {
    let params = ExampleParams::new(3, -2.0).unwrap();
    let levels = [-0.4, -0.1, 0.0, 0.2, 0.8];
    let out = phase_portrait(&params, &levels, 200, [-1.5, 1.5], [-1.5, 1.5]).unwrap();
    let spacing = 3.0 / 200.0;
    for lvl in &out {
        for line in &lvl.polylines {
            assert!(line.len() >= 2);
            for p in line {
                // linear interpolation error is second order in the spacing
                let h = reduced_hamiltonian(3, -2.0, p[0], p[1]);
                assert!((h - lvl.level).abs() < 40.0 * spacing * spacing, "level {} got {h}", lvl.level);
            }
        }
    }
    // the negative levels are closed curves inside the two wells
    for line in &out[0].polylines {
        assert_eq!(line.first(), line.last());
    }
}

#[test]
fn hamiltonian_is_nonnegative_on_arcs_returning_to_the_axis() {
    // sweep initial covectors from (0, w); whenever the arc comes back to
    // x1 = 0 the value of H there is p1^2 / 2 >= 0 and H is conserved
    let lag = Lagrangian::pure_quadratic();
    for k in [2u32, 3] {
        let sys = paper_example(k).unwrap();
        for i in 0..12 {
            for j in 1..8 {
                let p1 = -1.5 + 3.0 * i as f64 / 11.0;
                let p2 = -0.5 * j as f64;
                let Ok(arc) = pmp_shoot(&sys, &lag, &[0.0, 0.2], &[p1, p2], 1.0, -1) else {
                    continue;
                };
                assert!(arc.hamiltonian[0] >= 0.0);
                assert!(arc.hamiltonian_drift() < 1e-8);
                assert!(arc.covectors.iter().all(|p| p[1] == p2));
            }
        }
    }
}
