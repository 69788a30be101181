use kamlab_core::cost::{build_cost_matrix, OptimizerParams};
use kamlab_core::expr::Expr;
use kamlab_core::grid::Grid;
use kamlab_core::systems::{catalog_system, Lagrangian};
use kamlab_core::weakkam::{min_mean_cycle, viscosity_residual, weak_kam_potential, PotentialField};

/// `x' = u` on the circle with `L = u^2/2 + 1 - cos x`: the critical value is
/// `min L = 0` and the potential has slope `2 |sin(x/2)|` with a kink at `pi`.
#[test]
fn pendulum_potential_residual_shrinks_with_the_grid() {
    let sys = catalog_system("integrator-1d").unwrap();
    let lag = Lagrangian::quadratic_plus(Expr::parse_state("1 - cos(x1)", 1).unwrap(), 1, 1);
    let params = OptimizerParams {
        segments: 8,
        restarts: 1,
        seed: 3,
        ..Default::default()
    };
    let mut residuals = Vec::new();
    for n in [40, 80] {
        let grid = Grid::uniform(&sys.space, &[n]).unwrap();
        let (c, rep) = build_cost_matrix(&sys, &lag, &grid, 1.0, &params).unwrap();
        assert!(rep.unreached.is_empty());
        let ht = min_mean_cycle(&c).unwrap().value;
        assert!(ht.abs() < 1e-6);
        let sol = weak_kam_potential(&c, ht, &PotentialField::zeros(n), 1.0).unwrap();
        assert!(sol.residual < 1e-9);
        let v = viscosity_residual(&sys, &lag, &c, &sol.potential, ht).unwrap();
        assert!(v.skipped_fraction <= 0.1);
        // the slope of the potential follows 2 |sin(x/2)| away from the kink
        for row in &v.rows {
            if let Some(g) = &row.gradient {
                let x = row.point[0];
                assert!((g[0].abs() - 2.0 * (x / 2.0).sin().abs()).abs() < 0.2, "x={x} slope {}", g[0]);
            }
        }
        residuals.push(v.max_residual);
    }
    assert!(residuals[1] < residuals[0], "{residuals:?}");
    assert!(residuals[1] < 5e-2);
}
