use kamlab_core::cost::pmp_shoot;
use kamlab_core::geometry::rescale_control;
use kamlab_core::schedule::ControlSchedule;
use kamlab_core::systems::{eval_hamiltonian, paper_example, Lagrangian};
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = ControlSchedule> {
    (1usize..6)
        .prop_flat_map(|segs| {
            (
                prop::collection::vec(0.01..1.0f64, segs),
                prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), segs),
            )
        })
        .prop_map(|(lens, vals)| {
            let total: f64 = lens.iter().sum();
            let mut bps = vec![0.0];
            let mut acc = 0.0;
            for (i, l) in lens.iter().enumerate() {
                acc += l / total;
                bps.push(if i + 1 == lens.len() { 1.0 } else { acc });
            }
            ControlSchedule::new(bps, vals).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: proptest::test_runner::RngSeed::Fixed(23), ..ProptestConfig::default() })]

    #[test]
    fn p2_and_h_are_conserved(
        k in 2u32..5,
        x1 in -0.5..0.5f64,
        x2 in -0.5..0.5f64,
        p1 in -1.0..1.0f64,
        p2 in -1.0..1.0f64,
    ) {
        let sys = paper_example(k).unwrap();
        let lag = Lagrangian::pure_quadratic();
        if let Ok(arc) = pmp_shoot(&sys, &lag, &[x1, x2], &[p1, p2], 1.0, -1) {
            for (z, p) in arc.states.iter().zip(&arc.covectors) {
                prop_assert!((p[1] - p2).abs() <= 1e-10);
                let h = eval_hamiltonian(&sys, &lag, z, p).unwrap();
                prop_assert!((h - arc.hamiltonian[0]).abs() <= 1e-8);
            }
            // the reduced equations u1 = p1, u2 = x1^k p2
            for ((z, p), u) in arc.states.iter().zip(&arc.covectors).zip(&arc.controls) {
                prop_assert!((u[0] - p[0]).abs() <= 1e-12);
                prop_assert!((u[1] - z[0].powi(k as i32) * p2).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rescaling_follows_the_lp_law(
        v in schedule(),
        alpha in 0.0..1.0f64,
        beta in 0.1..1.5f64,
        eps in 0.01..1.0f64,
        p in prop::sample::select(vec![1.0, 1.5, 2.0, 2.5, 4.0]),
        tau_frac in 0.0..1.0f64,
    ) {
        let scale = eps.powf(beta);
        let tau = tau_frac * (1.0 - scale);
        let w = rescale_control(&v, tau, alpha, beta, eps, 1.0).unwrap();
        let want = eps.powf(beta / p - alpha) * v.lp_norm(p);
        prop_assert!(((w.lp_norm(p) - want) / want).abs() <= 1e-12);
        prop_assert!((w.horizon() - 1.0).abs() <= 1e-15);
    }
}
