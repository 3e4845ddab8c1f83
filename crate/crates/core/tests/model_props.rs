use proptest::prelude::*;
use sbrg::fock::{build_mode_grid, FockSpace, GridScheme, ModeGrid};
use sbrg::model::{assemble_hamiltonian, ground_state, Coupling};

const TOL: f64 = 1e-12;

fn energy(grid: ModeGrid, cap: usize, lambda: f64, sigma: f64) -> (f64, f64) {
    let sp = FockSpace::new(grid, cap, true).unwrap();
    let gs = ground_state(&assemble_hamiltonian(&sp, lambda, &Coupling::unit(sigma)).unwrap(), TOL).unwrap();
    (gs.energy, gs.gap)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn even_nonpositive_and_gapped(lambda in 0.0f64..0.4, sigma in 0.0f64..0.3, m in 2usize..6, cap in 1usize..4) {
        let g = build_mode_grid(sigma, 1.0, m, GridScheme::Midpoint).unwrap();
        let (plus, gap) = energy(g.clone(), cap, lambda, sigma);
        let (minus, _) = energy(g, cap, -lambda, sigma);
        prop_assert!((plus - minus).abs() <= 10.0 * TOL);
        prop_assert!(plus <= 0.0);
        prop_assert!(gap > 0.0);
    }

    #[test]
    fn raising_the_occupation_cap_lowers_the_energy(lambda in 0.0f64..0.4, m in 2usize..5, cap in 1usize..4) {
        let g = build_mode_grid(0.0, 1.0, m, GridScheme::GaussLegendre).unwrap();
        let (small, _) = energy(g.clone(), cap, lambda, 0.0);
        let (large, _) = energy(g, cap + 1, lambda, 0.0);
        prop_assert!(large <= small + TOL);
    }

    // A new panel keeps every old node and weight, so the smaller space embeds.
    #[test]
    fn adding_modes_lowers_the_energy(lambda in 0.0f64..0.4, lo in 0.05f64..0.4, n in 1usize..3, cap in 1usize..4) {
        let coarse = ModeGrid::composite_gauss(&[0.5, 1.0], n).unwrap();
        let fine = ModeGrid::composite_gauss(&[lo, 0.5, 1.0], n).unwrap();
        let (small, _) = energy(coarse, cap, lambda, 0.0);
        let (large, _) = energy(fine, cap, lambda, 0.0);
        prop_assert!(large <= small + TOL);
    }
}
