use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbrg::fock::{
    annihilation_op, build_mode_grid, creation_op, field_op, free_field_op, grading_projection, op_norm_dense,
    FockSpace, GridScheme, SparseOperator,
};

fn scheme(i: u8) -> GridScheme {
    match i % 3 {
        0 => GridScheme::Midpoint,
        1 => GridScheme::GaussLegendre,
        _ => GridScheme::LogSpaced,
    }
}

fn space(sigma: f64, m: usize, n: usize, s: u8, spin: bool) -> FockSpace {
    let g = build_mode_grid(sigma, 1.0, m, scheme(s)).unwrap();
    FockSpace::new(g, n, spin).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pull_through_on_interior_grading(sigma in 0.01f64..0.3, m in 2usize..6, n in 2usize..5, s in 0u8..3, i in 0usize..6) {
        let sp = space(sigma, m, n, s, false);
        let i = i % m;
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let a = creation_op(&sp, &e).unwrap();
        let f = |x: f64| (1.0 + x).recip() + (3.0 * x).sin();
        let k = sp.grid.nodes[i];
        let lhs = sp.function_of_hf(f).matmul(&a);
        let rhs = a.matmul(&sp.function_of_hf(|x| f(x + k)));
        let p = grading_projection(&sp, n - 1);
        prop_assert!(lhs.matmul(&p).max_abs_diff(&rhs.matmul(&p)) <= 1e-13);
    }

    #[test]
    fn canonical_commutator(sigma in 0.0f64..0.3, m in 2usize..6, n in 2usize..5, s in 0u8..2, seed in any::<u64>()) {
        let sp = space(sigma, m, n, s, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_vec(&mut rng, m);
        let h = random_vec(&mut rng, m);
        let a = annihilation_op(&sp, &g).unwrap();
        let c = creation_op(&sp, &h).unwrap();
        let comm = a.matmul(&c).linear_combination(1.0, &c.matmul(&a), -1.0);
        let expected: f64 = g.iter().zip(&h).zip(&sp.grid.weights).map(|((g, h), w)| g * h * w).sum();
        let p = grading_projection(&sp, n - 1);
        let want = p.scaled(expected);
        prop_assert!(comm.matmul(&p).max_abs_diff(&want) <= 1e-13);
    }

    #[test]
    fn annihilation_bounded_by_field_energy(sigma in 0.01f64..0.3, m in 2usize..6, n in 1usize..4, s in 0u8..3, seed in any::<u64>()) {
        let sp = space(sigma, m, n, s, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_vec(&mut rng, m);
        let a = annihilation_op(&sp, &g).unwrap();
        let hf = free_field_op(&sp);
        let bound: f64 = sp.grid.nodes.iter().zip(&sp.grid.weights).zip(&g).map(|((k, w), g)| w * g * g / k).sum::<f64>().sqrt();
        for _ in 0..8 {
            let psi = random_vec(&mut rng, sp.dim());
            let lhs = norm(&a.apply(&psi));
            let hpsi = hf.apply(&psi);
            let half: f64 = psi.iter().zip(&hpsi).map(|(a, b)| a * b).sum::<f64>().sqrt();
            prop_assert!(lhs <= bound * half * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn multi_annihilation_bound(sigma in 0.01f64..0.3, m in 2usize..5, n in 2usize..4, s in 0u8..3, seed in any::<u64>()) {
        let sp = space(sigma, m, n, s, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_vec(&mut rng, sp.dim());
        let hf = free_field_op(&sp);
        let ops: Vec<SparseOperator> = (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                // unit-normalized mode operator
                annihilation_op(&sp, &e).unwrap().scaled(sp.grid.weights[i].sqrt().recip())
            })
            .collect();
        let k = &sp.grid.nodes;
        let hpsi = hf.apply(&psi);
        let one: f64 = (0..m).map(|i| k[i] * norm(&ops[i].apply(&psi)).powi(2)).sum();
        prop_assert!(one <= psi.iter().zip(&hpsi).map(|(a, b)| a * b).sum::<f64>() * (1.0 + 1e-12));
        let two: f64 = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| k[i] * k[j] * norm(&ops[i].apply(&ops[j].apply(&psi))).powi(2))
            .sum();
        prop_assert!(two <= norm(&hpsi).powi(2) * (1.0 + 1e-12));
    }

    #[test]
    fn field_vacuum_variance_and_resolvent_bound(sigma in 0.01f64..0.3, m in 2usize..6, n in 1usize..4, s in 0u8..3, seed in any::<u64>()) {
        let sp = space(sigma, m, n, s, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_vec(&mut rng, m);
        let phi = field_op(&sp, &f).unwrap();
        prop_assert!(phi.hermitian);
        let mut omega = vec![0.0; sp.dim()];
        omega[0] = 1.0;
        let v = phi.apply(&omega);
        let n_half: f64 = sp.grid.nodes.iter().zip(&sp.grid.weights).zip(&f).map(|((k, w), f)| w * f * f / k).sum();
        let n_one: f64 = sp.grid.nodes.iter().zip(&sp.grid.weights).zip(&f).map(|((k, w), f)| w * f * f / (k * k)).sum();
        prop_assert!((v.iter().map(|x| x * x).sum::<f64>() - n_half).abs() <= 1e-14 * (1.0 + n_half));
        let r = sp.function_of_hf(|e| (e + 1.0).sqrt().recip());
        let lhs = op_norm_dense(&r.matmul(&phi).to_dense());
        prop_assert!(lhs <= n_half.sqrt() + (n_one + n_half).sqrt());
    }
}

#[test]
fn zero_field_is_zero() {
    let sp = space(0.1, 4, 3, 0, true);
    assert_eq!(field_op(&sp, &[0.0; 4]).unwrap().nnz(), 0);
}
