use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbrg::fock::{build_mode_grid, FockSpace, GridScheme, SparseOperator};
use sbrg::kernel::{assemble_operator, Kernel, KernelGrid, KernelSequence};

const DEGREES: [(usize, usize); 5] = [(2, 0), (1, 1), (4, 0), (3, 1), (2, 2)];

fn smooth(rng: &mut ChaCha8Rng, m: usize, n: usize, kg: &std::sync::Arc<KernelGrid>) -> Kernel {
    let c: Vec<f64> = (0..m + n + 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    Kernel::from_fn(m, n, kg, move |r, k| {
        let s: f64 = k.iter().zip(&c[2..]).map(|(x, a)| a * x).sum();
        ((c[0] * r + s).sin() + c[1], c[0] * (c[0] * r + s).cos())
    })
}

fn hermitian_defect(h: &SparseOperator) -> f64 {
    h.max_abs_diff(&h.transpose()) / h.max_abs_diff(&SparseOperator::zeros(h.dim)).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_even_sequences_assemble_to_hermitian(seed in any::<u64>(), m in 2usize..5, sigma in 0.0f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_mode_grid(sigma, 1.0, m, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let sp = FockSpace::reduced(g);
        let mut w = KernelSequence::new(smooth(&mut rng, 0, 0, &kg), 0.25, 4);
        for &(a, b) in &DEGREES {
            let k = smooth(&mut rng, a, b, &kg).symmetrize();
            if a == b {
                let mut s = k.adjoint();
                s.axpy(1.0, &k);
                w.insert(s.scaled(0.5)).unwrap();
            } else {
                w.insert(k.adjoint()).unwrap();
                w.insert(k).unwrap();
            }
        }
        prop_assert!(w.is_even());
        prop_assert!(w.adjoint_defect() <= 1e-15);
        let h = assemble_operator(&w, &sp).unwrap();
        prop_assert!(hermitian_defect(&h) <= 1e-12);
    }

    #[test]
    fn breaking_the_pairing_breaks_hermiticity(seed in any::<u64>(), m in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_mode_grid(0.05, 1.0, m, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let sp = FockSpace::reduced(g);
        let mut w = KernelSequence::new(smooth(&mut rng, 0, 0, &kg), 0.25, 4);
        let k = Kernel::from_fn(2, 0, &kg, |r, _| (1.0 + r, 1.0));
        w.insert(k.adjoint()).unwrap();
        w.insert(k.clone()).unwrap();
        let mut broken = w.clone();
        broken.insert(k.scaled(1.5)).unwrap();
        prop_assert!(broken.adjoint_defect() > 0.0);
        prop_assert!(hermitian_defect(&assemble_operator(&w, &sp).unwrap()) <= 1e-12);
        prop_assert!(hermitian_defect(&assemble_operator(&broken, &sp).unwrap()) > 1e-3);
    }
}
