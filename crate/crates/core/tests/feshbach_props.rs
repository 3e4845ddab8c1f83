use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbrg::feshbach::{feshbach_map, isospectrality_check, neumann_inverse, q_operators, random_pair};
use sbrg::fock::op_norm_dense;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn intertwining_and_inverse_formulas(seed in any::<u64>(), n in 4usize..30, singular in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_pair(&mut rng, n, singular);
        let r = isospectrality_check(&p, None).unwrap();
        prop_assert!(r.equivalence_holds);
        prop_assert!(r.intertwining_residual <= 1e-10);
        if let (Some(a), Some(b)) = (r.h_inverse_residual, r.f_inverse_residual) {
            prop_assert!(a <= 1e-9 * r.h_condition && b <= 1e-9 * r.h_condition);
        }
        if singular {
            prop_assert!(r.dim_ker_h >= 1);
            prop_assert_eq!(r.dim_ker_h, r.dim_ker_f);
            prop_assert!(r.kernel_map_residual <= 1e-9 && r.round_trip_residual <= 1e-9);
        }
    }

    #[test]
    fn neumann_matches_direct_inverse(seed in any::<u64>(), n in 4usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_pair(&mut rng, n, false);
        let q = p.diagnostics.left_ratio;
        prop_assume!(q <= 0.9);
        let terms = ((1e-12f64).ln() / q.max(1e-3).ln()).ceil() as usize + 2;
        let err = op_norm_dense(&(neumann_inverse(&p, terms) - &p.hchibar_inv));
        prop_assert!(err <= 1e-10);
    }

    #[test]
    fn q_operators_reduce_to_chi_without_coupling(seed in any::<u64>(), n in 4usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_pair(&mut rng, n, false);
        let free = sbrg::feshbach::make_feshbach_pair(p.t.clone(), p.t.clone(), p.chi.clone()).unwrap();
        let (q, qs) = q_operators(&free);
        prop_assert!(op_norm_dense(&(q - &p.chi)) <= 1e-12);
        prop_assert!(op_norm_dense(&(qs - &p.chi)) <= 1e-12);
        prop_assert!(op_norm_dense(&(feshbach_map(&free) - &p.t)) <= 1e-12);
    }
}
