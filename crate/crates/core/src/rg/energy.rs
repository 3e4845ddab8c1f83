//! The spectral-parameter map `E_ρ[w](z) = −ρ^{-1} w_{0,0}(z, 0)` and its inverse.

use crate::kernel::ParamKernelSequence;
use crate::quad::find_root;

use super::RgError;

/// `E_ρ[w]` at `z`, with its `z`-derivative.
pub fn energy_at(pw: &ParamKernelSequence, rho: f64, z: f64) -> (f64, f64) {
    let (v, dz) = pw.w00_at(z, 0.0);
    (-v / rho, -dz / rho)
}

/// `E_ρ[w]` on the family's z-nodes.
pub fn energy_map(pw: &ParamKernelSequence, rho: f64) -> Vec<(f64, f64)> {
    pw.z.iter().map(|&z| (z, energy_at(pw, rho, z).0)).collect()
}

/// `sup_z |∂_z E[w] − 1|` for `E[w] = −w_{0,0}(·, 0)`, by centered differences
/// on a uniform sampling of the z-interval.
pub fn energy_derivative_defect(pw: &ParamKernelSequence) -> f64 {
    let n = 64;
    let h = (pw.z_max - pw.z_min) / n as f64;
    let e = |z: f64| -pw.w00_at(z, 0.0).0;
    (1..n)
        .map(|i| {
            let z = pw.z_min + i as f64 * h;
            ((e(z + h) - e(z - h)) / (2.0 * h) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// `4ρ(4 − 5ρ)^{-2}`, the admissible derivative defect inside the ball.
pub fn derivative_defect_bound(rho: f64) -> f64 {
    4.0 * rho / ((4.0 - 5.0 * rho) * (4.0 - 5.0 * rho))
}

fn monotone(samples: &[f64]) -> bool {
    samples.windows(2).all(|w| w[1] > w[0])
}

/// Solves `E_ρ[w](z) = ζ` on the real z-interval; residual `≤ 1e-12`.
pub fn invert_energy_map(pw: &ParamKernelSequence, rho: f64, zeta: f64) -> Result<f64, RgError> {
    let e = |z: f64| energy_at(pw, rho, z).0;
    let mut samples: Vec<f64> = pw.z.iter().map(|&z| e(z)).collect();
    if !monotone(&samples) {
        let n = 4 * pw.z.len();
        let h = (pw.z_max - pw.z_min) / (n - 1) as f64;
        samples = (0..n).map(|i| e(pw.z_min + i as f64 * h)).collect();
        if !monotone(&samples) {
            return Err(RgError::Energy("energy map is not monotone on the z-interval".into()));
        }
    }
    let (lo, hi) = (e(pw.z_min), e(pw.z_max));
    if !(zeta >= lo && zeta <= hi) {
        return Err(RgError::Energy(format!("target {zeta} outside attainable range [{lo}, {hi}]")));
    }
    let mut z = find_root(|z| e(z) - zeta, pw.z_min, pw.z_max, 1e-17)
        .ok_or_else(|| RgError::Energy("root bracket lost".into()))?;
    // Newton polish against the barycentric derivative.
    for _ in 0..3 {
        let (v, d) = energy_at(pw, rho, z);
        if (v - zeta).abs() <= 1e-13 || d == 0.0 {
            break;
        }
        z -= (v - zeta) / d;
    }
    let residual = (e(z) - zeta).abs();
    if residual > 1e-12 {
        return Err(RgError::Energy(format!("inversion residual {residual:e} above 1e-12")));
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::kernel::{Kernel, KernelGrid, KernelSequence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn family(shift: f64) -> ParamKernelSequence {
        let g = KernelGrid::new(build_mode_grid(0.1, 1.0, 2, GridScheme::Midpoint).unwrap(), 9).unwrap();
        ParamKernelSequence::build(-0.45, 0.45, 9, |z| {
            let w = Kernel::from_fn(0, 0, &g, |r, _| (r - z + shift * z * z, 1.0));
            Ok::<_, ()>(KernelSequence::new(w, 0.09, 4))
        })
        .unwrap()
    }

    #[test]
    fn free_family_scales_by_rho() {
        let rho = 0.003;
        let pw = family(0.0);
        for (z, e) in energy_map(&pw, rho) {
            assert!((e - z / rho).abs() < 1e-10);
        }
        assert!((invert_energy_map(&pw, rho, 0.2).unwrap() - rho * 0.2).abs() < 1e-15);
        assert!(energy_derivative_defect(&pw) < 1e-10);
    }

    #[test]
    fn round_trip_on_random_targets() {
        let rho = 0.003;
        let pw = family(5e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let zeta = rng.random_range(-0.45..0.45);
            let z = invert_energy_map(&pw, rho, zeta).unwrap();
            assert!((energy_at(&pw, rho, z).0 - zeta).abs() < 1e-10);
        }
        assert!(energy_derivative_defect(&pw) <= derivative_defect_bound(rho));
    }

    #[test]
    fn unreachable_target_is_an_error() {
        assert!(invert_energy_map(&family(0.0), 0.003, 1e4).is_err());
    }
}
