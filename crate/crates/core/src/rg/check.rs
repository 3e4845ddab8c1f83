//! Operator-level cross-check of `R_ρ^#` against the dense Feshbach map.
//!
//! On a geometric grid with `ρ = q^{-s}` the dilation is an exact relabelling,
//! so `H(R_ρ^# w)` must agree with `ρ^{-1} Γ_ρ F_{χ_ρ}(H(w), H_{0,0}(w)) Γ_ρ*`
//! between states that leave the lowest `s` modes empty. The remaining
//! difference is the Neumann tail plus the r-interpolation of the output kernels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::feshbach::{feshbach_map, make_feshbach_pair};
use crate::fock::FockSpace;
use crate::kernel::{assemble_kernel, assemble_operator, KernelSequence};

use super::cutoff::CutoffPair;
use super::params::RgParams;
use super::step::{renormalize_sharp, SharpReport};
use super::RgError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCheck {
    /// Dilation exponent `s` with `q^s = 1/ρ`.
    pub shift: usize,
    /// States compared (lowest `s` modes empty).
    pub compared: usize,
    /// Max entrywise difference on the compared block.
    pub max_abs_diff: f64,
    /// Operator norm of the difference on the compared block.
    pub op_norm_diff: f64,
    /// Operator norm of the dense reference on the compared block.
    pub op_norm_ref: f64,
    /// Operator norm of the reference minus its free part `ρ^{-1} w_{0,0}(ρH_f)`,
    /// so the comparison is not dominated by the diagonal.
    pub op_norm_interaction: f64,
    pub sharp: SharpReport,
}

/// Exponent `s` with `q^s = 1/ρ` for the grid of `space`, if one exists.
pub fn dilation_shift(space: &FockSpace, rho: f64) -> Option<usize> {
    let q = space.grid.geometric_ratio()?;
    let s = ((1.0 / rho).ln() / q.ln()).round();
    (s >= 1.0 && (q.powf(s) * rho - 1.0).abs() < 1e-9).then_some(s as usize)
}

pub fn operator_check(
    w: &KernelSequence,
    params: &RgParams,
    cut: &CutoffPair,
    space: &FockSpace,
) -> Result<OperatorCheck, RgError> {
    let rho = params.rho;
    let shift = dilation_shift(space, rho).ok_or_else(|| {
        RgError::Params(vec![format!("grid is not geometric with ratio a root of 1/rho = {}", 1.0 / rho)])
    })?;
    let (rw, sharp) = renormalize_sharp(w, params, cut, space)?;

    let h = assemble_operator(w, space)?.to_dense();
    let t = assemble_kernel(w.w00(), space)?.to_dense();
    let chi = DMatrix::from_fn(space.dim(), space.dim(), |i, j| if i == j { cut.chi(space.energy(i)).0 } else { 0.0 });
    let pair = make_feshbach_pair(h, t, chi).map_err(|e| RgError::Pair(format!("{:?}", e.failures)))?;
    let f = feshbach_map(&pair);
    let hr = assemble_operator(&rw, space)?.to_dense();

    // a ↦ Γ_ρ* a for every state with the lowest `shift` modes empty.
    let mut image = Vec::new();
    let mut occ = vec![0u16; space.n_modes()];
    for (s, b) in space.basis.iter().enumerate() {
        if b[..shift].iter().any(|&n| n > 0) {
            continue;
        }
        occ.iter_mut().for_each(|x| *x = 0);
        occ[..space.n_modes() - shift].copy_from_slice(&b[shift..]);
        let t = space.find(&occ).expect("dilated state lies in the reduced space");
        image.push((s, t));
    }
    let n = image.len();
    let reference = DMatrix::from_fn(n, n, |i, j| f[(image[i].1, image[j].1)] / rho);
    let computed = DMatrix::from_fn(n, n, |i, j| hr[(image[i].0, image[j].0)]);
    let diff = &computed - &reference;
    let mut interaction = reference.clone();
    for (i, &(s, _)) in image.iter().enumerate() {
        interaction[(i, i)] -= w.w00().eval(rho * space.energy(s), &[]).0 / rho;
    }
    Ok(OperatorCheck {
        shift,
        compared: n,
        max_abs_diff: diff.amax(),
        op_norm_diff: crate::fock::op_norm_dense(&diff),
        op_norm_ref: crate::fock::op_norm_dense(&reference),
        op_norm_interaction: crate::fock::op_norm_dense(&interaction),
        sharp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeGrid;
    use crate::kernel::{Kernel, KernelGrid};

    #[test]
    fn free_kernel_matches_exactly() {
        let params = RgParams { rho: 0.25, ..RgParams::default() };
        let cut = params.cutoffs().unwrap();
        let g = ModeGrid::geometric(1.0, 2.0, 5).unwrap();
        let kg = KernelGrid::new(g.clone(), 17).unwrap();
        let sp = FockSpace::reduced(g);
        let w = KernelSequence::free(&kg, params.xi, 2, -0.01);
        let c = operator_check(&w, &params, &cut, &sp).unwrap();
        assert_eq!(c.shift, 2);
        assert!(c.compared > 1 && c.max_abs_diff < 1e-12, "{c:?}");
    }

    fn interacting(kg: &std::sync::Arc<KernelGrid>, xi: f64, amp: f64) -> KernelSequence {
        let w00 = Kernel::from_fn(0, 0, kg, |r, _| (r - 0.02 + 0.01 * r * r, 1.0 + 0.02 * r));
        let mut w = KernelSequence::new(w00, xi, 2);
        let taper = |r: f64, s: f64| (1.0 - r - s).max(0.0);
        w.insert(Kernel::from_fn(1, 1, kg, |r, k| {
            let s = k[0].max(k[1]);
            let t = taper(r, s);
            (amp * (1.0 + r) * t.powi(4), amp * (t.powi(4) - 4.0 * (1.0 + r) * t.powi(3)))
        }))
        .unwrap();
        for (m, n) in [(2, 0), (0, 2)] {
            w.insert(Kernel::from_fn(m, n, kg, |r, k| {
                let t = taper(r, k[0] + k[1]);
                (0.5 * amp * t.powi(4), -2.0 * amp * t.powi(3))
            }))
            .unwrap();
        }
        w
    }

    #[test]
    fn interacting_kernel_matches_dense_feshbach_map() {
        let params = RgParams { rho: 0.25, l_max: 40, ..RgParams::default() };
        let cut = params.cutoffs().unwrap();
        let g = ModeGrid::geometric(1.0, 2.0, 5).unwrap();
        let sp = FockSpace::reduced(g.clone());
        let diffs: Vec<OperatorCheck> = [17, 33]
            .into_iter()
            .map(|n_r| {
                let kg = KernelGrid::new(g.clone(), n_r).unwrap();
                operator_check(&interacting(&kg, params.xi, 2e-5), &params, &cut, &sp).unwrap()
            })
            .collect();
        let c = &diffs[1];
        assert!(c.sharp.depth > 1 && c.op_norm_interaction > 0.0);
        assert!(c.op_norm_diff <= 1e-3 * c.op_norm_interaction, "{c:?}");
        // Cubic Hermite in r: the residual drops by about 16 per halving.
        assert!(diffs[0].op_norm_diff >= 8.0 * c.op_norm_diff);
    }
}
