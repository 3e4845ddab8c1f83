//! Iterated renormalization: kernel chain, energy chain `e_(0,m)` and the
//! vector chain `ψ_(0,m)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::feshbach::{make_feshbach_pair, q_operators};
use crate::fock::dilation::relabel;
use crate::fock::FockSpace;
use crate::kernel::{assemble_kernel, assemble_operator, KernelSequence, ParamKernelSequence};

use super::energy::invert_energy_map;
use super::params::RgParams;
use super::step::{contraction_report, renormalize, ContractionReport, StepReport};
use super::RgError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub step: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `Σ_{l≤n} 2^{-l} ε_0`.
    pub alpha_bound: f64,
    /// `2^{-n} ε_0`.
    pub beta_gamma_bound: f64,
}

impl FunnelRow {
    pub fn inside(&self, slack: f64) -> bool {
        let s = 1.0 + slack;
        self.alpha <= self.alpha_bound * s
            && self.beta <= self.beta_gamma_bound * s
            && self.gamma <= self.beta_gamma_bound * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyRow {
    pub m: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct RgState {
    /// `w^(0) … w^(n)`.
    pub kernels: Vec<ParamKernelSequence>,
    pub steps: Vec<StepReport>,
    pub contraction: Vec<ContractionReport>,
    pub funnel: Vec<FunnelRow>,
    /// `e_(0,m)` for `m = 1 … n+1`.
    pub energies: Vec<f64>,
    /// `e_(n,n_max)`, the spectral parameter at which level `n` is evaluated.
    pub level_energies: Vec<f64>,
    /// `ψ_(0,m)` in the level-0 reduced basis for `m = 1 … n+1`.
    pub vectors: Vec<Vec<f64>>,
    pub energy_cauchy: Vec<CauchyRow>,
    pub vector_cauchy: Vec<CauchyRow>,
}

impl RgState {
    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least one level")
    }

    pub fn vector(&self) -> &[f64] {
        self.vectors.last().expect("at least one level")
    }
}

/// `Γ_ρ*` on a reduced space: exact relabelling on geometric grids with
/// `ρ = q^{-s}`, vacuum-only otherwise.
pub fn dilate_down(space: &FockSpace, rho: f64, v: &[f64]) -> Result<Vec<f64>, RgError> {
    let shift = match space.grid.geometric_ratio() {
        Some(q) => {
            let s = ((1.0 / rho).ln() / q.ln()).round();
            if (q.powf(s) * rho - 1.0).abs() > 1e-9 {
                return Err(RgError::Energy(format!("dilation by {rho} is not a power of the grid ratio {q}")));
            }
            -(s as isize)
        }
        None => -1,
    };
    Ok(relabel(space, space, shift, v)?)
}

/// `Q_{χ_ρ}(H(w), H_{0,0}(w))` as a dense matrix on the reduced space.
pub fn q_matrix(w: &KernelSequence, params: &RgParams, space: &FockSpace) -> Result<DMatrix<f64>, RgError> {
    let cut = params.cutoffs()?;
    let h = assemble_operator(w, space)?.to_dense();
    let t = assemble_kernel(w.w00(), space)?.to_dense();
    let chi = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        space.dim(),
        (0..space.dim()).map(|s| cut.chi(space.energy(s)).0),
    ));
    let pair = make_feshbach_pair(h, t, chi).map_err(|e| RgError::Pair(e.to_string()))?;
    Ok(q_operators(&pair).0)
}

/// Runs `n_steps` renormalization steps from `pw0` and assembles the energy
/// and vector chains.
pub fn iterate(
    pw0: &ParamKernelSequence,
    params: &RgParams,
    n_steps: usize,
    space: &FockSpace,
) -> Result<RgState, RgError> {
    let cut = params.validate()?;
    let eps = params.epsilon_0;
    let start = pw0.ball();
    for (what, value) in [("alpha", start.alpha), ("beta", start.beta), ("gamma", start.gamma)] {
        if value > eps / 2.0 {
            return Err(RgError::Ball { what, value, bound: eps / 2.0 });
        }
    }
    if !pw0.is_even() {
        return Err(RgError::Ball { what: "odd kernels", value: 1.0, bound: 0.0 });
    }
    let mut kernels = vec![pw0.clone()];
    let mut steps = Vec::new();
    let mut contraction = Vec::new();
    let mut funnel = vec![funnel_row(0, pw0, eps)];
    for n in 0..n_steps {
        let (next, rep) = renormalize(&kernels[n], params, &cut, space)
            .map_err(|e| RgError::Step { step: n + 1, source: Box::new(e) })?;
        contraction.push(contraction_report(&kernels[n], &next, 0.1));
        funnel.push(funnel_row(n + 1, &next, eps));
        steps.push(rep);
        kernels.push(next);
    }

    // e_(j,M) for every level j, M = n_steps + 1.
    let top = kernels.len();
    let mut level_energies = vec![0.0; top];
    let mut zeta = 0.0;
    for j in (0..top).rev() {
        zeta = invert_energy_map(&kernels[j], params.rho, zeta)?;
        level_energies[j] = zeta;
    }
    let mut energies = Vec::with_capacity(top);
    for m in 1..=top {
        let mut z = 0.0;
        for j in (0..m).rev() {
            z = invert_energy_map(&kernels[j], params.rho, z)?;
        }
        energies.push(z);
    }

    let qs: Vec<DMatrix<f64>> =
        (0..top).map(|j| q_matrix(&kernels[j].at(level_energies[j]), params, space)).collect::<Result<_, _>>()?;
    let mut vectors = Vec::with_capacity(top);
    for m in 1..=top {
        let mut v = vec![0.0; space.dim()];
        v[space.vacuum()] = 1.0;
        for j in (0..m).rev() {
            v = (&qs[j] * nalgebra::DVector::from_vec(v)).as_slice().to_vec();
            if j > 0 {
                v = dilate_down(space, params.rho, &v)?;
            }
        }
        vectors.push(v);
    }

    let energy_cauchy = energies
        .windows(2)
        .enumerate()
        .map(|(i, w)| CauchyRow {
            m: i + 1,
            value: (w[1] - w[0]).abs(),
            bound: 0.5 * (4.0 * params.rho / 3.0).powi(i as i32 + 1),
        })
        .collect();
    let c = 16.0 * eps / params.rho * (32.0 * eps / params.rho).exp();
    let vector_cauchy = vectors
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let d = w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            CauchyRow { m: i + 1, value: d, bound: 0.5f64.powi(i as i32 + 1) * c }
        })
        .collect();

    Ok(RgState { kernels, steps, contraction, funnel, energies, level_energies, vectors, energy_cauchy, vector_cauchy })
}

fn funnel_row(n: usize, pw: &ParamKernelSequence, eps: f64) -> FunnelRow {
    let b = pw.ball();
    FunnelRow {
        step: n,
        alpha: b.alpha,
        beta: b.beta,
        gamma: b.gamma,
        alpha_bound: (0..=n).map(|l| 0.5f64.powi(l as i32) * eps).sum(),
        beta_gamma_bound: 0.5f64.powi(n as i32) * eps,
    }
}

/// `min` singular value of `H(w(z))` at sampled real `z`.
pub fn invertibility_scan(pw: &ParamKernelSequence, space: &FockSpace, zs: &[f64]) -> Result<Vec<(f64, f64)>, RgError> {
    zs.iter()
        .map(|&z| {
            let h = assemble_operator(&pw.at(z), space)?.to_dense();
            let sv = h.singular_values();
            Ok((z, sv.iter().cloned().fold(f64::INFINITY, f64::min)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::kernel::KernelGrid;

    #[test]
    fn free_family_has_zero_energy_and_vacuum_vector() {
        let params = RgParams::default();
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let sp = FockSpace::reduced(g);
        let pw =
            ParamKernelSequence::build(-0.45, 0.45, 5, |z| Ok::<_, ()>(KernelSequence::free(&kg, params.xi, 4, z)))
                .unwrap();
        let st = iterate(&pw, &params, 3, &sp).unwrap();
        assert!(st.energies.iter().all(|e| e.abs() < 1e-12));
        let v = st.vector();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1..].iter().all(|x| *x == 0.0));
        assert!(st.funnel.iter().all(|r| r.inside(0.0)));
        let scan = invertibility_scan(&pw, &sp, &[-0.4, -0.2]).unwrap();
        assert!((scan[0].1 - 0.4).abs() < 1e-12);
    }
}
