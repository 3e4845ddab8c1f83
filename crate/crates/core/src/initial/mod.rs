//! The two model-specific Feshbach steps that turn `H_{λ,σ} − z` into a
//! kernel family on the reduced space.
//!
//! The first step projects onto the lower spin level (`χ^(I) = P_1 ⊗ 1`) and
//! is exact in closed form. The second uses `χ_1(H_f)` and is expanded as a
//! Neumann series whose normal-ordered terms are evaluated by the chain engine.

mod seed;

pub use seed::{
    assemble_w0, find_lambda_0, reconstruct_eigenvector, seed_at, series_bounds, sigma_continuity, Eigenvector,
    LambdaSearch, SeedParams, SeedReport, SeriesBounds, SigmaRow,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::feshbach::{feshbach_map, make_feshbach_pair, PairDiagnostics};
use crate::fock::{field_op, op_norm_dense, FockSpace, ModeGrid, SparseOperator};
use crate::kernel::{assemble_source, Kernel, KernelError, KernelGrid, KernelSource};
use crate::model::{assemble_hamiltonian, Coupling, ModelError};
use crate::rg::{CutoffPair, RgError};

#[derive(Debug, thiserror::Error)]
pub enum InitialError {
    #[error("spectral parameter |z| = {z} must be below {limit}")]
    SpectralParameter { z: f64, limit: f64 },
    #[error("coupling |lambda| = {lambda} must be below mu_0 = {mu_0}")]
    Coupling { lambda: f64, mu_0: f64 },
    #[error("Feshbach pair rejected: {0}")]
    Pair(String),
    #[error("seed kernel outside B_0(eps_0/2, eps_0/2, eps_0/2) at lambda = {lambda}: {detail}; largest admissible lambda found {lambda_max:e}")]
    Ball { lambda: f64, detail: String, lambda_max: f64 },
    #[error("Neumann tail {tail:e} above {tol:e} at depth {depth}")]
    Tail { tail: f64, tol: f64, depth: usize },
    #[error("eigenvector reconstruction: {0}")]
    Reconstruction(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fock(#[from] crate::fock::FockError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Rg(#[from] RgError),
}

/// Norms of the form factor entering the coupling bounds. `‖·‖` is the plain
/// `L²(ℝ³, d³k)` norm, evaluated by the mode-grid quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstants {
    /// `‖f/(4π√ω)‖`.
    pub f_sqrt_omega: f64,
    /// `‖f/(4πω)‖`.
    pub f_omega: f64,
    pub delta_0: f64,
    /// `1/(8 δ_0)`.
    pub mu_0: f64,
    /// `‖f‖`.
    pub f_l2: f64,
    /// `‖f/ω‖`.
    pub f_over_omega: f64,
    pub f_sup: f64,
    /// `10‖∂_r χ̄_1‖_∞ + 31`.
    pub c_fbar: f64,
}

impl CouplingConstants {
    /// `C_W(λ) = 6λ² sup_{p+q ≤ 2} A^{(p+q)/2} ‖f‖_∞^{2−p−q}` with
    /// `A = ‖f/ω‖² + 2‖f‖‖f/ω‖`.
    pub fn c_w(&self, lambda: f64) -> f64 {
        let a = self.f_over_omega * self.f_over_omega + 2.0 * self.f_l2 * self.f_over_omega;
        let s = self.f_sup;
        6.0 * lambda * lambda * (s * s).max(a.sqrt() * s).max(a)
    }

    /// `7 λ² δ_0²`, the bound on `‖W^(I)‖`.
    pub fn w_bound(&self, lambda: f64) -> f64 {
        7.0 * lambda * lambda * self.delta_0 * self.delta_0
    }
}

pub fn mu_zero(coupling: &Coupling, grid: &ModeGrid, cut: &CutoffPair) -> CouplingConstants {
    let four_pi_sq = (4.0 * std::f64::consts::PI).powi(2);
    let f = coupling.samples(grid);
    let sum = |g: &dyn Fn(f64, f64) -> f64| -> f64 {
        grid.nodes.iter().zip(&grid.weights).zip(&f).map(|((&k, &w), &fk)| w * g(k, fk)).sum()
    };
    let f_sqrt_omega = sum(&|k, f| f * f / k).sqrt();
    let f_omega = sum(&|k, f| f * f / (k * k)).sqrt();
    let delta_0 = f_sqrt_omega.max(f_omega);
    CouplingConstants {
        f_sqrt_omega,
        f_omega,
        delta_0,
        mu_0: 1.0 / (8.0 * delta_0),
        f_l2: (four_pi_sq * sum(&|_, f| f * f)).sqrt(),
        f_over_omega: (four_pi_sq * sum(&|k, f| f * f / (k * k))).sqrt(),
        f_sup: coupling.sup_norm(grid),
        c_fbar: 10.0 * cut.bar_deriv_sup + 31.0,
    }
}

/// Closed-form kernels of the first Feshbach step at `(λ, σ, z)`. The radial
/// integral in `t^(I)` uses the model's mode-grid quadrature so that the
/// kernels describe the same discretized Hamiltonian as the direct solver.
#[derive(Debug, Clone)]
pub struct InitialSource {
    pub lambda: f64,
    pub z: f64,
    pub coupling: Coupling,
    /// `(k_i, w_i f(k_i)²/k_i)`.
    quad: Vec<(f64, f64)>,
}

impl InitialSource {
    pub fn new(lambda: f64, z: f64, coupling: &Coupling, grid: &ModeGrid) -> Self {
        let quad = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&k, &w)| {
                let f = coupling.eval(k);
                (k, w * f * f / k)
            })
            .filter(|&(_, c)| c != 0.0)
            .collect();
        Self { lambda, z, coupling: *coupling, quad }
    }

    fn l2(&self) -> f64 {
        self.lambda * self.lambda
    }

    /// `t^(I)(r) = r − z − λ² Σ_i w_i f_i²/k_i /(r + k_i + 2 − z)` and `∂_r`.
    pub fn t(&self, r: f64) -> (f64, f64) {
        let (mut v, mut d) = (0.0, 0.0);
        for &(k, c) in &self.quad {
            let den = r + k + 2.0 - self.z;
            v += c / den;
            d -= c / (den * den);
        }
        (r - self.z - self.l2() * v, 1.0 - self.l2() * d)
    }

    /// `∂_z t^(I)(r)`.
    pub fn dz_t(&self, r: f64) -> f64 {
        let s: f64 = self.quad.iter().map(|&(k, c)| c / (r + k + 2.0 - self.z).powi(2)).sum();
        -1.0 - self.l2() * s
    }

    /// Unsymmetrized degree-two kernels `ŵ_{m,n}` as they come out of the pull-through.
    pub fn hat(&self, m: usize, n: usize, r: f64, k: &[f64]) -> f64 {
        let f = |x: f64| self.coupling.eval(x);
        let res = |x: f64| 1.0 / (r + x + 2.0 - self.z);
        match (m, n) {
            (2, 0) | (0, 2) => -self.l2() * f(k[0]) * f(k[1]) * res(k[0]),
            (1, 1) => -self.l2() * f(k[0]) * f(k[1]) * (res(0.0) + res(k[0] + k[1])),
            _ => 0.0,
        }
    }
}

impl KernelSource for InitialSource {
    fn has(&self, m: usize, n: usize) -> bool {
        matches!((m, n), (0, 0) | (2, 0) | (0, 2) | (1, 1))
    }

    fn eval(&self, m: usize, n: usize, r: f64, k: &[f64]) -> (f64, f64) {
        let f = |x: f64| self.coupling.eval(x);
        let den = |x: f64| r + x + 2.0 - self.z;
        match (m, n) {
            (0, 0) => self.t(r),
            (2, 0) | (0, 2) => {
                let c = -self.l2() * f(k[0]) * f(k[1]);
                if c == 0.0 {
                    return (0.0, 0.0);
                }
                let (a, b) = (den(k[0]), den(k[1]));
                (0.5 * c * (1.0 / a + 1.0 / b), -0.5 * c * (1.0 / (a * a) + 1.0 / (b * b)))
            }
            (1, 1) => {
                let c = -self.l2() * f(k[0]) * f(k[1]);
                if c == 0.0 {
                    return (0.0, 0.0);
                }
                let (a, b) = (den(0.0), den(k[0] + k[1]));
                (c * (1.0 / a + 1.0 / b), -c * (1.0 / (a * a) + 1.0 / (b * b)))
            }
            _ => (0.0, 0.0),
        }
    }

    fn supports(&self, k: f64) -> bool {
        k > 0.0 && k <= self.coupling.uv_cutoff
    }

    fn max_degree(&self) -> usize {
        2
    }
}

/// The first-step kernels sampled on a kernel grid (Q-masked, symmetrized).
#[derive(Debug, Clone)]
pub struct InitialKernels {
    pub t: Kernel,
    pub w20: Kernel,
    pub w02: Kernel,
    pub w11: Kernel,
    /// `∂_z t^(I)` on the r-grid.
    pub dz_t: Vec<f64>,
}

pub fn initial_kernels(
    lambda: f64,
    z: f64,
    coupling: &Coupling,
    consts: &CouplingConstants,
    grid: &Arc<KernelGrid>,
) -> Result<InitialKernels, InitialError> {
    if lambda.abs() >= consts.mu_0 {
        return Err(InitialError::Coupling { lambda: lambda.abs(), mu_0: consts.mu_0 });
    }
    if z.abs() > 0.5 {
        return Err(InitialError::SpectralParameter { z: z.abs(), limit: 0.5 });
    }
    let src = InitialSource::new(lambda, z, coupling, &grid.modes);
    let sample = |m, n| Kernel::from_fn(m, n, grid, |r, k| src.eval(m, n, r, k)).symmetrize();
    Ok(InitialKernels {
        t: sample(0, 0),
        w20: sample(2, 0),
        w02: sample(0, 2),
        w11: sample(1, 1),
        dz_t: grid.r.iter().map(|&r| src.dz_t(r)).collect(),
    })
}

/// `W^(I) = Σ_{m+n=2} H̄_{m,n}(w^(I))` on a spinless (particle-capped) space.
pub fn w_initial_op(src: &InitialSource, space: &FockSpace) -> Result<SparseOperator, InitialError> {
    let mut acc = SparseOperator::zeros(space.dim());
    for (m, n) in [(2, 0), (0, 2), (1, 1)] {
        acc = acc.linear_combination(1.0, &assemble_source(src, m, n, space)?, 1.0);
    }
    Ok(acc)
}

/// `T^(I) = t^(I)(H_f)`.
pub fn t_initial_op(src: &InitialSource, space: &FockSpace) -> SparseOperator {
    SparseOperator::diagonal(&(0..space.dim()).map(|s| src.t(space.energy(s)).0).collect::<Vec<_>>())
}

fn boson_part(space: &FockSpace) -> FockSpace {
    let mut b = space.clone();
    b.with_spin = false;
    b
}

/// `H_f − z − λ² φ(f_σ)(H_f + 2 − z)^{-1} φ(f_σ)` as a dense matrix on `boson`.
pub fn reduced_first_step(
    boson: &FockSpace,
    coupling: &Coupling,
    lambda: f64,
    z: f64,
) -> Result<DMatrix<f64>, InitialError> {
    let phi = field_op(boson, &coupling.samples(&boson.grid))?.to_dense();
    let n = boson.dim();
    let res = DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|s| 1.0 / (boson.energy(s) + 2.0 - z))));
    let hf = DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|s| boson.energy(s) - z)));
    Ok(hf - &phi * res * &phi * (lambda * lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStepCheck {
    /// `max |F_{χ^(I)} ↾ Ran χ^(I) − (H_f − z − λ²φ R φ)|`.
    pub residual: f64,
    pub diagnostics: PairDiagnostics,
}

/// Builds `(H − z, H_f + τ − z)` on a spin space, checks it is a Feshbach pair
/// for `P_1 ⊗ 1`, and compares the reduced operator with its closed form.
pub fn first_feshbach_check(
    space: &FockSpace,
    coupling: &Coupling,
    lambda: f64,
    z: f64,
) -> Result<FirstStepCheck, InitialError> {
    if z.abs() >= 2.0 {
        return Err(InitialError::SpectralParameter { z: z.abs(), limit: 2.0 });
    }
    let (h, t, chi) = first_pair(space, coupling, lambda, z)?;
    let pair = make_feshbach_pair(h, t, chi).map_err(|e| InitialError::Pair(format!("{:?}", e.failures)))?;
    let f = feshbach_map(&pair);
    let boson = boson_part(space);
    let closed = reduced_first_step(&boson, coupling, lambda, z)?;
    let nb = boson.dim();
    let down = |b| space.spin_index(1, b);
    let residual = (0..nb)
        .flat_map(|i| (0..nb).map(move |j| (i, j)))
        .map(|(i, j)| (f[(down(i), down(j))] - closed[(i, j)]).abs())
        .fold(0.0, f64::max);
    Ok(FirstStepCheck { residual, diagnostics: pair.diagnostics })
}

/// `(H − z, H_f + τ − z, P_1 ⊗ 1)` as dense matrices.
fn first_pair(
    space: &FockSpace,
    coupling: &Coupling,
    lambda: f64,
    z: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), InitialError> {
    let n = space.dim();
    let nb = space.boson_dim();
    let h = assemble_hamiltonian(space, lambda, coupling)?.to_dense() - DMatrix::identity(n, n) * z;
    let t = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        (0..n).map(|s| space.energy(s % nb) + if s < nb { 2.0 } else { 0.0 } - z),
    ));
    let chi = DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|s| if s < nb { 0.0 } else { 1.0 })));
    Ok((h, t, chi))
}

/// Measured norms behind the second pair, with margins to their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondPairBounds {
    pub lambda: f64,
    pub z: f64,
    /// `inf_{r ≥ 3/4} |t^(I)(r)|` on a dense r-sampling; at least 15/64.
    pub t_min: f64,
    /// `‖T^(I)^{-1} ↾ Ran χ̄_1‖`; at most 64/15.
    pub t_inv_norm: f64,
    /// `‖T^(I)^{-1} χ̄_1 W^(I)‖` and `‖W^(I) T^(I)^{-1} χ̄_1‖`; below 7/15.
    pub left: f64,
    pub right: f64,
    pub w_norm: f64,
    pub w_bound: f64,
    pub margins: [f64; 4],
    pub holds: bool,
}

pub const T_MIN_BOUND: f64 = 15.0 / 64.0;
pub const T_INV_BOUND: f64 = 64.0 / 15.0;
pub const MIXED_BOUND: f64 = 7.0 / 15.0;

pub fn second_pair_bounds(
    lambda: f64,
    z: f64,
    coupling: &Coupling,
    consts: &CouplingConstants,
    cut: &CutoffPair,
    space: &FockSpace,
) -> Result<SecondPairBounds, InitialError> {
    if z.abs() > 0.5 {
        return Err(InitialError::SpectralParameter { z: z.abs(), limit: 0.5 });
    }
    let src = InitialSource::new(lambda, z, coupling, &space.grid);
    let t_min = (0..=4000).map(|i| src.t(0.75 + i as f64 * 1e-3).0.abs()).fold(f64::INFINITY, f64::min);
    let w = w_initial_op(&src, space)?.to_dense();
    let n = space.dim();
    let mut t_inv_norm = 0.0f64;
    let d = DVector::from_iterator(
        n,
        (0..n).map(|s| {
            let e = space.energy(s);
            let cb = cut.chibar1(e).0;
            if cb == 0.0 {
                return 0.0;
            }
            let t = src.t(e).0;
            t_inv_norm = t_inv_norm.max(1.0 / t.abs());
            cb / t
        }),
    );
    let d = DMatrix::from_diagonal(&d);
    let left = op_norm_dense(&(&d * &w));
    let right = op_norm_dense(&(&w * &d));
    let w_norm = op_norm_dense(&w);
    let w_bound = consts.w_bound(lambda);
    let margins = [t_min - T_MIN_BOUND, T_INV_BOUND - t_inv_norm, MIXED_BOUND - left, MIXED_BOUND - right];
    Ok(SecondPairBounds {
        lambda,
        z,
        t_min,
        t_inv_norm,
        left,
        right,
        w_norm,
        w_bound,
        margins,
        holds: margins.iter().all(|&m| m > 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::rg::CutoffProfile;
    use std::f64::consts::PI;

    fn cut() -> CutoffPair {
        CutoffPair::new(0.003, CutoffProfile::Smoothstep3).unwrap()
    }

    #[test]
    fn mu_zero_matches_closed_form_for_unit_coupling() {
        let g = build_mode_grid(0.0, 1.0, 64, GridScheme::GaussLegendre).unwrap();
        let c = mu_zero(&Coupling::unit(0.0), &g, &cut());
        assert!((c.f_sqrt_omega - (1.0 / (8.0 * PI)).sqrt()).abs() < 1e-10);
        assert!((c.f_omega - (1.0 / (4.0 * PI)).sqrt()).abs() < 1e-10);
        assert!((c.mu_0 - (4.0 * PI).sqrt() / 8.0).abs() < 1e-8);
        let scaled = Coupling { profile: crate::model::Profile::Power { power: 0.0 }, ..Coupling::unit(0.0) };
        assert!((mu_zero(&scaled, &g, &cut()).mu_0 - c.mu_0).abs() < 1e-14);
    }

    #[test]
    fn free_case_kernels() {
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let consts = mu_zero(&Coupling::unit(0.1), &g, &cut());
        let k = initial_kernels(0.0, 0.2, &Coupling::unit(0.1), &consts, &kg).unwrap();
        assert!(k.w20.is_zero() && k.w02.is_zero() && k.w11.is_zero());
        assert!(kg.r.iter().enumerate().all(|(i, &r)| (k.t.values[i] - (r - 0.2)).abs() < 1e-15));
        assert!(initial_kernels(consts.mu_0, 0.0, &Coupling::unit(0.1), &consts, &kg).is_err());
    }

    #[test]
    fn dz_t_matches_finite_differences() {
        let g = build_mode_grid(0.1, 1.0, 4, GridScheme::Midpoint).unwrap();
        let c = Coupling::unit(0.1);
        let h = 1e-4;
        for r in [0.0, 0.3, 0.9] {
            let s = InitialSource::new(0.3, 0.1, &c, &g);
            let fd = (InitialSource::new(0.3, 0.1 + h, &c, &g).t(r).0
                - InitialSource::new(0.3, 0.1 - h, &c, &g).t(r).0)
                / (2.0 * h);
            assert!((fd - s.dz_t(r)).abs() < 1e-8);
            let fr = (s.t(r + h).0 - s.t(r - h).0) / (2.0 * h);
            assert!((fr - s.t(r).1).abs() < 1e-8);
        }
    }

    #[test]
    fn first_step_matches_closed_form() {
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let sp = FockSpace::new(g, 4, true).unwrap();
        let c = Coupling::unit(0.1);
        let chk = first_feshbach_check(&sp, &c, 0.1, 0.0).unwrap();
        assert!(chk.residual <= 1e-11, "{}", chk.residual);
        let free = first_feshbach_check(&sp, &c, 0.0, 0.3).unwrap();
        assert!(free.residual == 0.0);
        assert!(matches!(first_feshbach_check(&sp, &c, 0.1, 2.0), Err(InitialError::SpectralParameter { .. })));
        // At z = 2 the upper block H_f + 2 − z is singular on the vacuum.
        let (h, t, chi) = first_pair(&sp, &c, 0.1, 2.0).unwrap();
        assert!(make_feshbach_pair(h, t, chi).is_err());
    }

    #[test]
    fn kernel_operator_matches_pull_through_form() {
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let sp = FockSpace::new(g.clone(), 4, false).unwrap();
        let c = Coupling::unit(0.1);
        let (lambda, z) = (0.2, -0.1);
        let src = InitialSource::new(lambda, z, &c, &g);
        let h = t_initial_op(&src, &sp).linear_combination(1.0, &w_initial_op(&src, &sp).unwrap(), 1.0).to_dense();
        let closed = reduced_first_step(&sp, &c, lambda, z).unwrap();
        // Exact on states whose two-step excursions stay inside the particle cap.
        for i in 0..sp.dim() {
            for j in 0..sp.dim() {
                if sp.number(i) < 4 && sp.number(j) < 4 {
                    assert!((h[(i, j)] - closed[(i, j)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn second_pair_bounds_hold_at_half_mu_zero() {
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let sp = FockSpace::new(g.clone(), 4, false).unwrap();
        let c = Coupling::unit(0.1);
        let consts = mu_zero(&c, &g, &cut());
        let free = second_pair_bounds(0.0, 0.5, &c, &consts, &cut(), &sp).unwrap();
        assert!(free.left == 0.0 && free.t_inv_norm <= T_INV_BOUND);
        let b = second_pair_bounds(consts.mu_0 / 2.0, -0.5, &c, &consts, &cut(), &sp).unwrap();
        assert!(b.holds && b.w_norm <= b.w_bound, "{b:?}");
    }
}
