//! The second Feshbach step: Neumann-series assembly of the seed family
//! `w^(0)(λ, σ, z)` and the maps back to the full spin-boson space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{first_pair, reduced_first_step, CouplingConstants, InitialError, InitialSource};
use crate::feshbach::{make_feshbach_pair, q_operators};
use crate::fock::FockSpace;
use crate::kernel::{BallParams, Chain, Inner, Kernel, KernelGrid, KernelSequence, ParamKernelSequence};
use crate::model::{assemble_hamiltonian, ground_state, Coupling};
use crate::rg::CutoffPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedParams {
    /// Chebyshev nodes in the spectral parameter.
    pub n_z: usize,
    /// The family lives on `[−z_half_width, z_half_width]`.
    pub z_half_width: f64,
    /// Highest output degree; degree four starts at order `λ⁴`.
    pub max_degree: usize,
    pub l_max: usize,
    /// Required ratio of the certified tail to the leading `L = 1` bound.
    pub tail_tolerance: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self { n_z: 9, z_half_width: 0.45, max_degree: 2, l_max: 8, tail_tolerance: 1e-3 }
    }
}

/// `Σ_{l>L} (l+1) C_F̄^{l+1} C_W^l`, infinite if the series diverges.
pub fn seed_tail(consts: &CouplingConstants, lambda: f64, depth: usize) -> f64 {
    let (cf, cw) = (consts.c_fbar, consts.c_w(lambda));
    if cw == 0.0 {
        return 0.0;
    }
    if cf * cw >= 1.0 {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for l in depth + 1..depth + 10_000 {
        let term = (l as f64 + 1.0) * cf.powi(l as i32 + 1) * cw.powi(l as i32);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn seed_depth(consts: &CouplingConstants, lambda: f64, params: &SeedParams) -> Result<(usize, f64), InitialError> {
    let cw = consts.c_w(lambda);
    let tol = params.tail_tolerance * 2.0 * consts.c_fbar * consts.c_fbar * cw;
    for l in 2..=params.l_max.max(2) {
        let tail = seed_tail(consts, lambda, l);
        if tail <= tol {
            return Ok((l, tail));
        }
    }
    Err(InitialError::Tail { tail: seed_tail(consts, lambda, params.l_max), tol, depth: params.l_max })
}

/// Bounds on the seed's ball coordinates from the constants alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesBounds {
    /// Bound on `‖w^(0)_{≥1}‖_ξ`.
    pub gamma: f64,
    /// Bound on `|∂_r w^(0)_{0,0} − 1|` and `|w^(0)_{0,0}(z,0) + z|`.
    pub alpha_beta: f64,
}

fn geometric_series(first: usize, term: impl Fn(usize) -> f64, ratio: f64) -> f64 {
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for l in first..first + 10_000 {
        let t = term(l);
        sum += t;
        if t < 1e-18 * sum || t == 0.0 {
            break;
        }
    }
    sum
}

pub fn series_bounds(consts: &CouplingConstants, lambda: f64, xi: f64) -> SeriesBounds {
    let (cf, cw) = (consts.c_fbar, consts.c_w(lambda));
    let q = 20.0 * cw * cf / (xi * xi);
    let gamma = geometric_series(1, |l| (l as f64 + 1.0) * cf * q.powi(l as i32), q);
    let p = 3.0 * cw * cf;
    let alpha_beta = lambda * lambda * consts.f_sqrt_omega.powi(2)
        + geometric_series(2, |l| (l as f64 + 1.0) * cf * p.powi(l as i32), p);
    SeriesBounds { gamma, alpha_beta }
}

/// `w^(0)(λ, σ, z)` at one spectral parameter, from the chain
/// `χ_1 W^(I) (χ̄_1²/t^(I)) W^(I) … W^(I) χ_1` with alternating signs.
pub fn seed_at(
    src: &InitialSource,
    grid: &Arc<KernelGrid>,
    cut: &CutoffPair,
    depth: usize,
    max_degree: usize,
    xi: f64,
    space: &FockSpace,
) -> Result<KernelSequence, InitialError> {
    let outer = |x: f64| cut.chi1(x);
    let middle = |x: f64| {
        let (cb, dcb) = cut.chibar1(x);
        if cb == 0.0 {
            return (0.0, 0.0);
        }
        let (t, dt) = src.t(x);
        (cb * cb / t, (2.0 * cb * dcb * t - cb * cb * dt) / (t * t))
    };
    let chain = Chain {
        source: src,
        space,
        scale: 1.0,
        first: &outer,
        last: &outer,
        inner: Inner::Uniform(&middle),
        lengths: (1, depth),
        alternating: true,
        factor_degree: (2, 2),
    };
    let mut out = KernelSequence::new(Kernel::zeros(0, 0, grid), xi, max_degree);
    for deg in (0..=max_degree).step_by(2) {
        for m in 0..=deg {
            let mut k = chain.kernel(grid, m, deg - m, 1.0);
            if deg == 0 {
                k.axpy(1.0, &Kernel::from_fn(0, 0, grid, |r, _| src.t(r)));
            }
            out.insert(k)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub lambda: f64,
    pub sigma: f64,
    pub depth: usize,
    pub tail_bound: f64,
    pub c_w: f64,
    pub c_fbar: f64,
    pub ball: BallParams,
    pub series: SeriesBounds,
    /// `sup_z` of the adjoint defect; zero for a symmetric seed.
    pub adjoint_defect: f64,
}

impl SeedReport {
    pub fn in_ball(&self, radius: f64) -> bool {
        self.ball.within(radius, radius, radius)
    }
}

pub fn assemble_w0(
    lambda: f64,
    coupling: &Coupling,
    consts: &CouplingConstants,
    cut: &CutoffPair,
    grid: &Arc<KernelGrid>,
    xi: f64,
    params: &SeedParams,
) -> Result<(ParamKernelSequence, SeedReport), InitialError> {
    if lambda.abs() >= consts.mu_0 {
        return Err(InitialError::Coupling { lambda: lambda.abs(), mu_0: consts.mu_0 });
    }
    let (depth, tail_bound) = if lambda == 0.0 { (1, 0.0) } else { seed_depth(consts, lambda, params)? };
    let space = FockSpace::new(grid.modes.clone(), depth, false)?;
    let hw = params.z_half_width;
    let family = ParamKernelSequence::build(-hw, hw, params.n_z, |z| {
        let src = InitialSource::new(lambda, z, coupling, &grid.modes);
        seed_at(&src, grid, cut, depth, params.max_degree, xi, &space)
    })?;
    let report = SeedReport {
        lambda,
        sigma: coupling.sigma,
        depth,
        tail_bound,
        c_w: consts.c_w(lambda),
        c_fbar: consts.c_fbar,
        ball: family.ball(),
        series: series_bounds(consts, lambda, xi),
        adjoint_defect: family.adjoint_defect(),
    };
    Ok((family, report))
}

/// `λ_0` two ways: bisection on the measured ball coordinates of the seed,
/// and the largest `λ` for which the constant-only series bounds fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub radius: f64,
    pub lambda_measured: f64,
    pub lambda_series: f64,
    /// `(λ, max(α, β, γ))` for every seed assembled during the search.
    pub evaluations: Vec<(f64, f64)>,
}

pub fn find_lambda_0(
    coupling: &Coupling,
    consts: &CouplingConstants,
    cut: &CutoffPair,
    grid: &Arc<KernelGrid>,
    xi: f64,
    params: &SeedParams,
    radius: f64,
    rel_tol: f64,
) -> Result<LambdaSearch, InitialError> {
    let mut evaluations = Vec::new();
    let mut size = |lambda: f64| -> Result<f64, InitialError> {
        let (_, rep) = assemble_w0(lambda, coupling, consts, cut, grid, xi, params)?;
        let b = rep.ball;
        let s = b.alpha.max(b.beta).max(b.gamma);
        evaluations.push((lambda, s));
        Ok(s)
    };
    // The coordinates grow like λ², which gives a good first bracket.
    let probe = (consts.mu_0 * 1e-3).min(1e-4);
    let guess = probe * (radius / size(probe)?).sqrt();
    let (mut lo, mut hi) = (0.8 * guess, 1.25 * guess);
    while size(lo)? > radius {
        hi = lo;
        lo *= 0.8;
    }
    while hi < consts.mu_0 && size(hi)? <= radius {
        lo = hi;
        hi = (hi * 1.25).min(consts.mu_0 * (1.0 - 1e-12));
    }
    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if size(mid)? <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let fits = |l: f64| {
        let s = series_bounds(consts, l, xi);
        s.gamma <= radius && s.alpha_beta <= radius
    };
    let (mut a, mut b) = (0.0, consts.mu_0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if fits(m) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(LambdaSearch { radius, lambda_measured: lo, lambda_series: a, evaluations })
}

/// `ψ = Q_{χ^(I)} Q_{χ_1} ψ_red` on the full spin-boson truncation, with the
/// residual `‖(H − e)ψ‖/‖ψ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenvector {
    pub vector: Vec<f64>,
    pub norm: f64,
    pub residual: f64,
}

pub fn reconstruct_eigenvector(
    lambda: f64,
    energy: f64,
    coupling: &Coupling,
    cut: &CutoffPair,
    spin_space: &FockSpace,
    reduced: &FockSpace,
    psi_red: &[f64],
) -> Result<Eigenvector, InitialError> {
    let mut boson = spin_space.clone();
    boson.with_spin = false;
    let nb = boson.dim();
    let mut v = DVector::zeros(nb);
    for (s, occ) in reduced.basis.iter().enumerate() {
        match boson.find(occ) {
            Some(b) => v[b] = psi_red[s],
            None if psi_red[s] == 0.0 => {}
            None => return Err(InitialError::Reconstruction("reduced state missing from the truncation".into())),
        }
    }
    let src = InitialSource::new(lambda, energy, coupling, &boson.grid);
    let h1 = reduced_first_step(&boson, coupling, lambda, energy)?;
    let t1 = DMatrix::from_diagonal(&DVector::from_iterator(nb, (0..nb).map(|s| src.t(boson.energy(s)).0)));
    let chi1 = DMatrix::from_diagonal(&DVector::from_iterator(nb, (0..nb).map(|s| cut.chi1(boson.energy(s)).0)));
    let pair = make_feshbach_pair(h1, t1, chi1).map_err(|e| InitialError::Pair(format!("{:?}", e.failures)))?;
    let v1 = q_operators(&pair).0 * v;

    let (h, t, chi) = first_pair(spin_space, coupling, lambda, energy)?;
    let pair = make_feshbach_pair(h, t, chi).map_err(|e| InitialError::Pair(format!("{:?}", e.failures)))?;
    let mut x = DVector::zeros(spin_space.dim());
    for b in 0..nb {
        x[spin_space.spin_index(1, b)] = v1[b];
    }
    let psi = q_operators(&pair).0 * x;
    let h = assemble_hamiltonian(spin_space, lambda, coupling)?;
    let hp = h.apply(psi.as_slice());
    let norm = psi.norm();
    let residual = hp.iter().zip(psi.iter()).map(|(a, b)| (a - energy * b).powi(2)).sum::<f64>().sqrt() / norm;
    Ok(Eigenvector { vector: psi.as_slice().to_vec(), norm, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    /// Direct ground-state energy on the spin-boson truncation.
    pub energy: f64,
    /// `max_{z,(m,n)} ‖w^(0)(σ)_{m,n} − w^(0)(σ_prev)_{m,n}‖_2`; absent for the first row.
    pub w_diff: Option<f64>,
    pub e_diff: Option<f64>,
}

/// Seed and direct energy along a decreasing list of infrared cutoffs.
#[allow(clippy::too_many_arguments)]
pub fn sigma_continuity(
    lambda: f64,
    sigmas: &[f64],
    coupling: &Coupling,
    consts: &CouplingConstants,
    cut: &CutoffPair,
    grid: &Arc<KernelGrid>,
    xi: f64,
    params: &SeedParams,
    spin_space: &FockSpace,
) -> Result<Vec<SigmaRow>, InitialError> {
    let mut rows: Vec<SigmaRow> = Vec::new();
    let mut prev: Option<ParamKernelSequence> = None;
    for &sigma in sigmas {
        let c = coupling.with_sigma(sigma);
        let consts_s = CouplingConstants { ..super::mu_zero(&c, &grid.modes, cut) };
        // The depth is fixed by the largest coupling along the sweep.
        let consts_used = if consts_s.c_w(lambda) > consts.c_w(lambda) { consts_s } else { *consts };
        let (family, _) = assemble_w0(lambda, &c, &consts_used, cut, grid, xi, params)?;
        let energy = ground_state(&assemble_hamiltonian(spin_space, lambda, &c)?, 1e-13)?.energy;
        let (w_diff, e_diff) = match &prev {
            None => (None, None),
            Some(p) => {
                let d = family
                    .seqs
                    .iter()
                    .zip(&p.seqs)
                    .flat_map(|(a, b)| {
                        a.entries.iter().map(move |(key, ka)| {
                            let mut diff = ka.clone();
                            if let Some(kb) = b.get(key.0, key.1) {
                                diff.axpy(-1.0, kb);
                            }
                            diff.l2_norm()
                        })
                    })
                    .fold(0.0, f64::max);
                (Some(d), Some((energy - rows.last().unwrap().energy).abs()))
            }
        };
        rows.push(SigmaRow { sigma, energy, w_diff, e_diff });
        prev = Some(family);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::initial::mu_zero;
    use crate::rg::CutoffProfile;

    fn setup(n_modes: usize, n_r: usize) -> (Coupling, CouplingConstants, CutoffPair, Arc<KernelGrid>) {
        let cut = CutoffPair::new(0.003, CutoffProfile::Smoothstep3).unwrap();
        let g = build_mode_grid(0.1, 1.0, n_modes, GridScheme::Midpoint).unwrap();
        let c = Coupling::unit(0.1);
        let consts = mu_zero(&c, &g, &cut);
        (c, consts, cut, KernelGrid::new(g, n_r).unwrap())
    }

    #[test]
    fn zero_coupling_seed_is_free() {
        let (c, consts, cut, kg) = setup(3, 9);
        let p = SeedParams { n_z: 3, ..SeedParams::default() };
        let (fam, rep) = assemble_w0(0.0, &c, &consts, &cut, &kg, 0.09, &p).unwrap();
        for (z, s) in fam.z.iter().zip(&fam.seqs) {
            assert!(s.max_abs_diff(&KernelSequence::free(&kg, 0.09, 2, *z)) < 1e-15);
        }
        assert_eq!(rep.ball.gamma, 0.0);
    }

    #[test]
    fn seed_is_even_and_symmetric() {
        let (c, consts, cut, kg) = setup(3, 9);
        let p = SeedParams { n_z: 3, max_degree: 4, ..SeedParams::default() };
        let (fam, rep) = assemble_w0(2e-3, &c, &consts, &cut, &kg, 0.09, &p).unwrap();
        assert!(fam.is_even());
        assert!(rep.adjoint_defect <= 1e-15, "{rep:?}");
        assert!(rep.depth >= 2);
    }
}
