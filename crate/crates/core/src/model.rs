//! The spin-boson Hamiltonian on a truncated Fock space and its brute-force
//! ground state, which every other module is checked against.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fock::{field_op, free_field_op, spin_tensor, FockError, FockSpace, ModeGrid, SparseOperator};

/// Spin energies: τ = diag(2, 0) in the (up, down) basis.
pub const TAU: [[f64; 2]; 2] = [[2.0, 0.0], [0.0, 0.0]];
pub const SIGMA_X: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];

/// Radial coupling profiles f(|k|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    /// f ≡ 1 up to the UV cutoff.
    Unit,
    /// f(k) = exp(−k/scale).
    Exponential { scale: f64 },
    /// f(k) = k^power; power > −1/2 keeps f/√ω square integrable near 0.
    Power { power: f64 },
}

impl Profile {
    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            Profile::Unit => 1.0,
            Profile::Exponential { scale } => (-k / scale).exp(),
            Profile::Power { power } => k.powf(power),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub profile: Profile,
    /// Sharp infrared mask χ_{|k|≥σ}.
    pub sigma: f64,
    pub uv_cutoff: f64,
}

impl Coupling {
    pub fn unit(sigma: f64) -> Self {
        Self { profile: Profile::Unit, sigma, uv_cutoff: 1.0 }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }

    /// f_σ(k) including both cutoffs.
    pub fn eval(&self, k: f64) -> f64 {
        if k >= self.sigma && k <= self.uv_cutoff {
            self.profile.eval(k)
        } else {
            0.0
        }
    }

    pub fn samples(&self, grid: &ModeGrid) -> Vec<f64> {
        grid.nodes.iter().map(|&k| self.eval(k)).collect()
    }

    pub fn sup_norm(&self, grid: &ModeGrid) -> f64 {
        self.samples(grid).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("matrix is not hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// H_0 = τ⊗1 + 1⊗H_f.
pub fn free_hamiltonian(space: &FockSpace) -> Result<SparseOperator, ModelError> {
    if !space.with_spin {
        return Err(FockError::SpinlessSpace.into());
    }
    let mut boson = space.clone();
    boson.with_spin = false;
    let hf = free_field_op(&boson);
    let tau = spin_tensor(TAU, &SparseOperator::identity(boson.dim()));
    Ok(tau.linear_combination(1.0, &spin_tensor([[1.0, 0.0], [0.0, 1.0]], &hf), 1.0))
}

/// T_σ = σ_x ⊗ φ(f_σ).
pub fn interaction(space: &FockSpace, coupling: &Coupling) -> Result<SparseOperator, ModelError> {
    if !space.with_spin {
        return Err(FockError::SpinlessSpace.into());
    }
    let mut boson = space.clone();
    boson.with_spin = false;
    let phi = field_op(&boson, &coupling.samples(&space.grid))?;
    Ok(spin_tensor(SIGMA_X, &phi))
}

/// H_{λ,σ} = H_0 + λ T_σ for real λ.
pub fn assemble_hamiltonian(space: &FockSpace, lambda: f64, coupling: &Coupling) -> Result<SparseOperator, ModelError> {
    let h0 = free_hamiltonian(space)?;
    let t = interaction(space, coupling)?;
    Ok(h0.linear_combination(1.0, &t, lambda))
}

/// Complex λ = re + i·im: returns (Re H, Im H), both real symmetric.
pub fn assemble_hamiltonian_complex(
    space: &FockSpace,
    lambda: (f64, f64),
    coupling: &Coupling,
) -> Result<(SparseOperator, SparseOperator), ModelError> {
    let h0 = free_hamiltonian(space)?;
    let t = interaction(space, coupling)?;
    Ok((h0.linear_combination(1.0, &t, lambda.0), t.scaled(lambda.1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateResult {
    pub energy: f64,
    pub vector: Vec<f64>,
    /// Distance to the second eigenvalue.
    pub gap: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when the gap is below 1e-8; truncation can fake a degeneracy.
    pub degenerate: bool,
}

/// Matrices up to this dimension go to the dense solver.
pub const DENSE_LIMIT: usize = 2500;
const DEGENERACY_FLAG: f64 = 1e-8;

pub fn ground_state(h: &SparseOperator, tol: f64) -> Result<GroundStateResult, ModelError> {
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * (1.0 + h.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        return Err(ModelError::NotHermitian(defect));
    }
    if let Some(r) = diagonal_ground_state(h) {
        return Ok(r);
    }
    if h.dim <= DENSE_LIMIT {
        Ok(dense_ground_state(&h.to_dense(), h))
    } else {
        lanczos(h, tol, 0x5eed)
    }
}

fn diagonal_ground_state(h: &SparseOperator) -> Option<GroundStateResult> {
    let mut d = vec![0.0; h.dim];
    for (i, di) in d.iter_mut().enumerate() {
        for (j, v) in h.row(i) {
            if j != i {
                return None;
            }
            *di = v;
        }
    }
    // ties resolve to the highest index, so the bare ground state is Ω_↓ rather than a spin-up state
    let mut best = 0;
    for i in 1..d.len() {
        if d[i] <= d[best] {
            best = i;
        }
    }
    let second = d.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let gap = if second.is_finite() { second - d[best] } else { 0.0 };
    let mut vector = vec![0.0; h.dim];
    vector[best] = 1.0;
    Some(GroundStateResult {
        energy: d[best],
        vector,
        gap,
        iterations: 0,
        residual: 0.0,
        degenerate: gap < DEGENERACY_FLAG,
    })
}

fn dense_ground_state(m: &DMatrix<f64>, h: &SparseOperator) -> GroundStateResult {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e0 = eig.eigenvalues[order[0]];
    let gap = order.get(1).map(|&i| eig.eigenvalues[i] - e0).unwrap_or(0.0);
    let mut v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    fix_sign(&mut v);
    let (energy, residual) = rayleigh(h, &v);
    GroundStateResult { energy, vector: v, gap, iterations: 1, residual, degenerate: gap < DEGENERACY_FLAG }
}

/// Sign convention: the largest-magnitude component is positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[idx].abs() + 1e-14 {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn rayleigh(h: &SparseOperator, v: &[f64]) -> (f64, f64) {
    let hv = h.apply(v);
    let nn: f64 = v.iter().map(|x| x * x).sum();
    let e = v.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>() / nn;
    let r = hv.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt() / nn.sqrt();
    (e, r)
}

/// Lanczos with full reorthogonalization and thick restarts on the Ritz vector.
fn lanczos(h: &SparseOperator, tol: f64, seed: u64) -> Result<GroundStateResult, ModelError> {
    let n = h.dim;
    let krylov = 120.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut best = (f64::INFINITY, Vec::new(), 0.0, f64::INFINITY);
    let max_restarts = 50;
    for restart in 0..max_restarts {
        let norm = start.iter().map(|x| x * x).sum::<f64>().sqrt();
        start.iter_mut().for_each(|x| *x /= norm);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..krylov {
            let mut w = h.apply(&basis[j]);
            let a: f64 = w.iter().zip(&basis[j]).map(|(x, y)| x * y).sum();
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c: f64 = w.iter().zip(q).map(|(x, y)| x * y).sum();
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if j + 1 == krylov || b < 1e-13 {
                break;
            }
            beta.push(b);
            basis.push(w.into_iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let y = eig.eigenvectors.column(order[0]);
        let mut v = vec![0.0; n];
        for (c, q) in y.iter().zip(&basis) {
            v.iter_mut().zip(q).for_each(|(x, qv)| *x += c * qv);
        }
        fix_sign(&mut v);
        let (e, r) = rayleigh(h, &v);
        let gap = order.get(1).map(|&i| eig.eigenvalues[i] - e).unwrap_or(0.0);
        if r < best.3 {
            best = (e, v.clone(), gap, r);
        }
        if r <= tol {
            return Ok(GroundStateResult {
                energy: e,
                vector: v,
                gap,
                iterations: restart + 1,
                residual: r,
                degenerate: gap < DEGENERACY_FLAG,
            });
        }
        start = v;
    }
    Err(ModelError::NoConvergence { iterations: max_restarts, residual: best.3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub lambda: f64,
    pub energy: f64,
    pub gap: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCurve {
    pub rows: Vec<EnergyRow>,
    /// E(λ) non-increasing in |λ| along the sampled list (sorted by |λ|).
    pub monotone_in_abs_lambda: bool,
    pub min_gap: f64,
}

pub fn energy_curve(
    space: &FockSpace,
    coupling: &Coupling,
    lambdas: &[f64],
    tol: f64,
) -> Result<EnergyCurve, ModelError> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let h = assemble_hamiltonian(space, lambda, coupling)?;
        let gs = ground_state(&h, tol)?;
        rows.push(EnergyRow { lambda, energy: gs.energy, gap: gs.gap, residual: gs.residual });
    }
    let mut by_abs: Vec<&EnergyRow> = rows.iter().collect();
    by_abs.sort_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()));
    let monotone = by_abs.windows(2).all(|w| w[1].energy <= w[0].energy + 10.0 * tol);
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    Ok(EnergyCurve { rows, monotone_in_abs_lambda: monotone, min_gap })
}

/// Embeds a boson ⊗ spin vector from a smaller truncation into a larger one
/// over the same grid (states missing from `to` must carry zero amplitude).
pub fn embed_vector(from: &FockSpace, to: &FockSpace, v: &[f64]) -> Option<Vec<f64>> {
    let spins = if from.with_spin { 2 } else { 1 };
    let mut out = vec![0.0; to.dim()];
    for s in 0..spins {
        for (b, occ) in from.basis.iter().enumerate() {
            let a = v[s * from.boson_dim() + b];
            match to.find(occ) {
                Some(u) => out[s * to.boson_dim() + u] = a,
                None if a == 0.0 => {}
                None => return None,
            }
        }
    }
    Some(out)
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, parity_op, GridScheme};

    fn space(m: usize, n: usize) -> FockSpace {
        FockSpace::new(build_mode_grid(0.0, 1.0, m, GridScheme::Midpoint).unwrap(), n, true).unwrap()
    }

    #[test]
    fn free_ground_state_is_spin_down_vacuum() {
        let s = space(4, 3);
        let h = assemble_hamiltonian(&s, 0.0, &Coupling::unit(0.0)).unwrap();
        let gs = ground_state(&h, 1e-12).unwrap();
        assert_eq!(gs.energy, 0.0);
        assert_eq!(gs.vector, s.ground_vector());
        assert!((gs.gap - s.grid.nodes[0]).abs() < 1e-15);
    }

    #[test]
    fn parity_conjugation_flips_lambda() {
        let s = space(4, 3);
        let c = Coupling::unit(0.0);
        let p = parity_op(&s);
        let a = p.matmul(&assemble_hamiltonian(&s, 0.3, &c).unwrap()).matmul(&p);
        let b = assemble_hamiltonian(&s, -0.3, &c).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-13);
    }

    #[test]
    fn spinless_space_is_rejected() {
        let s = FockSpace::new(build_mode_grid(0.0, 1.0, 2, GridScheme::Midpoint).unwrap(), 2, false).unwrap();
        assert!(assemble_hamiltonian(&s, 0.1, &Coupling::unit(0.0)).is_err());
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let s = space(6, 3);
        let h = assemble_hamiltonian(&s, 0.4, &Coupling::unit(0.0)).unwrap();
        let dense = ground_state(&h, 1e-12).unwrap();
        let it = lanczos(&h, 1e-10, 7).unwrap();
        assert!((dense.energy - it.energy).abs() < 1e-12);
        assert!((dense.gap - it.gap).abs() < 1e-8);
        let overlap: f64 = dense.vector.iter().zip(&it.vector).map(|(a, b)| a * b).sum();
        assert!((overlap.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn complex_assembly_splits_interaction() {
        let s = space(3, 2);
        let c = Coupling::unit(0.0);
        let (re, im) = assemble_hamiltonian_complex(&s, (0.2, 0.5), &c).unwrap();
        assert!(re.max_abs_diff(&assemble_hamiltonian(&s, 0.2, &c).unwrap()) == 0.0);
        assert!(im.max_abs_diff(&interaction(&s, &c).unwrap().scaled(0.5)) == 0.0);
    }
}
