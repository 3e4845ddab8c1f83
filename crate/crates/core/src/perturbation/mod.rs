//! Rayleigh-Schrödinger coefficients of `H_{λ,σ} = H_0 + λT_σ` about `Ω_↓`.
//!
//! Three independent routes to the energy coefficients: the nested sum over
//! compositions `ν_1 + … + ν_{n+1} = n` with dense operators, the same trace
//! evaluated matrix-free one composition at a time, and the textbook vector
//! recursion. The infrared-cancellation study lives in [`infrared`].

pub mod infrared;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::fock::{FockSpace, SparseOperator};
use crate::model::{assemble_hamiltonian, free_hamiltonian, interaction, Coupling, ModelError};

pub use infrared::{ir_cancellation, IrCancellationTable, IrParams, IrValues};

/// Dense coefficient operators above this dimension are refused.
pub const DENSE_LIMIT: usize = 1500;

#[derive(Debug, thiserror::Error)]
pub enum PerturbationError {
    #[error("sigma = {0} leaves 0 embedded in the continuum; use the renormalization path for sigma = 0")]
    NoInfraredCutoff(f64),
    #[error("dense coefficient operators need dim <= {limit}, space has {dim}")]
    TooLarge { dim: usize, limit: usize },
    #[error("order {0} out of range")]
    Order(usize),
    #[error("{0}")]
    Fit(String),
    #[error("quadrature did not reach {tol:e} at sigma = {sigma:e} (last change {change:e})")]
    Quadrature { sigma: f64, tol: f64, change: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `(−1)^n`.
fn parity_sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn check_sigma(sigma: f64) -> Result<(), PerturbationError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(PerturbationError::NoInfraredCutoff(sigma))
    }
}

/// Diagonal of `S_σ^(ν)` in the occupation basis.
fn resolvent_diagonal(space: &FockSpace, nu: usize, sigma: f64) -> Vec<f64> {
    let ground = space.spin_index(1, 0);
    let low: Vec<usize> = (0..space.n_modes()).filter(|&i| space.grid.nodes[i] < sigma).collect();
    let nb = space.boson_dim();
    (0..space.dim())
        .map(|s| {
            if nu == 0 {
                return if s == ground { -1.0 } else { 0.0 };
            }
            let (spin, b) = (s / nb, s % nb);
            if s == ground || low.iter().any(|&i| space.occupation(b, i) > 0) {
                return 0.0;
            }
            let e = if spin == 0 { 2.0 } else { 0.0 } + space.energy(b);
            e.powi(-(nu as i32))
        })
        .collect()
}

/// `S_σ^(ν)`: `−P_{Ω_↓}` for `ν = 0`, `H_0^{−ν}` on the complement of `Ω_↓`
/// inside `Q_σ` (modes below σ empty) otherwise.
pub fn reduced_resolvent(space: &FockSpace, nu: usize, sigma: f64) -> SparseOperator {
    SparseOperator::diagonal(&resolvent_diagonal(space, nu, sigma))
}

struct Setup {
    t: SparseOperator,
    s: Vec<Vec<f64>>,
    ground: usize,
}

fn setup(space: &FockSpace, coupling: &Coupling, sigma: f64, n_max: usize) -> Result<Setup, PerturbationError> {
    check_sigma(sigma)?;
    let t = interaction(space, &coupling.with_sigma(sigma))?;
    let s = (0..=n_max.max(1)).map(|nu| resolvent_diagonal(space, nu, sigma)).collect();
    Ok(Setup { t, s, ground: space.spin_index(1, 0) })
}

impl Setup {
    /// `Π_i (S^(ν_i) T)` applied to `v`, rightmost factor first.
    fn apply_word(&self, nus: &[usize], v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        for &nu in nus.iter().rev() {
            x = self.t.apply(&x);
            x.iter_mut().zip(&self.s[nu]).for_each(|(x, s)| *x *= s);
        }
        x
    }

    fn ground_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.t.dim];
        v[self.ground] = 1.0;
        v
    }
}

/// All `(ν_1, …, ν_parts)` with non-negative entries summing to `total`.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(left - v, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Coefficients `Ê_σ^(n)` and `P̂_σ^(n)` for `n ≤ n_max` as dense operators.
#[derive(Debug, Clone)]
pub struct RsExpansion {
    pub sigma: f64,
    pub n_max: usize,
    pub energy: Vec<f64>,
    pub projection: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsSummary {
    pub sigma: f64,
    pub dim: usize,
    pub energy: Vec<f64>,
    /// `tr P̂^(n)`: 1 for `n = 0`, 0 otherwise.
    pub projection_trace: Vec<f64>,
    pub projection_norm: Vec<f64>,
}

fn sparse_times_dense(a: &SparseOperator, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.dim, m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j);
        let y = a.apply(col.as_slice());
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// `Σ_i (A M)_ii` for sparse `A`.
fn trace_of_product(a: &SparseOperator, m: &DMatrix<f64>) -> f64 {
    (0..a.dim).map(|i| a.row(i).map(|(k, v)| v * m[(k, i)]).sum::<f64>()).sum()
}

/// Nested-sum coefficients. With `G(k, m) = Σ_{ν_1+…+ν_k=m} S^(ν_1)T…TS^(ν_k)`
/// one has `G(k, m) = Σ_ν S^(ν) T G(k−1, m−ν)` and `P̂^(n) = (−1)^{n+1} G(n+1, n)`;
/// the sign is the `(−λT)^n` of the Neumann series for `(H_0 + λT − z)^{-1}`.
pub fn rs_expansion(
    space: &FockSpace,
    coupling: &Coupling,
    sigma: f64,
    n_max: usize,
) -> Result<RsExpansion, PerturbationError> {
    if space.dim() > DENSE_LIMIT {
        return Err(PerturbationError::TooLarge { dim: space.dim(), limit: DENSE_LIMIT });
    }
    let st = setup(space, coupling, sigma, n_max)?;
    let dim = space.dim();
    let diag = |d: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
    let mut level: Vec<DMatrix<f64>> = (0..=n_max).map(|m| diag(&st.s[m])).collect();
    let mut projection = vec![-level[0].clone()];
    let mut energy = vec![0.0];
    for k in 2..=n_max + 1 {
        let tg: Vec<DMatrix<f64>> = level.iter().map(|g| sparse_times_dense(&st.t, g)).collect();
        let mut next = Vec::with_capacity(n_max + 1);
        for m in 0..=n_max {
            let mut acc = DMatrix::zeros(dim, dim);
            for nu in 0..=m {
                let s = &st.s[nu];
                let src = &tg[m - nu];
                for j in 0..dim {
                    for (i, si) in s.iter().enumerate() {
                        if *si != 0.0 {
                            acc[(i, j)] += si * src[(i, j)];
                        }
                    }
                }
            }
            next.push(acc);
        }
        level = next;
        let n = k - 1;
        // Ê^(n) = tr(T P̂^(n−1))/n uses the previous projection coefficient.
        energy.push(trace_of_product(&st.t, &projection[n - 1]) / n as f64);
        projection.push(level[n].clone() * parity_sign(n + 1));
    }
    Ok(RsExpansion { sigma, n_max, energy, projection })
}

impl RsExpansion {
    /// `Σ_n P̂^(n) λ^n`.
    pub fn projection_at(&self, lambda: f64) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.projection[0].nrows(), self.projection[0].ncols());
        for (n, c) in self.projection.iter().enumerate() {
            p += c * lambda.powi(n as i32);
        }
        p
    }

    pub fn energy_at(&self, lambda: f64) -> f64 {
        self.energy.iter().enumerate().map(|(n, e)| e * lambda.powi(n as i32)).sum()
    }

    /// `‖P̂(λ)² − P̂(λ)‖` for the truncated series.
    pub fn projection_defect(&self, lambda: f64) -> f64 {
        let p = self.projection_at(lambda);
        crate::fock::op_norm_dense(&(&p * &p - &p))
    }

    pub fn summary(&self) -> RsSummary {
        RsSummary {
            sigma: self.sigma,
            dim: self.projection[0].nrows(),
            energy: self.energy.clone(),
            projection_trace: self.projection.iter().map(|p| p.trace()).collect(),
            projection_norm: self.projection.iter().map(crate::fock::op_norm_dense).collect(),
        }
    }
}

/// One composition's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsTerm {
    pub nu: Vec<usize>,
    pub value: f64,
}

/// `Ê^(n)` composition by composition, matrix-free. Every composition of
/// `n−1` into `n` parts has a zero entry `ν_p`; cycling the trace so that
/// `S^(0) = −|Ω_↓⟩⟨Ω_↓|` comes first leaves `⟨Ω_↓, T W Ω_↓⟩` with `W` a word
/// in `S^(ν)T`, so each term is `(−1)^{n−1}⟨Ω_↓, TWΩ_↓⟩/n`.
pub fn rs_energy_terms(
    space: &FockSpace,
    coupling: &Coupling,
    sigma: f64,
    n: usize,
) -> Result<Vec<RsTerm>, PerturbationError> {
    if n == 0 {
        return Ok(vec![RsTerm { nu: Vec::new(), value: 0.0 }]);
    }
    let st = setup(space, coupling, sigma, n)?;
    let omega = st.ground_vector();
    let mut out = Vec::new();
    for nu in compositions(n - 1, n) {
        let p = nu.iter().position(|&v| v == 0).expect("a composition of n-1 into n parts has a zero");
        let word: Vec<usize> = nu[p + 1..].iter().chain(&nu[..p]).copied().collect();
        let w = st.apply_word(&word, &omega);
        let tw = st.t.apply(&w);
        out.push(RsTerm { nu, value: parity_sign(n - 1) * tw[st.ground] / n as f64 });
    }
    Ok(out)
}

/// `Ê^(n)` for `n ≤ n_max` from [`rs_energy_terms`].
pub fn rs_energies_trace(
    space: &FockSpace,
    coupling: &Coupling,
    sigma: f64,
    n_max: usize,
) -> Result<Vec<f64>, PerturbationError> {
    (0..=n_max).map(|n| Ok(rs_energy_terms(space, coupling, sigma, n)?.iter().map(|t| t.value).sum())).collect()
}

/// Textbook recursion in intermediate normalization:
/// `E^(k) = ⟨Ω_↓, Tψ^(k−1)⟩`, `ψ^(k) = S^(1)(−Tψ^(k−1) + Σ_{j≥1} E^(j) ψ^(k−j))`.
pub fn rs_energies_recursive(
    space: &FockSpace,
    coupling: &Coupling,
    sigma: f64,
    n_max: usize,
) -> Result<Vec<f64>, PerturbationError> {
    let st = setup(space, coupling, sigma, 1)?;
    let mut psi = vec![st.ground_vector()];
    let mut e = vec![0.0];
    for k in 1..=n_max {
        let tp = st.t.apply(&psi[k - 1]);
        e.push(tp[st.ground]);
        let mut rhs: Vec<f64> = tp.iter().map(|x| -x).collect();
        for j in 1..k {
            rhs.iter_mut().zip(&psi[k - j]).for_each(|(r, p)| *r += e[j] * p);
        }
        rhs.iter_mut().zip(&st.s[1]).for_each(|(r, s)| *r *= s);
        psi.push(rhs);
    }
    Ok(e)
}

/// A composition's contribution to `P̂^(n) Ω_↓` as a vector.
#[derive(Debug, Clone)]
pub struct ProjectionTerm {
    pub nu: Vec<usize>,
    pub vector: Vec<f64>,
}

impl ProjectionTerm {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `P̂^(n) Ω_↓ = (−1)^n Σ_{ν_1+…+ν_n=n} S^(ν_1)T…S^(ν_n)T Ω_↓`, term by term
/// (the last slot must be `ν_{n+1} = 0`, and `−S^(0)Ω_↓ = Ω_↓`).
pub fn projection_terms(
    space: &FockSpace,
    coupling: &Coupling,
    sigma: f64,
    n: usize,
) -> Result<Vec<ProjectionTerm>, PerturbationError> {
    let st = setup(space, coupling, sigma, n)?;
    let omega = st.ground_vector();
    if n == 0 {
        return Ok(vec![ProjectionTerm { nu: Vec::new(), vector: omega }]);
    }
    Ok(compositions(n, n)
        .into_iter()
        .map(|nu| {
            let mut vector = st.apply_word(&nu, &omega);
            vector.iter_mut().for_each(|x| *x *= parity_sign(n));
            ProjectionTerm { nu, vector }
        })
        .collect())
}

/// Coefficients extracted from direct diagonalization: `E(λ)` at
/// `λ_j = j·h`, `j = 1 … points`, fitted by the even polynomial
/// `Σ_{m=1}^{points} c_{2m} λ^{2m}` (`E(0) = 0` exactly, `E` even in λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectCoefficients {
    pub step: f64,
    pub lambdas: Vec<f64>,
    pub energies: Vec<f64>,
    /// Index `n` holds the coefficient of `λ^n`; odd entries are zero by construction.
    pub coefficients: Vec<f64>,
}

/// Lowest eigenvalue of `H_{λ,σ}` as the Rayleigh quotient of the dense
/// eigenvector. `H_0` vanishes on `Ω_↓`, so the quotient carries no `O(ε‖H‖)`
/// roundoff and resolves energy differences far below `1e-16`.
pub fn dense_ground_energy(space: &FockSpace, coupling: &Coupling, lambda: f64) -> Result<f64, PerturbationError> {
    if space.dim() > 4 * DENSE_LIMIT {
        return Err(PerturbationError::TooLarge { dim: space.dim(), limit: 4 * DENSE_LIMIT });
    }
    let h = assemble_hamiltonian(space, lambda, coupling)?;
    let eig = SymmetricEigen::new(h.to_dense());
    let i0 = eig.eigenvalues.argmin().0;
    let v: Vec<f64> = eig.eigenvectors.column(i0).iter().copied().collect();
    let hv = h.apply(&v);
    let num: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
    Ok(num / v.iter().map(|a| a * a).sum::<f64>())
}

pub fn direct_coefficients(
    space: &FockSpace,
    coupling: &Coupling,
    step: f64,
    points: usize,
) -> Result<DirectCoefficients, PerturbationError> {
    if points == 0 || !(step > 0.0) {
        return Err(PerturbationError::Fit(format!("need points >= 1 and step > 0, got {points}, {step}")));
    }
    let lambdas: Vec<f64> = (1..=points).map(|j| step * j as f64).collect();
    let energies = lambdas.iter().map(|&l| dense_ground_energy(space, coupling, l)).collect::<Result<Vec<_>, _>>()?;
    // Scaled unknowns c_{2m} step^{2m} keep the Vandermonde system well conditioned.
    let a = DMatrix::from_fn(points, points, |j, m| ((j + 1) as f64).powi(2 * (m as i32 + 1)));
    let b = nalgebra::DVector::from_column_slice(&energies);
    let x = a.lu().solve(&b).ok_or_else(|| PerturbationError::Fit("singular Vandermonde system".into()))?;
    let mut coefficients = vec![0.0; 2 * points + 1];
    for m in 0..points {
        coefficients[2 * m + 2] = x[m] / step.powi(2 * m as i32 + 2);
    }
    Ok(DirectCoefficients { step, lambdas, energies, coefficients })
}

/// One σ of the continuity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub sigma: f64,
    /// `Ê_σ^(n)` from the recursion.
    pub coefficient: f64,
    /// The same from the composition trace.
    pub coefficient_trace: f64,
    pub energy_terms: Vec<RsTerm>,
    /// `‖P̂_σ^(n) Ω_↓‖` and the norm of every composition's contribution.
    pub projection_norm: f64,
    pub projection_terms: Vec<RsTerm>,
    /// `|Ê_σ^(n) − Ê_{σ_prev}^(n)|` against the previous row.
    pub cauchy: Option<f64>,
}

/// `Ê_σ^(n)` and `P̂_σ^(n)Ω_↓` over decreasing σ on one space; modes below σ
/// decouple through the coupling mask and `Q_σ`.
pub fn coefficient_continuity(
    space: &FockSpace,
    coupling: &Coupling,
    n: usize,
    sigmas: &[f64],
) -> Result<Vec<ContinuityRow>, PerturbationError> {
    if n > 4 {
        return Err(PerturbationError::Order(n));
    }
    let mut rows: Vec<ContinuityRow> = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let coefficient = rs_energies_recursive(space, coupling, sigma, n)?[n];
        let energy_terms = rs_energy_terms(space, coupling, sigma, n)?;
        let coefficient_trace = energy_terms.iter().map(|t| t.value).sum();
        let pterms = projection_terms(space, coupling, sigma, n)?;
        let mut total = vec![0.0; space.dim()];
        for t in &pterms {
            total.iter_mut().zip(&t.vector).for_each(|(a, b)| *a += b);
        }
        let projection_norm = total.iter().map(|x| x * x).sum::<f64>().sqrt();
        let projection_terms = pterms.iter().map(|t| RsTerm { nu: t.nu.clone(), value: t.norm() }).collect();
        let cauchy = rows.last().map(|r| (coefficient - r.coefficient).abs());
        rows.push(ContinuityRow {
            sigma,
            coefficient,
            coefficient_trace,
            energy_terms,
            projection_norm,
            projection_terms,
            cauchy,
        });
    }
    Ok(rows)
}

/// `Ê^(2)` as a radial integral, `−∫_{|k|≥σ} d³k f²/((4π)²|k|(|k|+2))`,
/// by adaptive quadrature on the continuum.
pub fn second_order_quadrature(coupling: &Coupling, sigma: f64) -> Result<f64, PerturbationError> {
    check_sigma(sigma)?;
    let c = coupling.with_sigma(sigma);
    let hi = c.uv_cutoff;
    if sigma >= hi {
        return Ok(0.0);
    }
    let g = |k: f64| {
        let f = c.eval(k);
        k * f * f / (k + 2.0) / (4.0 * std::f64::consts::PI)
    };
    let r = crate::quad::integrate(g, sigma, hi, 1e-15, 1e-13, 2000).map_err(|e| PerturbationError::Quadrature {
        sigma,
        tol: 1e-13,
        change: e.error,
    })?;
    Ok(-r.value)
}

/// `‖H_0 S^(1) − P̄_{Ω_↓}Q_σ‖` on the whole space; a functional-calculus check.
pub fn resolvent_identity_defect(space: &FockSpace, sigma: f64) -> Result<f64, PerturbationError> {
    let h0 = free_hamiltonian(space)?;
    let s1 = reduced_resolvent(space, 1, sigma);
    let prod = h0.matmul(&s1);
    let target: Vec<f64> =
        resolvent_diagonal(space, 1, sigma).iter().map(|&x| if x != 0.0 { 1.0 } else { 0.0 }).collect();
    Ok(prod.max_abs_diff(&SparseOperator::diagonal(&target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeGrid;

    fn space(n_per_panel: usize, cap: usize) -> FockSpace {
        let g = ModeGrid::composite_gauss(&[0.1, 0.4, 1.0], n_per_panel).unwrap();
        FockSpace::new(g, cap, true).unwrap()
    }

    #[test]
    fn compositions_are_counted_by_binomials() {
        assert_eq!(compositions(4, 5).len(), 70);
        assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
        assert!(compositions(3, 2).iter().all(|c| c.iter().sum::<usize>() == 3));
    }

    #[test]
    fn resolvent_structure() {
        let sp = space(2, 2);
        let s0 = reduced_resolvent(&sp, 0, 0.1);
        assert_eq!(s0.nnz(), 1);
        assert_eq!(s0.to_dense().trace(), -1.0);
        assert!(resolvent_identity_defect(&sp, 0.1).unwrap() < 1e-14);
        let s1 = reduced_resolvent(&sp, 1, 0.1);
        let s2 = reduced_resolvent(&sp, 2, 0.1);
        assert!(s1.matmul(&s1).max_abs_diff(&s2) < 1e-12);
        // Raising σ above the first panel empties states that use its modes.
        let s1_hi = reduced_resolvent(&sp, 1, 0.4);
        assert!(s1_hi.nnz() < s1.nnz());
    }

    #[test]
    fn three_routes_agree_and_odd_orders_vanish() {
        let sp = space(2, 3);
        let c = Coupling::unit(0.0);
        let dense = rs_expansion(&sp, &c, 0.1, 6).unwrap();
        let trace = rs_energies_trace(&sp, &c, 0.1, 6).unwrap();
        let rec = rs_energies_recursive(&sp, &c, 0.1, 6).unwrap();
        for n in 0..=6 {
            let scale = rec[n].abs().max(1e-300);
            assert!(
                (dense.energy[n] - rec[n]).abs() <= 1e-10 * scale + 1e-15,
                "n={n} {} {} {}",
                dense.energy[n],
                rec[n],
                trace[n]
            );
            assert!(
                (trace[n] - rec[n]).abs() <= 1e-10 * scale + 1e-15,
                "n={n} {} {} {}",
                trace[n],
                rec[n],
                dense.energy[n]
            );
            if n % 2 == 1 {
                assert!(rec[n].abs() < 1e-15 && dense.energy[n].abs() < 1e-15);
            }
        }
        assert!(rec[2] < 0.0 && rec[4] != 0.0);
        let sum = dense.summary();
        assert!((sum.projection_trace[0] - 1.0).abs() < 1e-15);
        assert!(sum.projection_trace[1..].iter().all(|t| t.abs() < 1e-12));
    }

    #[test]
    fn projection_defect_scales_with_truncation_order() {
        let sp = space(2, 3);
        let c = Coupling::unit(0.0);
        let e = rs_expansion(&sp, &c, 0.1, 3).unwrap();
        let d1 = e.projection_defect(0.02);
        let d2 = e.projection_defect(0.01);
        // O(λ^4): a factor 16 per halving.
        assert!(d1 / d2 > 12.0 && d1 / d2 < 20.0, "{d1} {d2}");
    }

    #[test]
    fn projection_column_matches_dense_operator() {
        let sp = space(2, 4);
        let c = Coupling::unit(0.0);
        let e = rs_expansion(&sp, &c, 0.1, 4).unwrap();
        let g = sp.spin_index(1, 0);
        for n in 0..=4 {
            let terms = projection_terms(&sp, &c, 0.1, n).unwrap();
            let mut v = vec![0.0; sp.dim()];
            for t in &terms {
                v.iter_mut().zip(&t.vector).for_each(|(a, b)| *a += b);
            }
            let col = e.projection[n].column(g);
            let diff = v.iter().zip(col.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "n={n} diff={diff}");
        }
    }

    #[test]
    fn second_order_matches_quadrature_on_gauss_grid() {
        let g = ModeGrid::composite_gauss(&[0.1, 0.3, 1.0], 10).unwrap();
        let sp = FockSpace::new(g, 1, true).unwrap();
        let c = Coupling::unit(0.0);
        let e2 = rs_energies_recursive(&sp, &c, 0.1, 2).unwrap()[2];
        let q = second_order_quadrature(&c, 0.1).unwrap();
        let closed = -((1.0 - 0.1) - 2.0 * (3.0f64 / 2.1).ln()) / (4.0 * std::f64::consts::PI);
        assert!((q - closed).abs() < 1e-14);
        assert!((e2 - q).abs() < 1e-12, "{e2} {q}");
    }

    #[test]
    fn direct_fit_recovers_rs_coefficients() {
        let sp = space(2, 3);
        let c = Coupling::unit(0.1);
        let rec = rs_energies_recursive(&sp, &c, 0.1, 6).unwrap();
        let d = direct_coefficients(&sp, &c, 0.03, 5).unwrap();
        assert!((d.coefficients[2] - rec[2]).abs() < 1e-10, "{} {}", d.coefficients[2], rec[2]);
        assert!((d.coefficients[4] - rec[4]).abs() < 1e-8, "{} {}", d.coefficients[4], rec[4]);
    }

    #[test]
    fn zero_cutoff_is_refused() {
        let sp = space(1, 1);
        assert!(matches!(rs_expansion(&sp, &Coupling::unit(0.0), 0.0, 2), Err(PerturbationError::NoInfraredCutoff(_))));
    }
}
