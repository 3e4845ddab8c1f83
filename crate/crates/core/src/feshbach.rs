//! Smooth Feshbach maps on finite-dimensional operators.
//!
//! Everything is dense: the pairs handled here are at most a few thousand
//! dimensional, and the restricted inverses are realized on an orthonormal
//! basis of Ran χ̄.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fock::op_norm_dense;

/// Eigenvalues of χ̄ below this count as outside Ran χ̄.
const RANGE_CUT: f64 = 1e-12;
/// Relative min singular value below which an operator counts as singular.
pub const INVERTIBILITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// χ, χ̄ commute with each other and with T, and χ² + χ̄² = 1.
    Commutation,
    /// T is invertible on Ran χ̄.
    Invertibility,
    /// Both mixed Neumann ratios are below one.
    Smallness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionFailure {
    pub condition: Condition,
    pub measured: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub partition_defect: f64,
    pub chi_commutator: f64,
    pub t_commutator: f64,
    /// min singular value of T on Ran χ̄ relative to ‖T‖.
    pub t_relative_min_sv: f64,
    pub t_condition: f64,
    /// ‖T⁻¹χ̄Wχ̄‖.
    pub left_ratio: f64,
    /// ‖χ̄WT⁻¹χ̄‖.
    pub right_ratio: f64,
}

/// Structured rejection listing every failed condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("not a Feshbach pair: {failures:?}")]
pub struct Rejection {
    pub failures: Vec<ConditionFailure>,
    pub diagnostics: PairDiagnostics,
}

impl Rejection {
    pub fn failed(&self, c: Condition) -> bool {
        self.failures.iter().any(|f| f.condition == c)
    }
}

#[derive(Debug, Clone)]
pub struct FeshbachPair {
    pub h: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub chi: DMatrix<f64>,
    pub chibar: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Orthonormal basis of Ran χ̄ (columns).
    pub range_basis: DMatrix<f64>,
    /// (T ↾ Ran χ̄)⁻¹, extended by zero on the complement.
    pub t_inv: DMatrix<f64>,
    /// (H_χ̄ ↾ Ran χ̄)⁻¹, extended by zero on the complement.
    pub hchibar_inv: DMatrix<f64>,
    pub diagnostics: PairDiagnostics,
}

fn commutator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    op_norm_dense(&(a * b - b * a))
}

/// f(A) for symmetric A by spectral calculus.
pub fn spectral_map<F: Fn(f64) -> f64>(a: &DMatrix<f64>, f: F) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = eig.eigenvalues.map(f);
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// χ̄ = √(1 − χ²).
pub fn complement_cutoff(chi: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(chi, |c| (1.0 - c * c).max(0.0).sqrt())
}

/// Orthonormal basis of the range of a symmetric positive semidefinite matrix.
pub fn range_basis(a: &DMatrix<f64>, cut: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let cols: Vec<usize> = (0..a.nrows()).filter(|&i| eig.eigenvalues[i] > cut).collect();
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

fn min_max_sv(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (f64::INFINITY, 0.0);
    }
    let sv = m.clone().singular_values();
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    (lo, hi)
}

/// Inverse of B*AB on the subspace spanned by B, lifted back: B (B*AB)⁻¹ B*.
fn restricted_inverse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if b.ncols() == 0 {
        return Some(DMatrix::zeros(a.nrows(), a.ncols()));
    }
    let inner = b.transpose() * a * b;
    let inv = inner.try_inverse()?;
    Some(b * inv * b.transpose())
}

pub fn make_feshbach_pair(h: DMatrix<f64>, t: DMatrix<f64>, chi: DMatrix<f64>) -> Result<FeshbachPair, Rejection> {
    let n = h.nrows();
    let chibar = complement_cutoff(&chi);
    let w = &h - &t;
    let scale = 1.0f64.max(op_norm_dense(&t));
    let partition_defect = op_norm_dense(&(&chi * &chi + &chibar * &chibar - DMatrix::identity(n, n)));
    let chi_commutator = commutator_norm(&chi, &chibar);
    let t_commutator = commutator_norm(&chi, &t).max(commutator_norm(&chibar, &t));
    let basis = range_basis(&chibar, RANGE_CUT);
    let t_inner = basis.transpose() * &t * &basis;
    let (lo, hi) = min_max_sv(&t_inner);
    let t_relative_min_sv = if basis.ncols() == 0 { f64::INFINITY } else { lo / scale };
    let t_condition = if basis.ncols() == 0 { 1.0 } else { hi / lo };
    let t_inv = if t_relative_min_sv >= INVERTIBILITY_THRESHOLD { restricted_inverse(&t, &basis) } else { None };
    let (left_ratio, right_ratio) = match &t_inv {
        Some(ti) => {
            let wbar = &chibar * &w * &chibar;
            (op_norm_dense(&(ti * &wbar)), op_norm_dense(&(&wbar * ti)))
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    let diagnostics = PairDiagnostics {
        partition_defect,
        chi_commutator,
        t_commutator,
        t_relative_min_sv,
        t_condition,
        left_ratio,
        right_ratio,
    };
    let mut failures = Vec::new();
    let comm = partition_defect.max(chi_commutator).max(t_commutator / scale);
    if comm > 1e-12 {
        failures.push(ConditionFailure { condition: Condition::Commutation, measured: comm, limit: 1e-12 });
    }
    if t_inv.is_none() {
        failures.push(ConditionFailure {
            condition: Condition::Invertibility,
            measured: t_relative_min_sv,
            limit: INVERTIBILITY_THRESHOLD,
        });
    }
    let ratio = left_ratio.max(right_ratio);
    if t_inv.is_some() && ratio >= 1.0 {
        failures.push(ConditionFailure { condition: Condition::Smallness, measured: ratio, limit: 1.0 });
    }
    if !failures.is_empty() {
        return Err(Rejection { failures, diagnostics });
    }
    let hchibar = &t + &chibar * &w * &chibar;
    let hchibar_inv = restricted_inverse(&hchibar, &basis).ok_or_else(|| Rejection {
        failures: vec![ConditionFailure { condition: Condition::Smallness, measured: ratio, limit: 1.0 }],
        diagnostics: diagnostics.clone(),
    })?;
    Ok(FeshbachPair { h, t, chi, chibar, w, range_basis: basis, t_inv: t_inv.unwrap(), hchibar_inv, diagnostics })
}

/// F_χ(H,T) = T + χWχ − χWχ̄ H_χ̄⁻¹ χ̄Wχ.
pub fn feshbach_map(p: &FeshbachPair) -> DMatrix<f64> {
    let hchi = &p.t + &p.chi * &p.w * &p.chi;
    let left = &p.chi * &p.w * &p.chibar;
    let right = &p.chibar * &p.w * &p.chi;
    hchi - left * &p.hchibar_inv * right
}

/// (Q_χ, Q_χ^#).
pub fn q_operators(p: &FeshbachPair) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = &p.chi - &p.chibar * &p.hchibar_inv * &p.chibar * &p.w * &p.chi;
    let qs = &p.chi - &p.chi * &p.w * &p.chibar * &p.hchibar_inv * &p.chibar;
    (q, qs)
}

/// H_χ̄⁻¹ on Ran χ̄ by the Neumann series Σ_j (−T⁻¹χ̄Wχ̄)^j T⁻¹ truncated after `terms` terms.
pub fn neumann_inverse(p: &FeshbachPair, terms: usize) -> DMatrix<f64> {
    let step = -(&p.t_inv * &p.chibar * &p.w * &p.chibar);
    let mut term = p.t_inv.clone();
    let mut sum = term.clone();
    for _ in 1..terms {
        term = &step * &term;
        sum += &term;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsospectralityReport {
    pub h_invertible: bool,
    pub f_invertible: bool,
    pub equivalence_holds: bool,
    pub h_condition: f64,
    /// ‖H⁻¹ − (Q F⁻¹ Q# + χ̄H_χ̄⁻¹χ̄)‖ / ‖H⁻¹‖.
    pub h_inverse_residual: Option<f64>,
    /// ‖F⁻¹ − (χH⁻¹χ + χ̄T⁻¹χ̄)‖ / ‖F⁻¹‖ on V.
    pub f_inverse_residual: Option<f64>,
    pub dim_ker_h: usize,
    pub dim_ker_f: usize,
    /// max of ‖Fχu‖, ‖HQv‖ over kernel bases.
    pub kernel_map_residual: f64,
    /// max of ‖Qχu − u‖, ‖χQv − v‖ over kernel bases.
    pub round_trip_residual: f64,
    /// ‖HQ_χ − χF‖.
    pub intertwining_residual: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubspaceError {
    #[error("subspace is not invariant under {map}; witness residual {residual:e}")]
    NotInvariant { map: &'static str, residual: f64, witness: Vec<f64> },
}

/// Kernel basis: right singular vectors with singular value below the threshold.
pub fn kernel_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let scale = 1.0f64.max(op_norm_dense(m));
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let cols: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] < INVERTIBILITY_THRESHOLD * scale).collect();
    DMatrix::from_fn(n, cols.len(), |i, j| vt[(cols[j], i)])
}

fn check_invariant(
    map: &'static str,
    a: &DMatrix<f64>,
    v: &DMatrix<f64>,
    proj: &DMatrix<f64>,
) -> Result<(), SubspaceError> {
    let img = a * v;
    let off = &img - proj * &img;
    for j in 0..off.ncols() {
        let r = off.column(j).norm();
        if r > 1e-9 * (1.0 + img.column(j).norm()) {
            return Err(SubspaceError::NotInvariant {
                map,
                residual: r,
                witness: v.column(j).iter().copied().collect(),
            });
        }
    }
    Ok(())
}

/// Checks the isospectrality statements on a subspace V given by an orthonormal basis
/// (`None` means the whole space).
pub fn isospectrality_check(
    p: &FeshbachPair,
    v_basis: Option<&DMatrix<f64>>,
) -> Result<IsospectralityReport, SubspaceError> {
    let n = p.h.nrows();
    let vb = v_basis.cloned().unwrap_or_else(|| DMatrix::identity(n, n));
    let pv = &vb * vb.transpose();
    check_invariant("chi (Ran chi in V)", &p.chi, &DMatrix::identity(n, n), &pv)?;
    check_invariant("T", &p.t, &vb, &pv)?;
    check_invariant("chibar T^-1 chibar", &(&p.chibar * &p.t_inv * &p.chibar), &vb, &pv)?;

    let f = feshbach_map(p);
    let (q, qs) = q_operators(p);
    let h_scale = 1.0f64.max(op_norm_dense(&p.h));
    let (h_lo, h_hi) = min_max_sv(&p.h);
    let h_invertible = h_lo >= INVERTIBILITY_THRESHOLD * h_scale;
    let f_v = vb.transpose() * &f * &vb;
    let f_scale = 1.0f64.max(op_norm_dense(&f_v));
    let (f_lo, _) = min_max_sv(&f_v);
    let f_invertible = f_lo >= INVERTIBILITY_THRESHOLD * f_scale;

    let mut h_inverse_residual = None;
    let mut f_inverse_residual = None;
    if h_invertible && f_invertible {
        let h_inv = p.h.clone().try_inverse().expect("checked invertible");
        let f_inv = &vb * f_v.clone().try_inverse().expect("checked invertible") * vb.transpose();
        let rebuilt = &q * &f_inv * &qs + &p.chibar * &p.hchibar_inv * &p.chibar;
        h_inverse_residual = Some(op_norm_dense(&(&h_inv - rebuilt)) / op_norm_dense(&h_inv));
        let rebuilt_f = (&p.chi * &h_inv * &p.chi + &p.chibar * &p.t_inv * &p.chibar) * &pv;
        f_inverse_residual = Some(op_norm_dense(&(&f_inv - rebuilt_f)) / op_norm_dense(&f_inv));
    }

    let ker_h = kernel_basis(&p.h);
    let ker_f = &vb * kernel_basis(&f_v);
    let mut kernel_map_residual: f64 = 0.0;
    let mut round_trip_residual: f64 = 0.0;
    for j in 0..ker_h.ncols() {
        let u = ker_h.column(j).into_owned();
        let cu = &p.chi * &u;
        kernel_map_residual = kernel_map_residual.max((&f * &cu).norm());
        round_trip_residual = round_trip_residual.max((&q * &cu - &u).norm());
    }
    for j in 0..ker_f.ncols() {
        let v = ker_f.column(j).into_owned();
        let qv = &q * &v;
        kernel_map_residual = kernel_map_residual.max((&p.h * &qv).norm());
        round_trip_residual = round_trip_residual.max((&p.chi * &qv - &v).norm());
    }
    let intertwining_residual = op_norm_dense(&(&p.h * &q - &p.chi * &f));
    Ok(IsospectralityReport {
        h_invertible,
        f_invertible,
        equivalence_holds: h_invertible == f_invertible,
        h_condition: if h_lo > 0.0 { h_hi / h_lo } else { f64::INFINITY },
        h_inverse_residual,
        f_inverse_residual,
        dim_ker_h: ker_h.ncols(),
        dim_ker_f: ker_f.ncols(),
        kernel_map_residual,
        round_trip_residual,
        intertwining_residual,
    })
}

/// Random orthogonal matrix from the QR factors of a Gaussian-ish matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    g.qr().q()
}

/// A random valid pair of dimension `n`. T and χ share an eigenbasis; the low
/// part of T (where χ = 1) sits in [−1, 1], the rest in [3, 6]. With `singular`
/// set, the pair is shifted by an eigenvalue of H so that H has a kernel.
pub fn random_pair<R: Rng>(rng: &mut R, n: usize, singular: bool) -> FeshbachPair {
    loop {
        let u = random_orthogonal(rng, n);
        let low = 1 + rng.random_range(0..n.div_ceil(2));
        let mut t_diag = Vec::with_capacity(n);
        let mut c_diag = Vec::with_capacity(n);
        for i in 0..n {
            if i < low {
                t_diag.push(rng.random::<f64>() * 2.0 - 1.0);
                // fully inside Ran χ, or partially shared with Ran χ̄
                c_diag.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.6 + 0.4 * rng.random::<f64>() });
            } else {
                t_diag.push(3.0 + 3.0 * rng.random::<f64>());
                c_diag.push(if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random::<f64>() });
            }
        }
        let t = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t_diag)) * u.transpose();
        let chi = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c_diag)) * u.transpose();
        let mut w = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        if singular || rng.random::<f64>() < 0.5 {
            w = (&w + w.transpose()) * 0.5;
        }
        let wn = op_norm_dense(&w);
        w *= 0.3 * rng.random::<f64>() / wn;
        let mut h = &t + &w;
        let mut t = t;
        if singular {
            let eig = SymmetricEigen::new(h.clone());
            let z = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            h -= DMatrix::identity(n, n) * z;
            t -= DMatrix::identity(n, n) * z;
        }
        if let Ok(p) = make_feshbach_pair(h, t, chi) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> FeshbachPair {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0]);
        let t = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let chi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        make_feshbach_pair(h, t, chi).unwrap()
    }

    #[test]
    fn hand_computed_two_by_two() {
        let p = two_by_two();
        assert_eq!(p.diagnostics.left_ratio, 0.0);
        let f = feshbach_map(&p);
        let expect = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 2.0]);
        assert!((f - expect).abs().max() < 1e-15);
    }

    #[test]
    fn free_pair_maps_to_t() {
        let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 3.0]));
        let chi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.7, 0.0]));
        let p = make_feshbach_pair(t.clone(), t.clone(), chi.clone()).unwrap();
        assert!((feshbach_map(&p) - &t).abs().max() < 1e-15);
        let (q, qs) = q_operators(&p);
        assert!((q - &chi).abs().max() < 1e-15 && (qs - &chi).abs().max() < 1e-15);
    }

    #[test]
    fn eigenvalue_shift_makes_f_singular_and_q_maps_kernels() {
        let h0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0]);
        let z = 1.0 - 2f64.sqrt();
        let id = DMatrix::<f64>::identity(2, 2);
        let t = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]) - &id * z;
        let chi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = make_feshbach_pair(&h0 - &id * z, t, chi).unwrap();
        let (lo, _) = min_max_sv(&feshbach_map(&p));
        assert!(lo < 1e-10);
        let r = isospectrality_check(&p, None).unwrap();
        assert_eq!((r.dim_ker_h, r.dim_ker_f), (1, 1));
        assert!(r.kernel_map_residual < 1e-9 && r.round_trip_residual < 1e-9);
    }

    #[test]
    fn oversized_w_is_rejected_for_smallness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let u = random_orthogonal(&mut rng, n);
        let t_diag: Vec<f64> = (0..n).map(|i| if i < 5 { 0.1 } else { 1.0 }).collect();
        let c_diag: Vec<f64> = (0..n).map(|i| if i < 5 { 1.0 } else { 0.0 }).collect();
        let t = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t_diag)) * u.transpose();
        let chi = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c_diag)) * u.transpose();
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 3.0 } else { 0.0 });
        let rej = make_feshbach_pair(&t + w, t, chi).unwrap_err();
        assert!(rej.failed(Condition::Smallness));
        assert!(!rej.failed(Condition::Invertibility));
    }

    #[test]
    fn neumann_series_converges_at_predicted_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_pair(&mut rng, 12, false);
        let q = p.diagnostics.left_ratio;
        let tn = op_norm_dense(&p.t_inv);
        for terms in [1, 3, 6] {
            let err = op_norm_dense(&(neumann_inverse(&p, terms) - &p.hchibar_inv)) / tn;
            assert!(err <= q.powi(terms as i32) / (1.0 - q) + 1e-14);
        }
    }
}
