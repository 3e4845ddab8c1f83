use std::collections::HashMap;

use super::grid::ModeGrid;
use super::sparse::{spin_tensor, SparseOperator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FockError {
    #[error("coefficient vector has {got} entries, grid has {expected} modes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation needs a space tensored with the spin")]
    SpinlessSpace,
    #[error("max_total_occupation must be at least 1")]
    NoOccupation,
}

pub const NONE: u32 = u32::MAX;

/// Truncated bosonic Fock space over a mode grid, optionally tensored with ℂ².
///
/// Basis order: graded by total occupation, then reverse-lexicographic in the
/// occupation vector. With spin, index = spin·boson_dim + boson index, where
/// spin 0 is "up" (energy 2 under τ) and spin 1 is "down".
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub grid: ModeGrid,
    pub max_total_occupation: usize,
    /// Optional cap on the free-field energy Σ n_i k_i (the reduced space uses 1).
    pub energy_cap: Option<f64>,
    pub with_spin: bool,
    pub basis: Vec<Vec<u16>>,
    energies: Vec<f64>,
    numbers: Vec<usize>,
    index: HashMap<Vec<u16>, usize>,
    raise: Vec<u32>,
    lower: Vec<u32>,
}

const CAP_SLACK: f64 = 1e-12;

impl FockSpace {
    pub fn new(grid: ModeGrid, max_total_occupation: usize, with_spin: bool) -> Result<Self, FockError> {
        if max_total_occupation == 0 {
            return Err(FockError::NoOccupation);
        }
        Ok(Self::build(grid, max_total_occupation, None, with_spin))
    }

    /// Span of occupation states with free-field energy ≤ `cap` (and at most
    /// `max_total_occupation` bosons).
    pub fn energy_capped(grid: ModeGrid, cap: f64, max_total_occupation: usize, with_spin: bool) -> Self {
        Self::build(grid, max_total_occupation, Some(cap), with_spin)
    }

    /// The reduced space Ran χ_{[0,1]}(H_f); the particle cap floor(1/k_min)
    /// makes the energy cap the only active truncation.
    pub fn reduced(grid: ModeGrid) -> Self {
        let kmin = grid.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = ((1.0 + CAP_SLACK) / kmin).floor().max(0.0) as usize;
        Self::build(grid, n, Some(1.0), false)
    }

    fn build(grid: ModeGrid, nmax: usize, cap: Option<f64>, with_spin: bool) -> Self {
        let m = grid.len();
        let mut basis = Vec::new();
        let mut cur = vec![0u16; m];
        for n in 0..=nmax {
            enumerate(&grid.nodes, cap, 0, n, 0.0, &mut cur, &mut basis);
        }
        let energies: Vec<f64> =
            basis.iter().map(|s| s.iter().zip(&grid.nodes).map(|(n, k)| *n as f64 * k).sum()).collect();
        let numbers = basis.iter().map(|s| s.iter().map(|&n| n as usize).sum()).collect();
        let index: HashMap<Vec<u16>, usize> = basis.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut raise = vec![NONE; basis.len() * m];
        let mut lower = vec![NONE; basis.len() * m];
        let mut tmp = vec![0u16; m];
        for (s, occ) in basis.iter().enumerate() {
            tmp.copy_from_slice(occ);
            for i in 0..m {
                tmp[i] += 1;
                if let Some(&t) = index.get(&tmp) {
                    raise[s * m + i] = t as u32;
                }
                tmp[i] -= 1;
                if occ[i] > 0 {
                    tmp[i] -= 1;
                    lower[s * m + i] = index[&tmp] as u32;
                    tmp[i] += 1;
                }
            }
        }
        Self {
            grid,
            max_total_occupation: nmax,
            energy_cap: cap,
            with_spin,
            basis,
            energies,
            numbers,
            index,
            raise,
            lower,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.grid.len()
    }

    pub fn boson_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        if self.with_spin {
            2 * self.basis.len()
        } else {
            self.basis.len()
        }
    }

    pub fn energy(&self, s: usize) -> f64 {
        self.energies[s]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn number(&self, s: usize) -> usize {
        self.numbers[s]
    }

    pub fn find(&self, occ: &[u16]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Boson state reached by a*_i, if it lies in the space.
    #[inline]
    pub fn raised(&self, s: usize, i: usize) -> Option<usize> {
        let t = self.raise[s * self.grid.len() + i];
        (t != NONE).then_some(t as usize)
    }

    /// Boson state reached by a_i, if n_i > 0.
    #[inline]
    pub fn lowered(&self, s: usize, i: usize) -> Option<usize> {
        let t = self.lower[s * self.grid.len() + i];
        (t != NONE).then_some(t as usize)
    }

    #[inline]
    pub fn occupation(&self, s: usize, i: usize) -> u16 {
        self.basis[s][i]
    }

    pub fn vacuum(&self) -> usize {
        0
    }

    /// Index of spin ⊗ boson state.
    pub fn spin_index(&self, spin: usize, b: usize) -> usize {
        debug_assert!(self.with_spin && spin < 2);
        spin * self.basis.len() + b
    }

    /// Ω_↓ = (0,1)ᵀ ⊗ Ω as a unit vector (Ω for spinless spaces).
    pub fn ground_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        if self.with_spin {
            v[self.spin_index(1, 0)] = 1.0;
        } else {
            v[0] = 1.0;
        }
        v
    }

    fn check_len(&self, g: &[f64]) -> Result<(), FockError> {
        if g.len() != self.grid.len() {
            return Err(FockError::DimensionMismatch { expected: self.grid.len(), got: g.len() });
        }
        Ok(())
    }

    fn lift(&self, b: SparseOperator) -> SparseOperator {
        if self.with_spin {
            spin_tensor([[1.0, 0.0], [0.0, 1.0]], &b)
        } else {
            b
        }
    }

    /// a*(g) on the boson factor only.
    pub fn boson_creation(&self, g: &[f64]) -> Result<SparseOperator, FockError> {
        self.check_len(g)?;
        let mut t = Vec::new();
        for s in 0..self.boson_dim() {
            for (i, gi) in g.iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                if let Some(u) = self.raised(s, i) {
                    let n = self.occupation(s, i) as f64;
                    t.push((u, s, (n + 1.0).sqrt() * gi * self.grid.weights[i].sqrt()));
                }
            }
        }
        Ok(SparseOperator::from_triplets(self.boson_dim(), t))
    }

    /// Diagonal boson operator F(occupation state).
    pub fn boson_diagonal<F: Fn(usize) -> f64>(&self, f: F) -> SparseOperator {
        SparseOperator::diagonal(&(0..self.boson_dim()).map(f).collect::<Vec<_>>())
    }

    /// F(H_f) on the full space.
    pub fn function_of_hf<F: Fn(f64) -> f64>(&self, f: F) -> SparseOperator {
        self.lift(self.boson_diagonal(|s| f(self.energies[s])))
    }

    /// Coefficients f_i/√k_i · √w_i of φ(f) in the discrete modes.
    pub fn field_coefficients(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.grid.nodes).map(|(f, k)| f / k.sqrt()).collect()
    }
}

fn enumerate(
    nodes: &[f64],
    cap: Option<f64>,
    pos: usize,
    left: usize,
    energy: f64,
    cur: &mut Vec<u16>,
    out: &mut Vec<Vec<u16>>,
) {
    let m = nodes.len();
    if pos == m {
        if left == 0 {
            out.push(cur.clone());
        }
        return;
    }
    if pos == m - 1 {
        let e = energy + left as f64 * nodes[pos];
        if cap.is_none_or(|c| e <= c + CAP_SLACK) {
            cur[pos] = left as u16;
            out.push(cur.clone());
            cur[pos] = 0;
        }
        return;
    }
    for k in (0..=left).rev() {
        let e = energy + k as f64 * nodes[pos];
        if cap.is_some_and(|c| e > c + CAP_SLACK) {
            continue;
        }
        cur[pos] = k as u16;
        enumerate(nodes, cap, pos + 1, left - k, e, cur, out);
        cur[pos] = 0;
    }
}

pub fn creation_op(space: &FockSpace, g: &[f64]) -> Result<SparseOperator, FockError> {
    Ok(space.lift(space.boson_creation(g)?))
}

pub fn annihilation_op(space: &FockSpace, g: &[f64]) -> Result<SparseOperator, FockError> {
    Ok(creation_op(space, g)?.transpose())
}

/// H_f = dΓ(ω).
pub fn free_field_op(space: &FockSpace) -> SparseOperator {
    space.function_of_hf(|e| e)
}

/// φ(f) = a*(f/√ω) + a(f/√ω) in the grid measure.
pub fn field_op(space: &FockSpace, f: &[f64]) -> Result<SparseOperator, FockError> {
    space.check_len(f)?;
    let g = space.field_coefficients(f);
    let c = space.boson_creation(&g)?;
    let b = c.linear_combination(1.0, &c.transpose(), 1.0);
    Ok(space.lift(b))
}

/// (−1)^N.
pub fn parity_op(space: &FockSpace) -> SparseOperator {
    space.lift(space.boson_diagonal(|s| if space.number(s).is_multiple_of(2) { 1.0 } else { -1.0 }))
}

pub fn number_op(space: &FockSpace) -> SparseOperator {
    space.lift(space.boson_diagonal(|s| space.number(s) as f64))
}

/// Projection onto states with total occupation ≤ n (the interior grading).
pub fn grading_projection(space: &FockSpace, n: usize) -> SparseOperator {
    space.lift(space.boson_diagonal(|s| if space.number(s) <= n { 1.0 } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::super::grid::{build_mode_grid, GridScheme};
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn dimension_formula() {
        for (m, n) in [(3, 2), (8, 4), (5, 5)] {
            let g = build_mode_grid(0.0, 1.0, m, GridScheme::Midpoint).unwrap();
            let s = FockSpace::new(g, n, true).unwrap();
            assert_eq!(s.boson_dim(), binom(m + n, n));
            assert_eq!(s.dim(), 2 * binom(m + n, n));
        }
    }

    #[test]
    fn basis_is_graded_and_deterministic() {
        let g = build_mode_grid(0.0, 1.0, 4, GridScheme::Midpoint).unwrap();
        let a = FockSpace::new(g.clone(), 3, false).unwrap();
        let b = FockSpace::new(g, 3, false).unwrap();
        assert_eq!(a.basis, b.basis);
        assert!(a.basis.windows(2).all(|w| a.find(&w[0]).unwrap() < a.find(&w[1]).unwrap()));
        let ns: Vec<usize> = (0..a.boson_dim()).map(|s| a.number(s)).collect();
        assert!(ns.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.basis[0], vec![0, 0, 0, 0]);
    }

    #[test]
    fn creation_on_vacuum() {
        let g = build_mode_grid(0.0, 1.0, 3, GridScheme::Midpoint).unwrap();
        let s = FockSpace::new(g.clone(), 2, false).unwrap();
        let a = creation_op(&s, &[1.0, 0.0, 0.0]).unwrap();
        let mut omega = vec![0.0; s.dim()];
        omega[0] = 1.0;
        let v = a.apply(&omega);
        let t = s.find(&[1, 0, 0]).unwrap();
        assert!((v[t] - g.weights[0].sqrt()).abs() < 1e-15);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - g.weights[0]).abs() < 1e-15);
    }

    #[test]
    fn free_field_spectrum() {
        let g = build_mode_grid(0.1, 1.0, 4, GridScheme::GaussLegendre).unwrap();
        let s = FockSpace::new(g.clone(), 3, false).unwrap();
        let h = free_field_op(&s);
        assert_eq!(h.get(0, 0), 0.0);
        let t = s.find(&[2, 0, 0, 0]).unwrap();
        assert!((h.get(t, t) - 2.0 * g.nodes[0]).abs() < 1e-15);
        let min_nonzero = (0..s.dim()).map(|i| h.get(i, i)).filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
        assert_eq!(min_nonzero, g.nodes[0]);
    }

    #[test]
    fn reduced_space_respects_cap() {
        let g = build_mode_grid(0.1, 1.0, 6, GridScheme::Midpoint).unwrap();
        let s = FockSpace::reduced(g);
        assert!(s.energies().iter().all(|&e| e <= 1.0 + 1e-12));
        // every state below the cap is present
        assert!(s.find(&[5, 0, 0, 0, 0, 0]).is_some());
        assert!(s.find(&[0, 0, 0, 0, 0, 2]).is_none());
    }

    #[test]
    fn parity_is_an_involution() {
        let g = build_mode_grid(0.0, 1.0, 3, GridScheme::Midpoint).unwrap();
        let s = FockSpace::new(g, 3, true).unwrap();
        let p = parity_op(&s);
        let pp = p.matmul(&p);
        assert_eq!(pp.max_abs_diff(&SparseOperator::identity(s.dim())), 0.0);
        let one = s.find(&[0, 1, 0]).unwrap();
        assert_eq!(p.get(s.spin_index(1, one), s.spin_index(1, one)), -1.0);
        assert_eq!(p.get(s.spin_index(1, 0), s.spin_index(1, 0)), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = build_mode_grid(0.0, 1.0, 3, GridScheme::Midpoint).unwrap();
        let s = FockSpace::new(g, 2, false).unwrap();
        assert!(matches!(creation_op(&s, &[1.0]), Err(FockError::DimensionMismatch { .. })));
        assert!(field_op(&s, &[1.0; 4]).is_err());
    }
}
