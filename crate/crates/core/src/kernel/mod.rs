//! Discretized integral kernels `w_{m,n}(r, K)` on `[0,1] × B_1^{m+n}`.
//!
//! A kernel stores two channels (value and `∂_r`) on a uniform r-grid times
//! the radial mode nodes of a [`ModeGrid`], one array slot per ordered tuple of
//! node indices. Creation arguments come first in every tuple.
//!
//! Off-grid evaluation is cubic Hermite in `r` (using the stored derivative)
//! and multilinear in each `|k|`. Momenta below the grid's infrared cutoff,
//! momenta outside `B_1` and points off `Q_{m,n}` evaluate to zero.

mod assemble;
mod chain;
mod snapshot;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::ModeGrid;
use crate::quad::Barycentric;

pub use assemble::{assemble_kernel, assemble_operator, assemble_source, for_each_transition, sandwich_op};
pub use chain::{wick_recompose, Chain, Dual, Inner, Profile, WickOutput};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

/// Tolerance on the support condition `r ≤ 1 − max(Σk, Σk̃)`.
pub const Q_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("kernel momenta must lie in (0, 1); node {0} does not")]
    NodeOutsideUnitBall(f64),
    #[error("an r-grid needs at least two points, got {0}")]
    RGrid(usize),
    #[error("kernel grid and Fock space use different mode grids")]
    GridMismatch,
    #[error("kernel operators act on a spinless space with free-field energy capped at 1")]
    NotReduced,
    #[error("degree ({m},{n}) exceeds the truncation m+n <= {max}")]
    DegreeOverflow { m: usize, n: usize, max: usize },
    #[error("sequences live on different kernel grids")]
    SequenceMismatch,
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Shared sampling grid of a kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub modes: ModeGrid,
    /// Uniform samples of `r` on `[0, 1]`.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct KLoc {
    lo: usize,
    hi: usize,
    t: f64,
}

impl KernelGrid {
    pub fn new(modes: ModeGrid, n_r: usize) -> Result<Arc<Self>, KernelError> {
        if n_r < 2 {
            return Err(KernelError::RGrid(n_r));
        }
        if let Some(&k) = modes.nodes.iter().find(|&&k| !(k > 0.0 && k < 1.0)) {
            return Err(KernelError::NodeOutsideUnitBall(k));
        }
        let h = 1.0 / (n_r - 1) as f64;
        let mut r: Vec<f64> = (0..n_r).map(|j| j as f64 * h).collect();
        r[n_r - 1] = 1.0;
        Ok(Arc::new(Self { modes, r }))
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_r(&self) -> usize {
        self.r.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.r.len() - 1) as f64
    }

    pub fn tuples(&self, degree: usize) -> usize {
        self.n_modes().pow(degree as u32)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.modes.nodes[i]
    }

    /// Node indices of `flat`, most significant digit first.
    pub fn decode(&self, mut flat: usize, out: &mut [usize]) {
        let m = self.n_modes();
        for slot in out.iter_mut().rev() {
            *slot = flat % m;
            flat /= m;
        }
    }

    pub fn encode(&self, idx: &[usize]) -> usize {
        let m = self.n_modes();
        idx.iter().fold(0, |acc, &i| acc * m + i)
    }

    /// Per-variable weight of `dK/|K|²` in the ‖·‖₂ norm: `4π w_i / k_i²`.
    pub fn l2_weight(&self, i: usize) -> f64 {
        4.0 * std::f64::consts::PI * self.modes.weights[i] / (self.modes.nodes[i] * self.modes.nodes[i])
    }

    /// Per-variable factor of `dK/|K|^{1/2}` against unit-normalized mode operators: `√(w_i/k_i)`.
    pub fn coupling(&self, i: usize) -> f64 {
        (self.modes.weights[i] / self.modes.nodes[i]).sqrt()
    }

    /// Whether the grid carries a mode at momentum `k`.
    pub fn supports(&self, k: f64) -> bool {
        k >= self.modes.sigma * (1.0 - 1e-12) && k < 1.0 && k > 0.0
    }

    fn locate_k(&self, k: f64) -> Option<KLoc> {
        if !self.supports(k) {
            return None;
        }
        let nodes = &self.modes.nodes;
        let i = nodes.partition_point(|&x| x < k);
        let near = |j: usize| (nodes[j] - k).abs() <= 1e-12 * k;
        if i < nodes.len() && near(i) {
            return Some(KLoc { lo: i, hi: i, t: 0.0 });
        }
        if i > 0 && near(i - 1) {
            return Some(KLoc { lo: i - 1, hi: i - 1, t: 0.0 });
        }
        if i == 0 {
            return Some(KLoc { lo: 0, hi: 0, t: 0.0 });
        }
        if i == nodes.len() {
            return Some(KLoc { lo: i - 1, hi: i - 1, t: 0.0 });
        }
        let t = (k - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
        Some(KLoc { lo: i - 1, hi: i, t })
    }

    /// Cell index `j` and local coordinate `t ∈ [0,1]` with `r ∈ [r_j, r_{j+1}]`.
    fn locate_r(&self, r: f64) -> (usize, f64) {
        let n = self.r.len();
        let h = self.spacing();
        let j = ((r / h).floor() as usize).min(n - 2);
        let t = ((r - self.r[j]) / h).clamp(0.0, 1.0);
        (j, t)
    }
}

/// Whether `(r, k, k̃)` lies in `Q_{m,n}`.
pub fn in_q(r: f64, creation: &[f64], annihilation: &[f64]) -> bool {
    if !(-Q_SLACK..=1.0 + Q_SLACK).contains(&r) {
        return false;
    }
    let a: f64 = creation.iter().sum();
    let b: f64 = annihilation.iter().sum();
    r <= 1.0 - a.max(b) + Q_SLACK
}

/// Uniform access to kernel families: stored samples, closed forms, or
/// sequences. Arguments are magnitudes, creation block first.
pub trait KernelSource: Sync {
    /// Whether component `(m, n)` may be nonzero.
    fn has(&self, m: usize, n: usize) -> bool;
    /// Value and `∂_r` at `(r, K)`.
    fn eval(&self, m: usize, n: usize, r: f64, k: &[f64]) -> (f64, f64);
    /// Whether momentum `k` can carry a nonzero kernel value.
    fn supports(&self, k: f64) -> bool;
    fn max_degree(&self) -> usize;
}

/// Closed-form kernel family from a closure `(m, n, r, K) -> (w, ∂_r w)`.
pub struct FnSource<F> {
    pub components: Vec<(usize, usize)>,
    pub support: (f64, f64),
    pub f: F,
}

impl<F: Fn(usize, usize, f64, &[f64]) -> (f64, f64) + Sync> KernelSource for FnSource<F> {
    fn has(&self, m: usize, n: usize) -> bool {
        self.components.contains(&(m, n))
    }

    fn eval(&self, m: usize, n: usize, r: f64, k: &[f64]) -> (f64, f64) {
        if !self.has(m, n) || k.iter().any(|&k| !self.supports(k)) {
            return (0.0, 0.0);
        }
        (self.f)(m, n, r, k)
    }

    fn supports(&self, k: f64) -> bool {
        k >= self.support.0 && k <= self.support.1
    }

    fn max_degree(&self) -> usize {
        self.components.iter().map(|(m, n)| m + n).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub m: usize,
    pub n: usize,
    pub grid: Arc<KernelGrid>,
    /// `values[ir * tuples + flat]`.
    pub values: Vec<f64>,
    pub r_derivative: Vec<f64>,
}

impl Kernel {
    pub fn zeros(m: usize, n: usize, grid: &Arc<KernelGrid>) -> Self {
        let len = grid.n_r() * grid.tuples(m + n);
        Self { m, n, grid: grid.clone(), values: vec![0.0; len], r_derivative: vec![0.0; len] }
    }

    /// Samples `f(r, K) -> (w, ∂_r w)` on the grid cells inside `Q_{m,n}`; zero elsewhere.
    pub fn from_fn<F>(m: usize, n: usize, grid: &Arc<KernelGrid>, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> (f64, f64) + Sync,
    {
        let mut out = Self::zeros(m, n, grid);
        let tuples = out.tuples();
        let columns: Vec<Vec<(f64, f64)>> = (0..tuples)
            .into_par_iter()
            .map(|flat| {
                let mut idx = vec![0; m + n];
                grid.decode(flat, &mut idx);
                let k: Vec<f64> = idx.iter().map(|&i| grid.node(i)).collect();
                grid.r.iter().map(|&r| if in_q(r, &k[..m], &k[m..]) { f(r, &k) } else { (0.0, 0.0) }).collect()
            })
            .collect();
        for (flat, col) in columns.into_iter().enumerate() {
            for (ir, (v, d)) in col.into_iter().enumerate() {
                out.values[ir * tuples + flat] = v;
                out.r_derivative[ir * tuples + flat] = d;
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.m + self.n
    }

    pub fn tuples(&self) -> usize {
        self.grid.tuples(self.degree())
    }

    pub fn at(&self, ir: usize, flat: usize) -> (f64, f64) {
        let i = ir * self.tuples() + flat;
        (self.values[i], self.r_derivative[i])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().chain(&self.r_derivative).all(|&x| x == 0.0)
    }

    /// Value and `∂_r` at an arbitrary point.
    pub fn eval(&self, r: f64, k: &[f64]) -> (f64, f64) {
        debug_assert_eq!(k.len(), self.degree());
        if !in_q(r, &k[..self.m], &k[self.m..]) {
            return (0.0, 0.0);
        }
        let r = r.clamp(0.0, 1.0);
        let mut locs = [KLoc { lo: 0, hi: 0, t: 0.0 }; 8];
        for (slot, &kk) in locs.iter_mut().zip(k) {
            match self.grid.locate_k(kk) {
                Some(l) => *slot = l,
                None => return (0.0, 0.0),
            }
        }
        let deg = self.degree();
        let (j, t) = self.grid.locate_r(r);
        let h = self.grid.spacing();
        let tuples = self.tuples();
        let m = self.grid.n_modes();
        let mut value = 0.0;
        let mut deriv = 0.0;
        for corner in 0..(1usize << deg) {
            let mut weight = 1.0;
            let mut flat = 0;
            for (b, l) in locs[..deg].iter().enumerate() {
                let up = corner >> (deg - 1 - b) & 1 == 1;
                if l.lo == l.hi && up {
                    weight = 0.0;
                    break;
                }
                weight *= if l.lo == l.hi {
                    1.0
                } else if up {
                    l.t
                } else {
                    1.0 - l.t
                };
                flat = flat * m + if up { l.hi } else { l.lo };
            }
            if weight == 0.0 {
                continue;
            }
            let a = j * tuples + flat;
            let (v, d) = if t == 0.0 {
                (self.values[a], self.r_derivative[a])
            } else if t == 1.0 {
                (self.values[a + tuples], self.r_derivative[a + tuples])
            } else {
                hermite(
                    t,
                    h,
                    self.values[a],
                    self.r_derivative[a],
                    self.values[a + tuples],
                    self.r_derivative[a + tuples],
                )
            };
            value += weight * v;
            deriv += weight * d;
        }
        (value, deriv)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn derivative_sup_norm(&self) -> f64 {
        self.r_derivative.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    /// `‖w‖^# = ‖w‖_∞ + ‖∂_r w‖_∞` with sup over the stored samples.
    pub fn sharp_norm(&self) -> f64 {
        self.sup_norm() + self.derivative_sup_norm()
    }

    /// `‖w‖₂ = [Σ_K Π (4π w_i/k_i²) · max_r |w(r,K)|²]^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let tuples = self.tuples();
        let mut idx = vec![0; self.degree()];
        let mut total = 0.0;
        for flat in 0..tuples {
            let sup = (0..self.grid.n_r()).fold(0.0f64, |a, ir| a.max(self.values[ir * tuples + flat].abs()));
            if sup == 0.0 {
                continue;
            }
            self.grid.decode(flat, &mut idx);
            let w: f64 = idx.iter().map(|&i| self.grid.l2_weight(i)).product();
            total += w * sup * sup;
        }
        total.sqrt()
    }

    /// Discrete counterpart of `∫_{S_{m,n}} dK/|K|²`, the simplex measure in the ‖·‖₂ bound.
    pub fn simplex_measure(&self) -> f64 {
        let mut idx = vec![0; self.degree()];
        (0..self.tuples())
            .filter_map(|flat| {
                self.grid.decode(flat, &mut idx);
                let k: Vec<f64> = idx.iter().map(|&i| self.grid.node(i)).collect();
                in_q(0.0, &k[..self.m], &k[self.m..])
                    .then(|| idx.iter().map(|&i| self.grid.l2_weight(i)).product::<f64>())
            })
            .sum()
    }

    /// Average over permutations within the creation block and within the annihilation block.
    pub fn symmetrize(&self) -> Self {
        let (m, n) = (self.m, self.n);
        if m < 2 && n < 2 {
            return self.clone();
        }
        let pm = permutations(m);
        let pn = permutations(n);
        let norm = (pm.len() * pn.len()) as f64;
        let tuples = self.tuples();
        let mut out = Self::zeros(m, n, &self.grid);
        let mut idx = vec![0; m + n];
        let mut perm = vec![0; m + n];
        for flat in 0..tuples {
            self.grid.decode(flat, &mut idx);
            let mut sources = Vec::with_capacity(pm.len() * pn.len());
            for a in &pm {
                for b in &pn {
                    for (i, &p) in a.iter().enumerate() {
                        perm[i] = idx[p];
                    }
                    for (i, &p) in b.iter().enumerate() {
                        perm[m + i] = idx[m + p];
                    }
                    sources.push(self.grid.encode(&perm));
                }
            }
            for ir in 0..self.grid.n_r() {
                let base = ir * tuples;
                let (mut v, mut d) = (0.0, 0.0);
                for &s in &sources {
                    v += self.values[base + s];
                    d += self.r_derivative[base + s];
                }
                out.values[base + flat] = v / norm;
                out.r_derivative[base + flat] = d / norm;
            }
        }
        out
    }

    /// Largest deviation from symmetry under block permutations.
    pub fn symmetry_defect(&self) -> f64 {
        self.max_abs_diff(&self.symmetrize())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.m, self.n), (other.m, other.n));
        self.values
            .iter()
            .zip(&other.values)
            .chain(self.r_derivative.iter().zip(&other.r_derivative))
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().chain(out.r_derivative.iter_mut()).for_each(|x| *x *= a);
        out
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!((self.m, self.n, self.values.len()), (x.m, x.n, x.values.len()));
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        for (s, v) in self.r_derivative.iter_mut().zip(&x.r_derivative) {
            *s += a * v;
        }
    }

    /// `w_{n,m}` with the blocks swapped, the adjoint kernel for real data.
    pub fn adjoint(&self) -> Self {
        let (m, n) = (self.m, self.n);
        let mut out = Self::zeros(n, m, &self.grid);
        let tuples = self.tuples();
        let mut idx = vec![0; m + n];
        let mut sw = vec![0; m + n];
        for flat in 0..tuples {
            self.grid.decode(flat, &mut idx);
            sw[..n].copy_from_slice(&idx[m..]);
            sw[n..].copy_from_slice(&idx[..m]);
            let g = self.grid.encode(&sw);
            for ir in 0..self.grid.n_r() {
                out.values[ir * tuples + g] = self.values[ir * tuples + flat];
                out.r_derivative[ir * tuples + g] = self.r_derivative[ir * tuples + flat];
            }
        }
        out
    }

    /// Largest relative gap between the stored `∂_r` channel and centered
    /// differences of the value channel, over interior r-samples inside `Q`.
    pub fn derivative_consistency(&self) -> f64 {
        let tuples = self.tuples();
        let h = self.grid.spacing();
        let scale = self.derivative_sup_norm().max(self.sup_norm()).max(f64::MIN_POSITIVE);
        let mut idx = vec![0; self.degree()];
        let mut worst = 0.0f64;
        for flat in 0..tuples {
            self.grid.decode(flat, &mut idx);
            let k: Vec<f64> = idx.iter().map(|&i| self.grid.node(i)).collect();
            for ir in 1..self.grid.n_r() - 1 {
                let rr = |j: usize| self.grid.r[j];
                if !in_q(rr(ir + 1), &k[..self.m], &k[self.m..]) {
                    break;
                }
                let fd = (self.values[(ir + 1) * tuples + flat] - self.values[(ir - 1) * tuples + flat]) / (2.0 * h);
                worst = worst.max((fd - self.r_derivative[ir * tuples + flat]).abs() / scale);
            }
        }
        worst
    }
}

fn hermite(t: f64, h: f64, v0: f64, d0: f64, v1: f64, d1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * v0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * v1
        + (t3 - t2) * h * d1;
    let deriv = ((6.0 * t2 - 6.0 * t) * v0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
        + (-6.0 * t2 + 6.0 * t) * v1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h;
    (value, deriv)
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Ball coordinates `(α, β, γ)` of a kernel sequence or family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    /// `sup |∂_r w_{0,0} − 1|`.
    pub alpha: f64,
    /// `|w_{0,0}(0)|` for a fixed spectral parameter, `sup_z |w_{0,0}(z,0) + z|` for families.
    pub beta: f64,
    /// `‖w_{≥1}‖_ξ^#`.
    pub gamma: f64,
}

impl BallParams {
    pub fn within(&self, alpha: f64, beta: f64, gamma: f64) -> bool {
        self.alpha <= alpha && self.beta <= beta && self.gamma <= gamma
    }
}

/// Truncated kernel sequence `(w_{m,n})_{m+n ≤ max_degree}`; `w_{0,0}` is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSequence {
    pub grid: Arc<KernelGrid>,
    pub xi: f64,
    pub max_degree: usize,
    pub entries: BTreeMap<(usize, usize), Kernel>,
}

impl KernelSequence {
    pub fn new(w00: Kernel, xi: f64, max_degree: usize) -> Self {
        assert_eq!((w00.m, w00.n), (0, 0));
        let grid = w00.grid.clone();
        let mut entries = BTreeMap::new();
        entries.insert((0, 0), w00);
        Self { grid, xi, max_degree, entries }
    }

    /// The fixed point `w*`: `w_{0,0}(r) = r − z`, all other kernels zero.
    pub fn free(grid: &Arc<KernelGrid>, xi: f64, max_degree: usize, z: f64) -> Self {
        Self::new(Kernel::from_fn(0, 0, grid, |r, _| (r - z, 1.0)), xi, max_degree)
    }

    pub fn w00(&self) -> &Kernel {
        &self.entries[&(0, 0)]
    }

    pub fn get(&self, m: usize, n: usize) -> Option<&Kernel> {
        self.entries.get(&(m, n))
    }

    pub fn insert(&mut self, k: Kernel) -> Result<(), KernelError> {
        if k.degree() > self.max_degree {
            return Err(KernelError::DegreeOverflow { m: k.m, n: k.n, max: self.max_degree });
        }
        if k.grid != self.grid {
            return Err(KernelError::SequenceMismatch);
        }
        self.entries.insert((k.m, k.n), k);
        Ok(())
    }

    /// Drops identically-zero entries other than `w_{0,0}`.
    pub fn prune(&mut self) {
        self.entries.retain(|&(m, n), k| (m, n) == (0, 0) || !k.is_zero());
    }

    pub fn xi_norm(&self) -> f64 {
        self.entries.values().map(|k| self.xi.powi(-(k.degree() as i32)) * k.sharp_norm()).sum()
    }

    /// `‖w_{≥r}‖_ξ^#`.
    pub fn xi_norm_geq(&self, r: usize) -> f64 {
        self.entries
            .values()
            .filter(|k| k.degree() >= r)
            .map(|k| self.xi.powi(-(k.degree() as i32)) * k.sharp_norm())
            .sum()
    }

    /// The sequence `w_{≥r}` (entries below degree `r` zeroed; `w_{0,0}` kept as zero).
    pub fn geq(&self, r: usize) -> Self {
        let mut out = self.clone();
        for k in out.entries.values_mut() {
            if k.degree() < r {
                *k = Kernel::zeros(k.m, k.n, &self.grid);
            }
        }
        out
    }

    pub fn is_even(&self) -> bool {
        self.entries.values().all(|k| k.degree() % 2 == 0 || k.is_zero())
    }

    pub fn symmetrize(&self) -> Self {
        let mut out = self.clone();
        for k in out.entries.values_mut() {
            *k = k.symmetrize();
        }
        out
    }

    /// Largest gap between `w_{m,n}` and the block-swapped `w_{n,m}`; zero for self-adjoint `H(w)`.
    pub fn adjoint_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (&(m, n), k) in &self.entries {
            let swapped = k.adjoint();
            worst = worst.max(match self.get(n, m) {
                Some(other) => other.max_abs_diff(&swapped),
                None => swapped.sup_norm().max(swapped.derivative_sup_norm()),
            });
        }
        worst
    }

    /// Ball coordinates at a fixed spectral parameter (`β = |w_{0,0}(0)|`).
    pub fn ball(&self) -> BallParams {
        let w = self.w00();
        BallParams {
            alpha: w.r_derivative.iter().fold(0.0, |a, &d| a.max((d - 1.0).abs())),
            beta: w.values[0].abs(),
            gamma: self.xi_norm_geq(1),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let keys: std::collections::BTreeSet<_> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .map(|&(m, n)| match (self.get(m, n), other.get(m, n)) {
                (Some(a), Some(b)) => a.max_abs_diff(b),
                (Some(a), None) | (None, Some(a)) => a.sup_norm().max(a.derivative_sup_norm()),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

impl KernelSource for KernelSequence {
    fn has(&self, m: usize, n: usize) -> bool {
        self.get(m, n).is_some_and(|k| !k.is_zero())
    }

    fn eval(&self, m: usize, n: usize, r: f64, k: &[f64]) -> (f64, f64) {
        self.get(m, n).map_or((0.0, 0.0), |w| w.eval(r, k))
    }

    fn supports(&self, k: f64) -> bool {
        self.grid.supports(k)
    }

    fn max_degree(&self) -> usize {
        self.max_degree
    }
}

/// Kernel sequences sampled at Chebyshev-Lobatto nodes of a real spectral-parameter interval.
#[derive(Debug, Clone)]
pub struct ParamKernelSequence {
    pub z_min: f64,
    pub z_max: f64,
    pub z: Vec<f64>,
    pub seqs: Vec<KernelSequence>,
    interp: Barycentric,
}

impl PartialEq for ParamKernelSequence {
    fn eq(&self, other: &Self) -> bool {
        self.z_min == other.z_min && self.z_max == other.z_max && self.z == other.z && self.seqs == other.seqs
    }
}

impl ParamKernelSequence {
    pub fn build<F, E>(z_min: f64, z_max: f64, n_z: usize, f: F) -> Result<Self, E>
    where
        F: Fn(f64) -> Result<KernelSequence, E>,
    {
        let interp = Barycentric::chebyshev(z_min, z_max, n_z);
        let z = interp.nodes.clone();
        let seqs = z.iter().map(|&z| f(z)).collect::<Result<Vec<_>, E>>()?;
        Ok(Self { z_min, z_max, z, seqs, interp })
    }

    pub fn from_parts(z_min: f64, z_max: f64, seqs: Vec<KernelSequence>) -> Self {
        let interp = Barycentric::chebyshev(z_min, z_max, seqs.len());
        let z = interp.nodes.clone();
        Self { z_min, z_max, z, seqs, interp }
    }

    pub fn grid(&self) -> &Arc<KernelGrid> {
        &self.seqs[0].grid
    }

    /// Kernel sequence at an arbitrary `z` by barycentric interpolation of every array.
    pub fn at(&self, z: f64) -> KernelSequence {
        if let Some(i) = self.interp.node_at(z) {
            return self.seqs[i].clone();
        }
        let c = self.interp.coefficients(z);
        self.combine(&c)
    }

    /// `∂_z` of the family at `z`, as a kernel sequence.
    pub fn dz_at(&self, z: f64) -> KernelSequence {
        let c = self.interp.derivative_coefficients(z);
        self.combine(&c)
    }

    fn combine(&self, c: &[f64]) -> KernelSequence {
        let mut out = self.seqs[0].clone();
        for (key, k) in out.entries.iter_mut() {
            let mut acc = Kernel::zeros(k.m, k.n, &k.grid);
            for (cj, s) in c.iter().zip(&self.seqs) {
                if let Some(src) = s.entries.get(key) {
                    acc.axpy(*cj, src);
                }
            }
            *k = acc;
        }
        out
    }

    /// `w_{0,0}(z, r)` and `∂_z w_{0,0}(z, r)` without materializing whole sequences.
    pub fn w00_at(&self, z: f64, r: f64) -> (f64, f64) {
        let vals: Vec<f64> = self.seqs.iter().map(|s| s.w00().eval(r, &[]).0).collect();
        (self.interp.eval(&vals, z), self.interp.eval_derivative(&vals, z))
    }

    /// Family ball: sup over the z-samples, with `β = sup_z |w_{0,0}(z,0) + z|`.
    pub fn ball(&self) -> BallParams {
        let mut b = BallParams { alpha: 0.0, beta: 0.0, gamma: 0.0 };
        for (z, s) in self.z.iter().zip(&self.seqs) {
            let p = s.ball();
            b.alpha = b.alpha.max(p.alpha);
            b.beta = b.beta.max((s.w00().values[0] + z).abs());
            b.gamma = b.gamma.max(p.gamma);
        }
        b
    }

    pub fn is_even(&self) -> bool {
        self.seqs.iter().all(KernelSequence::is_even)
    }

    /// Symmetric-kernel defect `sup_z max |w_{m,n} − swap(w_{n,m})|` at the real samples.
    pub fn adjoint_defect(&self) -> f64 {
        self.seqs.iter().map(KernelSequence::adjoint_defect).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};

    fn grid(m: usize, n_r: usize) -> Arc<KernelGrid> {
        KernelGrid::new(build_mode_grid(0.05, 1.0, m, GridScheme::Midpoint).unwrap(), n_r).unwrap()
    }

    #[test]
    fn nodes_outside_unit_ball_are_rejected() {
        let g = build_mode_grid(0.0, 1.5, 3, GridScheme::Midpoint).unwrap();
        assert!(matches!(KernelGrid::new(g, 9), Err(KernelError::NodeOutsideUnitBall(_))));
    }

    #[test]
    fn eval_reproduces_samples_and_cubics() {
        let g = grid(4, 9);
        let k = Kernel::from_fn(1, 1, &g, |r, k| (r * r * r - 2.0 * r + k[0] * k[1], 3.0 * r * r - 2.0));
        let (kk, kt) = (g.node(0), g.node(1));
        for &r in &[0.0, 0.03, 0.2, 0.31] {
            let (v, d) = k.eval(r, &[kk, kt]);
            assert!((v - (r * r * r - 2.0 * r + kk * kt)).abs() < 1e-14);
            assert!((d - (3.0 * r * r - 2.0)).abs() < 1e-13);
        }
        // off Q and below the infrared cutoff
        assert_eq!(k.eval(0.9, &[kk, kt]), (0.0, 0.0));
        assert_eq!(k.eval(0.1, &[0.01, kt]), (0.0, 0.0));
    }

    #[test]
    fn eval_is_multilinear_between_nodes() {
        let g = grid(5, 5);
        let k = Kernel::from_fn(1, 0, &g, |_, k| (2.0 * k[0] + 1.0, 0.0));
        let mid = 0.5 * (g.node(1) + g.node(2));
        assert!((k.eval(0.0, &[mid]).0 - (2.0 * mid + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn symmetrize_averages_pairs() {
        let g = grid(3, 3);
        let k = Kernel::from_fn(2, 0, &g, |_, k| (k[0] * k[0] * k[1], 0.0));
        let s = k.symmetrize();
        let (a, b) = (g.node(0), g.node(1));
        let want = 0.5 * (a * a * b + b * b * a);
        assert!((s.eval(0.0, &[a, b]).0 - want).abs() < 1e-15);
        assert!(s.symmetrize().max_abs_diff(&s) < 1e-16);
        assert!(s.sharp_norm() <= k.sharp_norm() + 1e-15);
    }

    #[test]
    fn constant_kernel_norms() {
        let g = grid(6, 5);
        let c = 0.7;
        let k = Kernel::from_fn(1, 1, &g, |_, _| (c, 0.0));
        assert!((k.sharp_norm() - c).abs() < 1e-15);
        let bound = c * k.simplex_measure().sqrt();
        assert!((k.l2_norm() - bound).abs() < 1e-12);
        assert!(Kernel::zeros(2, 1, &g).l2_norm() == 0.0);
    }

    #[test]
    fn free_sequence_ball_and_parity() {
        let g = grid(3, 5);
        let w = KernelSequence::free(&g, 0.25, 4, 0.1);
        let b = w.ball();
        assert_eq!((b.alpha, b.gamma), (0.0, 0.0));
        assert!((b.beta - 0.1).abs() < 1e-16);
        assert!(w.is_even());
        let p =
            ParamKernelSequence::build(-0.45, 0.45, 9, |z| Ok::<_, ()>(KernelSequence::free(&g, 0.25, 4, z))).unwrap();
        assert!(p.ball().beta < 1e-15);
        let (v, dz) = p.w00_at(0.123, 0.5);
        assert!((v - 0.377).abs() < 1e-13 && (dz + 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_channel_consistency() {
        let g = grid(3, 65);
        let k = Kernel::from_fn(0, 1, &g, |r, _| ((3.0 * r).sin(), 3.0 * (3.0 * r).cos()));
        assert!(k.derivative_consistency() < 1e-3);
        let mut bad = k.clone();
        bad.r_derivative.iter_mut().for_each(|d| *d += 1.0);
        assert!(bad.derivative_consistency() > 0.1);
    }
}
