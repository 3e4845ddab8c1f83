//! Vacuum expectations of alternating products `F_0 W F_1 W … W F_L` of
//! smooth functions of `H_f` and one-factor sandwiches, evaluated as kernels
//! of the external momenta.
//!
//! This is the single engine behind the generalized Wick recomposition, the
//! renormalization map and the kernels produced by the first Feshbach step.
//! Factors are applied right to left starting from the vacuum; partial chains
//! that consumed the same external blocks are merged before the next factor.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::assemble::{check_space, for_each_transition};
use super::{in_q, Kernel, KernelError, KernelGrid, KernelSequence, KernelSource};
use crate::fock::FockSpace;

/// A real function of one variable returning `(F(x), F'(x))`.
pub type Profile<'a> = &'a (dyn Fn(f64) -> (f64, f64) + Sync);

/// Functions placed between consecutive sandwiches.
pub enum Inner<'a> {
    /// One function for every slot (chains of any length).
    Uniform(Profile<'a>),
    /// `F_1 … F_{L−1}` for a chain of fixed length `L`.
    Listed(Vec<Profile<'a>>),
}

/// Value and `∂_r` channels of a Fock vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
}

impl Dual {
    fn zeros(n: usize) -> Self {
        Self { v: vec![0.0; n], d: vec![0.0; n] }
    }

    fn is_zero(&self) -> bool {
        self.v.iter().chain(&self.d).all(|&x| x == 0.0)
    }
}

pub struct Chain<'a> {
    pub source: &'a dyn KernelSource,
    pub space: &'a FockSpace,
    /// Dilation applied to `r` and to the external momenta (1 for plain products, ρ for `R_ρ`).
    pub scale: f64,
    pub first: Profile<'a>,
    pub last: Profile<'a>,
    pub inner: Inner<'a>,
    /// Inclusive range of chain lengths `L`.
    pub lengths: (usize, usize),
    /// Weight each length by `(−1)^{L−1}`.
    pub alternating: bool,
    /// Inclusive range of `m+p+n+q` for a single sandwich.
    pub factor_degree: (usize, usize),
}

struct FactorOpt {
    m: usize,
    n: usize,
    p: usize,
    q: usize,
    weight: f64,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Chain<'_> {
    fn inner_at(&self, slot: usize) -> Profile<'_> {
        match &self.inner {
            Inner::Uniform(f) => *f,
            Inner::Listed(fs) => fs[slot - 1],
        }
    }

    fn options(&self, free_m: usize, free_n: usize) -> Vec<FactorOpt> {
        let (lo, hi) = self.factor_degree;
        let hi = hi.min(self.source.max_degree());
        let mut out = Vec::new();
        for m in 0..=free_m {
            for n in 0..=free_n {
                for p in 0..=hi.saturating_sub(m + n) {
                    for q in 0..=hi.saturating_sub(m + n + p) {
                        let d = m + n + p + q;
                        if d < lo || d > hi || !self.source.has(m + p, n + q) {
                            continue;
                        }
                        out.push(FactorOpt { m, n, p, q, weight: binom(m + p, p) * binom(n + q, q) });
                    }
                }
            }
        }
        out
    }

    /// Kernel of the chain at `(r, K)`, `K` holding `mm` creation then `nn`
    /// annihilation magnitudes (unscaled). Returns value and `∂_r`.
    pub fn eval(&self, mm: usize, nn: usize, r: f64, k: &[f64]) -> (f64, f64) {
        assert_eq!(k.len(), mm + nn);
        let s = self.scale;
        let ks: Vec<f64> = k.iter().map(|x| s * x).collect();
        if ks.iter().any(|&x| !self.source.supports(x)) {
            return (0.0, 0.0);
        }
        let (kc, ka) = ks.split_at(mm);
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let sp = self.space;
        let dim = sp.dim();
        let nodes = &sp.grid.nodes;
        let coupling: Vec<f64> = nodes.iter().zip(&sp.grid.weights).map(|(k, w)| (w / k).sqrt()).collect();
        let qmax = self.factor_degree.1.min(self.source.max_degree());

        let (lv, ld) = (self.last)(s * r + sum(ka));
        let mut start = Dual::zeros(dim);
        start.v[sp.vacuum()] = lv;
        start.d[sp.vacuum()] = s * ld;
        let mut frontier: BTreeMap<(usize, usize), Dual> = BTreeMap::new();
        frontier.insert((0, 0), start);

        let mut total = (0.0, 0.0);
        let mut args = Vec::with_capacity(16);
        for depth in 1..=self.lengths.1 {
            let mut next: BTreeMap<(usize, usize), Dual> = BTreeMap::new();
            for (&(a, b), vec) in &frontier {
                for opt in self.options(mm - a, nn - b) {
                    let shift = s * r + sum(&ka[..nn - b - opt.n]) + sum(&kc[mm - a..]);
                    let blk_c = &kc[mm - a - opt.m..mm - a];
                    let blk_a = &ka[nn - b - opt.n..nn - b];
                    let out = next.entry((a + opt.m, b + opt.n)).or_insert_with(|| Dual::zeros(dim));
                    let (deg_c, deg_a) = (opt.m + opt.p, opt.n + opt.q);
                    for st in 0..dim {
                        let (v0, d0) = (vec.v[st], vec.d[st]);
                        if v0 == 0.0 && d0 == 0.0 {
                            continue;
                        }
                        for_each_transition(sp, st, opt.p, opt.q, &mut |t, amp, e, x, xt| {
                            args.clear();
                            args.extend(x.iter().map(|&i| nodes[i]));
                            args.extend_from_slice(blk_c);
                            args.extend(xt.iter().map(|&i| nodes[i]));
                            args.extend_from_slice(blk_a);
                            let (w, dw) = self.source.eval(deg_c, deg_a, e + shift, &args);
                            if w == 0.0 && dw == 0.0 {
                                return;
                            }
                            let c: f64 = x.iter().chain(xt).map(|&i| coupling[i]).product::<f64>() * amp * opt.weight;
                            out.v[t] += c * w * v0;
                            out.d[t] += c * (w * d0 + s * dw * v0);
                        });
                    }
                }
            }
            next.retain(|_, v| !v.is_zero());
            if depth >= self.lengths.0 {
                if let Some(v) = next.get(&(mm, nn)) {
                    let sign = if self.alternating && depth % 2 == 0 { -1.0 } else { 1.0 };
                    let (fv, fd) = (self.first)(s * r + sum(kc));
                    let vac = sp.vacuum();
                    total.0 += sign * fv * v.v[vac];
                    total.1 += sign * (fv * v.d[vac] + s * fd * v.v[vac]);
                }
            }
            if depth == self.lengths.1 || next.is_empty() {
                break;
            }
            // F_{L−depth} for fixed-length chains; the uniform profile otherwise.
            let f = self.inner_at(self.lengths.1 - depth);
            let budget = (self.lengths.1 - depth) * qmax;
            for (&(a, b), vec) in next.iter_mut() {
                let rt = s * r + sum(&ka[..nn - b]) + sum(&kc[mm - a..]);
                for st in 0..dim {
                    if sp.number(st) > budget {
                        vec.v[st] = 0.0;
                        vec.d[st] = 0.0;
                        continue;
                    }
                    if vec.v[st] == 0.0 && vec.d[st] == 0.0 {
                        continue;
                    }
                    let (fv, fd) = f(sp.energy(st) + rt);
                    let v0 = vec.v[st];
                    vec.v[st] = fv * v0;
                    vec.d[st] = fv * vec.d[st] + s * fd * v0;
                }
            }
            frontier = next;
        }
        total
    }

    /// The `(m, n)` output kernel sampled on `Q_{m,n}`, times `prefactor`, symmetrized.
    pub fn kernel(&self, grid: &Arc<KernelGrid>, m: usize, n: usize, prefactor: f64) -> Kernel {
        let tuples = grid.tuples(m + n);
        let columns: Vec<Vec<(f64, f64)>> = (0..tuples)
            .into_par_iter()
            .map(|flat| {
                let mut idx = vec![0; m + n];
                grid.decode(flat, &mut idx);
                let k: Vec<f64> = idx.iter().map(|&i| grid.node(i)).collect();
                grid.r
                    .iter()
                    .map(|&r| {
                        if !in_q(r, &k[..m], &k[m..]) {
                            return (0.0, 0.0);
                        }
                        let (v, d) = self.eval(m, n, r, &k);
                        (prefactor * v, prefactor * d)
                    })
                    .collect()
            })
            .collect();
        let mut out = Kernel::zeros(m, n, grid);
        for (flat, col) in columns.into_iter().enumerate() {
            for (ir, (v, d)) in col.into_iter().enumerate() {
                out.values[ir * tuples + flat] = v;
                out.r_derivative[ir * tuples + flat] = d;
            }
        }
        out.symmetrize()
    }
}

/// Kernel sequence of `F_0 H(w_{≥1}) F_1 … H(w_{≥1}) F_L` together with the
/// output degrees that exceed the truncation and were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct WickOutput {
    pub seq: KernelSequence,
    pub dropped: Vec<(usize, usize)>,
}

/// Generalized Wick recomposition of a product with `L = profiles.len() − 1`
/// sandwiches of `w_{≥1}`. Each profile is applied at `H_f + r + r̃_l`; the
/// output lives on `grid` with truncation `max_degree`.
pub fn wick_recompose(
    profiles: &[Profile],
    source: &dyn KernelSource,
    grid: &Arc<KernelGrid>,
    xi: f64,
    max_degree: usize,
    space: &FockSpace,
) -> Result<WickOutput, KernelError> {
    check_space(&grid.modes, space)?;
    let l = profiles.len() - 1;
    assert!(l >= 1, "a product needs at least one factor");
    let chain = Chain {
        source,
        space,
        scale: 1.0,
        first: profiles[0],
        last: profiles[l],
        inner: Inner::Listed(profiles[1..l].to_vec()),
        lengths: (l, l),
        alternating: false,
        factor_degree: (1, source.max_degree()),
    };
    let top = source.max_degree();
    let mut out = KernelSequence::new(Kernel::zeros(0, 0, grid), xi, max_degree);
    let mut dropped = Vec::new();
    for deg in 0..=(l * top) {
        for m in 0..=deg {
            let n = deg - m;
            if deg > max_degree {
                dropped.push((m, n));
                continue;
            }
            out.insert(chain.kernel(grid, m, n, 1.0))?;
        }
    }
    out.prune();
    Ok(WickOutput { seq: out, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::kernel::{assemble_kernel, assemble_operator};

    fn id(x: f64) -> (f64, f64) {
        let _ = x;
        (1.0, 0.0)
    }

    #[test]
    fn single_factor_with_unit_profiles_reproduces_the_sequence() {
        let g = build_mode_grid(0.1, 1.0, 4, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let sp = FockSpace::reduced(g);
        let taper = |r: f64, s: f64| (1.0 - r - s).max(0.0).powi(4);
        let mut w = KernelSequence::new(Kernel::zeros(0, 0, &kg), 0.25, 2);
        w.insert(Kernel::from_fn(1, 1, &kg, |r, k| (taper(r, k[0].max(k[1])), 0.0)).symmetrize()).unwrap();
        w.insert(Kernel::from_fn(1, 0, &kg, |r, k| (k[0] * taper(r, k[0]), 0.0))).unwrap();
        let f: Profile = &id;
        let out = wick_recompose(&[f, f], &w, &kg, 0.25, 2, &sp).unwrap();
        assert!(out.dropped.is_empty());
        for ((m, n), k) in &w.entries {
            if (*m, *n) == (0, 0) {
                continue;
            }
            let got = out.seq.get(*m, *n).unwrap();
            let (a, b) = (assemble_kernel(got, &sp).unwrap(), assemble_kernel(k, &sp).unwrap());
            assert!(a.max_abs_diff(&b) < 1e-14, "({m},{n})");
        }
        let h = assemble_operator(&out.seq, &sp).unwrap();
        assert!(h.get(0, 0).abs() < 1e-15);
    }
}
