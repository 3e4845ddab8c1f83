//! Kernel operators `H(w)` and one-factor sandwiches on a reduced Fock space.

use super::{Kernel, KernelError, KernelSequence, KernelSource};
use crate::fock::{FockSpace, SparseOperator};

/// Visits every nonzero element of `a*(x_1)…a*(x_p) a(x̃_1)…a(x̃_q) |s⟩` over
/// ordered mode tuples, passing `(target, amplitude, E_mid, x, x̃)` where
/// `E_mid` is the free energy between the two blocks.
pub fn for_each_transition<F>(space: &FockSpace, s: usize, p: usize, q: usize, f: &mut F)
where
    F: FnMut(usize, f64, f64, &[usize], &[usize]),
{
    let mut xt = Vec::with_capacity(q);
    let mut x = Vec::with_capacity(p);
    annihilate(space, s, 1.0, q, p, &mut xt, &mut x, f);
}

#[allow(clippy::too_many_arguments)]
fn annihilate<F>(
    space: &FockSpace,
    s: usize,
    amp: f64,
    left: usize,
    p: usize,
    xt: &mut Vec<usize>,
    x: &mut Vec<usize>,
    f: &mut F,
) where
    F: FnMut(usize, f64, f64, &[usize], &[usize]),
{
    if left == 0 {
        let e = space.energy(s);
        create(space, s, amp, e, p, x, xt, f);
        return;
    }
    for j in 0..space.n_modes() {
        if let Some(u) = space.lowered(s, j) {
            let n = space.occupation(s, j) as f64;
            xt.push(j);
            annihilate(space, u, amp * n.sqrt(), left - 1, p, xt, x, f);
            xt.pop();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn create<F>(space: &FockSpace, s: usize, amp: f64, e: f64, left: usize, x: &mut Vec<usize>, xt: &[usize], f: &mut F)
where
    F: FnMut(usize, f64, f64, &[usize], &[usize]),
{
    if left == 0 {
        f(s, amp, e, x, xt);
        return;
    }
    for i in 0..space.n_modes() {
        if let Some(t) = space.raised(s, i) {
            let n = space.occupation(s, i) as f64;
            x.push(i);
            create(space, t, amp * (n + 1.0).sqrt(), e, left - 1, x, xt, f);
            x.pop();
        }
    }
}

pub(crate) fn check_space(modes: &crate::fock::ModeGrid, space: &FockSpace) -> Result<(), KernelError> {
    if space.grid.nodes != modes.nodes || space.grid.weights != modes.weights {
        return Err(KernelError::GridMismatch);
    }
    if space.with_spin {
        return Err(KernelError::NotReduced);
    }
    Ok(())
}

fn require_reduced(space: &FockSpace) -> Result<(), KernelError> {
    match space.energy_cap {
        Some(c) if c <= 1.0 + 1e-12 => Ok(()),
        _ => Err(KernelError::NotReduced),
    }
}

/// `H_{m,n}` of a closed-form or stored family.
pub fn assemble_source(
    source: &dyn KernelSource,
    m: usize,
    n: usize,
    space: &FockSpace,
) -> Result<SparseOperator, KernelError> {
    let nodes = &space.grid.nodes;
    let coupling: Vec<f64> = nodes.iter().zip(&space.grid.weights).map(|(k, w)| (w / k).sqrt()).collect();
    let mut triplets = Vec::new();
    let mut args = vec![0.0; m + n];
    for s in 0..space.dim() {
        for_each_transition(space, s, m, n, &mut |t, amp, e, x, xt| {
            for (a, &i) in args.iter_mut().zip(x.iter().chain(xt)) {
                *a = nodes[i];
            }
            let w = source.eval(m, n, e, &args).0;
            if w != 0.0 {
                let c: f64 = x.iter().chain(xt).map(|&i| coupling[i]).product();
                triplets.push((t, s, amp * c * w));
            }
        });
    }
    Ok(SparseOperator::from_triplets(space.dim(), triplets))
}

struct Single<'a>(&'a Kernel);

impl KernelSource for Single<'_> {
    fn has(&self, m: usize, n: usize) -> bool {
        (m, n) == (self.0.m, self.0.n)
    }
    fn eval(&self, _: usize, _: usize, r: f64, k: &[f64]) -> (f64, f64) {
        self.0.eval(r, k)
    }
    fn supports(&self, k: f64) -> bool {
        self.0.grid.supports(k)
    }
    fn max_degree(&self) -> usize {
        self.0.degree()
    }
}

/// `H_{m,n}(w)` on a space whose free energy is capped at 1.
pub fn assemble_kernel(kernel: &Kernel, space: &FockSpace) -> Result<SparseOperator, KernelError> {
    check_space(&kernel.grid.modes, space)?;
    require_reduced(space)?;
    assemble_source(&Single(kernel), kernel.m, kernel.n, space)
}

/// `H(w) = Σ_{m,n} H_{m,n}(w)`.
pub fn assemble_operator(seq: &KernelSequence, space: &FockSpace) -> Result<SparseOperator, KernelError> {
    let mut acc = SparseOperator::zeros(space.dim());
    for k in seq.entries.values() {
        if !k.is_zero() {
            acc = acc.linear_combination(1.0, &assemble_kernel(k, space)?, 1.0);
        }
    }
    acc.hermitian = seq.adjoint_defect() == 0.0;
    Ok(acc)
}

/// `W_{p,q}^{m,n}[w](r, K) = P ∫ a*(x) w_{m+p,n+q}(H_f + r, x, k, x̃, k̃) a(x̃) P`
/// with `K = (k, k̃)` given as magnitudes, creation block first.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_op(
    source: &dyn KernelSource,
    p: usize,
    q: usize,
    m: usize,
    n: usize,
    r: f64,
    ext: &[f64],
    space: &FockSpace,
) -> Result<SparseOperator, KernelError> {
    assert_eq!(ext.len(), m + n);
    let nodes = &space.grid.nodes;
    let coupling: Vec<f64> = nodes.iter().zip(&space.grid.weights).map(|(k, w)| (w / k).sqrt()).collect();
    let (em, en) = ext.split_at(m);
    let mut args = vec![0.0; m + n + p + q];
    let mut triplets = Vec::new();
    for s in 0..space.dim() {
        for_each_transition(space, s, p, q, &mut |t, amp, e, x, xt| {
            for (slot, &i) in args[..p].iter_mut().zip(x) {
                *slot = nodes[i];
            }
            args[p..p + m].copy_from_slice(em);
            for (slot, &i) in args[p + m..p + m + q].iter_mut().zip(xt) {
                *slot = nodes[i];
            }
            args[p + m + q..].copy_from_slice(en);
            let w = source.eval(m + p, n + q, e + r, &args).0;
            if w != 0.0 {
                let c: f64 = x.iter().chain(xt).map(|&i| coupling[i]).product();
                triplets.push((t, s, amp * c * w));
            }
        });
    }
    Ok(SparseOperator::from_triplets(space.dim(), triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, free_field_op, GridScheme};
    use crate::kernel::KernelGrid;
    use std::sync::Arc;

    fn setup() -> (Arc<KernelGrid>, FockSpace) {
        let g = build_mode_grid(0.1, 1.0, 5, GridScheme::Midpoint).unwrap();
        (KernelGrid::new(g.clone(), 17).unwrap(), FockSpace::reduced(g))
    }

    #[test]
    fn identity_symbol_assembles_to_field_energy() {
        let (g, sp) = setup();
        let w = KernelSequence::free(&g, 0.25, 2, 0.0);
        let h = assemble_operator(&w, &sp).unwrap();
        assert!(h.max_abs_diff(&free_field_op(&sp)) < 1e-14);
    }

    #[test]
    fn vacuum_expectation_is_w00_at_zero() {
        let (g, sp) = setup();
        let mut w = KernelSequence::new(Kernel::from_fn(0, 0, &g, |r, _| (0.3 - r * r, -2.0 * r)), 0.25, 4);
        w.insert(Kernel::from_fn(1, 1, &g, |r, k| (r + k[0] * k[1], 1.0))).unwrap();
        w.insert(Kernel::from_fn(2, 0, &g, |_, k| (k[0] + k[1], 0.0))).unwrap();
        w.insert(Kernel::from_fn(0, 2, &g, |_, k| (k[0] + k[1], 0.0))).unwrap();
        let h = assemble_operator(&w, &sp).unwrap();
        assert!((h.get(0, 0) - 0.3).abs() < 1e-15);
        assert!(h.hermitian && h.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn one_particle_matrix_elements() {
        let (g, sp) = setup();
        let k = Kernel::from_fn(1, 1, &g, |r, k| (1.0 + r + k[0] - k[1], 1.0));
        let h = assemble_kernel(&k, &sp).unwrap();
        let (i, j) = (1, 3);
        let mut occ = vec![0u16; 5];
        occ[i] = 1;
        let si = sp.find(&occ).unwrap();
        occ[i] = 0;
        occ[j] = 1;
        let sj = sp.find(&occ).unwrap();
        let c = g.coupling(i) * g.coupling(j);
        let want = c * (1.0 + g.node(i) - g.node(j));
        assert!((h.get(si, sj) - want).abs() < 1e-15);
    }

    #[test]
    fn sandwich_without_internal_momenta_is_a_function_of_hf() {
        let (g, sp) = setup();
        let k = Kernel::from_fn(1, 1, &g, |r, k| (r * k[0] + k[1], k[0]));
        let mut w = KernelSequence::free(&g, 0.25, 2, 0.0);
        w.insert(k).unwrap();
        let (a, b) = (g.node(0), g.node(2));
        let op = sandwich_op(&w, 0, 0, 1, 1, 0.05, &[a, b], &sp).unwrap();
        let want = sp.function_of_hf(|e| w.eval(1, 1, e + 0.05, &[a, b]).0);
        assert!(op.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn spin_spaces_are_rejected() {
        let (g, _) = setup();
        let sp = FockSpace::energy_capped(g.modes.clone(), 1.0, 3, true);
        let k = Kernel::zeros(0, 0, &g);
        assert!(matches!(assemble_kernel(&k, &sp), Err(KernelError::NotReduced)));
    }
}
