//! One application of the renormalization map.

use serde::{Deserialize, Serialize};

use crate::fock::{FockSpace, SparseOperator};
use crate::kernel::{
    assemble_kernel, assemble_operator, BallParams, Chain, Inner, Kernel, KernelSequence, ParamKernelSequence,
};

use super::cutoff::CutoffPair;
use super::energy::{derivative_defect_bound, energy_derivative_defect, invert_energy_map};
use super::params::RgParams;
use super::RgError;

/// Diagnostics of one fixed-`z` step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpReport {
    pub ball_in: BallParams,
    pub ball_out: BallParams,
    /// Neumann depth used.
    pub depth: usize,
    /// Certified bound on the omitted terms `L > depth`.
    pub tail_bound: f64,
    /// `min |w_{0,0}|` on `[3ρ/4, 1]`; must be at least `3ρ/16`.
    pub gate_min_w00: f64,
    /// `sup |χ̄_ρ²/w_{0,0}|`; bounded by `16/(3ρ)` inside the ball.
    pub middle_sup: f64,
    /// `‖(H_{0,0} ↾ Ran χ̄_ρ)^{-1}‖`.
    pub t_inv_norm: f64,
    /// `‖H_{0,0}^{-1} χ̄_ρ W‖` and `‖W H_{0,0}^{-1} χ̄_ρ‖`.
    pub mixed_norms: (f64, f64),
}

/// Certified Neumann tail `Σ_{L>depth} C_L [t^{-L} + (ξ/t)^L] γ^L`.
pub fn tail_bound(params: &RgParams, cut: &CutoffPair, gamma: f64, depth: usize) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let t = params.t();
    let (a, b) = (gamma / t, params.xi * gamma / t);
    if a >= 1.0 || b >= 1.0 {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for l in depth + 1..depth + 10_000 {
        let term = RgParams::c_l(cut, l) * (a.powi(l as i32) + b.powi(l as i32));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn w00_extended(w00: &Kernel, x: f64) -> (f64, f64) {
    if x <= 1.0 {
        w00.eval(x.max(0.0), &[])
    } else {
        (w00.eval(1.0, &[]).0, 0.0)
    }
}

fn pair_gate(w: &KernelSequence, cut: &CutoffPair, space: &FockSpace) -> Result<(f64, (f64, f64)), RgError> {
    let w00 = w.w00();
    let mut inv = vec![0.0; space.dim()];
    let mut t_inv_norm = 0.0f64;
    for (s, slot) in inv.iter_mut().enumerate() {
        let e = space.energy(s);
        let cb = cut.chibar(e).0;
        if cb > 0.0 {
            let t = w00_extended(w00, e).0;
            t_inv_norm = t_inv_norm.max(1.0 / t.abs());
            *slot = cb / t;
        }
    }
    let d = SparseOperator::diagonal(&inv);
    let full = assemble_operator(w, space)?;
    let wop = full.linear_combination(1.0, &assemble_kernel(w00, space)?, -1.0);
    Ok((t_inv_norm, (d.matmul(&wop).op_norm(), wop.matmul(&d).op_norm())))
}

/// `R_ρ^#` at a fixed spectral parameter: Feshbach map for `χ_ρ(H_f)` with
/// `T = H_{0,0}(w)`, followed by the dilation `(r, K) ↦ (ρr, ρK)`.
pub fn renormalize_sharp(
    w: &KernelSequence,
    params: &RgParams,
    cut: &CutoffPair,
    space: &FockSpace,
) -> Result<(KernelSequence, SharpReport), RgError> {
    let rho = params.rho;
    let ball_in = w.ball();
    for (what, value, bound) in
        [("alpha", ball_in.alpha, rho / 8.0), ("beta", ball_in.beta, rho / 2.0), ("gamma", ball_in.gamma, rho / 8.0)]
    {
        if value > bound {
            return Err(RgError::Ball { what, value, bound });
        }
    }
    let w00 = w.w00();
    let t = params.t();
    let lo = 0.75 * rho;
    let gate_min_w00 = (0..=2000)
        .map(|i| w00_extended(w00, lo + (1.0 - lo) * i as f64 / 2000.0).0.abs())
        .chain(w.grid.r.iter().filter(|&&r| r >= lo).map(|&r| w00.eval(r, &[]).0.abs()))
        .fold(f64::INFINITY, f64::min);
    if gate_min_w00 < t {
        return Err(RgError::Gate { min: gate_min_w00, bound: t });
    }
    let (t_inv_norm, mixed_norms) = pair_gate(w, cut, space)?;
    if t_inv_norm > 1.0 / t || mixed_norms.0 >= 2.0 / 3.0 || mixed_norms.1 >= 2.0 / 3.0 {
        return Err(RgError::Pair(format!(
            "|T^-1| = {t_inv_norm:e} (limit {:e}), mixed norms {:e}, {:e} (limit 2/3)",
            1.0 / t,
            mixed_norms.0,
            mixed_norms.1
        )));
    }

    let gamma = ball_in.gamma;
    let tol = params.tail_tolerance * gamma;
    let depth = if gamma == 0.0 {
        1
    } else {
        (1..=params.l_max).find(|&l| tail_bound(params, cut, gamma, l) <= tol).ok_or(RgError::Tail {
            tail: tail_bound(params, cut, gamma, params.l_max),
            tol,
            depth: params.l_max,
        })?
    };

    let outer = |x: f64| cut.chi(x);
    let middle = |x: f64| {
        let (cb, dcb) = cut.chibar(x);
        if cb == 0.0 {
            return (0.0, 0.0);
        }
        let (v, dv) = w00_extended(w00, x);
        (cb * cb / v, (2.0 * cb * dcb * v - cb * cb * dv) / (v * v))
    };
    let middle_sup = (0..=2000).map(|i| middle(i as f64 / 2000.0).0.abs()).fold(0.0, f64::max);
    let chain = Chain {
        source: w,
        space,
        scale: rho,
        first: &outer,
        last: &outer,
        inner: Inner::Uniform(&middle),
        lengths: (1, depth),
        alternating: true,
        factor_degree: (1, w.max_degree),
    };
    let even = w.is_even();
    let mut out = KernelSequence::new(Kernel::zeros(0, 0, &w.grid), w.xi, w.max_degree);
    for deg in 0..=w.max_degree {
        if even && deg % 2 == 1 {
            continue;
        }
        for m in 0..=deg {
            let n = deg - m;
            let mut k = chain.kernel(&w.grid, m, n, rho.powi(deg as i32 - 1));
            if deg == 0 {
                let scaled = Kernel::from_fn(0, 0, &w.grid, |r, _| {
                    let (v, d) = w00.eval(rho * r, &[]);
                    (v / rho, d)
                });
                k.axpy(1.0, &scaled);
            }
            out.insert(k)?;
        }
    }
    let ball_out = out.ball();
    Ok((
        out,
        SharpReport {
            ball_in,
            ball_out,
            depth,
            tail_bound: tail_bound(params, cut, gamma, depth),
            gate_min_w00,
            middle_sup,
            t_inv_norm,
            mixed_norms,
        },
    ))
}

/// Diagnostics of one step of the full map on a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub ball_in: BallParams,
    pub ball_out: BallParams,
    /// `E_ρ[w]^{-1}(ζ_j)` for every output node `ζ_j`.
    pub preimages: Vec<f64>,
    pub energy_defect: f64,
    pub energy_defect_bound: f64,
    pub sharp: Vec<SharpReport>,
}

/// `R_ρ` on a family: pull back through `E_ρ[w]^{-1}` and apply `R_ρ^#` at
/// every output node.
pub fn renormalize(
    pw: &ParamKernelSequence,
    params: &RgParams,
    cut: &CutoffPair,
    space: &FockSpace,
) -> Result<(ParamKernelSequence, StepReport), RgError> {
    let rho = params.rho;
    let ball_in = pw.ball();
    for (what, value) in [("alpha", ball_in.alpha), ("beta", ball_in.beta), ("gamma", ball_in.gamma)] {
        if value > rho / 8.0 {
            return Err(RgError::Ball { what, value, bound: rho / 8.0 });
        }
    }
    let mut seqs = Vec::with_capacity(pw.z.len());
    let mut preimages = Vec::with_capacity(pw.z.len());
    let mut sharp = Vec::with_capacity(pw.z.len());
    for &zeta in &pw.z {
        let z = invert_energy_map(pw, rho, zeta)?;
        let (s, rep) = renormalize_sharp(&pw.at(z), params, cut, space)?;
        seqs.push(s);
        preimages.push(z);
        sharp.push(rep);
    }
    let out = ParamKernelSequence::from_parts(pw.z_min, pw.z_max, seqs);
    let report = StepReport {
        ball_in,
        ball_out: out.ball(),
        preimages,
        energy_defect: energy_derivative_defect(pw),
        energy_defect_bound: derivative_defect_bound(rho),
        sharp,
    };
    Ok((out, report))
}

/// Before/after ball coordinates of one step with the contraction ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub before: BallParams,
    pub after: BallParams,
    /// `γ_out/γ_in`; zero when the numerator is roundoff.
    pub gamma_ratio: f64,
    /// `β_out/γ_in`; zero when the numerator is roundoff.
    pub beta_ratio: f64,
    pub alpha_increment: f64,
    /// `γ_out ≤ γ_in/2·(1 + tol)` and `β_out ≤ γ_in/2·(1 + tol)`.
    pub contracts: bool,
}

/// Ball coordinates below this are treated as an exact zero: it is the
/// residual allowed in the energy inversion, which bounds β after a step.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

fn ratio(num: f64, den: f64) -> f64 {
    match (num <= ROUNDOFF_FLOOR, den <= ROUNDOFF_FLOOR) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        _ => num / den,
    }
}

pub fn contraction_report(before: &ParamKernelSequence, after: &ParamKernelSequence, tol: f64) -> ContractionReport {
    let (b, a) = (before.ball(), after.ball());
    let gamma_ratio = ratio(a.gamma, b.gamma);
    let beta_ratio = ratio(a.beta, b.gamma);
    ContractionReport {
        before: b,
        after: a,
        gamma_ratio,
        beta_ratio,
        alpha_increment: a.alpha - b.alpha,
        contracts: gamma_ratio <= 0.5 * (1.0 + tol) && beta_ratio <= 0.5 * (1.0 + tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_mode_grid, GridScheme};
    use crate::kernel::KernelGrid;

    #[test]
    fn free_kernel_is_a_fixed_point() {
        let params = RgParams::default();
        let cut = params.validate().unwrap();
        let g = build_mode_grid(0.1, 1.0, 3, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 17).unwrap();
        let sp = FockSpace::reduced(g);
        let pw =
            ParamKernelSequence::build(-0.45, 0.45, 5, |z| Ok::<_, ()>(KernelSequence::free(&kg, params.xi, 4, z)))
                .unwrap();
        let (out, rep) = renormalize(&pw, &params, &cut, &sp).unwrap();
        assert!(out.seqs.iter().zip(&pw.seqs).all(|(a, b)| a.max_abs_diff(b) <= 1e-12));
        assert_eq!(rep.sharp[0].depth, 1);
        let c = contraction_report(&pw, &out, 0.1);
        assert!(c.contracts && c.gamma_ratio == 0.0, "{c:?}");
    }

    #[test]
    fn ball_violation_is_rejected() {
        let params = RgParams::default();
        let cut = params.validate().unwrap();
        let g = build_mode_grid(0.1, 1.0, 2, GridScheme::Midpoint).unwrap();
        let kg = KernelGrid::new(g.clone(), 9).unwrap();
        let sp = FockSpace::reduced(g);
        let w = KernelSequence::new(Kernel::from_fn(0, 0, &kg, |r, _| (r - 0.9 * params.rho, 1.0)), params.xi, 2);
        assert!(matches!(renormalize_sharp(&w, &params, &cut, &sp), Err(RgError::Ball { what: "beta", .. })));
        // Inside the ball the invertibility gate holds with room to spare.
        let w = KernelSequence::new(Kernel::from_fn(0, 0, &kg, |r, _| (r - 0.49 * params.rho, 1.0)), params.xi, 2);
        let (_, rep) = renormalize_sharp(&w, &params, &cut, &sp).unwrap();
        assert!(rep.gate_min_w00 >= params.t() && rep.middle_sup <= 1.0 / params.t());
    }

    #[test]
    fn tail_bound_decreases_with_depth() {
        let params = RgParams::default();
        let cut = params.validate().unwrap();
        let g = params.epsilon_0 / 2.0;
        let t: Vec<f64> = (1..8).map(|l| tail_bound(&params, &cut, g, l)).collect();
        assert!(t.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(tail_bound(&params, &cut, 0.0, 1), 0.0);
    }
}
