//! Infrared cancellation in the fourth projection coefficient.
//!
//! `A_σ = S^(1)TS^(1)TS^(1)TS^(1)TS^(0)` and `B_σ = S^(2)TS^(1)TS^(0)TS^(1)TS^(0)`
//! are rank one, `A_σ = −|a_σ⟩⟨Ω_↓|` and `B_σ = c_σ|d_σ⟩⟨Ω_↓|` with
//! `d_σ = S^(2)TS^(1)TΩ_↓` and `c_σ = ⟨Ω_↓, TS^(1)TΩ_↓⟩`. The scalars tabulated
//! here are the matrix elements `⟨d_σ, A_σΩ_↓⟩` and `⟨d_σ, B_σΩ_↓⟩`: `d_σ` is
//! the infrared-singular two-boson direction, so both grow like `log(1/σ)`
//! with opposite signs while their sum converges.
//!
//! Radial conventions: `dμ(k) = k²dk/(4π)` per boson (the mode-grid weights),
//! `F(k) = f(k)/√k`, and two-boson states `∫dμdμ K a*a*Ω` have
//! `⟨K, L⟩ = 2∫dμdμ K L` for symmetric `K`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::fock::{spin_tensor, FockSpace, ModeGrid, SparseOperator};
use crate::model::{interaction, Coupling, SIGMA_X};

use super::{check_sigma, resolvent_diagonal, PerturbationError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrParams {
    /// σ values for the log fits, decreasing.
    pub fit_sigmas: Vec<f64>,
    /// Start and number of halvings for the Cauchy sequence of `A_σ + B_σ`.
    pub cauchy_start: f64,
    pub cauchy_halvings: usize,
    /// Gauss nodes per octave panel, raised by 4 until successive values agree to `rel_tol`.
    pub nodes_per_panel: usize,
    pub max_nodes_per_panel: usize,
    pub rel_tol: f64,
    /// Operator-path cross-check: σ and nodes per octave panel (three-boson truncation).
    pub operator_sigma: f64,
    pub operator_nodes_per_panel: usize,
    /// Confidence level of the slope intervals.
    pub confidence: f64,
    /// Gauss nodes per octave panel for the fourth energy coefficient (two-boson truncation).
    pub energy_nodes_per_panel: usize,
}

impl Default for IrParams {
    fn default() -> Self {
        Self {
            fit_sigmas: vec![1e-2, 1e-3, 1e-4, 1e-5],
            cauchy_start: 1e-2,
            cauchy_halvings: 10,
            nodes_per_panel: 8,
            max_nodes_per_panel: 24,
            rel_tol: 1e-11,
            operator_sigma: 1e-2,
            operator_nodes_per_panel: 6,
            confidence: 0.95,
            energy_nodes_per_panel: 3,
        }
    }
}

/// The matrix elements at one σ. `a3` is identically zero: that part of
/// `a_σ` has four bosons and `d_σ` has two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrValues {
    pub sigma: f64,
    /// First brace term of `A_1`, the only divergent piece of `A`.
    pub a1_div: f64,
    /// The two remaining brace terms of `A_1`.
    pub a1_rest: f64,
    pub a2: f64,
    pub a3: f64,
    pub b: f64,
    /// Nodes per panel at which the quadrature settled.
    pub nodes_per_panel: usize,
    /// Largest relative change in the last refinement.
    pub change: f64,
}

impl IrValues {
    pub fn a(&self) -> f64 {
        self.a1_div + self.a1_rest + self.a2 + self.a3
    }

    pub fn a1(&self) -> f64 {
        self.a1_div + self.a1_rest
    }

    pub fn sum(&self) -> f64 {
        self.a() + self.b
    }
}

/// Octave edges `σ, 2σ, 4σ, …, k_max`.
pub fn octave_edges(sigma: f64, k_max: f64) -> Vec<f64> {
    let mut e = vec![sigma];
    let mut x = sigma;
    while 2.0 * x < k_max * (1.0 - 1e-12) {
        x *= 2.0;
        e.push(x);
    }
    e.push(k_max);
    e
}

/// The closed-form triple radial integrals on a tensor Gauss rule.
fn ir_values_on(grid: &ModeGrid, coupling: &Coupling) -> IrValues {
    let k = &grid.nodes;
    let mu = &grid.weights;
    let n = k.len();
    let ff: Vec<f64> = k.iter().map(|&x| coupling.eval(x) / x.sqrt()).collect();
    let f2: Vec<f64> = ff.iter().map(|x| x * x).collect();
    let c2: f64 = (0..n).map(|l| mu[l] * f2[l] / (k[l] + 2.0)).sum();
    // A_2's inner integral depends on k_3 only.
    let j2: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|l| mu[l] * f2[l] / (k[l] + k[j]) * (1.0 / (k[j] + 2.0) + 1.0 / (k[l] + 2.0))).sum())
        .collect();
    let rows: Vec<[f64; 4]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 4];
            for j in 0..n {
                let s = k[i] + k[j];
                let pre = ff[i] * ff[j];
                let kd = pre / (s * s) * 0.5 * (1.0 / (2.0 + k[i]) + 1.0 / (2.0 + k[j]));
                let (mut inner_div, mut inner_rest) = (0.0, 0.0);
                for l in 0..n {
                    let common = mu[l] * f2[l] / (k[l] + s + 2.0);
                    inner_div += common;
                    inner_rest += common / (k[l] + k[j]) * (1.0 / (k[j] + 2.0) + 1.0 / (k[l] + 2.0));
                }
                let a1_div = -pre / (s * s) / (k[j] + 2.0) * inner_div;
                let a1_rest = -pre / s * inner_rest;
                let a2 = -pre / (s * (k[j] + 2.0)) * j2[j];
                let b = c2 * pre / (s * s) / (k[i] + 2.0);
                let w = 2.0 * mu[i] * mu[j] * kd;
                acc[0] += w * a1_div;
                acc[1] += w * a1_rest;
                acc[2] += w * a2;
                acc[3] += w * b;
            }
            acc
        })
        .collect();
    let mut t = [0.0; 4];
    for r in rows {
        (0..4).for_each(|q| t[q] += r[q]);
    }
    IrValues {
        sigma: grid.sigma,
        a1_div: t[0],
        a1_rest: t[1],
        a2: t[2],
        a3: 0.0,
        b: t[3],
        nodes_per_panel: 0,
        change: 0.0,
    }
}

/// Quadrature path: refines the per-panel order until successive values agree.
pub fn ir_values(coupling: &Coupling, sigma: f64, params: &IrParams) -> Result<IrValues, PerturbationError> {
    check_sigma(sigma)?;
    let c = coupling.with_sigma(sigma);
    let edges = octave_edges(sigma, c.uv_cutoff);
    let eval = |m: usize| {
        let g = ModeGrid::composite_gauss(&edges, m).expect("octave edges are increasing");
        ir_values_on(&g, &c)
    };
    let mut m = params.nodes_per_panel;
    let mut prev = eval(m);
    loop {
        let next_m = m + 4;
        let cur = eval(next_m);
        let parts = |v: &IrValues| [v.a1_div, v.a1_rest, v.a2, v.b];
        let scale = parts(&cur).iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let change = parts(&cur).iter().zip(parts(&prev)).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max);
        if change <= params.rel_tol {
            return Ok(IrValues { nodes_per_panel: next_m, change, ..cur });
        }
        if next_m + 4 > params.max_nodes_per_panel {
            return Err(PerturbationError::Quadrature { sigma, tol: params.rel_tol, change });
        }
        m = next_m;
        prev = cur;
    }
}

/// Operator path at one σ: sparse `T_±` and diagonal `S^(ν)` on a three-boson
/// truncation, which holds every intermediate state of the two-boson part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPath {
    pub sigma: f64,
    pub n_modes: usize,
    pub dim: usize,
    pub a1: f64,
    pub a2: f64,
    /// From the full `T` in every slot; equals `a1 + a2` when the split is right.
    pub a: f64,
    pub b: f64,
}

pub fn ir_operator_path(
    coupling: &Coupling,
    sigma: f64,
    nodes_per_panel: usize,
) -> Result<OperatorPath, PerturbationError> {
    check_sigma(sigma)?;
    let c = coupling.with_sigma(sigma);
    let grid = ModeGrid::composite_gauss(&octave_edges(sigma, c.uv_cutoff), nodes_per_panel)
        .map_err(|e| PerturbationError::Fit(e.to_string()))?;
    let space = FockSpace::new(grid, 3, true).map_err(crate::model::ModelError::from)?;
    let mut boson = space.clone();
    boson.with_spin = false;
    let g = boson.field_coefficients(&c.samples(&space.grid));
    let tp = spin_tensor(SIGMA_X, &boson.boson_creation(&g).map_err(crate::model::ModelError::from)?);
    let tm = tp.transpose();
    let t = interaction(&space, &c)?;
    let s1 = resolvent_diagonal(&space, 1, sigma);
    let s2 = resolvent_diagonal(&space, 2, sigma);
    let ground = space.spin_index(1, 0);
    let mut omega = vec![0.0; space.dim()];
    omega[ground] = 1.0;
    let step = |op: &SparseOperator, s: &[f64], v: &[f64]| -> Vec<f64> {
        op.apply(v).iter().zip(s).map(|(x, s)| x * s).collect()
    };
    let word = |ops: [&SparseOperator; 4]| {
        let mut v = omega.clone();
        for op in ops.iter().rev() {
            v = step(op, &s1, &v);
        }
        v
    };
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let d = step(&t, &s2, &step(&t, &s1, &omega));
    let c2 = t.apply(&step(&t, &s1, &omega))[ground];
    let a1 = word([&tm, &tp, &tp, &tp]);
    let a2 = word([&tp, &tm, &tp, &tp]);
    let a = word([&t, &t, &t, &t]);
    Ok(OperatorPath {
        sigma,
        n_modes: space.n_modes(),
        dim: space.dim(),
        a1: -dot(&d, &a1),
        a2: -dot(&d, &a2),
        a: -dot(&d, &a),
        b: c2 * dot(&d, &d),
    })
}

/// Least-squares fit `v(σ) ≈ c_0 + c_1 log(1/σ) + c_2 σ` with a t-interval for `c_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub intercept: f64,
    pub slope: f64,
    pub linear: f64,
    pub slope_se: f64,
    pub ci: (f64, f64),
    pub excludes_zero: bool,
}

pub fn log_fit(sigmas: &[f64], values: &[f64], confidence: f64) -> Result<LogFit, PerturbationError> {
    let n = sigmas.len();
    if n != values.len() || n < 4 {
        return Err(PerturbationError::Fit(format!("log fit needs at least 4 points, got {n}")));
    }
    let x = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (1.0 / sigmas[i]).ln(),
        _ => sigmas[i],
    });
    let y = nalgebra::DVector::from_column_slice(values);
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or_else(|| PerturbationError::Fit("rank-deficient design".into()))?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let dof = (n - 3) as f64;
    let s2 = resid.norm_squared() / dof;
    let slope_se = (s2 * inv[(1, 1)]).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| PerturbationError::Fit(e.to_string()))?
        .inverse_cdf(0.5 + confidence / 2.0);
    let ci = (beta[1] - t * slope_se, beta[1] + t * slope_se);
    Ok(LogFit {
        intercept: beta[0],
        slope: beta[1],
        linear: beta[2],
        slope_se,
        ci,
        excludes_zero: ci.0 > 0.0 || ci.1 < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyStep {
    pub sigma: f64,
    pub sum: f64,
    pub a2: f64,
    /// `|(A+B)(σ) − (A+B)(σ/2)|`, and the ratio to the next difference.
    pub diff: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrFits {
    pub a: LogFit,
    pub b: LogFit,
    pub sum: LogFit,
    pub a1_div: LogFit,
    pub a1_rest: LogFit,
    pub a2: LogFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub sigma: f64,
    pub e4: f64,
    /// Change against two more nodes per panel.
    pub refinement: f64,
    pub dim: usize,
}

/// The fourth energy coefficient over the fit σ. Only the projection pieces
/// carry a divergence statement, so nothing here is asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySide {
    pub label: String,
    pub rows: Vec<EnergyRow>,
    pub fit: LogFit,
}

/// Two bosons suffice: `⟨Ω_↓, (TR)³TΩ_↓⟩` never visits three.
pub fn energy_side(coupling: &Coupling, params: &IrParams) -> Result<EnergySide, PerturbationError> {
    let e4 = |sigma: f64, nodes: usize| -> Result<(f64, usize), PerturbationError> {
        check_sigma(sigma)?;
        let c = coupling.with_sigma(sigma);
        let grid = ModeGrid::composite_gauss(&octave_edges(sigma, c.uv_cutoff), nodes)
            .map_err(|e| PerturbationError::Fit(e.to_string()))?;
        let space = FockSpace::new(grid, 2, true).map_err(crate::model::ModelError::from)?;
        Ok((super::rs_energies_recursive(&space, &c, sigma, 4)?[4], space.dim()))
    };
    let rows: Vec<EnergyRow> = params
        .fit_sigmas
        .par_iter()
        .map(|&sigma| {
            let (v, dim) = e4(sigma, params.energy_nodes_per_panel)?;
            let (fine, _) = e4(sigma, params.energy_nodes_per_panel + 2)?;
            Ok(EnergyRow { sigma, e4: v, refinement: (fine - v).abs(), dim })
        })
        .collect::<Result<_, PerturbationError>>()?;
    let sig: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let fit = log_fit(&sig, &rows.iter().map(|r| r.e4).collect::<Vec<_>>(), params.confidence)?;
    Ok(EnergySide { label: "exploratory".into(), rows, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrCancellationTable {
    pub rows: Vec<IrValues>,
    pub fits: IrFits,
    /// `|slope(A) + slope(B)| / max(|slope(A)|, |slope(B)|)`.
    pub slope_mismatch: f64,
    pub cauchy: Vec<CauchyStep>,
    pub operator: OperatorPath,
    /// The quadrature values at the operator σ.
    pub operator_reference: IrValues,
    /// Largest relative difference over `A_1, A_2, A, B`.
    pub operator_rel_diff: f64,
    pub energy_side: EnergySide,
}

pub fn ir_cancellation(coupling: &Coupling, params: &IrParams) -> Result<IrCancellationTable, PerturbationError> {
    if params.fit_sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PerturbationError::Fit("fit sigmas must be decreasing".into()));
    }
    let rows: Vec<IrValues> =
        params.fit_sigmas.iter().map(|&s| ir_values(coupling, s, params)).collect::<Result<_, _>>()?;
    let sig: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let fit = |f: &dyn Fn(&IrValues) -> f64| log_fit(&sig, &rows.iter().map(f).collect::<Vec<_>>(), params.confidence);
    let fits = IrFits {
        a: fit(&|r| r.a())?,
        b: fit(&|r| r.b)?,
        sum: fit(&|r| r.sum())?,
        a1_div: fit(&|r| r.a1_div)?,
        a1_rest: fit(&|r| r.a1_rest)?,
        a2: fit(&|r| r.a2)?,
    };
    let slope_mismatch = (fits.a.slope + fits.b.slope).abs() / fits.a.slope.abs().max(fits.b.slope.abs());

    let seq: Vec<IrValues> = (0..=params.cauchy_halvings)
        .map(|j| ir_values(coupling, params.cauchy_start * 0.5f64.powi(j as i32), params))
        .collect::<Result<_, _>>()?;
    let diffs: Vec<f64> = seq.windows(2).map(|w| (w[0].sum() - w[1].sum()).abs()).collect();
    let cauchy = seq
        .iter()
        .enumerate()
        .map(|(j, v)| CauchyStep {
            sigma: v.sigma,
            sum: v.sum(),
            a2: v.a2,
            diff: diffs.get(j).copied(),
            ratio: match (diffs.get(j), diffs.get(j + 1)) {
                (Some(a), Some(b)) => Some(a / b),
                _ => None,
            },
        })
        .collect();

    let operator = ir_operator_path(coupling, params.operator_sigma, params.operator_nodes_per_panel)?;
    let reference = ir_values(coupling, params.operator_sigma, params)?;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let operator_rel_diff = [
        rel(operator.a1, reference.a1()),
        rel(operator.a2, reference.a2),
        rel(operator.a, reference.a()),
        rel(operator.b, reference.b),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(IrCancellationTable {
        rows,
        fits,
        slope_mismatch,
        cauchy,
        operator,
        operator_reference: reference,
        operator_rel_diff,
        energy_side: energy_side(coupling, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octave_edges_cover_the_range() {
        let e = octave_edges(0.01, 1.0);
        assert_eq!(e.first(), Some(&0.01));
        assert_eq!(e.last(), Some(&1.0));
        assert!(e.windows(2).all(|w| w[1] > w[0] && w[1] <= 2.0 * w[0] + 1e-15));
    }

    #[test]
    fn operator_and_quadrature_paths_agree() {
        let c = Coupling::unit(0.0);
        let params = IrParams::default();
        let q = ir_values(&c, 0.05, &params).unwrap();
        let op = ir_operator_path(&c, 0.05, 6).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        assert!(rel(op.a, op.a1 + op.a2) < 1e-12);
        assert!(rel(op.a1, q.a1()) < 1e-7, "{} {}", op.a1, q.a1());
        assert!(rel(op.a2, q.a2) < 1e-7, "{} {}", op.a2, q.a2);
        assert!(rel(op.b, q.b) < 1e-7, "{} {}", op.b, q.b);
        assert!(q.a1_div < 0.0 && q.b > 0.0);
    }

    #[test]
    fn log_fit_recovers_exact_model() {
        let s = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
        let v: Vec<f64> = s.iter().map(|x: &f64| 0.3 - 2.0 * (1.0 / x).ln() + 5.0 * x).collect();
        let f = log_fit(&s, &v, 0.95).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-10 && (f.linear - 5.0).abs() < 1e-8);
    }
}
