use serde::{Deserialize, Serialize};

use crate::quad;

/// Radial discretization schemes for boson momenta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    Midpoint,
    GaussLegendre,
    /// Geometric cells `[σ q^j, σ q^{j+1}]`, node at the geometric mean, exact shell volume.
    LogSpaced,
    /// Gauss-Legendre panels on caller-supplied edges (used by the infrared studies).
    CompositeGauss,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("invalid momentum range: sigma = {sigma}, k_max = {k_max}")]
    InvalidRange { sigma: f64, k_max: f64 },
    #[error("a grid needs at least one mode")]
    NoModes,
}

/// Weights carry the measure d³k/(4π)² after the angular integral: a shell of
/// volume V contributes V/(4π)², i.e. |k|²Δ|k|/(4π) for thin shells.
pub const MEASURE_CONVENTION: &str = "w_i = shell volume in d^3k divided by (4 pi)^2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub k_max: f64,
    pub scheme: GridScheme,
    /// Cell edges for cell-based schemes (len = nodes + 1), empty otherwise.
    pub edges: Vec<f64>,
}

fn shell_weight(a: f64, b: f64) -> f64 {
    // ∫_a^b 4π k² dk / (4π)²
    (b * b * b - a * a * a) / (12.0 * std::f64::consts::PI)
}

pub fn build_mode_grid(sigma: f64, k_max: f64, n_modes: usize, scheme: GridScheme) -> Result<ModeGrid, GridError> {
    if !(sigma >= 0.0 && sigma < k_max && k_max.is_finite()) {
        return Err(GridError::InvalidRange { sigma, k_max });
    }
    if n_modes == 0 {
        return Err(GridError::NoModes);
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    let grid = match scheme {
        GridScheme::Midpoint => {
            let h = (k_max - sigma) / n_modes as f64;
            let edges: Vec<f64> = (0..=n_modes).map(|i| sigma + h * i as f64).collect();
            let nodes: Vec<f64> = (0..n_modes).map(|i| sigma + h * (i as f64 + 0.5)).collect();
            let weights = nodes.iter().map(|k| k * k * h / four_pi).collect();
            ModeGrid { nodes, weights, sigma, k_max, scheme, edges }
        }
        GridScheme::GaussLegendre => {
            let (x, w) = quad::gauss_legendre_on(sigma, k_max, n_modes);
            let weights = x.iter().zip(&w).map(|(k, w)| k * k * w / four_pi).collect();
            ModeGrid { nodes: x, weights, sigma, k_max, scheme, edges: Vec::new() }
        }
        GridScheme::LogSpaced => {
            if sigma <= 0.0 {
                return Err(GridError::InvalidRange { sigma, k_max });
            }
            let q = (k_max / sigma).powf(1.0 / n_modes as f64);
            let edges = geometric_edges(sigma, q, n_modes, k_max);
            ModeGrid::from_cells(&edges, sigma, k_max)
        }
        GridScheme::CompositeGauss => {
            // Without explicit edges this is plain Gauss-Legendre on one panel.
            return build_mode_grid(sigma, k_max, n_modes, GridScheme::GaussLegendre).map(|mut g| {
                g.scheme = GridScheme::CompositeGauss;
                g.edges = vec![sigma, k_max];
                g
            });
        }
    };
    Ok(grid)
}

fn geometric_edges(sigma: f64, q: f64, n: usize, k_max: f64) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=n).map(|j| sigma * q.powi(j as i32)).collect();
    e[n] = k_max;
    e
}

impl ModeGrid {
    /// Log-spaced grid with cells `[k_max q^{-j-1}, k_max q^{-j}]`, so that
    /// dilation by `q^s` maps cells onto cells exactly.
    pub fn geometric(k_max: f64, ratio: f64, n_modes: usize) -> Result<Self, GridError> {
        if !(ratio > 1.0) || n_modes == 0 {
            return Err(GridError::InvalidRange { sigma: 0.0, k_max });
        }
        let sigma = k_max * ratio.powi(-(n_modes as i32));
        let mut edges: Vec<f64> = (0..=n_modes).map(|j| k_max * ratio.powi(j as i32 - n_modes as i32)).collect();
        edges[n_modes] = k_max;
        Ok(Self::from_cells(&edges, sigma, k_max))
    }

    fn from_cells(edges: &[f64], sigma: f64, k_max: f64) -> Self {
        let nodes = edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
        let weights = edges.windows(2).map(|e| shell_weight(e[0], e[1])).collect();
        ModeGrid { nodes, weights, sigma, k_max, scheme: GridScheme::LogSpaced, edges: edges.to_vec() }
    }

    /// Gauss-Legendre with `n_per_panel` nodes on each panel between consecutive edges.
    pub fn composite_gauss(edges: &[f64], n_per_panel: usize) -> Result<Self, GridError> {
        if edges.len() < 2 || n_per_panel == 0 {
            return Err(GridError::NoModes);
        }
        let sigma = edges[0];
        let k_max = *edges.last().unwrap();
        if !(sigma >= 0.0 && sigma < k_max) || edges.windows(2).any(|e| e[1] <= e[0]) {
            return Err(GridError::InvalidRange { sigma, k_max });
        }
        let four_pi = 4.0 * std::f64::consts::PI;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for e in edges.windows(2) {
            let (x, w) = quad::gauss_legendre_on(e[0], e[1], n_per_panel);
            for (k, w) in x.iter().zip(&w) {
                nodes.push(*k);
                weights.push(k * k * w / four_pi);
            }
        }
        Ok(ModeGrid { nodes, weights, sigma, k_max, scheme: GridScheme::CompositeGauss, edges: edges.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid approximation of ∫_{σ≤|k|≤k_max} d³k/(4π)² g(|k|).
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(k, w)| w * g(*k)).sum()
    }

    /// Discrete L² norm of `g/(4π ω^{p})` in the d³k measure, i.e. sqrt(Σ w_i g_i² / k_i^{2p}).
    pub fn weighted_norm(&self, g: &[f64], p: f64) -> f64 {
        self.nodes.iter().zip(&self.weights).zip(g).map(|((k, w), g)| w * g * g / k.powf(2.0 * p)).sum::<f64>().sqrt()
    }

    /// Samples `f` at the nodes, zeroing modes below `cutoff` (sharp infrared mask).
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F, cutoff: f64) -> Vec<f64> {
        self.nodes.iter().map(|&k| if k >= cutoff { f(k) } else { 0.0 }).collect()
    }

    /// Common ratio of a geometric grid, if the cells are exactly geometric.
    pub fn geometric_ratio(&self) -> Option<f64> {
        if self.scheme != GridScheme::LogSpaced || self.nodes.len() < 2 {
            return None;
        }
        let q = self.nodes[1] / self.nodes[0];
        let ok = self.nodes.windows(2).all(|p| ((p[1] / p[0]) / q - 1.0).abs() < 1e-12);
        ok.then_some(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_midpoint_cell() {
        let g = build_mode_grid(0.0, 1.0, 1, GridScheme::Midpoint).unwrap();
        assert_eq!(g.nodes, vec![0.5]);
        assert!((g.weights[0] - 0.25 / (4.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn vanishing_shell_has_vanishing_weight() {
        for scheme in [GridScheme::Midpoint, GridScheme::GaussLegendre, GridScheme::LogSpaced] {
            let mut prev = f64::INFINITY;
            for eps in [1e-1, 1e-3, 1e-6] {
                let g = build_mode_grid(0.5, 0.5 + eps, 4, scheme).unwrap();
                let s: f64 = g.weights.iter().sum();
                assert!(s < prev && s < eps);
                prev = s;
            }
        }
    }

    #[test]
    fn gauss_refinement_is_self_consistent() {
        let a = build_mode_grid(0.0, 1.0, 64, GridScheme::GaussLegendre).unwrap();
        let b = build_mode_grid(0.0, 1.0, 128, GridScheme::GaussLegendre).unwrap();
        let ia = a.integrate(|_| 1.0);
        let ib = b.integrate(|_| 1.0);
        assert!((ia - ib).abs() < 1e-12);
        // ∫_0^1 4π k² dk/(4π)² = 1/(12π)
        assert!((ia - 1.0 / (12.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        assert!(build_mode_grid(1.0, 1.0, 3, GridScheme::Midpoint).is_err());
        assert!(build_mode_grid(0.0, 1.0, 0, GridScheme::Midpoint).is_err());
        assert!(build_mode_grid(0.0, 1.0, 3, GridScheme::LogSpaced).is_err());
    }

    #[test]
    fn geometric_grid_is_exactly_self_similar() {
        let g = ModeGrid::geometric(1.0, 2.0, 5).unwrap();
        assert_eq!(g.geometric_ratio().map(|q| (q - 2.0).abs() < 1e-12), Some(true));
        for j in 1..5 {
            assert!((g.weights[j] / g.weights[j - 1] - 8.0).abs() < 1e-12);
        }
        assert!((g.sigma - 1.0 / 32.0).abs() < 1e-15);
    }
}
