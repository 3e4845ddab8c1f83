use serde::{Deserialize, Serialize};

use super::cutoff::{CutoffPair, CutoffProfile};
use super::RgError;

/// Renormalization parameters. Defaults satisfy every admissibility inequality
/// for the smoothstep-3 cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgParams {
    pub rho: f64,
    pub xi: f64,
    pub epsilon_0: f64,
    /// Cap on the Neumann depth; the depth actually used is the smallest one
    /// whose certified tail meets `tail_tolerance · γ_in`.
    pub l_max: usize,
    pub tail_tolerance: f64,
    pub profile: CutoffProfile,
}

impl Default for RgParams {
    fn default() -> Self {
        Self {
            rho: 0.003,
            xi: 0.09,
            epsilon_0: 0.003 / 32.0,
            l_max: 10,
            tail_tolerance: 1e-3,
            profile: CutoffProfile::Smoothstep3,
        }
    }
}

impl RgParams {
    pub fn cutoffs(&self) -> Result<CutoffPair, RgError> {
        CutoffPair::new(self.rho, self.profile)
    }

    /// `t = 3ρ/16`, the lower bound on `|w_{0,0}|` off the range of `χ_ρ`.
    pub fn t(&self) -> f64 {
        3.0 * self.rho / 16.0
    }

    /// `C_L = 1 + 2L‖∂_r χ_1‖_∞ + 8(L − 1)`.
    pub fn c_l(cut: &CutoffPair, l: usize) -> f64 {
        1.0 + 2.0 * l as f64 * cut.deriv_sup + 8.0 * (l as f64 - 1.0)
    }

    /// Violated admissibility conditions, empty if none.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let cut = match self.cutoffs() {
            Ok(c) => c,
            Err(e) => return vec![e.to_string()],
        };
        let ct = cut.c_theta();
        if self.rho > 1.0 / (16.0 * ct) {
            v.push(format!("rho <= 1/(16 C_theta) = {:.6e} fails for rho = {}", 1.0 / (16.0 * ct), self.rho));
        }
        let xi_max = (self.rho / (2.0 * ct)).powf(0.25);
        if !(self.xi > 0.0 && self.xi <= xi_max) {
            v.push(format!("xi <= (rho/(2 C_theta))^(1/4) = {xi_max:.6e} fails for xi = {}", self.xi));
        }
        if !(self.epsilon_0 > 0.0 && self.epsilon_0 <= self.rho / 32.0) {
            v.push(format!(
                "0 < epsilon_0 <= rho/32 = {:.6e} fails for epsilon_0 = {}",
                self.rho / 32.0,
                self.epsilon_0
            ));
        }
        if self.rho > 0.25 {
            v.push(format!("rho <= 1/4 fails for rho = {}", self.rho));
        }
        if self.xi > 0.25 {
            v.push(format!("xi <= 1/4 fails for xi = {}", self.xi));
        }
        if self.l_max < 2 {
            v.push(format!("l_max >= 2 fails for l_max = {}", self.l_max));
        }
        if !(self.tail_tolerance > 0.0) {
            v.push(format!("tail_tolerance > 0 fails for {}", self.tail_tolerance));
        }
        v
    }

    pub fn validate(&self) -> Result<CutoffPair, RgError> {
        let v = self.violations();
        if v.is_empty() {
            self.cutoffs()
        } else {
            Err(RgError::Params(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_admissible() {
        assert!(RgParams::default().violations().is_empty());
    }

    #[test]
    fn large_rho_is_flagged() {
        let p = RgParams { rho: 0.3, ..RgParams::default() };
        let v = p.violations();
        assert!(v.iter().any(|s| s.contains("rho <= 1/(16 C_theta)")));
        assert!(v.iter().any(|s| s.contains("rho <= 1/4")));
    }

    #[test]
    fn c_l_grows_linearly() {
        let cut = RgParams::default().cutoffs().unwrap();
        let d = RgParams::c_l(&cut, 3) - RgParams::c_l(&cut, 2);
        assert!((d - (2.0 * cut.deriv_sup + 8.0)).abs() < 1e-12);
        assert!((RgParams::c_l(&cut, 1) - (1.0 + 2.0 * cut.deriv_sup)).abs() < 1e-15);
    }
}
