//! Smooth partitions of unity `χ² + χ̄² = 1` in the field energy.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::RgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffProfile {
    Smoothstep3,
    Smoothstep5,
}

impl CutoffProfile {
    /// Ramp `s` on `[0,1]` with `s(0) = 0`, `s(1) = 1`, flat ends; returns `(s, s')`.
    fn ramp(self, u: f64) -> (f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0);
        }
        if u >= 1.0 {
            return (1.0, 0.0);
        }
        match self {
            Self::Smoothstep3 => (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u)),
            Self::Smoothstep5 => {
                let u2 = u * u;
                (u2 * u * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - u) * (1.0 - u))
            }
        }
    }
}

/// `χ_1 = cos θ`, `χ̄_1 = sin θ` with `θ = (π/2)·s((r − 3/4)/(1/4))`, and the
/// dilated pair `χ_ρ(r) = χ_1(r/ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub rho: f64,
    pub profile: CutoffProfile,
    /// `‖∂_r χ_1‖_∞` measured on a dense grid.
    pub deriv_sup: f64,
    /// `‖∂_r χ̄_1‖_∞` measured on the same grid.
    pub bar_deriv_sup: f64,
}

pub const DENSE_POINTS: usize = 10_000;

impl CutoffPair {
    pub fn new(rho: f64, profile: CutoffProfile) -> Result<Self, RgError> {
        if !(rho > 0.0 && rho <= 0.5) {
            return Err(RgError::Params(vec![format!("cutoff scale rho = {rho} outside (0, 1/2]")]));
        }
        let mut c = Self { rho, profile, deriv_sup: 0.0, bar_deriv_sup: 0.0 };
        for i in 0..DENSE_POINTS {
            let r = 0.5 + 0.6 * i as f64 / (DENSE_POINTS - 1) as f64;
            c.deriv_sup = c.deriv_sup.max(c.chi1(r).1.abs());
            c.bar_deriv_sup = c.bar_deriv_sup.max(c.chibar1(r).1.abs());
        }
        Ok(c)
    }

    fn angle(&self, r: f64) -> (f64, f64) {
        let (s, ds) = self.profile.ramp((r - 0.75) * 4.0);
        (FRAC_PI_2 * s, FRAC_PI_2 * 4.0 * ds)
    }

    pub fn chi1(&self, r: f64) -> (f64, f64) {
        if r >= 1.0 {
            return (0.0, 0.0);
        }
        let (th, dth) = self.angle(r);
        (th.cos(), -th.sin() * dth)
    }

    pub fn chibar1(&self, r: f64) -> (f64, f64) {
        if r >= 1.0 {
            return (1.0, 0.0);
        }
        let (th, dth) = self.angle(r);
        (th.sin(), th.cos() * dth)
    }

    pub fn chi(&self, r: f64) -> (f64, f64) {
        let (v, d) = self.chi1(r / self.rho);
        (v, d / self.rho)
    }

    pub fn chibar(&self, r: f64) -> (f64, f64) {
        let (v, d) = self.chibar1(r / self.rho);
        (v, d / self.rho)
    }

    /// `C_θ = 3 + 2‖∂_r χ_1‖_∞`.
    pub fn c_theta(&self) -> f64 {
        3.0 + 2.0 * self.deriv_sup
    }

    /// `C_F̄ = 10‖∂_r χ̄_1‖_∞ + 31`, the constant of the first-step Neumann series.
    pub fn c_fbar(&self) -> f64 {
        10.0 * self.bar_deriv_sup + 31.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_support() {
        for p in [CutoffProfile::Smoothstep3, CutoffProfile::Smoothstep5] {
            let c = CutoffPair::new(0.01, p).unwrap();
            for i in 0..DENSE_POINTS {
                let r = 1.2 * i as f64 / DENSE_POINTS as f64;
                let (a, b) = (c.chi1(r).0, c.chibar1(r).0);
                assert!((a * a + b * b - 1.0).abs() < 1e-14);
            }
            assert_eq!(c.chi1(0.5).0, 1.0);
            assert!(c.chi1(1.0).0.abs() < 1e-16);
            assert_eq!(c.chi(1.1 * 0.01).0, 0.0);
            let mut last = 1.0;
            for i in 0..=1000 {
                let v = c.chi1(0.75 + 0.25 * i as f64 / 1000.0).0;
                assert!(v <= last + 1e-16);
                last = v;
            }
        }
    }

    #[test]
    fn derivative_channel_matches_differences() {
        let c = CutoffPair::new(0.003, CutoffProfile::Smoothstep5).unwrap();
        let h = 1e-6;
        for &r in &[0.76, 0.8, 0.875, 0.95] {
            let fd = (c.chi1(r + h).0 - c.chi1(r - h).0) / (2.0 * h);
            assert!((fd - c.chi1(r).1).abs() < 1e-6);
            let fd = (c.chibar1(r + h).0 - c.chibar1(r - h).0) / (2.0 * h);
            assert!((fd - c.chibar1(r).1).abs() < 1e-6);
        }
    }

    #[test]
    fn smoothstep3_derivative_sup() {
        let c = CutoffPair::new(0.003, CutoffProfile::Smoothstep3).unwrap();
        // θ' peaks at 3π where sin θ = 1/√2; the product peaks slightly later.
        assert!(c.deriv_sup > 3.0 * std::f64::consts::PI / 2f64.sqrt() && c.deriv_sup < 3.0 * std::f64::consts::PI);
        assert!((c.c_theta() - (3.0 + 2.0 * c.deriv_sup)).abs() < 1e-15);
    }
}
