//! Versioned experiment configuration, dotted-path overrides and validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fock::{build_mode_grid, GridScheme, ModeGrid};
use crate::initial::{mu_zero, SeedParams};
use crate::model::{Coupling, Profile};
use crate::perturbation::IrParams;
use crate::rg::{CutoffProfile, RgParams};

use super::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub profile: Profile,
    pub uv_cutoff: f64,
}

impl CouplingConfig {
    pub fn at(&self, sigma: f64) -> Coupling {
        Coupling { profile: self.profile, sigma, uv_cutoff: self.uv_cutoff }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub n_modes: usize,
    pub scheme: GridScheme,
    /// Boson-number cap of the spin-boson space used by direct solves.
    pub n_max: usize,
    /// Highest kernel degree `m + n` kept by the seed and the RG.
    pub m_max: usize,
    /// Samples of the spectator energy `r` on `[0, 1]`.
    pub n_r: usize,
}

impl Truncation {
    pub fn grid(&self, sigma: f64, k_max: f64) -> Result<ModeGrid, CliError> {
        build_mode_grid(sigma, k_max, self.n_modes, self.scheme).map_err(|e| CliError::module("fock", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgSection {
    pub rho: f64,
    pub xi: f64,
    pub epsilon_0: f64,
    pub l_max: usize,
    pub tail_tolerance: f64,
    pub profile: CutoffProfile,
    pub n_steps: usize,
}

impl RgSection {
    pub fn params(&self) -> RgParams {
        RgParams {
            rho: self.rho,
            xi: self.xi,
            epsilon_0: self.epsilon_0,
            l_max: self.l_max,
            tail_tolerance: self.tail_tolerance,
            profile: self.profile,
        }
    }
}

/// Seed-family settings; the kernel degree comes from `truncation.m_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub n_z: usize,
    pub z_half_width: f64,
    pub l_max: usize,
    pub tail_tolerance: f64,
    /// Relative bracket width of the `λ_0` bisection.
    pub lambda_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    /// Highest order of the energy coefficients in the per-σ tables.
    pub n_max: usize,
    /// Gauss-Legendre panels `[σ, edges…, uv_cutoff]` of the dedicated grid.
    pub inner_edges: Vec<f64>,
    pub nodes_per_panel: usize,
    pub cap: usize,
    /// Finer panels for the second-order check against the radial quadrature.
    pub quadrature_nodes_per_panel: usize,
    /// Couplings of the remainder check `(E − Σ_{n≤4} Ê^(n)λ^n)/λ⁶`.
    pub remainder_lambdas: Vec<f64>,
}

/// Sizes of the randomized and swept acceptance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSection {
    pub feshbach_pairs: usize,
    pub feshbach_dims: (usize, usize),
    pub kernel_samples: usize,
    pub kernel_max_modes: usize,
    pub wick_max_sandwiches: usize,
    pub symmetry_lambdas: Vec<f64>,
    pub continuity_lambda: f64,
    pub continuity_sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub coupling: CouplingConfig,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub truncation: Truncation,
    pub rg: RgSection,
    pub seed_family: SeedSection,
    pub perturbation: PerturbationSection,
    pub ir: IrParams,
    pub acceptance: AcceptanceSection,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rg = RgParams::default();
        let seed = SeedParams::default();
        Self {
            version: CONFIG_VERSION,
            coupling: CouplingConfig { profile: Profile::Unit, uv_cutoff: 1.0 },
            lambdas: vec![5e-5],
            sigmas: vec![0.1],
            truncation: Truncation {
                n_modes: 4,
                scheme: GridScheme::Midpoint,
                n_max: 7,
                m_max: seed.max_degree,
                n_r: 17,
            },
            rg: RgSection {
                rho: rg.rho,
                xi: rg.xi,
                epsilon_0: rg.epsilon_0,
                l_max: rg.l_max,
                tail_tolerance: rg.tail_tolerance,
                profile: rg.profile,
                n_steps: 6,
            },
            seed_family: SeedSection {
                n_z: seed.n_z,
                z_half_width: seed.z_half_width,
                l_max: seed.l_max,
                tail_tolerance: seed.tail_tolerance,
                lambda_rel_tol: 1e-3,
            },
            perturbation: PerturbationSection {
                n_max: 6,
                inner_edges: vec![0.4],
                nodes_per_panel: 4,
                cap: 3,
                quadrature_nodes_per_panel: 10,
                remainder_lambdas: vec![0.02, 0.04, 0.08],
            },
            ir: IrParams::default(),
            acceptance: AcceptanceSection {
                feshbach_pairs: 500,
                feshbach_dims: (4, 40),
                kernel_samples: 200,
                kernel_max_modes: 6,
                wick_max_sandwiches: 3,
                symmetry_lambdas: vec![0.0, 0.05, 0.1, 0.2],
                continuity_lambda: 5e-5,
                continuity_sigmas: vec![0.2, 0.1, 0.05, 0.025, 0.0],
            },
            output_dir: "runs/default".into(),
            seed: 20_240_601,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams {
            n_z: self.seed_family.n_z,
            z_half_width: self.seed_family.z_half_width,
            max_degree: self.truncation.m_max,
            l_max: self.seed_family.l_max,
            tail_tolerance: self.seed_family.tail_tolerance,
        }
    }

    /// Applies `key.path=value`; the value is parsed as JSON and falls back
    /// to a bare string. Unknown paths are rejected.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not of the form key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(key),
                Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| CliError::Config(format!("unknown config key '{path}'")))?;
        }
        *slot = value;
        *self = serde_json::from_value(root).map_err(|e| CliError::Config(format!("override '{assignment}': {e}")))?;
        Ok(())
    }

    /// Every violated precondition of the runner, empty if none.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.version != CONFIG_VERSION {
            v.push(format!("version must be {CONFIG_VERSION}, found {}", self.version));
        }
        let uv = self.coupling.uv_cutoff;
        if !(uv > 0.0 && uv <= 1.0) {
            v.push(format!("coupling.uv_cutoff must lie in (0, 1], found {uv}"));
        }
        match self.coupling.profile {
            Profile::Unit => {}
            Profile::Exponential { scale } if scale > 0.0 => {}
            Profile::Power { power } if power > -0.5 => {}
            p => v.push(format!("form factor {p:?} violates f/omega in L2 (needs scale > 0 or power > -1/2)")),
        }
        let t = &self.truncation;
        if t.n_modes == 0 {
            v.push("truncation.n_modes must be positive".into());
        }
        if t.n_max == 0 {
            v.push("truncation.n_max must be positive".into());
        }
        if t.m_max < 2 || !t.m_max.is_multiple_of(2) {
            v.push(format!("truncation.m_max must be even and at least 2, found {}", t.m_max));
        }
        if t.n_r < 5 {
            v.push(format!("truncation.n_r must be at least 5, found {}", t.n_r));
        }
        v.extend(self.rg.params().violations());
        if self.rg.n_steps == 0 {
            v.push("rg.n_steps must be positive".into());
        }
        let s = &self.seed_family;
        if s.n_z < 2 {
            v.push(format!("seed_family.n_z must be at least 2, found {}", s.n_z));
        }
        if !(s.z_half_width > 0.0 && s.z_half_width <= 0.5) {
            v.push(format!("seed_family.z_half_width must lie in (0, 1/2], found {}", s.z_half_width));
        }
        if !(s.tail_tolerance > 0.0) || !(s.lambda_rel_tol > 0.0) {
            v.push("seed_family tolerances must be positive".into());
        }
        for &sigma in &self.sigmas {
            if !(sigma >= 0.0 && sigma < uv) {
                v.push(format!("sigma = {sigma} must lie in [0, uv_cutoff)"));
            }
        }
        v.extend(self.coupling_violations());
        let p = &self.perturbation;
        if p.inner_edges.iter().any(|&e| !(e > 0.0 && e < uv)) || p.inner_edges.windows(2).any(|w| w[1] <= w[0]) {
            v.push("perturbation.inner_edges must be increasing and inside (0, uv_cutoff)".into());
        }
        if p.nodes_per_panel == 0 || p.quadrature_nodes_per_panel == 0 || p.cap < 3 {
            v.push("perturbation needs nodes_per_panel >= 1 and cap >= 3".into());
        }
        if p.remainder_lambdas.len() < 2 || p.remainder_lambdas.iter().any(|&l| !(l > 0.0)) {
            v.push("perturbation.remainder_lambdas needs at least two positive couplings".into());
        }
        let ir = &self.ir;
        if ir.fit_sigmas.len() < 4
            || ir.fit_sigmas.windows(2).any(|w| w[1] >= w[0])
            || ir.fit_sigmas.iter().any(|&x| !(x > 0.0))
        {
            v.push("ir.fit_sigmas needs at least four positive, decreasing values".into());
        }
        if ir.nodes_per_panel == 0 || ir.operator_nodes_per_panel == 0 || ir.energy_nodes_per_panel == 0 {
            v.push("ir needs at least one node per panel on every path".into());
        }
        if !(ir.confidence > 0.0 && ir.confidence < 1.0) {
            v.push(format!("ir.confidence must lie in (0, 1), found {}", ir.confidence));
        }
        let a = &self.acceptance;
        if a.feshbach_dims.0 < 2 || a.feshbach_dims.1 < a.feshbach_dims.0 {
            v.push(format!("acceptance.feshbach_dims {:?} is not a valid range", a.feshbach_dims));
        }
        if a.kernel_max_modes == 0 || a.wick_max_sandwiches == 0 {
            v.push("acceptance needs kernel_max_modes >= 1 and wick_max_sandwiches >= 1".into());
        }
        if a.continuity_sigmas.windows(2).any(|w| w[1] >= w[0]) {
            v.push("acceptance.continuity_sigmas must be decreasing".into());
        }
        v
    }

    /// `|λ| < μ_0(σ)` for every swept pair, with `μ_0` on the run's own grid.
    fn coupling_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let Ok(cut) = self.rg.params().cutoffs() else { return v };
        for &sigma in &self.sigmas {
            let Ok(grid) = self.truncation.grid(sigma, self.coupling.uv_cutoff) else { continue };
            let mu_0 = mu_zero(&self.coupling.at(sigma), &grid, &cut).mu_0;
            for &lambda in &self.lambdas {
                if !(lambda.abs() < mu_0) {
                    v.push(format!("|lambda| = {lambda} must be below mu_0 = {mu_0:.6e} (sigma = {sigma})"));
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        let s = c.to_json();
        let back = ExperimentConfig::from_json(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), s);
    }

    #[test]
    fn dotted_overrides() {
        let mut c = ExperimentConfig::default();
        c.set("rg.rho=0.3").unwrap();
        assert_eq!(c.rg.rho, 0.3);
        c.set("lambdas=[0.1,0.2]").unwrap();
        assert_eq!(c.lambdas, vec![0.1, 0.2]);
        c.set("output_dir=out/x").unwrap();
        assert_eq!(c.output_dir, "out/x");
        c.set("lambdas.1=0.3").unwrap();
        assert_eq!(c.lambdas, vec![0.1, 0.3]);
        c.set("truncation.scheme=gauss-legendre").unwrap();
        assert_eq!(c.truncation.scheme, GridScheme::GaussLegendre);
        assert!(c.set("rg.nope=1").is_err());
        assert!(c.set("rg.rho=\"x\"").is_err());
        assert!(c.set("rho").is_err());
    }

    #[test]
    fn large_rho_and_strong_coupling_are_flagged() {
        let mut c = ExperimentConfig::default();
        c.rg.rho = 0.3;
        assert!(c.validate().iter().any(|s| s.contains("rho <= 1/(16 C_theta)")));
        let mut c = ExperimentConfig::default();
        c.lambdas = vec![0.6];
        c.sigmas = vec![0.0];
        let v = c.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("mu_0"));
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let s = ExperimentConfig::default().to_json().replacen("\"seed\":", "\"sed\":", 1);
        assert!(ExperimentConfig::from_json(&s).is_err());
        let s = ExperimentConfig::default().to_json().replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(ExperimentConfig::from_json(&s), Err(CliError::Config(_))));
    }
}
