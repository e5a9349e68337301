//! TOML run configuration. Frequencies are in Hz, phases in radians, times
//! in seconds.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::path::Path;

use cavity_nbody::effective::{effective_model_fourth_order_4body, InverseMode, LadderModel, Monomial};
use cavity_nbody::params::{calibrate_alpha_product, derive_couplings, with_alpha_product, PhysicalParams};
use cavity_nbody::validation::ValidationConfig;
use cavity_nbody::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ThreeBody,
    FourBody,
    ExchangeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    Meanfield,
    Lindblad,
    FullCavity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub n_atoms: Option<usize>,
    /// Single-atom vacuum Rabi coupling g₀ (the paper quotes 2g₀).
    pub g0_hz: Option<f64>,
    pub delta_a_hz: Option<f64>,
    pub kappa_hz: Option<f64>,
    pub omega_z_hz: Option<f64>,
    /// [re, im] intracavity amplitude of tone 1 (lower frequency).
    pub alpha1: Option<[f64; 2]>,
    pub alpha2: Option<[f64; 2]>,
    /// Rescale |α₁α₂| so that |χ₃|N² equals this value (three-body only).
    pub target_chi3_n2_hz: Option<f64>,
    pub delta_hz: Option<f64>,
    pub phi_d: Option<f64>,
    /// Offset of tone 2 from the cavity in units of ω_z.
    pub upper_offset: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub interaction_time_s: Option<f64>,
    pub phase_points: Option<usize>,
    pub delta_span_hz: Option<f64>,
    pub delta_points: Option<usize>,
    pub ring_theta0: Option<f64>,
    pub ring_points: Option<usize>,
    /// Binomial projection noise at readout.
    pub noise: Option<bool>,
    pub grid_theta: Option<usize>,
    pub grid_phi: Option<usize>,
}

/// Effective-vs-full validation, in units of ω_z.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub n_atoms: Option<usize>,
    pub fock_cutoff: Option<usize>,
    pub g: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub ramp: Option<f64>,
    pub tolerance: Option<f64>,
    pub detuning_factor: Option<f64>,
    pub samples: Option<usize>,
    pub cycle_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Option<Scheme>,
    pub engine: Option<EngineName>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub physical: PhysicalSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

pub const MAX_EXACT_ATOMS: usize = 400;
pub const MAX_VALIDATE_ATOMS: usize = 8;

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("{key} required")))
}

fn positive(v: f64, key: &str) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim().to_string()))
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(Scheme::ThreeBody)
    }

    pub fn engine(&self) -> EngineName {
        self.engine.unwrap_or(EngineName::Meanfield)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn n_body(&self) -> u32 {
        match self.scheme() {
            Scheme::FourBody => 4,
            _ => 3,
        }
    }

    pub fn physical(&self) -> Result<PhysicalParams, CliError> {
        let p = &self.physical;
        let n_atoms = need(p.n_atoms, "n_atoms")?;
        if n_atoms == 0 {
            return Err(CliError::Config("n_atoms must be positive".into()));
        }
        let g0 = positive(need(p.g0_hz, "g0_hz")?, "g0_hz")? * TAU;
        let delta_a = need(p.delta_a_hz, "delta_a_hz")? * TAU;
        let kappa = need(p.kappa_hz, "kappa_hz")?;
        if !(kappa >= 0.0) {
            return Err(CliError::Config(format!("kappa_hz must be non-negative, got {kappa}")));
        }
        let omega_z = positive(need(p.omega_z_hz, "omega_z_hz")?, "omega_z_hz")? * TAU;
        let delta = p.delta_hz.unwrap_or(0.0) * TAU;
        let c = |a: [f64; 2]| C64::new(a[0], a[1]);
        let (a1, a2) = match (p.alpha1, p.alpha2, p.target_chi3_n2_hz) {
            (Some(a), Some(b), _) => (c(a), c(b)),
            (Some(a), None, _) | (None, Some(a), _) => (c(a), c(a)),
            (None, None, Some(_)) => (C64::new(1.0, 0.0), C64::new(1.0, 0.0)),
            (None, None, None) => return Err(CliError::Config("alpha1 or target_chi3_n2_hz required".into())),
        };
        let n_body = self.n_body();
        let upper = match (n_body, p.upper_offset) {
            (4, None) => Some(2.5),
            (_, u) => u,
        };
        let mut params = PhysicalParams::two_tone(n_atoms, g0, delta_a, kappa * TAU, omega_z, n_body, a1, a2, delta, upper)
            .map_err(|e| CliError::Config(e.to_string()))?;
        params.phi_d = p.phi_d.unwrap_or(0.0);
        if let Some(target) = p.target_chi3_n2_hz {
            if n_body != 3 {
                return Err(CliError::Config("target_chi3_n2_hz is only supported for the three-body scheme".into()));
            }
            let product = calibrate_alpha_product(&params, target * TAU).map_err(|e| CliError::Config(e.to_string()))?;
            params = with_alpha_product(&params, product)?;
        }
        Ok(params)
    }

    pub fn interaction_time(&self) -> Result<f64, CliError> {
        let t = self.protocol.interaction_time_s.unwrap_or(50e-6);
        if t.is_finite() && t >= 0.0 {
            Ok(t)
        } else {
            Err(CliError::Config(format!("interaction_time_s must be non-negative, got {t}")))
        }
    }

    pub fn phase_points(&self) -> usize {
        self.protocol.phase_points.unwrap_or(72)
    }

    pub fn ring(&self) -> (f64, usize) {
        (self.protocol.ring_theta0.unwrap_or(FRAC_PI_4), self.protocol.ring_points.unwrap_or(96))
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.protocol.grid_theta.unwrap_or(20), self.protocol.grid_phi.unwrap_or(40))
    }

    pub fn validation(&self) -> Result<ValidationConfig, CliError> {
        let d = ValidationConfig::default();
        let v = &self.validate;
        let cfg = ValidationConfig {
            n_atoms: v.n_atoms.unwrap_or(d.n_atoms),
            fock_cutoff: v.fock_cutoff.unwrap_or(d.fock_cutoff),
            g: v.g.unwrap_or(d.g),
            omega_z: 1.0,
            kappa: v.kappa.unwrap_or(d.kappa),
            alpha: v.alpha.unwrap_or(d.alpha),
            ramp: v.ramp.unwrap_or(d.ramp),
            detuning_factor: v.detuning_factor.unwrap_or(d.detuning_factor),
            tolerance: v.tolerance.unwrap_or(d.tolerance),
            samples: v.samples.unwrap_or(d.samples),
            cycle_fraction: v.cycle_fraction.unwrap_or(d.cycle_fraction),
        };
        if cfg.n_atoms > MAX_VALIDATE_ATOMS {
            return Err(CliError::Config(format!(
                "validate.n_atoms = {} exceeds the full-model limit of {MAX_VALIDATE_ATOMS}",
                cfg.n_atoms
            )));
        }
        Ok(cfg)
    }
}

/// Collective interaction strength χ_nN^(n−1) (rad/s), its phase offset,
/// and the per-channel decay rate used by sequences.
pub struct Coupling {
    pub chi_n: f64,
    pub phase: f64,
    pub gamma: f64,
}

pub fn coupling(cfg: &RunConfig, params: &PhysicalParams) -> Result<Coupling, CliError> {
    let n = params.n_atoms as f64;
    match cfg.scheme() {
        Scheme::ThreeBody | Scheme::ExchangeOnly => {
            let d = derive_couplings(params)?;
            Ok(Coupling { chi_n: d.chi3 * n * n, phase: params.interaction_phase(3)?, gamma: d.gamma_collective.unwrap_or(0.0) })
        }
        Scheme::FourBody => {
            let m = LadderModel::from_params(params, 4)?;
            let em = effective_model_fourth_order_4body(&m, 8, InverseMode::LeadingOrder)?;
            let c4 = em.coefficient(Monomial::RaiseN);
            Ok(Coupling { chi_n: c4.norm() * n.powi(3), phase: params.phi_d + c4.arg() / 4.0, gamma: 0.0 })
        }
    }
}
