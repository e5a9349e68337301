//! Effective-model versus full atom-cavity comparison for the 3-body scheme
//! at small N, in units where ω_z = 1.

use serde::Serialize;

use crate::dicke::{dicke_state, CollectiveOperator, DickeSpace, OperatorKind};
use crate::dynamics::{evolve_full_cavity, evolve_pure, FullCavityProblem};
use crate::effective::{effective_model_second_order, InverseMode, LadderModel, Tone};
use crate::linalg::{c, CMatrix};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Serialize)]
pub struct ValidationConfig {
    pub n_atoms: usize,
    pub fock_cutoff: usize,
    pub g: f64,
    pub omega_z: f64,
    pub kappa: f64,
    /// |α₁| = |α₂|.
    pub alpha: f64,
    pub ramp: f64,
    /// Off-resonant run uses δ = δ_res + detuning_factor / T.
    pub detuning_factor: f64,
    pub tolerance: f64,
    pub samples: usize,
    /// Simulated span after the ramp, in units of one transfer cycle.
    pub cycle_fraction: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            n_atoms: 4,
            fock_cutoff: 5,
            g: 0.08,
            omega_z: 1.0,
            kappa: 0.0,
            alpha: 0.05,
            ramp: 400.0,
            detuning_factor: 20.0,
            tolerance: 0.1,
            samples: 241,
            cycle_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Shift of δ that cancels the drive-induced Stark shift of the target
    /// transition.
    pub delta_resonant: f64,
    pub coupling: f64,
    pub cycle_time: f64,
    pub times: Vec<f64>,
    pub p_full: Vec<f64>,
    pub p_effective: Vec<f64>,
    pub max_population_error: f64,
    pub max_intermediate_population: f64,
    pub resonant_peak: f64,
    pub detuned_peak: f64,
    pub suppression: f64,
    pub steps: usize,
    pub pass: bool,
}

fn model(cfg: &ValidationConfig, delta: f64) -> Result<LadderModel> {
    let a = C64::new(cfg.alpha, 0.0);
    let wz = cfg.omega_z;
    LadderModel::new(3, cfg.g, wz, cfg.kappa, [Tone { alpha: a, offset: -1.5 * wz }, Tone { alpha: a, offset: 1.5 * wz + delta }])
}

/// Second-order Jz shift from the direct ground-manifold drive terms
/// (𝒢Σ|α|²J₊ at ω_z, 𝒢α₂*α₁J₊ at 4ω_z, 𝒢α₁α₂*J₋ at 2ω_z), which the
/// cavity elimination omits but the full model contains.
fn ground_shift(m: &LadderModel) -> f64 {
    let (a1, a2) = (m.tones[0].alpha, m.tones[1].alpha);
    let wz = m.omega_z;
    let a0 = m.g * (a1.norm_sqr() + a2.norm_sqr());
    let a34 = m.g * (a1 * a2).norm();
    2.0 * (a0 * a0 / wz + a34 * a34 / (4.0 * wz) - a34 * a34 / (2.0 * wz))
}

/// Effective Hamiltonian including the ground shift, and the detuning of
/// the |−N/2⟩ ↔ |−N/2+3⟩ transition.
fn effective(cfg: &ValidationConfig, delta: f64) -> Result<(CMatrix, f64)> {
    let m = model(cfg, delta)?;
    let em = effective_model_second_order(&m, cfg.n_atoms, InverseMode::FullManifold)?;
    let s = em.space;
    let jz = CollectiveOperator::build(s, OperatorKind::Z).into_matrix();
    let h = em.hamiltonian.matrix() + jz * c(ground_shift(&m));
    let mis = (h[(3, 3)] - h[(0, 0)]).re;
    Ok((h, mis))
}

pub fn resonant_delta(cfg: &ValidationConfig) -> Result<f64> {
    let (_, f0) = effective(cfg, 0.0)?;
    let mut d = f0;
    for _ in 0..20 {
        let (_, f) = effective(cfg, d)?;
        let (_, f2) = effective(cfg, d + 1e-9)?;
        let slope = (f2 - f) / 1e-9;
        let step = f / slope;
        d -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    Ok(d)
}

pub fn run_validation(cfg: &ValidationConfig) -> Result<ValidationReport> {
    if cfg.n_atoms > 8 {
        return Err(Error::Domain(format!("validation is limited to N <= 8, got {}", cfg.n_atoms)));
    }
    if cfg.n_atoms < 3 {
        return Err(Error::Domain("validation needs N >= 3".into()));
    }
    if !(cfg.cycle_fraction > 0.0 && cfg.cycle_fraction <= 4.0) {
        return Err(Error::Domain(format!("cycle_fraction must lie in (0, 4], got {}", cfg.cycle_fraction)));
    }
    let space = DickeSpace::new(cfg.n_atoms)?;
    let delta_res = resonant_delta(cfg)?;
    let (h_eff, _) = effective(cfg, delta_res)?;
    let coupling = h_eff[(3, 0)].norm();
    let cycle = std::f64::consts::PI / coupling;
    let t_final = cfg.ramp + cfg.cycle_fraction * cycle;

    let problem = |delta: f64| -> Result<FullCavityProblem> {
        let m = model(cfg, delta)?;
        Ok(FullCavityProblem {
            space,
            fock_cutoff: cfg.fock_cutoff,
            g: cfg.g,
            omega_z: cfg.omega_z,
            kappa: cfg.kappa,
            tones: m.tones,
            ramp: cfg.ramp,
            t_final,
            dt: None,
            samples: cfg.samples,
        })
    };
    let init = dicke_state(space, -space.spin())?;
    let target = 3;

    let (on, off) = rayon::join(
        || problem(delta_res).and_then(|p| evolve_full_cavity(&p, &init).map(|r| (p, r))),
        || problem(delta_res + cfg.detuning_factor / cycle).and_then(|p| evolve_full_cavity(&p, &init)),
    );
    let (p_on, full) = on?;
    let detuned = off?;

    let psi0 = match &init {
        crate::dicke::QuantumState::Pure { vector, .. } => vector.clone(),
        _ => unreachable!(),
    };
    let eff_times: Vec<f64> = full.times.iter().map(|&t| p_on.ramp_integral_sq(t)).collect();
    let p_eff: Vec<f64> = evolve_pure(&h_eff, &psi0, &eff_times).iter().map(|v| v[target].norm_sqr()).collect();
    let p_full: Vec<f64> = full.dicke_populations.iter().map(|p| p[target]).collect();
    let max_err = p_full.iter().zip(&p_eff).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let resonant_peak = p_full.iter().copied().fold(0.0, f64::max);
    let detuned_peak = detuned.dicke_populations.iter().map(|p| p[target]).fold(0.0, f64::max);
    let suppression = resonant_peak / detuned_peak.max(f64::MIN_POSITIVE);
    let max_inter = full.max_photon_population.max(detuned.max_photon_population);
    let pass = max_err < cfg.tolerance && max_inter < 1e-3 && suppression >= 10.0;
    Ok(ValidationReport {
        delta_resonant: delta_res,
        coupling,
        cycle_time: cycle,
        times: full.times.clone(),
        p_full,
        p_effective: p_eff,
        max_population_error: max_err,
        max_intermediate_population: max_inter,
        resonant_peak,
        detuned_peak,
        suppression,
        steps: full.steps,
        pass,
    })
}
