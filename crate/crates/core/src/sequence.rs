//! Pulse sequences (Bragg rotations, interaction windows, projective readout)
//! and the fringe, resonance and spectrum analyses built on them.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::harmonic_magnitudes;
use crate::dicke::{spin_vector, CollectiveOperator, DickeSpace, OperatorKind, QuantumState};
use crate::dynamics::{evolve_lindblad, n_body_hamiltonian, LindbladProblem, MeanFieldModel, MeanFieldState};
use crate::linalg::{c, dagger, unitary_exp, CMatrix};
use crate::ode::Tolerances;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Jz,
    Jx,
    Jy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    /// Instantaneous rotation exp(−iA(Jx cos φ_B + Jy sin φ_B)); `duration`
    /// is dead time only.
    BraggPulse { area: f64, axis_phase: f64, duration: f64 },
    /// Effective n-body evolution; δ enters as a −(δ/n)Jz frame term.
    /// `contrast` multiplies the final readout.
    InteractionWindow { duration: f64, phi_d: f64, delta: f64, contrast: f64 },
    ReadoutMap { basis: Basis },
    /// Free evolution under the sequence's residual Jz detuning.
    Wait { duration: f64 },
}

impl Step {
    pub fn window(duration: f64, phi_d: f64, delta: f64) -> Self {
        Step::InteractionWindow { duration, phi_d, delta, contrast: 1.0 }
    }

    pub fn pulse(area: f64, axis_phase: f64) -> Self {
        Step::BraggPulse { area, axis_phase, duration: 0.0 }
    }
}

/// Collective coupling shared by all interaction windows of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub n_body: u32,
    /// χ_n N^(n−1), rad/s.
    pub chi_n: f64,
    /// Per-channel collective decay rate Γ, rad/s.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub steps: Vec<Step>,
    pub interaction: Interaction,
    /// Residual Jz detuning during waits, rad/s.
    #[serde(default)]
    pub wait_detuning: f64,
}

impl PulseSequence {
    /// Bragg π/2 at φ_B from the south pole, one interaction window, Jz readout.
    pub fn ramsey(interaction: Interaction, phi_b: f64, duration: f64, phi_d: f64, delta: f64) -> Self {
        Self {
            steps: vec![Step::pulse(FRAC_PI_2, phi_b), Step::window(duration, phi_d, delta), Step::ReadoutMap { basis: Basis::Jz }],
            interaction,
            wait_detuning: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Sequence(m));
        let n = self.steps.len();
        if n == 0 {
            return bad("empty sequence".into());
        }
        for (i, s) in self.steps.iter().enumerate() {
            match *s {
                Step::ReadoutMap { .. } if i + 1 != n => return bad(format!("readout at step {i} is not terminal")),
                Step::BraggPulse { area, duration, axis_phase } => {
                    if !(0.0..=TAU).contains(&area) || !axis_phase.is_finite() || !(duration >= 0.0) {
                        return bad(format!("step {i}: pulse area must be in [0, 2π] and duration ≥ 0"));
                    }
                }
                Step::InteractionWindow { duration, contrast, phi_d, delta } => {
                    if !(duration >= 0.0) || !(contrast > 0.0 && contrast <= 1.0) || !phi_d.is_finite() || !delta.is_finite() {
                        return bad(format!("step {i}: window needs duration ≥ 0 and contrast in (0, 1]"));
                    }
                }
                Step::Wait { duration } if !(duration >= 0.0) => return bad(format!("step {i}: negative wait")),
                _ => {}
            }
        }
        if !matches!(self.steps[n - 1], Step::ReadoutMap { .. }) {
            return bad("sequence must end with a readout".into());
        }
        if self.interaction.n_body < 2 {
            return bad("interaction order must be at least 2".into());
        }
        Ok(())
    }

    fn map_windows(&mut self, f: impl Fn(&mut f64, &mut f64, &mut f64)) {
        for s in &mut self.steps {
            if let Step::InteractionWindow { duration, phi_d, delta, .. } = s {
                f(duration, phi_d, delta);
            }
        }
    }

    fn set_first_pulse_phase(&mut self, v: f64) -> Result<()> {
        for s in &mut self.steps {
            if let Step::BraggPulse { axis_phase, .. } = s {
                *axis_phase = v;
                return Ok(());
            }
        }
        Err(Error::Sequence("no Bragg pulse to scan".into()))
    }
}

/// Readout pulse mapping `basis` onto Jz.
fn readout_pulse(basis: Basis) -> Option<(f64, f64)> {
    match basis {
        Basis::Jz => None,
        Basis::Jy => Some((FRAC_PI_2, 0.0)),
        Basis::Jx => Some((FRAC_PI_2, 3.0 * FRAC_PI_2)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceState {
    MeanField(MeanFieldState),
    Exact(QuantumState),
}

impl SequenceState {
    /// J/(N/2).
    pub fn bloch(&self) -> [f64; 3] {
        match self {
            SequenceState::MeanField(s) => [s.sx, s.sy, s.sz],
            SequenceState::Exact(q) => {
                let h = q.space().spin();
                let v = spin_vector(q);
                [v[0] / h, v[1] / h, v[2] / h]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Readout {
    /// ⟨Jz⟩/(N/2) after the readout mapping.
    pub value: f64,
    /// Dicke populations (exact engine only).
    pub populations: Option<Vec<f64>>,
    /// J/(N/2) after each step.
    pub trace: Vec<[f64; 3]>,
    pub norm: f64,
}

fn rotate(v: [f64; 3], area: f64, axis_phase: f64) -> [f64; 3] {
    // Rodrigues rotation about (cos φ, sin φ, 0).
    let (nx, ny) = (axis_phase.cos(), axis_phase.sin());
    let (s, co) = area.sin_cos();
    let dot = nx * v[0] + ny * v[1];
    let cross = [ny * v[2], -nx * v[2], nx * v[1] - ny * v[0]];
    [
        v[0] * co + cross[0] * s + nx * dot * (1.0 - co),
        v[1] * co + cross[1] * s + ny * dot * (1.0 - co),
        v[2] * co + cross[2] * s,
    ]
}

fn rotate_z(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, co) = angle.sin_cos();
    [v[0] * co - v[1] * s, v[0] * s + v[1] * co, v[2]]
}

struct Exact {
    jx: CMatrix,
    jy: CMatrix,
    jz: CMatrix,
    jp: CMatrix,
    jm: CMatrix,
}

impl Exact {
    fn new(space: DickeSpace) -> Self {
        let b = |k| CollectiveOperator::build(space, k).into_matrix();
        Self { jx: b(OperatorKind::X), jy: b(OperatorKind::Y), jz: b(OperatorKind::Z), jp: b(OperatorKind::Plus), jm: b(OperatorKind::Minus) }
    }

    fn apply_unitary(&self, q: QuantumState, u: &CMatrix) -> QuantumState {
        match q {
            QuantumState::Pure { space, fock_levels, vector } => QuantumState::Pure { space, fock_levels, vector: u * vector },
            QuantumState::Density { space, fock_levels, matrix } => {
                QuantumState::Density { space, fock_levels, matrix: u * matrix * dagger(u) }
            }
        }
    }

    fn rotation(&self, area: f64, phase: f64) -> CMatrix {
        let g = &self.jx * c(phase.cos()) + &self.jy * c(phase.sin());
        unitary_exp(&g, area)
    }
}

pub fn run_sequence(initial: &SequenceState, seq: &PulseSequence) -> Result<Readout> {
    seq.validate()?;
    let it = seq.interaction;
    let mut trace = Vec::with_capacity(seq.steps.len());
    let mut contrast = 1.0;

    match initial {
        SequenceState::MeanField(s0) => {
            let mut v = [s0.sx, s0.sy, s0.sz];
            for step in &seq.steps {
                match *step {
                    Step::BraggPulse { area, axis_phase, .. } => v = rotate(v, area, axis_phase),
                    Step::InteractionWindow { duration, phi_d, delta, contrast: k } => {
                        if duration > 0.0 {
                            let m = MeanFieldModel { n_body: it.n_body, chi_n: it.chi_n, phi_d, gamma: it.gamma, z_field: -delta / it.n_body as f64 };
                            let s = m.evolve(MeanFieldState { sx: v[0], sy: v[1], sz: v[2] }, &[duration], Tolerances::new(1e-11, 1e-14))?[0];
                            v = [s.sx, s.sy, s.sz];
                        }
                        contrast *= k;
                    }
                    Step::Wait { duration } => v = rotate_z(v, seq.wait_detuning * duration),
                    Step::ReadoutMap { basis } => {
                        if let Some((a, p)) = readout_pulse(basis) {
                            v = rotate(v, a, p);
                        }
                    }
                }
                trace.push(v);
            }
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            Ok(Readout { value: v[2] * contrast, populations: None, trace, norm })
        }
        SequenceState::Exact(q0) => {
            q0.validate()?;
            if q0.fock_levels() != 1 {
                return Err(Error::Domain("sequences act on the bare Dicke ladder".into()));
            }
            let space = q0.space();
            let ex = Exact::new(space);
            let n_atoms = space.n_atoms() as f64;
            let chi = it.chi_n / n_atoms.powi(it.n_body as i32 - 1);
            let mut q = q0.clone();
            if it.gamma > 0.0 {
                q = QuantumState::density(space, q.to_density())?;
            }
            let bloch = |q: &QuantumState| SequenceState::Exact(q.clone()).bloch();
            for step in &seq.steps {
                match *step {
                    Step::BraggPulse { area, axis_phase, .. } => q = ex.apply_unitary(q, &ex.rotation(area, axis_phase)),
                    Step::InteractionWindow { duration, phi_d, delta, contrast: k } => {
                        contrast *= k;
                        if duration > 0.0 {
                            let h = n_body_hamiltonian(space, it.n_body, chi, phi_d, -delta / it.n_body as f64);
                            q = if it.gamma > 0.0 {
                                let p = LindbladProblem {
                                    hamiltonian: h,
                                    jumps: vec![(it.gamma, ex.jp.clone()), (it.gamma, ex.jm.clone())],
                                    times: vec![duration],
                                    initial: q,
                                    tolerances: Tolerances::new(1e-10, 1e-13),
                                };
                                let r = evolve_lindblad(&p)?;
                                QuantumState::density(space, r.states[0].clone())?
                            } else {
                                ex.apply_unitary(q, &unitary_exp(&h, duration))
                            };
                        }
                    }
                    Step::Wait { duration } => q = ex.apply_unitary(q, &unitary_exp(&ex.jz, seq.wait_detuning * duration)),
                    Step::ReadoutMap { basis } => {
                        if let Some((a, p)) = readout_pulse(basis) {
                            q = ex.apply_unitary(q, &ex.rotation(a, p));
                        }
                    }
                }
                trace.push(bloch(&q));
            }
            let norm = match &q {
                QuantumState::Pure { vector, .. } => vector.norm(),
                QuantumState::Density { matrix, .. } => matrix.trace().re,
            };
            let h = space.spin();
            let value = (q.dicke_populations().iter().zip(space.m_values()).map(|(p, m)| p * m).sum::<f64>()) / h;
            Ok(Readout { value: value * contrast, populations: Some(q.dicke_populations()), trace, norm })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariable {
    PhiB,
    Delta,
    PhiD,
}

/// Least-squares fit A·sin(nx + φ₀) + c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicFit {
    pub harmonic: u32,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// 1σ on the amplitude from the residual scatter.
    pub sigma: f64,
    pub residual_rms: f64,
}

pub fn fit_harmonic(x: &[f64], y: &[f64], n: u32) -> Result<HarmonicFit> {
    let m = x.len();
    if m != y.len() {
        return Err(Error::DimensionMismatch { expected: m, got: y.len() });
    }
    if m <= 3 {
        return Err(Error::Fit(format!("{m} points cannot determine 3 fit parameters")));
    }
    let nf = n as f64;
    let a = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => (nf * x[i]).sin(),
        1 => (nf * x[i]).cos(),
        _ => 1.0,
    });
    let b = DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let inv = ata.try_inverse().ok_or_else(|| Error::Fit("design matrix is singular".into()))?;
    let p = &inv * a.transpose() * &b;
    let res = &b - &a * &p;
    let rss = res.norm_squared();
    let var = rss / (m - 3) as f64;
    let (s, co) = (p[0], p[1]);
    let amp = s.hypot(co);
    let sigma = if amp > 0.0 {
        ((s * s * inv[(0, 0)] + co * co * inv[(1, 1)] + 2.0 * s * co * inv[(0, 1)]) * var).max(0.0).sqrt() / amp
    } else {
        (0.5 * (inv[(0, 0)] + inv[(1, 1)]) * var).sqrt()
    };
    Ok(HarmonicFit { harmonic: n, amplitude: amp, phase: co.atan2(s), offset: p[2], sigma, residual_rms: (rss / m as f64).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeScan {
    pub variable: ScanVariable,
    pub values: Vec<f64>,
    /// ΔJz/(N/2) relative to the same sequence without interaction.
    pub results: Vec<f64>,
    pub fit: Option<HarmonicFit>,
    pub warnings: Vec<String>,
}

fn substitute(template: &PulseSequence, variable: ScanVariable, v: f64) -> Result<PulseSequence> {
    let mut s = template.clone();
    match variable {
        ScanVariable::PhiB => s.set_first_pulse_phase(v)?,
        ScanVariable::Delta => s.map_windows(|_, _, d| *d = v),
        ScanVariable::PhiD => s.map_windows(|_, p, _| *p = v),
    }
    Ok(s)
}

/// Runs one sequence per scan value (in parallel, output in input order)
/// and fits the n-th harmonic when the scan variable is a phase.
pub fn fringe_scan(template: &PulseSequence, variable: ScanVariable, values: &[f64], initial: &SequenceState) -> Result<FringeScan> {
    template.validate()?;
    let results: Vec<f64> = values
        .par_iter()
        .map(|&v| {
            let seq = substitute(template, variable, v)?;
            let mut base = seq.clone();
            base.map_windows(|t, _, _| *t = 0.0);
            Ok(run_sequence(initial, &seq)?.value - run_sequence(initial, &base)?.value)
        })
        .collect::<Result<_>>()?;
    let n = template.interaction.n_body;
    let mut warnings = Vec::new();
    let fit = if variable == ScanVariable::Delta {
        None
    } else {
        let span = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
        let cycles = (n as f64 * span / TAU).max(1.0);
        if (values.len() as f64) < 12.0 * cycles {
            warnings.push(format!("{} points for {cycles:.1} cycles; at least 12 per cycle recommended", values.len()));
        }
        Some(fit_harmonic(values, &results, n)?)
    };
    Ok(FringeScan { variable, values: values.to_vec(), results, fit, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceScan {
    pub delta: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub sigma: Vec<f64>,
    pub peak_delta: f64,
    /// Full width at half maximum of the central lobe, rad/s.
    pub fwhm: Option<f64>,
}

/// Uniform φ_B grid covering [0, 2π).
pub fn phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

/// n-cycle fringe amplitude as a function of δ.
pub fn resonance_scan(template: &PulseSequence, deltas: &[f64], phase_points: usize, initial: &SequenceState) -> Result<ResonanceScan> {
    let phis = phase_grid(phase_points);
    let fits: Vec<HarmonicFit> = deltas
        .par_iter()
        .map(|&d| {
            let seq = substitute(template, ScanVariable::Delta, d)?;
            let f = fringe_scan(&seq, ScanVariable::PhiB, &phis, initial)?;
            Ok(f.fit.expect("phase scans are fitted"))
        })
        .collect::<Result<_>>()?;
    let amplitude: Vec<f64> = fits.iter().map(|f| f.amplitude).collect();
    let sigma = fits.iter().map(|f| f.sigma).collect();
    let (imax, _) = amplitude.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
    Ok(ResonanceScan {
        delta: deltas.to_vec(),
        fwhm: fwhm(deltas, &amplitude, imax),
        peak_delta: deltas.get(imax).copied().unwrap_or(0.0),
        amplitude,
        sigma,
    })
}

fn fwhm(x: &[f64], y: &[f64], imax: usize) -> Option<f64> {
    let half = y.get(imax)? / 2.0;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let mut right = None;
    for i in imax..x.len().saturating_sub(1) {
        if y[i + 1] < half {
            right = Some(cross(i, i + 1));
            break;
        }
    }
    let mut left = None;
    for i in (1..=imax).rev() {
        if y[i - 1] < half {
            left = Some(cross(i, i - 1));
            break;
        }
    }
    Some(right? - left?)
}

/// One-sided power at integer cycles 0..=n/2 of a phase scan; sums to the
/// mean square of the samples.
pub fn power_spectrum(fringe: &FringeScan) -> Result<Vec<f64>> {
    let v = &fringe.values;
    let m = v.len();
    if m < 2 {
        return Err(Error::Domain("spectrum needs at least 2 points".into()));
    }
    let step = TAU / m as f64;
    if v[0].abs() > 1e-9 || v.iter().enumerate().any(|(k, &x)| (x - k as f64 * step).abs() > 1e-9) {
        return Err(Error::Domain("spectrum needs a uniform grid covering exactly [0, 2π)".into()));
    }
    let mags = harmonic_magnitudes(&fringe.results);
    let power: Vec<f64> = mags
        .iter()
        .enumerate()
        .map(|(k, a)| if k == 0 || (m.is_multiple_of(2) && k == m / 2) { a * a } else { 2.0 * a * a })
        .collect();
    let total: f64 = power.iter().sum();
    let ms = fringe.results.iter().map(|x| x * x).sum::<f64>() / m as f64;
    if (total - ms).abs() > 1e-10 * ms.max(1e-300) && ms > 0.0 {
        return Err(Error::Integrator(format!("Parseval check failed: {total} vs {ms}")));
    }
    Ok(power)
}

/// Bloch vector of the south pole.
pub fn south_pole() -> MeanFieldState {
    MeanFieldState { sx: 0.0, sy: 0.0, sz: -1.0 }
}

/// Largest harmonic index (above DC) in a spectrum.
pub fn dominant_harmonic(power: &[f64]) -> usize {
    crate::analysis::dominant(power).0
}
