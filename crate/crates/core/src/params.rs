//! Physical parameters and the closed-form couplings derived from them.
//!
//! Angular frequencies are rad/s throughout. Tone frequencies are stored as
//! offsets from the dispersively shifted cavity resonance ω_c′.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// How a drive tone's intracavity field is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneSource {
    /// Intracavity amplitude α given directly.
    Amplitude(C64),
    /// Injected amplitude ε (rad/s); α follows from the cavity response.
    Injected(C64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTone {
    pub source: ToneSource,
    /// ω − ω_c′ in rad/s.
    pub frequency_offset: f64,
}

impl DriveTone {
    pub fn with_amplitude(alpha: C64, frequency_offset: f64) -> Self {
        Self { source: ToneSource::Amplitude(alpha), frequency_offset }
    }

    pub fn injected(epsilon: C64, frequency_offset: f64) -> Self {
        Self { source: ToneSource::Injected(epsilon), frequency_offset }
    }

    pub fn alpha(&self, kappa: f64) -> Result<C64> {
        match self.source {
            ToneSource::Amplitude(a) => Ok(a),
            ToneSource::Injected(eps) => intracavity_amplitude(eps, self.frequency_offset, kappa),
        }
    }

    pub fn phase(&self, kappa: f64) -> Result<f64> {
        Ok(self.alpha(kappa)?.arg())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub n_atoms: usize,
    /// Single-photon coupling g₀ (half the quoted 2g₀).
    pub g0: f64,
    /// Δ_a = ω_c − ω_a.
    pub delta_a: f64,
    pub kappa: f64,
    pub omega_z: f64,
    pub tones: Vec<DriveTone>,
    pub phi_d: f64,
    /// δ = ω₂ − ω₁ − nω_z. Informational; the tone offsets are authoritative.
    pub six_photon_detuning: f64,
}

impl PhysicalParams {
    /// Two tones placed for the n-body scheme.
    ///
    /// n = 3 uses the symmetric placement ω − ω_c′ = ∓(3/2)ω_z, so that
    /// Δ_c2 = −Δ_c1 = ω_z/2. Other orders need `upper_offset`, the offset of
    /// tone 2 in units of ω_z; tone 1 then sits n·ω_z below it. A nonzero δ
    /// moves tone 2 only.
    #[allow(clippy::too_many_arguments)]
    pub fn two_tone(
        n_atoms: usize,
        g0: f64,
        delta_a: f64,
        kappa: f64,
        omega_z: f64,
        n_body: u32,
        alpha1: C64,
        alpha2: C64,
        delta: f64,
        upper_offset: Option<f64>,
    ) -> Result<Self> {
        let n = n_body as f64;
        let o2 = match (n_body, upper_offset) {
            (_, Some(u)) => u * omega_z,
            (3, None) => 1.5 * omega_z,
            _ => {
                return Err(Error::Domain(format!(
                    "tone placement for n = {n_body} must be given explicitly"
                )))
            }
        };
        let o1 = o2 - n * omega_z;
        let p = Self {
            n_atoms,
            g0,
            delta_a,
            kappa,
            omega_z,
            tones: vec![
                DriveTone::with_amplitude(alpha1, o1),
                DriveTone::with_amplitude(alpha2, o2 + delta),
            ],
            phi_d: 0.0,
            six_photon_detuning: delta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric n = 3 configuration with |α₁| = |α₂| = `alpha`.
    pub fn symmetric_three_body(
        n_atoms: usize,
        g0: f64,
        delta_a: f64,
        kappa: f64,
        omega_z: f64,
        alpha: f64,
    ) -> Result<Self> {
        Self::two_tone(n_atoms, g0, delta_a, kappa, omega_z, 3, C64::new(alpha, 0.0), C64::new(alpha, 0.0), 0.0, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::Domain("n_atoms must be positive".into()));
        }
        for (name, v) in [("g0", self.g0), ("delta_a", self.delta_a), ("kappa", self.kappa), ("omega_z", self.omega_z)] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} is not finite")));
            }
        }
        if self.kappa < 0.0 {
            return Err(Error::Domain("kappa must be non-negative".into()));
        }
        if self.omega_z <= 0.0 {
            return Err(Error::Domain("omega_z must be positive".into()));
        }
        if self.tones.len() != 2 {
            return Err(Error::Domain(format!("expected 2 tones, got {}", self.tones.len())));
        }
        Ok(())
    }

    /// Non-fatal regime warnings.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta_a.abs() < 100.0 * self.kappa.max(self.omega_z) {
            w.push(format!(
                "|delta_a| = {:.3e} is not much larger than max(kappa, omega_z) = {:.3e}",
                self.delta_a.abs(),
                self.kappa.max(self.omega_z)
            ));
        }
        w
    }

    /// Dispersive cavity shift N g₀²/(2Δ_a), already folded into ω_c′.
    pub fn dispersive_shift(&self) -> f64 {
        self.n_atoms as f64 * self.g0 * self.g0 / (2.0 * self.delta_a)
    }

    pub fn alphas(&self) -> Result<(C64, C64)> {
        self.validate()?;
        Ok((self.tones[0].alpha(self.kappa)?, self.tones[1].alpha(self.kappa)?))
    }

    /// (Δ_c1, Δ_c2): Δ_c1 = ω₁ + ω_z − ω_c′, Δ_c2 = ω₂ − ω_z − ω_c′.
    pub fn cavity_detunings(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok((
            self.tones[0].frequency_offset + self.omega_z,
            self.tones[1].frequency_offset - self.omega_z,
        ))
    }

    /// Nearest resonant order n and the residual δ = ω₂ − ω₁ − nω_z.
    pub fn resonance_order(&self) -> Result<(u32, f64)> {
        self.validate()?;
        let sep = self.tones[1].frequency_offset - self.tones[0].frequency_offset;
        let n = (sep / self.omega_z).round();
        if n < 1.0 {
            return Err(Error::ResonanceCondition(format!("tone separation {sep:.3e} rad/s below omega_z")));
        }
        Ok((n as u32, sep - n * self.omega_z))
    }

    /// Whether Δ_c1 = −Δ_c2 and |α₁| = |α₂| to relative precision `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let (Ok((d1, d2)), Ok((a1, a2))) = (self.cavity_detunings(), self.alphas()) else {
            return false;
        };
        let dscale = d1.abs().max(d2.abs()).max(f64::MIN_POSITIVE);
        let ascale = a1.norm().max(a2.norm()).max(f64::MIN_POSITIVE);
        (d1 + d2).abs() <= tol * dscale && (a1.norm() - a2.norm()).abs() <= tol * ascale
    }

    /// Interaction phase φ_d including the relative tone phase arg(α₁*α₂)/n.
    pub fn interaction_phase(&self, n_body: u32) -> Result<f64> {
        let (a1, a2) = self.alphas()?;
        Ok(self.phi_d + (a1.conj() * a2).arg() / n_body as f64)
    }
}

/// 𝒢 = g₀²/(4Δ_a).
pub fn derive_g(params: &PhysicalParams) -> Result<f64> {
    g_from(params.g0, params.delta_a)
}

pub fn g_from(g0: f64, delta_a: f64) -> Result<f64> {
    if delta_a == 0.0 {
        return Err(Error::Singular("delta_a = 0".into()));
    }
    Ok(g0 * g0 / (4.0 * delta_a))
}

/// α = ε / (iκ/2 + (ω − ω_c)).
pub fn intracavity_amplitude(epsilon: C64, omega_minus_omega_c: f64, kappa: f64) -> Result<C64> {
    let den = C64::new(omega_minus_omega_c, kappa / 2.0);
    if den.norm() == 0.0 {
        return Err(Error::Singular("drive on resonance with a lossless cavity".into()));
    }
    Ok(epsilon / den)
}

fn lorentz(x: f64, kappa: f64) -> f64 {
    x * x + kappa * kappa / 4.0
}

/// χ₃ = 𝒢³|α₁α₂| Re[1/((Δ_c1 + iκ/2)(Δ_c2 + iκ/2))].
pub fn chi3_closed_form(params: &PhysicalParams) -> Result<f64> {
    let g = derive_g(params)?;
    let (a1, a2) = params.alphas()?;
    let p = chi3_denominator(params)?;
    Ok(g.powi(3) * (a1 * a2).norm() * (1.0 / p).re)
}

fn chi3_denominator(params: &PhysicalParams) -> Result<C64> {
    let (d1, d2) = params.cavity_detunings()?;
    let k = params.kappa / 2.0;
    let p = C64::new(d1, k) * C64::new(d2, k);
    if p.norm() == 0.0 {
        return Err(Error::Singular("cavity detuning and kappa both zero".into()));
    }
    Ok(p)
}

/// Coefficients of Ĵ₊Ĵ₋ and Ĵ₋Ĵ₊ produced by the two tones.
pub fn chi2_exchange_coefficients(params: &PhysicalParams) -> Result<(f64, f64)> {
    let t = chi2_per_tone(params)?;
    Ok((t[0].0 + t[1].0, t[0].1 + t[1].1))
}

/// Per-tone (Ĵ₊Ĵ₋, Ĵ₋Ĵ₊) coefficients.
pub fn chi2_per_tone(params: &PhysicalParams) -> Result<[(f64, f64); 2]> {
    let g = derive_g(params)?;
    let (a1, a2) = params.alphas()?;
    let (d1, d2) = params.cavity_detunings()?;
    let (k, wz) = (params.kappa, params.omega_z);
    let g2 = g * g;
    let term = |a: C64, x: f64| g2 * a.norm_sqr() * x / lorentz(x, k);
    Ok([
        (term(a1, d1), term(a1, d1 - 2.0 * wz)),
        (term(a2, d2 + 2.0 * wz), term(a2, d2)),
    ])
}

/// Net exchange strength: the (J² − Jz²) part of c₊₋Ĵ₊Ĵ₋ + c₋₊Ĵ₋Ĵ₊, i.e.
/// c₊₋ + c₋₊. The remainder (c₊₋ − c₋₊)Jz is a linear Stark shift.
pub fn net_exchange(params: &PhysicalParams) -> Result<f64> {
    let (pm, mp) = chi2_exchange_coefficients(params)?;
    Ok(pm + mp)
}

/// Dominant superradiant rate Γ = 𝒢²κ|α₁|²/(Δ_c1² + κ²/4) of the balanced
/// configuration.
pub fn collective_decay_rate(params: &PhysicalParams) -> Result<f64> {
    if !params.is_symmetric(1e-9) {
        return Err(Error::Domain("collective_decay_rate needs the symmetric configuration".into()));
    }
    let g = derive_g(params)?;
    let (a1, _) = params.alphas()?;
    let (d1, _) = params.cavity_detunings()?;
    Ok(g * g * params.kappa * a1.norm_sqr() / lorentz(d1, params.kappa))
}

/// Total Ĵ₊ and Ĵ₋ superradiant rates summed over both tones.
pub fn superradiance_rates(params: &PhysicalParams) -> Result<(f64, f64)> {
    let g = derive_g(params)?;
    let (a1, a2) = params.alphas()?;
    let (d1, d2) = params.cavity_detunings()?;
    let (k, wz) = (params.kappa, params.omega_z);
    let r = |a: C64, x: f64| g * g * k * a.norm_sqr() / lorentz(x, k);
    Ok((r(a1, 2.0 * wz - d1) + r(a2, d2), r(a1, d1) + r(a2, d2 + 2.0 * wz)))
}

/// |α₁α₂| giving |χ₃|N² = `target` (rad/s) with the current detunings.
pub fn calibrate_alpha_product(params: &PhysicalParams, target_chi3_n2: f64) -> Result<f64> {
    let g = derive_g(params)?;
    let re = (1.0 / chi3_denominator(params)?).re;
    if re == 0.0 || g == 0.0 {
        return Err(Error::Singular("chi3 identically zero for these detunings".into()));
    }
    let n2 = (params.n_atoms as f64).powi(2);
    Ok(target_chi3_n2.abs() / (n2 * g.powi(3).abs() * re.abs()))
}

/// Rescales both tone amplitudes equally (keeping phases and their ratio)
/// so that |α₁α₂| = `product`. Injected tones are converted to amplitudes.
pub fn with_alpha_product(params: &PhysicalParams, product: f64) -> Result<PhysicalParams> {
    let (a1, a2) = params.alphas()?;
    let cur = (a1 * a2).norm();
    if cur == 0.0 {
        return Err(Error::Domain("cannot rescale a zero tone".into()));
    }
    let s = (product / cur).sqrt();
    let mut p = params.clone();
    p.tones[0].source = ToneSource::Amplitude(a1 * s);
    p.tones[1].source = ToneSource::Amplitude(a2 * s);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedCouplings {
    #[serde(rename = "G")]
    pub g: f64,
    pub delta_c1: f64,
    pub delta_c2: f64,
    pub chi3: f64,
    pub chi2_plus_minus: f64,
    pub chi2_minus_plus: f64,
    pub chi2_single_tone: f64,
    pub net_exchange: f64,
    pub gamma_collective: Option<f64>,
    pub gamma_plus_total: f64,
    pub gamma_minus_total: f64,
    pub chi3_collective: f64,
    pub dispersive_shift: f64,
}

pub fn derive_couplings(params: &PhysicalParams) -> Result<DerivedCouplings> {
    let g = derive_g(params)?;
    let (delta_c1, delta_c2) = params.cavity_detunings()?;
    let chi3 = chi3_closed_form(params)?;
    let per = chi2_per_tone(params)?;
    let (gp, gm) = superradiance_rates(params)?;
    let n = params.n_atoms as f64;
    Ok(DerivedCouplings {
        g,
        delta_c1,
        delta_c2,
        chi3,
        chi2_plus_minus: per[0].0 + per[1].0,
        chi2_minus_plus: per[0].1 + per[1].1,
        chi2_single_tone: per[0].0,
        net_exchange: per[0].0 + per[1].0 + per[0].1 + per[1].1,
        gamma_collective: collective_decay_rate(params).ok(),
        gamma_plus_total: gp,
        gamma_minus_total: gm,
        chi3_collective: chi3 * n * n,
        dispersive_shift: params.dispersive_shift(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn paper_like(alpha: f64) -> PhysicalParams {
        PhysicalParams::symmetric_three_body(1000, TAU * 0.48e6, TAU * 500e6, TAU * 56e3, TAU * 500e3, alpha).unwrap()
    }

    #[test]
    fn g_examples() {
        let p = paper_like(1.0);
        assert_relative_eq!(derive_g(&p).unwrap(), TAU * 115.2, max_relative = 1e-12);
        assert_eq!(g_from(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(g_from(2.0, -3.0).unwrap(), -g_from(2.0, 3.0).unwrap());
        assert!(matches!(g_from(1.0, 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn intracavity_examples() {
        let eps = C64::new(2.0, 0.0);
        let a = intracavity_amplitude(eps, 0.0, 4.0).unwrap();
        assert_relative_eq!(a.im, -2.0 * 2.0 / 4.0, max_relative = 1e-14);
        assert!(a.re.abs() < 1e-15);

        let far = intracavity_amplitude(eps, 40.0, 1.0).unwrap();
        assert!((far.norm() - 2.0 / 40.0).abs() / (2.0 / 40.0) < 0.01);

        let b = intracavity_amplitude(C64::new(TAU * 1e6, 0.0), TAU * 250e3, TAU * 56e3).unwrap();
        assert!((b.norm() - 3.975).abs() < 5e-4);

        assert!(intracavity_amplitude(eps, 0.0, 0.0).is_err());
    }

    #[test]
    fn symmetric_geometry() {
        let p = paper_like(1.0);
        let (d1, d2) = p.cavity_detunings().unwrap();
        assert_relative_eq!(d1, -TAU * 250e3, max_relative = 1e-14);
        assert_relative_eq!(d2, TAU * 250e3, max_relative = 1e-14);
        assert_relative_eq!(d2 - d1, p.omega_z, max_relative = 1e-14);
        assert_eq!(p.resonance_order().unwrap().0, 3);
        assert!(p.is_symmetric(1e-12));
    }

    #[test]
    fn chi3_symmetric_reduction() {
        let p = paper_like(3.0);
        let g = derive_g(&p).unwrap();
        let reduced = -4.0 * g.powi(3) * 9.0 / (p.omega_z.powi(2) + p.kappa.powi(2));
        assert_relative_eq!(chi3_closed_form(&p).unwrap(), reduced, max_relative = 1e-12);
    }

    #[test]
    fn chi3_zero_tone() {
        let mut p = paper_like(3.0);
        p.tones[0].source = ToneSource::Amplitude(C64::new(0.0, 0.0));
        assert_eq!(chi3_closed_form(&p).unwrap(), 0.0);
    }

    #[test]
    fn paper_calibration() {
        let p = paper_like(1.0);
        let prod = calibrate_alpha_product(&p, TAU * 390.0).unwrap();
        // Dropping κ² from the denominator gives the quoted ≈ 15.9.
        assert!((prod - 16.14).abs() < 0.01, "{prod}");
        let g = derive_g(&p).unwrap();
        let no_kappa = TAU * 390.0 * p.omega_z.powi(2) / (4.0 * g.powi(3) * 1e6);
        assert!((no_kappa - 15.9).abs() < 0.05, "{no_kappa}");

        let cal = with_alpha_product(&p, prod).unwrap();
        let d = derive_couplings(&cal).unwrap();
        assert_relative_eq!(d.chi3_collective.abs(), TAU * 390.0, max_relative = 1e-12);
        let gamma = d.gamma_collective.unwrap();
        assert!((gamma / TAU - 0.19).abs() < 0.01, "{}", gamma / TAU);
        assert!(gamma / d.chi3_collective.abs() < 1e-3);
        // Γ/|χ₃| = κ/|𝒢| in the symmetric configuration.
        assert_relative_eq!(gamma / d.chi3.abs(), 4.0 * p.delta_a * p.kappa / p.g0.powi(2), max_relative = 0.5);
        let ratio = d.chi3_collective.abs() / (d.chi2_single_tone.abs() * 1000.0);
        assert!(ratio > 0.5 / 3.0 && ratio < 0.5 * 3.0, "{ratio}");
    }

    #[test]
    fn exchange_cancels_symmetrically() {
        let mut p = paper_like(4.0);
        p.kappa = 0.0;
        let net = net_exchange(&p).unwrap();
        let single = chi2_per_tone(&p).unwrap()[0].0;
        assert!(net.abs() < 1e-12 * single.abs());
        let mut q = p.clone();
        q.tones[1].source = ToneSource::Amplitude(C64::new(8.0, 0.0));
        assert!(net_exchange(&q).unwrap().abs() > 1e-3 * single.abs());
    }

    #[test]
    fn single_tone_exchange_nonzero() {
        let mut p = paper_like(4.0);
        p.tones[1].source = ToneSource::Amplitude(C64::new(0.0, 0.0));
        let (pm, mp) = chi2_exchange_coefficients(&p).unwrap();
        assert!(pm != 0.0 && mp != 0.0);
        assert!((pm + mp).abs() > 0.0);
    }

    #[test]
    fn gamma_needs_symmetry() {
        let mut p = paper_like(4.0);
        p.tones[1].source = ToneSource::Amplitude(C64::new(5.0, 0.0));
        assert!(collective_decay_rate(&p).is_err());
        p.tones[0].source = ToneSource::Amplitude(C64::new(0.0, 0.0));
        p.tones[1].source = ToneSource::Amplitude(C64::new(0.0, 0.0));
        assert_eq!(collective_decay_rate(&p).unwrap(), 0.0);
    }

    #[test]
    fn detuning_moves_upper_tone() {
        let a = C64::new(1.0, 0.0);
        let p = PhysicalParams::two_tone(10, 1.0, 1e6, 0.1, 10.0, 3, a, a, 0.5, None).unwrap();
        assert_relative_eq!(p.tones[0].frequency_offset, -15.0);
        assert_relative_eq!(p.tones[1].frequency_offset, 15.5);
        assert!((p.resonance_order().unwrap().1 - 0.5).abs() < 1e-12);
        assert!(PhysicalParams::two_tone(10, 1.0, 1e6, 0.1, 10.0, 4, a, a, 0.0, None).is_err());
    }

    #[test]
    fn warns_on_small_atomic_detuning() {
        let mut p = paper_like(1.0);
        assert!(p.warnings().is_empty());
        p.delta_a = 10.0 * p.omega_z;
        assert_eq!(p.warnings().len(), 1);
    }

    #[test]
    fn symmetries_of_couplings() {
        let p = paper_like(2.0);
        let base = chi3_closed_form(&p).unwrap();
        let (c0pm, c0mp) = chi2_exchange_coefficients(&p).unwrap();
        let mut rot = p.clone();
        let ph = C64::from_polar(1.0, 0.77);
        for t in &mut rot.tones {
            if let ToneSource::Amplitude(a) = &mut t.source {
                *a *= ph;
            }
        }
        assert_relative_eq!(chi3_closed_form(&rot).unwrap(), base, max_relative = 1e-14);
        let mut flip = p.clone();
        flip.delta_a = -p.delta_a;
        assert_relative_eq!(chi3_closed_form(&flip).unwrap(), -base, max_relative = 1e-14);
        let (pm, mp) = chi2_exchange_coefficients(&flip).unwrap();
        assert_relative_eq!(pm, c0pm, max_relative = 1e-14);
        assert_relative_eq!(mp, c0mp, max_relative = 1e-14);
    }
}
