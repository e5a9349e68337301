//! Bloch-sphere flow fields, fixed points and ring deformation for the
//! mean-field n-body model.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::dynamics::{MeanFieldModel, MeanFieldState};
use crate::ode::Tolerances;
use crate::{Error, Result, C64};

/// Polar clip applied to sampling grids.
pub const POLE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub theta: f64,
    pub phi: f64,
    pub dtheta_dt: f64,
    pub dphi_dt: f64,
}

impl FlowSample {
    /// Tangent vector (dθ/dt, sinθ·dφ/dt).
    pub fn flow(&self) -> [f64; 2] {
        [self.dtheta_dt, self.theta.sin() * self.dphi_dt]
    }

    pub fn speed(&self) -> f64 {
        let [a, b] = self.flow();
        a.hypot(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Center,
    Saddle,
    Stable,
    Unstable,
    /// Vanishing linearization; see [`FixedPoint::sign_changes`].
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub theta: f64,
    pub phi: f64,
    pub jacobian_eigenvalues: [C64; 2],
    pub classification: Stability,
    /// Sign changes of dθ/dt around a small circle about a pole.
    pub sign_changes: Option<usize>,
    pub flow_magnitude: f64,
}

impl FixedPoint {
    pub fn is_pole(&self) -> bool {
        self.theta.sin() < 1e-12
    }

    /// Pole with 2n alternating inflow/outflow sectors.
    pub fn is_trifurcation(&self, n_body: u32) -> bool {
        self.classification == Stability::Degenerate && self.sign_changes == Some(2 * n_body as usize)
    }
}

/// Regular (θ, φ) grid with θ clipped away from the poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_theta * self.n_phi);
        for i in 0..self.n_theta {
            let th = if self.n_theta == 1 { PI / 2.0 } else { PI * i as f64 / (self.n_theta - 1) as f64 };
            let th = th.clamp(POLE_EPS, PI - POLE_EPS);
            for j in 0..self.n_phi {
                out.push((th, TAU * j as f64 / self.n_phi as f64));
            }
        }
        out
    }
}

pub fn flow_at(model: &MeanFieldModel, theta: f64, phi: f64) -> FlowSample {
    let (dtheta_dt, dphi_dt) = model.polar_flow(theta, phi);
    FlowSample { theta, phi, dtheta_dt, dphi_dt }
}

pub fn sample_flow_field(model: &MeanFieldModel, grid: Grid) -> Vec<FlowSample> {
    grid.points().par_iter().map(|&(t, p)| flow_at(model, t, p)).collect()
}

fn wrap(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p < 1e-12 || TAU - p < 1e-12 {
        0.0
    } else {
        p
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn jacobian(model: &MeanFieldModel, theta: f64, phi: f64) -> Matrix2<f64> {
    let h = 1e-5;
    let (a1, b1) = model.polar_flow(theta + h, phi);
    let (a0, b0) = model.polar_flow(theta - h, phi);
    let (a3, b3) = model.polar_flow(theta, phi + h);
    let (a2, b2) = model.polar_flow(theta, phi - h);
    Matrix2::new((a1 - a0) / (2.0 * h), (a3 - a2) / (2.0 * h), (b1 - b0) / (2.0 * h), (b3 - b2) / (2.0 * h))
}

fn eigenvalues(j: &Matrix2<f64>) -> [C64; 2] {
    let tr = j.trace();
    let det = j.determinant();
    let disc = C64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    [C64::new(tr / 2.0, 0.0) + disc, C64::new(tr / 2.0, 0.0) - disc]
}

fn classify(ev: &[C64; 2], scale: f64) -> Stability {
    let mag = ev[0].norm().max(ev[1].norm());
    if mag < 1e-6 * scale {
        return Stability::Degenerate;
    }
    let tol = 1e-8 * mag;
    let (r0, r1) = (ev[0].re, ev[1].re);
    if r0.abs() < tol && r1.abs() < tol {
        Stability::Center
    } else if r0 * r1 < 0.0 {
        Stability::Saddle
    } else if r0 < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

fn newton(model: &MeanFieldModel, mut th: f64, mut ph: f64, scale: f64) -> Option<(f64, f64)> {
    for _ in 0..100 {
        let (a, b) = model.polar_flow(th, ph);
        let j = jacobian(model, th, ph);
        let inv = j.try_inverse()?;
        let mut d = inv * nalgebra::Vector2::new(a, b);
        let len = d.norm();
        if len > 0.2 {
            d *= 0.2 / len;
        }
        th -= d[0];
        ph -= d[1];
        if !(0.0..=PI).contains(&th) || th.sin() < 1e-3 {
            return None;
        }
        if len < 1e-14 {
            break;
        }
    }
    let (a, b) = model.polar_flow(th, ph);
    (a.hypot(th.sin() * b) < 1e-11 * scale).then_some((th, wrap(ph)))
}

/// Number of sign changes of dθ/dt on the circle at polar distance `eps`
/// from the pole.
pub fn pole_sign_changes(model: &MeanFieldModel, north: bool, eps: f64, samples: usize) -> usize {
    let th = if north { eps } else { PI - eps };
    let signs: Vec<bool> = (0..samples)
        .map(|k| model.polar_flow(th, TAU * (k as f64 + 0.5) / samples as f64).0 > 0.0)
        .collect();
    (0..samples).filter(|&k| signs[k] != signs[(k + 1) % samples]).count()
}

/// All fixed points of the mean-field flow, sorted by (θ, φ).
pub fn find_fixed_points(model: &MeanFieldModel) -> Result<Vec<FixedPoint>> {
    if model.chi_n == 0.0 {
        return Err(Error::TrivialFlow);
    }
    let scale = model.chi_n.abs() + model.gamma.abs() + model.z_field.abs();
    let (nt, np) = (24, 48);
    let seeds: Vec<(f64, f64)> = (0..nt)
        .flat_map(|i| (0..np).map(move |j| (PI * (i as f64 + 0.5) / nt as f64, TAU * (j as f64 + 0.25) / np as f64)))
        .collect();
    let roots: Vec<(f64, f64)> = seeds.par_iter().filter_map(|&(t, p)| newton(model, t, p, scale)).collect();

    let mut uniq: Vec<(f64, f64)> = Vec::new();
    for (t, p) in roots {
        if !uniq.iter().any(|&(t2, p2)| (t - t2).abs() < 1e-6 && angle_diff(p, p2) < 1e-6) {
            uniq.push((t, p));
        }
    }
    let mut out: Vec<FixedPoint> = uniq
        .into_iter()
        .map(|(theta, phi)| {
            let ev = eigenvalues(&jacobian(model, theta, phi));
            FixedPoint {
                theta,
                phi,
                jacobian_eigenvalues: ev,
                classification: classify(&ev, scale),
                sign_changes: None,
                flow_magnitude: flow_at(model, theta, phi).speed(),
            }
        })
        .collect();

    // Poles are fixed only without decay; their linearization vanishes for n ≥ 3.
    if model.gamma == 0.0 {
        for north in [true, false] {
            let theta = if north { 0.0 } else { PI };
            let changes = pole_sign_changes(model, north, 1e-3, 720);
            let classification = if model.n_body >= 2 && changes > 0 { Stability::Degenerate } else { Stability::Center };
            out.push(FixedPoint {
                theta,
                phi: 0.0,
                jacobian_eigenvalues: [C64::new(0.0, 0.0); 2],
                classification,
                sign_changes: Some(changes),
                flow_magnitude: 0.0,
            });
        }
    }
    out.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.phi.total_cmp(&b.phi)));
    Ok(out)
}

/// First-order change of Jz/(N/2) after a short window `dt`.
pub fn short_time_displacement(model: &MeanFieldModel, theta0: f64, phi0: f64, dt: f64) -> f64 {
    let (_, dz) = model.derivatives(&MeanFieldState::from_angles(theta0, phi0));
    dz * dt
}

/// Ring of initial states at fixed θ after mean-field evolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ring {
    pub theta0: f64,
    pub phi0: Vec<f64>,
    /// Final Jx/(N/2).
    pub jx: Vec<f64>,
    /// Final Jy/(N/2).
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.phi0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi0.is_empty()
    }

    /// Fourier magnitudes of the radial coordinate after resampling onto a
    /// uniform grid in final azimuth; index k is the k-th angular harmonic.
    pub fn radial_harmonics(&self) -> Vec<f64> {
        let n = self.len();
        let mut pts: Vec<(f64, f64)> =
            self.jx.iter().zip(&self.jy).map(|(&x, &y)| (wrap(y.atan2(x)), x.hypot(y))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ext = Vec::with_capacity(n + 2);
        ext.push((pts[n - 1].0 - TAU, pts[n - 1].1));
        ext.extend_from_slice(&pts);
        ext.push((pts[0].0 + TAU, pts[0].1));
        let resampled: Vec<f64> = (0..n)
            .map(|k| {
                let a = TAU * k as f64 / n as f64;
                let hi = ext.partition_point(|p| p.0 < a).clamp(1, ext.len() - 1);
                let (lo, up) = (ext[hi - 1], ext[hi]);
                let w = if up.0 == lo.0 { 0.0 } else { (a - lo.0) / (up.0 - lo.0) };
                lo.1 + w * (up.1 - lo.1)
            })
            .collect();
        harmonic_magnitudes(&resampled)
    }

    /// Largest non-DC harmonic and its ratio to the next largest.
    pub fn dominant_harmonic(&self) -> (usize, f64) {
        dominant(&self.radial_harmonics())
    }
}

/// Index of the largest entry above k=0 and its ratio to the runner-up.
pub fn dominant(mags: &[f64]) -> (usize, f64) {
    let mut idx: Vec<usize> = (1..mags.len()).collect();
    idx.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    match idx.as_slice() {
        [] => (0, 0.0),
        [k] => (*k, f64::INFINITY),
        [k, r, ..] => (*k, mags[*k] / mags[*r].max(f64::MIN_POSITIVE)),
    }
}

/// |DFT_k|/n for k = 0..=n/2 of a real periodic sample.
pub fn harmonic_magnitudes(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().take(n / 2 + 1).map(|z| z.norm() / n as f64).collect()
}

pub fn trifurcation_signature(model: &MeanFieldModel, theta0: f64, n_samples: usize, dt: f64) -> Result<Ring> {
    if !(theta0 > 0.0 && theta0 < PI / 2.0) {
        return Err(Error::Domain(format!("ring polar angle must lie in (0, π/2), got {theta0}")));
    }
    let phi0: Vec<f64> = (0..n_samples).map(|k| TAU * k as f64 / n_samples as f64).collect();
    let finals: Vec<MeanFieldState> = phi0
        .par_iter()
        .map(|&p| {
            let s = MeanFieldState::from_angles(theta0, p);
            if dt == 0.0 {
                Ok(s)
            } else {
                model.evolve(s, &[dt], Tolerances::new(1e-12, 1e-14)).map(|v| v[0])
            }
        })
        .collect::<Result<_>>()?;
    Ok(Ring {
        theta0,
        phi0,
        jx: finals.iter().map(|s| s.sx).collect(),
        jy: finals.iter().map(|s| s.sy).collect(),
        jz: finals.iter().map(|s| s.sz).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn m3() -> MeanFieldModel {
        MeanFieldModel::new(3, 2.0 * PI * 390.0, 0.0)
    }

    #[test]
    fn equator_zero_and_pure_polar_flow() {
        let m = m3();
        for q in 0..6 {
            let f = flow_at(&m, FRAC_PI_2, q as f64 * FRAC_PI_3);
            assert!(f.speed() < 1e-12 * m.chi_n);
        }
        let f = flow_at(&m, FRAC_PI_2, FRAC_PI_6);
        assert!(f.dphi_dt.abs() < 1e-12 * m.chi_n);
        assert!(f.dtheta_dt.abs() > 0.1 * m.chi_n);
    }

    #[test]
    fn four_body_period() {
        let m = MeanFieldModel::new(4, 3.0, 0.0);
        for (t, p) in (Grid { n_theta: 9, n_phi: 16 }).points() {
            let a = flow_at(&m, t, p);
            let b = flow_at(&m, t, p + FRAC_PI_2);
            assert!((a.dtheta_dt - b.dtheta_dt).abs() < 1e-12 && (a.dphi_dt - b.dphi_dt).abs() < 1e-12);
        }
    }

    #[test]
    fn eight_fixed_points() {
        let m = m3();
        let fps = find_fixed_points(&m).unwrap();
        assert_eq!(fps.len(), 8);
        let eq: Vec<_> = fps.iter().filter(|f| !f.is_pole()).collect();
        assert_eq!(eq.len(), 6);
        for (q, f) in eq.iter().enumerate() {
            assert!((f.theta - FRAC_PI_2).abs() < 1e-9);
            assert!(angle_diff(f.phi, q as f64 * FRAC_PI_3) < 1e-9);
            assert_eq!(f.classification, Stability::Center);
            assert!(f.flow_magnitude < 1e-10 * m.chi_n);
        }
        for f in fps.iter().filter(|f| f.is_pole()) {
            assert!(f.is_trifurcation(3), "{f:?}");
        }
    }

    #[test]
    fn fixed_points_follow_phase() {
        let m = MeanFieldModel::new(3, 1.0, FRAC_PI_6);
        let fps = find_fixed_points(&m).unwrap();
        let eq: Vec<_> = fps.iter().filter(|f| !f.is_pole()).collect();
        assert_eq!(eq.len(), 6);
        for q in 0..6 {
            let expect = q as f64 * FRAC_PI_3 - FRAC_PI_6;
            assert!(eq.iter().any(|f| angle_diff(f.phi, expect) < 1e-9));
        }
    }

    #[test]
    fn four_body_fixed_points() {
        let fps = find_fixed_points(&MeanFieldModel::new(4, 1.0, 0.0)).unwrap();
        let eq: Vec<_> = fps.iter().filter(|f| !f.is_pole()).collect();
        assert_eq!(eq.len(), 8);
        for f in &eq {
            let q = f.phi / FRAC_PI_4;
            assert!((q - q.round()).abs() < 1e-8);
        }
        assert!(fps.iter().filter(|f| f.is_pole()).all(|f| f.is_trifurcation(4)));
    }

    #[test]
    fn trivial_flow_errors() {
        assert!(matches!(find_fixed_points(&MeanFieldModel::new(3, 0.0, 0.0)), Err(Error::TrivialFlow)));
    }

    #[test]
    fn short_time_formula() {
        let m = MeanFieldModel::new(3, 1.0, 0.0);
        assert!(short_time_displacement(&m, FRAC_PI_2, 0.0, 0.01).abs() < 1e-15);
        assert!((short_time_displacement(&m, FRAC_PI_2, FRAC_PI_6, 0.01) - 0.015).abs() < 1e-12);
        let pred = short_time_displacement(&m, FRAC_PI_2, FRAC_PI_4, 0.01);
        let s = m.evolve(MeanFieldState::from_angles(FRAC_PI_2, FRAC_PI_4), &[0.01], Tolerances::new(1e-12, 1e-15)).unwrap()[0];
        assert!(((s.sz - pred) / pred).abs() < 2e-4);
    }

    #[test]
    fn ring_identity_and_harmonic() {
        let m = m3();
        let r0 = trifurcation_signature(&m, FRAC_PI_4, 96, 0.0).unwrap();
        for (x, y) in r0.jx.iter().zip(&r0.jy) {
            assert!((x.hypot(*y) - FRAC_PI_4.sin()).abs() < 1e-14);
        }
        let r = trifurcation_signature(&m, FRAC_PI_4, 96, 0.1 / m.chi_n).unwrap();
        let (k, ratio) = r.dominant_harmonic();
        assert_eq!(k, 3);
        assert!(ratio > 10.0, "{ratio}");
    }

    #[test]
    fn harmonic_of_pure_tone() {
        let v: Vec<f64> = (0..64).map(|k| (4.0 * TAU * k as f64 / 64.0).sin()).collect();
        let h = harmonic_magnitudes(&v);
        assert_eq!(dominant(&h).0, 4);
        assert!((h[4] - 0.5).abs() < 1e-12);
    }
}
