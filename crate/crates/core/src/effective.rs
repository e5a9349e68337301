//! Effective ground-manifold Hamiltonians and jump operators for the
//! two-tone driven atom-cavity system.
//!
//! Two engines are provided. The second-order effective-operator engine
//! works rung by rung: for every Dicke level `m` and absorbed tone it
//! propagates through the one-photon manifold with the inverse of the
//! non-Hermitian intermediate Hamiltonian, then emits into any tone. Kept
//! couplings are fitted to collective-spin monomials. The third-order
//! average-Hamiltonian engine works at operator level on Dicke ⊗ Fock and
//! only supports κ = 0.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::{matrix_json, CollectiveOperator, DickeSpace, OperatorKind};
use crate::linalg::{c, dagger, CMatrix, CVector};
use crate::params::{derive_g, PhysicalParams};
use crate::{Error, Result, C64};

/// Rotating-wave cutoff: a coupling is dropped when its frame frequency
/// exceeds this multiple of its magnitude.
pub const RWA_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub alpha: C64,
    /// ω − ω_c′ in rad/s.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderModel {
    pub n_body: u32,
    #[serde(rename = "G")]
    pub g: f64,
    pub omega_z: f64,
    pub kappa: f64,
    pub tones: [Tone; 2],
}

impl LadderModel {
    pub fn new(n_body: u32, g: f64, omega_z: f64, kappa: f64, tones: [Tone; 2]) -> Result<Self> {
        if !(2..=4).contains(&n_body) {
            return Err(Error::Unsupported(format!("n_body = {n_body}; supported orders are 2, 3, 4")));
        }
        if omega_z <= 0.0 || kappa < 0.0 {
            return Err(Error::Domain("omega_z must be positive and kappa non-negative".into()));
        }
        let m = Self { n_body, g, omega_z, kappa, tones };
        let delta = m.detuning();
        if delta.abs() > 0.25 * omega_z {
            return Err(Error::ResonanceCondition(format!(
                "tone separation {:.4}·omega_z does not match the n = {n_body} condition",
                (tones[1].offset - tones[0].offset) / omega_z
            )));
        }
        Ok(m)
    }

    pub fn from_params(params: &PhysicalParams, n_body: u32) -> Result<Self> {
        let g = derive_g(params)?;
        let (a1, a2) = params.alphas()?;
        Self::new(
            n_body,
            g,
            params.omega_z,
            params.kappa,
            [
                Tone { alpha: a1, offset: params.tones[0].frequency_offset },
                Tone { alpha: a2, offset: params.tones[1].frequency_offset },
            ],
        )
    }

    /// δ = ω₂ − ω₁ − nω_z.
    pub fn detuning(&self) -> f64 {
        self.tones[1].offset - self.tones[0].offset - self.n_body as f64 * self.omega_z
    }

    /// Frame frequency (ω₂ − ω₁)/n in which the n-body term is static.
    pub fn frame_frequency(&self) -> f64 {
        (self.tones[1].offset - self.tones[0].offset) / self.n_body as f64
    }

    pub fn cavity_detunings(&self) -> (f64, f64) {
        (self.tones[0].offset + self.omega_z, self.tones[1].offset - self.omega_z)
    }

    /// Complex detuning of intermediate |m + dm, 1⟩ reached from ground
    /// rung m by absorbing tone `f`.
    fn intermediate(&self, f: usize, dm: i64) -> C64 {
        C64::new(dm as f64 * self.omega_z - self.tones[f].offset, -self.kappa / 2.0)
    }
}

/// How the intermediate-manifold inverse is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMode {
    /// (n−1)-level chains, each inverse entry truncated to its lowest order
    /// in 𝒢 (the (𝒢f)² denominator corrections are dropped).
    LeadingOrder,
    /// Exact inverse over the whole single-photon manifold.
    FullManifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroundLevel {
    /// |m_z, 0⟩
    Lower,
    /// |m_z + n, 0⟩
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonHermitianBlock {
    /// 0 for tone 1, 1 for tone 2.
    pub tone: usize,
    pub level: GroundLevel,
    pub matrix: CMatrix,
}

/// Intermediate-manifold Hamiltonians Ĥ_NH^(f,l) − E_l − ω_f for the rung
/// pair (m_z, m_z + n). From the lower level the chain climbs through
/// |m_z+1+k, 1⟩, from the upper level it descends through |m_z+n−1−k, 1⟩.
pub fn nonhermitian_hamiltonians(model: &LadderModel, space: DickeSpace, m_z: f64) -> Result<Vec<NonHermitianBlock>> {
    let n = model.n_body as usize;
    let i0 = space
        .index_of(m_z)
        .ok_or_else(|| Error::Domain(format!("m_z = {m_z} is not a rung")))?;
    if i0 + n > space.n_atoms() {
        return Err(Error::Domain(format!("m_z + {n} exceeds N/2")));
    }
    let k = n - 1;
    let mut out = Vec::with_capacity(4);
    for level in [GroundLevel::Lower, GroundLevel::Upper] {
        for f in 0..2 {
            let mut h = CMatrix::zeros(k, k);
            for a in 0..k {
                let (dm, idx) = match level {
                    GroundLevel::Lower => (1 + a as i64, i0 + 1 + a),
                    GroundLevel::Upper => (-(1 + a as i64), i0 + n - 1 - a),
                };
                h[(a, a)] = model.intermediate(f, dm);
                if a + 1 < k {
                    let coupling = match level {
                        GroundLevel::Lower => space.ladder_at(idx),
                        GroundLevel::Upper => space.ladder_at(idx - 1),
                    };
                    h[(a, a + 1)] = c(model.g * coupling);
                    h[(a + 1, a)] = c(model.g * coupling);
                }
            }
            out.push(NonHermitianBlock { tone: f, level, matrix: h });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Monomial {
    RaiseN,
    LowerN,
    PlusMinus,
    MinusPlus,
    Z,
    PlusSqMinusSq,
}

impl Monomial {
    pub fn label(self, n: u32) -> String {
        match self {
            Self::RaiseN => format!("J+^{n}"),
            Self::LowerN => format!("J-^{n}"),
            Self::PlusMinus => "J+J-".into(),
            Self::MinusPlus => "J-J+".into(),
            Self::Z => "Jz".into(),
            Self::PlusSqMinusSq => "J+^2J-^2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpChannel {
    pub tone: usize,
    pub delta_m: i64,
    /// |c|² where the channel fits L ≈ c·J±^|Δm|.
    pub rate: f64,
    /// L/√rate.
    pub operator: CollectiveOperator,
    pub fit_residual: f64,
    /// Higher-order channel excluded from default dynamics.
    pub negligible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    SecondOrder(InverseMode),
    AverageHamiltonian,
}

#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub n_body: u32,
    pub space: DickeSpace,
    pub engine: EngineKind,
    /// Assembled co-rotating-frame Hamiltonian.
    pub hamiltonian: CollectiveOperator,
    pub jumps: Vec<JumpChannel>,
    pub coefficients: BTreeMap<Monomial, C64>,
    pub fit_residual: f64,
    pub polynomial: bool,
    pub warnings: Vec<String>,
}

impl EffectiveModel {
    pub fn coefficient(&self, m: Monomial) -> C64 {
        self.coefficients.get(&m).copied().unwrap_or_default()
    }

    /// c₊₋ + c₋₊, the (J² − Jz²) exchange strength.
    pub fn net_exchange(&self) -> f64 {
        (self.coefficient(Monomial::PlusMinus) + self.coefficient(Monomial::MinusPlus)).re
    }

    /// Hamiltonian rebuilt from the coefficient table, optionally without
    /// the J₊²J₋² correction.
    pub fn monomial_hamiltonian(&self, include_quartic: bool) -> CMatrix {
        let s = self.space;
        let jp = CollectiveOperator::build(s, OperatorKind::Plus).into_matrix();
        let jm = CollectiveOperator::build(s, OperatorKind::Minus).into_matrix();
        let jz = CollectiveOperator::build(s, OperatorKind::Z).into_matrix();
        let n = self.n_body;
        let jpn = crate::dicke::raising_power(s, n);
        let mut h = &jpn * self.coefficient(Monomial::RaiseN) + dagger(&jpn) * self.coefficient(Monomial::LowerN);
        h += (&jp * &jm) * self.coefficient(Monomial::PlusMinus);
        h += (&jm * &jp) * self.coefficient(Monomial::MinusPlus);
        h += &jz * self.coefficient(Monomial::Z);
        if include_quartic {
            let jp2 = &jp * &jp;
            h += (&jp2 * dagger(&jp2)) * self.coefficient(Monomial::PlusSqMinusSq);
        }
        h
    }

    /// Pure n-body part c J₊ⁿ + c* J₋ⁿ.
    pub fn n_body_hamiltonian(&self) -> CMatrix {
        let jpn = crate::dicke::raising_power(self.space, self.n_body);
        let cn = self.coefficient(Monomial::RaiseN);
        &jpn * cn + dagger(&jpn) * cn.conj()
    }

    /// Channels used by default dynamics (negligible ones excluded).
    pub fn default_jumps(&self) -> Vec<(f64, CMatrix)> {
        self.jumps
            .iter()
            .filter(|j| !j.negligible && j.rate > 0.0)
            .map(|j| (j.rate, j.operator.matrix().clone()))
            .collect()
    }

    /// Total rate of non-negligible channels with the given Δm.
    pub fn total_rate(&self, delta_m: i64) -> f64 {
        self.jumps.iter().filter(|j| !j.negligible && j.delta_m == delta_m).map(|j| j.rate).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coeffs: serde_json::Map<String, serde_json::Value> = self
            .coefficients
            .iter()
            .map(|(k, v)| (k.label(self.n_body), serde_json::json!([v.re, v.im])))
            .collect();
        let jumps: Vec<_> = self
            .jumps
            .iter()
            .map(|j| {
                serde_json::json!({
                    "tone": j.tone + 1,
                    "delta_m": j.delta_m,
                    "rate": j.rate,
                    "fit_residual": j.fit_residual,
                    "negligible": j.negligible,
                })
            })
            .collect();
        serde_json::json!({
            "n_body": self.n_body,
            "n_atoms": self.space.n_atoms(),
            "engine": self.engine,
            "coefficients": coeffs,
            "jumps": jumps,
            "fit_residual": self.fit_residual,
            "polynomial": self.polynomial,
            "warnings": self.warnings,
            "hamiltonian": matrix_json(self.hamiltonian.matrix()),
        })
    }
}

/// Amplitudes on |k, 1⟩ after absorbing tone `f` from ground rung `i`,
/// i.e. H_NH⁻¹ V₊ |i, 0⟩. Returned as a dense manifold vector.
fn rung_propagate(model: &LadderModel, space: DickeSpace, i: usize, f: usize, mode: InverseMode) -> CVector {
    let d = space.dimension();
    let ga = model.alpha_g(f);
    let mut v = CVector::zeros(d);
    match mode {
        InverseMode::LeadingOrder => {
            let len = model.n_body as usize - 1;
            // Climbing chain.
            if i + 1 < d {
                let mut a = ga * space.ladder_at(i) / model.intermediate(f, 1);
                let mut idx = i + 1;
                v[idx] += a;
                for k in 1..len {
                    if idx + 1 >= d {
                        break;
                    }
                    a = -a * model.g * space.ladder_at(idx) / model.intermediate(f, 1 + k as i64);
                    idx += 1;
                    v[idx] += a;
                }
            }
            // Descending chain.
            if i > 0 {
                let mut a = ga * space.ladder_at(i - 1) / model.intermediate(f, -1);
                let mut idx = i - 1;
                v[idx] += a;
                for k in 1..len {
                    if idx == 0 {
                        break;
                    }
                    a = -a * model.g * space.ladder_at(idx - 1) / model.intermediate(f, -(1 + k as i64));
                    idx -= 1;
                    v[idx] += a;
                }
            }
        }
        InverseMode::FullManifold => {
            let mut h = CMatrix::zeros(d, d);
            let mut rhs = CVector::zeros(d);
            for k in 0..d {
                h[(k, k)] = model.intermediate(f, k as i64 - i as i64);
                if k + 1 < d {
                    let cpl = c(model.g * space.ladder_at(k));
                    h[(k + 1, k)] = cpl;
                    h[(k, k + 1)] = cpl;
                }
            }
            if i + 1 < d {
                rhs[i + 1] = ga * space.ladder_at(i);
            }
            if i > 0 {
                rhs[i - 1] = ga * space.ladder_at(i - 1);
            }
            // Singular only on exact resonance with κ = 0; leave v at zero
            // and let the caller's warnings report the collision.
            if let Some(sol) = h.lu().solve(&rhs) {
                v = sol;
            }
        }
    }
    v
}

impl LadderModel {
    fn alpha_g(&self, f: usize) -> C64 {
        self.tones[f].alpha * self.g
    }

    fn regime_warnings(&self, space: DickeSpace) -> Vec<String> {
        let mut w = Vec::new();
        let n = self.n_body as i64;
        let mut min_det = f64::INFINITY;
        for f in 0..2 {
            for dm in (-(n - 1)..=-1).chain(1..=n - 1) {
                min_det = min_det.min(self.intermediate(f, dm).re.abs());
            }
        }
        let ratio = self.g.abs() * (space.n_atoms() as f64).sqrt() / min_det;
        if ratio > 0.1 {
            w.push(format!("G*sqrt(N)/min|Delta| = {ratio:.3} exceeds 0.1; perturbative elimination is marginal"));
        }
        if min_det < self.kappa / 2.0 {
            w.push(format!("near-resonant intermediate: |Delta| = {min_det:.3e} below kappa/2"));
        }
        w
    }
}

/// Least-squares fit of `target` onto real basis columns; returns
/// coefficients and relative residual.
fn fit_columns(target: &CVector, basis: &[CVector]) -> (Vec<C64>, f64) {
    let rows = target.len();
    let a = CMatrix::from_fn(rows, basis.len(), |r, k| basis[k][r]);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(target, 1e-13).unwrap_or_else(|_| CVector::zeros(basis.len()));
    let resid = (&a * &x - target).norm();
    let scale = target.norm();
    let rel = if scale == 0.0 { 0.0 } else { resid / scale };
    (x.iter().copied().collect(), rel)
}

/// Monomial fit of an assembled ladder Hamiltonian (diagonal plus ±n
/// bands). `z_known` is a Jz coefficient already present in `h` that is
/// subtracted before the fit and reported as is.
fn fit_hamiltonian(h: &CMatrix, space: DickeSpace, n: u32, z_known: f64) -> (BTreeMap<Monomial, C64>, f64) {
    let d = space.dimension();
    let nu = n as usize;
    let mut table = BTreeMap::new();
    let mut worst: f64 = 0.0;

    let mut target = Vec::new();
    let mut prod = Vec::new();
    for i in 0..d.saturating_sub(nu) {
        let p: f64 = (0..nu).map(|k| space.ladder_at(i + k)).product();
        target.push(h[(i + nu, i)]);
        prod.push(c(p));
    }
    if !target.is_empty() {
        let (x, r) = fit_columns(&CVector::from_vec(target), &[CVector::from_vec(prod)]);
        table.insert(Monomial::RaiseN, x[0]);
        table.insert(Monomial::LowerN, x[0].conj());
        worst = worst.max(r);
    } else {
        table.insert(Monomial::RaiseN, C64::default());
        table.insert(Monomial::LowerN, C64::default());
    }

    let fm1 = |i: usize| if i == 0 { 0.0 } else { space.ladder_at(i - 1) };
    let diag = CVector::from_fn(d, |i, _| h[(i, i)] - c(z_known * space.m_value(i)));
    let mut basis = vec![
        CVector::from_fn(d, |i, _| c(fm1(i).powi(2))),
        CVector::from_fn(d, |i, _| c(space.ladder_at(i).powi(2))),
    ];
    if n == 4 {
        basis.push(CVector::from_fn(d, |i, _| {
            let b = if i < 2 { 0.0 } else { space.ladder_at(i - 2) };
            c(fm1(i).powi(2) * b * b)
        }));
    }
    let (x, r) = fit_columns(&diag, &basis);
    table.insert(Monomial::PlusMinus, x[0]);
    table.insert(Monomial::MinusPlus, x[1]);
    if n == 4 {
        table.insert(Monomial::PlusSqMinusSq, x[2]);
    }
    table.insert(Monomial::Z, c(z_known));
    worst = worst.max(r);

    // Anything outside the fitted bands also counts against the fit.
    let scale = crate::linalg::max_abs(h).max(f64::MIN_POSITIVE);
    for i in 0..d {
        for j in 0..d {
            let off = i.abs_diff(j);
            if off != 0 && off != nu && h[(i, j)].norm() > 0.0 {
                worst = worst.max(h[(i, j)].norm() / scale);
            }
        }
    }
    (table, worst)
}

fn fit_jump(l: &CMatrix, space: DickeSpace, delta_m: i64) -> (C64, f64) {
    let d = space.dimension();
    let k = delta_m.unsigned_abs() as usize;
    let mut target = Vec::new();
    let mut basis = Vec::new();
    for i in 0..d {
        let (row, ok) = if delta_m > 0 { (i + k, i + k < d) } else { (i.wrapping_sub(k), i >= k) };
        if !ok {
            continue;
        }
        let p: f64 = if delta_m > 0 {
            (0..k).map(|q| space.ladder_at(i + q)).product()
        } else {
            (0..k).map(|q| space.ladder_at(i - 1 - q)).product()
        };
        target.push(l[(row, i)]);
        basis.push(c(p));
    }
    if target.is_empty() {
        return (C64::default(), 0.0);
    }
    let (x, r) = fit_columns(&CVector::from_vec(target), &[CVector::from_vec(basis)]);
    (x[0], r)
}

/// Second-order effective-operator elimination of the one-photon manifold.
pub fn effective_model_second_order(model: &LadderModel, n_atoms: usize, mode: InverseMode) -> Result<EffectiveModel> {
    let space = DickeSpace::new(n_atoms)?;
    let d = space.dimension();
    let n = model.n_body;
    let wr = model.frame_frequency();
    let sqrt_k = model.kappa.sqrt();

    // Per (f, rung) propagated amplitudes.
    let props: Vec<[CVector; 2]> = (0..d)
        .into_par_iter()
        .map(|i| [rung_propagate(model, space, i, 0, mode), rung_propagate(model, space, i, 1, mode)])
        .collect();

    let lad = |k: usize| space.ladder_at(k);
    let mut kept = CMatrix::zeros(d, d);
    for (i, pv) in props.iter().enumerate() {
        for (f, v) in pv.iter().enumerate() {
            for fp in 0..2 {
                let emit = model.alpha_g(fp).conj();
                let dw = model.tones[f].offset - model.tones[fp].offset;
                for k in 0..d {
                    if v[k] == C64::default() {
                        continue;
                    }
                    // Emission via J₊ to k+1 and via J₋ to k−1.
                    if k + 1 < d {
                        push_kept(&mut kept, k + 1, i, emit * lad(k) * v[k], wr, dw);
                    }
                    if k > 0 {
                        push_kept(&mut kept, k - 1, i, emit * lad(k - 1) * v[k], wr, dw);
                    }
                }
            }
        }
    }
    let mut h = (&kept + dagger(&kept)) * c(-0.5);
    let z_shift = -model.detuning() / n as f64;
    for i in 0..d {
        h[(i, i)] += c(z_shift * space.m_value(i));
    }

    let (coefficients, fit_residual) = fit_hamiltonian(&h, space, n, z_shift);
    let polynomial = fit_residual < 1e-8;
    let mut warnings = model.regime_warnings(space);
    if !polynomial {
        warnings.push(format!("monomial fit residual {fit_residual:.3e}; model flagged non-polynomial"));
    }

    let mut jumps = Vec::new();
    if model.kappa > 0.0 {
        let span = if mode == InverseMode::FullManifold { d as i64 - 1 } else { n as i64 - 1 };
        for f in 0..2 {
            for dm in (-span..=-1).chain(1..=span) {
                let mut l = CMatrix::zeros(d, d);
                for (i, pv) in props.iter().enumerate() {
                    let k = i as i64 + dm;
                    if k >= 0 && (k as usize) < d {
                        l[(k as usize, i)] = pv[f][k as usize] * sqrt_k;
                    }
                }
                if crate::linalg::max_abs(&l) == 0.0 {
                    continue;
                }
                let (coef, r) = fit_jump(&l, space, dm);
                let rate = coef.norm_sqr();
                let op = if rate > 0.0 { &l * c(1.0 / rate.sqrt()) } else { l };
                jumps.push(JumpChannel {
                    tone: f,
                    delta_m: dm,
                    rate,
                    operator: CollectiveOperator::from_matrix(space, op)?,
                    fit_residual: r,
                    negligible: dm.abs() > 1,
                });
            }
        }
    }

    Ok(EffectiveModel {
        n_body: n,
        space,
        engine: EngineKind::SecondOrder(mode),
        hamiltonian: CollectiveOperator::from_matrix(space, h)?,
        jumps,
        coefficients,
        fit_residual,
        polynomial,
        warnings,
    })
}

fn push_kept(kept: &mut CMatrix, row: usize, col: usize, value: C64, wr: f64, dw: f64) {
    let nu = wr * (row as f64 - col as f64) - dw;
    if nu.abs() <= RWA_FACTOR * value.norm() || nu == 0.0 {
        kept[(row, col)] += value;
    }
}

/// 4-body scheme: same elimination with three intermediate levels per chain.
pub fn effective_model_fourth_order_4body(model: &LadderModel, n_atoms: usize, mode: InverseMode) -> Result<EffectiveModel> {
    if model.n_body != 4 {
        return Err(Error::ResonanceCondition(format!("model is configured for n = {}", model.n_body)));
    }
    let m = LadderModel::new(4, model.g, model.omega_z, model.kappa, model.tones)?;
    let mut out = effective_model_second_order(&m, n_atoms, mode)?;
    let (up, down) = (out.total_rate(1), out.total_rate(-1));
    if up > 0.0 || down > 0.0 {
        let imbalance = (up - down).abs() / up.max(down);
        if imbalance > 1e-6 {
            out.warnings.push(format!("unbalanced superradiance: J+ rate {up:.4e}, J- rate {down:.4e}"));
        }
    }
    Ok(out)
}

/// Third-order average-Hamiltonian result for the 3-body scheme at κ = 0.
pub fn average_hamiltonian_third_order(model: &LadderModel, n_atoms: usize) -> Result<EffectiveModel> {
    if model.kappa != 0.0 {
        return Err(Error::Unsupported("average-Hamiltonian engine requires kappa = 0".into()));
    }
    if model.n_body != 3 {
        return Err(Error::Unsupported("average-Hamiltonian engine covers n = 3 only".into()));
    }
    if model.detuning() != 0.0 {
        return Err(Error::Unsupported("average-Hamiltonian engine requires delta = 0".into()));
    }
    let space = DickeSpace::new(n_atoms)?;
    let fock = 3;
    let d = space.dimension();
    let id_f = CMatrix::identity(fock, fock);
    let mut b = CMatrix::zeros(fock, fock);
    for k in 1..fock {
        b[(k - 1, k)] = c((k as f64).sqrt());
    }
    let bd = dagger(&b);
    let jp = CollectiveOperator::build(space, OperatorKind::Plus).into_matrix();
    let jm = dagger(&jp);
    let kr = |a: &CMatrix, f: &CMatrix| a.kronecker(f);

    let (d1, d2) = model.cavity_detunings();
    let wz = model.omega_z;
    let g = model.g;
    let (a1, a2) = (model.tones[0].alpha, model.tones[1].alpha);

    // h†_i and f_i for the photon-exchanging sidebands.
    let h1d = kr(&jm, &bd) * (a1 * g);
    let h2d = kr(&jm, &b) * (a2.conj() * g);
    let h5d = kr(&jp, &bd) * (a1 * g);
    let h6d = kr(&jp, &b) * (a2.conj() * g);
    let (f1, f2, f5, f6) = (-d1, d2, -d1 + 2.0 * wz, d2 + 2.0 * wz);
    for (name, f) in [("f1", f1), ("f2", f2), ("f5", f5), ("f6", f6), ("f1+f2", f1 + f2)] {
        if f == 0.0 {
            return Err(Error::Singular(format!("{name} = 0")));
        }
    }
    let nb = &bd * &b;
    let alpha_sq = a1.norm_sqr() + a2.norm_sqr();
    let h0d = kr(&jp, &(nb + &id_f * c(alpha_sq))) * c(g);

    let comm = crate::linalg::commutator;
    let mut h = CMatrix::zeros(d * fock, d * fock);
    for (hd, f) in [(&h1d, f1), (&h2d, f2), (&h5d, f5), (&h6d, f6)] {
        h += comm(hd, &dagger(hd)) * c(1.0 / f);
    }
    let (h0, h1, h2) = (dagger(&h0d), dagger(&h1d), dagger(&h2d));
    let third = comm(&comm(&h0, &h1d), &h2d) * c(f1)
        + comm(&comm(&h0d, &h1), &h2) * c(f1)
        + comm(&comm(&h0, &h2d), &h1d) * c(f2)
        + comm(&comm(&h0d, &h2), &h1) * c(f2);
    h += third * c(1.0 / (f1 * f2 * (f1 + f2)));

    let vac = CMatrix::from_fn(d, d, |i, j| h[(i * fock, j * fock)]);
    let (coefficients, fit_residual) = fit_hamiltonian(&vac, space, 3, 0.0);
    let polynomial = fit_residual < 1e-8;
    Ok(EffectiveModel {
        n_body: 3,
        space,
        engine: EngineKind::AverageHamiltonian,
        hamiltonian: CollectiveOperator::from_matrix(space, vac)?,
        jumps: Vec::new(),
        coefficients,
        fit_residual,
        polynomial,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_defect, max_abs};
    use crate::params::{chi2_exchange_coefficients, chi3_closed_form, ToneSource};
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn symmetric(alpha: f64, kappa: f64) -> PhysicalParams {
        PhysicalParams::symmetric_three_body(1000, TAU * 0.48e6, TAU * 500e6, kappa, TAU * 500e3, alpha).unwrap()
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn nh_blocks_decoupled_diagonals() {
        let p = symmetric(3.0, 0.0);
        let mut m = LadderModel::from_params(&p, 3).unwrap();
        m.g = 0.0;
        let s = DickeSpace::new(6).unwrap();
        let blocks = nonhermitian_hamiltonians(&m, s, -3.0).unwrap();
        assert_eq!(blocks.len(), 4);
        for b in &blocks {
            assert_eq!(b.matrix.shape(), (2, 2));
            assert_eq!(b.matrix[(0, 1)], C64::default());
        }
        let (d1, d2) = p.cavity_detunings().unwrap();
        let b = blocks.iter().find(|b| b.tone == 1 && b.level == GroundLevel::Lower).unwrap();
        assert!((b.matrix[(0, 0)].re + d2).abs() < 1e-6);
        assert!((b.matrix[(1, 1)].re - (-d2 + p.omega_z)).abs() < 1e-6);
        let b = blocks.iter().find(|b| b.tone == 0 && b.level == GroundLevel::Upper).unwrap();
        assert!((b.matrix[(0, 0)].re + d1).abs() < 1e-6);
        assert!(nonhermitian_hamiltonians(&m, s, 1.0).is_err());
    }

    #[test]
    fn nh_block_kappa_and_inverse() {
        let p = symmetric(3.0, TAU * 56e3);
        let m = LadderModel::from_params(&p, 3).unwrap();
        let s = DickeSpace::new(20).unwrap();
        let blocks = nonhermitian_hamiltonians(&m, s, -4.0).unwrap();
        let b = &blocks.iter().find(|b| b.tone == 1 && b.level == GroundLevel::Lower).unwrap().matrix;
        let (_, d2) = p.cavity_detunings().unwrap();
        assert!((b[(0, 0)] - C64::new(-d2, -p.kappa / 2.0)).norm() < 1e-6);
        let gf = m.g * s.ladder_at(s.index_of(-3.0).unwrap());
        assert!((b[(0, 1)].re - gf).abs() < 1e-12 * gf);
        let (e0, e1) = (b[(0, 0)], b[(1, 1)]);
        let det = e0 * e1 - c(gf * gf);
        let closed = CMatrix::from_row_slice(2, 2, &[e1 / det, -gf / det, -gf / det, e0 / det]);
        let inv = b.clone().try_inverse().unwrap();
        assert!(crate::linalg::max_abs_diff(&inv, &closed) < 1e-12 * max_abs(&closed));
    }

    #[test]
    fn chi3_matches_closed_form() {
        let p = symmetric(3.0, TAU * 56e3);
        let m = LadderModel::from_params(&p, 3).unwrap();
        let em = effective_model_second_order(&m, 40, InverseMode::LeadingOrder).unwrap();
        assert!(em.polynomial, "{}", em.fit_residual);
        let chi3 = chi3_closed_form(&p).unwrap();
        assert!(rel(em.coefficient(Monomial::RaiseN), c(chi3)) < 1e-10);
        assert_eq!(em.coefficient(Monomial::LowerN), em.coefficient(Monomial::RaiseN).conj());
        assert!(hermiticity_defect(em.hamiltonian.matrix()) <= 1e-12 * max_abs(em.hamiltonian.matrix()));
    }

    #[test]
    fn exchange_matches_lorentzians() {
        let mut p = symmetric(3.0, TAU * 56e3);
        p.tones[1].source = ToneSource::Amplitude(C64::new(6.0, 0.0));
        let m = LadderModel::from_params(&p, 3).unwrap();
        let em = effective_model_second_order(&m, 30, InverseMode::LeadingOrder).unwrap();
        let (pm, mp) = chi2_exchange_coefficients(&p).unwrap();
        assert!(rel(em.coefficient(Monomial::PlusMinus), c(pm)) < 1e-10);
        assert!(rel(em.coefficient(Monomial::MinusPlus), c(mp)) < 1e-10);
        assert!((em.net_exchange() - (pm + mp)).abs() < 1e-10 * (pm + mp).abs());
    }

    #[test]
    fn symmetric_exchange_cancels_in_engine() {
        let p = symmetric(3.0, 0.0);
        let m = LadderModel::from_params(&p, 3).unwrap();
        let em = effective_model_second_order(&m, 30, InverseMode::LeadingOrder).unwrap();
        let single = em.coefficient(Monomial::PlusMinus).norm();
        assert!(em.net_exchange().abs() < 1e-10 * single);
    }

    #[test]
    fn balanced_superradiance() {
        let p = symmetric(3.0, TAU * 56e3);
        let m = LadderModel::from_params(&p, 3).unwrap();
        let em = effective_model_second_order(&m, 10, InverseMode::LeadingOrder).unwrap();
        let gamma = crate::params::collective_decay_rate(&p).unwrap();
        let strong: Vec<_> = em.jumps.iter().filter(|j| j.delta_m.abs() == 1 && j.rate > 0.5 * gamma).collect();
        assert_eq!(strong.len(), 2);
        for j in strong {
            assert!((j.rate - gamma).abs() < 1e-10 * gamma);
        }
        assert!((em.total_rate(1) - em.total_rate(-1)).abs() < 1e-10 * gamma);
        assert!(em.jumps.iter().any(|j| j.negligible && j.delta_m.abs() == 2));
        for j in em.jumps.iter().filter(|j| j.negligible) {
            assert!(j.rate < 1e-3 * gamma);
        }
    }

    #[test]
    fn two_body_has_no_pair_term() {
        let a = C64::new(2.0, 0.0);
        let wz = 1.0;
        // Tones 2ω_z apart, far from any intermediate.
        let m = LadderModel::new(2, 1e-3, wz, 0.0, [Tone { alpha: a, offset: -3.5 }, Tone { alpha: C64::default(), offset: -1.5 }]).unwrap();
        let em = effective_model_second_order(&m, 8, InverseMode::LeadingOrder).unwrap();
        assert!(em.polynomial);
        assert!(em.coefficient(Monomial::RaiseN).norm() == 0.0);
        assert!(em.coefficient(Monomial::PlusMinus).norm() > 0.0);
    }

    #[test]
    fn aht_symmetric_value_and_cross_check() {
        let p = symmetric(3.0, 0.0);
        let mut p2 = p.clone();
        p2.tones[1].source = ToneSource::Amplitude(C64::from_polar(2.0, 0.4));
        for params in [p, p2] {
            let m = LadderModel::from_params(&params, 3).unwrap();
            let aht = average_hamiltonian_third_order(&m, 12).unwrap();
            let so = effective_model_second_order(&m, 12, InverseMode::LeadingOrder).unwrap();
            for k in [Monomial::RaiseN, Monomial::LowerN, Monomial::PlusMinus, Monomial::MinusPlus] {
                assert!(rel(aht.coefficient(k), so.coefficient(k)) < 1e-10, "{k:?}");
            }
            let (a1, a2) = (m.tones[0].alpha, m.tones[1].alpha);
            let (d1, d2) = m.cavity_detunings();
            let expect = a1.conj() * a2 * m.g.powi(3) / (d1 * d2);
            assert!(rel(aht.coefficient(Monomial::RaiseN), expect) < 1e-10);
        }
        let m = LadderModel::from_params(&symmetric(3.0, 1.0), 3).unwrap();
        assert!(matches!(average_hamiltonian_third_order(&m, 4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn aht_without_second_tone() {
        let mut p = symmetric(3.0, 0.0);
        p.tones[1].source = ToneSource::Amplitude(C64::default());
        let m = LadderModel::from_params(&p, 3).unwrap();
        let aht = average_hamiltonian_third_order(&m, 6).unwrap();
        assert_eq!(aht.coefficient(Monomial::RaiseN).norm(), 0.0);
        assert!(aht.coefficient(Monomial::PlusMinus).norm() > 0.0);
    }

    fn four_body(scale: f64, kappa: f64) -> LadderModel {
        let wz = 1.0;
        let a = C64::new(0.5, 0.0);
        LadderModel::new(4, 1e-3, wz, kappa, [Tone { alpha: a, offset: -1.5 * scale }, Tone { alpha: a, offset: 2.5 * scale }]).unwrap()
    }

    #[test]
    fn four_body_geometry_rejects_three_body_tones() {
        let a = C64::new(1.0, 0.0);
        let err = LadderModel::new(4, 1e-3, 1.0, 0.0, [Tone { alpha: a, offset: -1.5 }, Tone { alpha: a, offset: 1.5 }]);
        assert!(matches!(err, Err(Error::ResonanceCondition(_))));
        let three = LadderModel::new(3, 1e-3, 1.0, 0.0, [Tone { alpha: a, offset: -1.5 }, Tone { alpha: a, offset: 1.5 }]).unwrap();
        assert!(effective_model_fourth_order_4body(&three, 8, InverseMode::LeadingOrder).is_err());
    }

    #[test]
    fn four_body_term_and_scaling() {
        let m = four_body(1.0, 0.0);
        let em = effective_model_fourth_order_4body(&m, 12, InverseMode::LeadingOrder).unwrap();
        let c4 = em.coefficient(Monomial::RaiseN);
        assert!(c4.norm() > 0.0);
        assert_eq!(em.coefficient(Monomial::LowerN), c4.conj());
        // Intermediate detunings -1.5, -0.5, 0.5 (units of ω_z).
        let expect = -m.g.powi(4) * 0.25 / (-1.5 * -0.5 * 0.5);
        assert!(rel(c4, c(expect)) < 1e-10, "{c4} vs {expect}");
        // Doubling every intermediate detuning divides the coefficient by 8.
        let wide = LadderModel::new(4, 1e-3, 2.0, 0.0, [Tone { alpha: C64::new(0.5, 0.0), offset: -3.0 }, Tone { alpha: C64::new(0.5, 0.0), offset: 5.0 }]).unwrap();
        let em2 = effective_model_fourth_order_4body(&wide, 12, InverseMode::LeadingOrder).unwrap();
        assert!(rel(em2.coefficient(Monomial::RaiseN) * 8.0, c4) < 1e-10);
    }

    #[test]
    fn four_body_unbalanced_decay() {
        let em = effective_model_fourth_order_4body(&four_body(1.0, 0.05), 8, InverseMode::LeadingOrder).unwrap();
        assert!((em.total_rate(1) - em.total_rate(-1)).abs() > 1e-3 * em.total_rate(1));
        assert!(em.warnings.iter().any(|w| w.contains("unbalanced")));
    }

    #[test]
    fn full_manifold_close_to_leading_order() {
        let p = symmetric(3.0, TAU * 56e3);
        let m = LadderModel::from_params(&p, 3).unwrap();
        let lo = effective_model_second_order(&m, 20, InverseMode::LeadingOrder).unwrap();
        let full = effective_model_second_order(&m, 20, InverseMode::FullManifold).unwrap();
        assert!(rel(full.coefficient(Monomial::RaiseN), lo.coefficient(Monomial::RaiseN)) < 1e-4);
        assert!(hermiticity_defect(full.hamiltonian.matrix()) <= 1e-12 * max_abs(full.hamiltonian.matrix()));
    }

    #[test]
    fn phase_covariance_of_coefficients() {
        let p = symmetric(3.0, TAU * 56e3);
        let mut q = p.clone();
        q.tones[1].source = ToneSource::Amplitude(C64::from_polar(3.0, 0.9));
        let a = effective_model_second_order(&LadderModel::from_params(&p, 3).unwrap(), 10, InverseMode::LeadingOrder).unwrap();
        let b = effective_model_second_order(&LadderModel::from_params(&q, 3).unwrap(), 10, InverseMode::LeadingOrder).unwrap();
        let rot = a.coefficient(Monomial::RaiseN) * C64::from_polar(1.0, 0.9);
        assert!(rel(b.coefficient(Monomial::RaiseN), rot) < 1e-12);
        assert!(rel(b.coefficient(Monomial::PlusMinus), a.coefficient(Monomial::PlusMinus)) < 1e-12);
    }

    #[test]
    fn perturbative_scaling() {
        let p = symmetric(3.0, TAU * 56e3);
        let base = effective_model_second_order(&LadderModel::from_params(&p, 3).unwrap(), 10, InverseMode::LeadingOrder).unwrap();
        let mut m = LadderModel::from_params(&p, 3).unwrap();
        for t in &mut m.tones {
            t.alpha *= 2.0;
        }
        let s = effective_model_second_order(&m, 10, InverseMode::LeadingOrder).unwrap();
        assert!(rel(s.coefficient(Monomial::RaiseN), base.coefficient(Monomial::RaiseN) * 4.0) < 1e-12);
        assert!(rel(s.coefficient(Monomial::PlusMinus), base.coefficient(Monomial::PlusMinus) * 4.0) < 1e-12);
        let mut m = LadderModel::from_params(&p, 3).unwrap();
        m.g *= 2.0;
        let s = effective_model_second_order(&m, 10, InverseMode::LeadingOrder).unwrap();
        assert!(rel(s.coefficient(Monomial::RaiseN), base.coefficient(Monomial::RaiseN) * 8.0) < 1e-12);
        assert!(rel(s.coefficient(Monomial::PlusMinus), base.coefficient(Monomial::PlusMinus) * 4.0) < 1e-12);
    }

    #[test]
    fn kappa_to_zero_limit() {
        let lossy = symmetric(3.0, 1e-4 * TAU * 500e3);
        let lossless = symmetric(3.0, 0.0);
        let a = effective_model_second_order(&LadderModel::from_params(&lossy, 3).unwrap(), 10, InverseMode::LeadingOrder).unwrap();
        let b = average_hamiltonian_third_order(&LadderModel::from_params(&lossless, 3).unwrap(), 10).unwrap();
        for k in [Monomial::RaiseN, Monomial::PlusMinus, Monomial::MinusPlus] {
            assert!(rel(a.coefficient(k), b.coefficient(k)) < 1e-3, "{k:?}");
        }
    }

    #[test]
    fn json_layout() {
        let p = symmetric(3.0, TAU * 56e3);
        let em = effective_model_second_order(&LadderModel::from_params(&p, 3).unwrap(), 6, InverseMode::LeadingOrder).unwrap();
        let v = em.to_json();
        assert!(v["coefficients"]["J+^3"].is_array());
        assert_eq!(v["hamiltonian"]["dimension"], 7);
        assert!(v["jumps"].as_array().unwrap().len() >= 4);
    }
}
