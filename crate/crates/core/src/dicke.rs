//! Collective-spin algebra on the maximal-spin (J = N/2) Dicke ladder.
//!
//! Basis ordering is fixed ascending in `m`: index `0` is `m = -N/2` and
//! index `N` is `m = +N/2`. Every serialized operator and state uses this
//! order.

use serde::{Deserialize, Serialize};

use crate::linalg::{c, CMatrix, CVector};
use crate::{Error, Result, C64};

/// The (N+1)-dimensional symmetric subspace of `n_atoms` two-level systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DickeSpace {
    n_atoms: usize,
}

impl DickeSpace {
    pub fn new(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::Domain("n_atoms must be positive".into()));
        }
        Ok(Self { n_atoms })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dimension(&self) -> usize {
        self.n_atoms + 1
    }

    /// Total spin J = N/2.
    pub fn spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    /// `m` of the basis state at `index`.
    pub fn m_value(&self, index: usize) -> f64 {
        index as f64 - self.spin()
    }

    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dimension()).map(|i| self.m_value(i)).collect()
    }

    /// Basis index of rung `m`, if `m` is a valid rung.
    pub fn index_of(&self, m: f64) -> Option<usize> {
        let k = m + self.spin();
        let r = k.round();
        if (k - r).abs() > 1e-9 || r < 0.0 || r > self.n_atoms as f64 {
            None
        } else {
            Some(r as usize)
        }
    }

    /// `f_m` for the rung at `index` (coupling from `m` to `m+1`).
    pub fn ladder_at(&self, index: usize) -> f64 {
        let j = self.spin();
        let m = self.m_value(index);
        (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
    }
}

/// Coupling factor `f_m = sqrt(J(J+1) - m(m+1))` between Dicke states
/// `|m⟩` and `|m+1⟩` for J = N/2.
pub fn ladder_coefficient(n_atoms: usize, m: f64) -> Result<f64> {
    let space = DickeSpace::new(n_atoms)?;
    let index = space
        .index_of(m)
        .ok_or_else(|| Error::Domain(format!("m = {m} is not a rung of the N = {n_atoms} ladder")))?;
    Ok(space.ladder_at(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    Plus,
    Minus,
    Z,
    X,
    Y,
}

/// Dense operator on a Dicke ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveOperator {
    space: DickeSpace,
    matrix: CMatrix,
    hermitian: bool,
}

impl CollectiveOperator {
    pub fn build(space: DickeSpace, kind: OperatorKind) -> Self {
        let d = space.dimension();
        let mut plus = CMatrix::zeros(d, d);
        for i in 0..d - 1 {
            plus[(i + 1, i)] = c(space.ladder_at(i));
        }
        let (matrix, hermitian) = match kind {
            OperatorKind::Plus => (plus, false),
            OperatorKind::Minus => (plus.adjoint(), false),
            OperatorKind::Z => (
                CMatrix::from_diagonal(&CVector::from_iterator(d, space.m_values().into_iter().map(c))),
                true,
            ),
            OperatorKind::X => {
                let minus = plus.adjoint();
                ((plus + minus) * c(0.5), true)
            }
            OperatorKind::Y => {
                let minus = plus.adjoint();
                ((plus - minus) * C64::new(0.0, -0.5), true)
            }
        };
        Self { space, matrix, hermitian }
    }

    pub fn identity(space: DickeSpace) -> Self {
        let d = space.dimension();
        Self { space, matrix: CMatrix::identity(d, d), hermitian: true }
    }

    /// Wraps a matrix; the Hermitian flag is computed, not trusted.
    pub fn from_matrix(space: DickeSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.dimension();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: matrix.nrows() });
        }
        let scale = crate::linalg::max_abs(&matrix);
        let hermitian = crate::linalg::hermiticity_defect(&matrix) <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        Ok(Self { space, matrix, hermitian })
    }

    pub fn space(&self) -> DickeSpace {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space, matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn pow(&self, k: u32) -> Self {
        let d = self.space.dimension();
        let mut out = CMatrix::identity(d, d);
        for _ in 0..k {
            out = &out * &self.matrix;
        }
        let hermitian = self.hermitian;
        Self { space: self.space, matrix: out, hermitian }
    }

    pub fn scale(&self, s: C64) -> Self {
        let hermitian = self.hermitian && s.im == 0.0;
        Self { space: self.space, matrix: &self.matrix * s, hermitian }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        Self::from_matrix(self.space, &self.matrix + &other.matrix)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        Self::from_matrix(self.space, &self.matrix * &other.matrix)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        Self::from_matrix(self.space, crate::linalg::commutator(&self.matrix, &other.matrix))
    }

    fn check_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dimension(),
                got: other.space.dimension(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_json(&self.matrix)
    }

    pub fn from_json(space: DickeSpace, value: &serde_json::Value) -> Result<Self> {
        let m = matrix_from_json(value)?;
        Self::from_matrix(space, m)
    }
}

/// `J₊ⁿ` shorthand used by the effective-model code.
pub fn raising_power(space: DickeSpace, n: u32) -> CMatrix {
    CollectiveOperator::build(space, OperatorKind::Plus).pow(n).into_matrix()
}

/// Row-major `{"dimension": d, "data": [[re, im], ...]}` layout.
pub fn matrix_json(m: &CMatrix) -> serde_json::Value {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            data.push([z.re, z.im]);
        }
    }
    serde_json::json!({ "dimension": m.nrows(), "data": data })
}

pub fn matrix_from_json(value: &serde_json::Value) -> Result<CMatrix> {
    #[derive(Deserialize)]
    struct Layout {
        dimension: usize,
        data: Vec<[f64; 2]>,
    }
    let layout: Layout = serde_json::from_value(value.clone())
        .map_err(|e| Error::Domain(format!("bad matrix JSON: {e}")))?;
    let d = layout.dimension;
    if layout.data.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: layout.data.len() });
    }
    Ok(CMatrix::from_row_iterator(d, d, layout.data.iter().map(|p| C64::new(p[0], p[1]))))
}

/// Pure vector or density matrix on the Dicke ladder, optionally tensored
/// with `fock_levels` photon-number states (Dicke index major).
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure { space: DickeSpace, fock_levels: usize, vector: CVector },
    Density { space: DickeSpace, fock_levels: usize, matrix: CMatrix },
}

impl QuantumState {
    pub fn pure(space: DickeSpace, vector: CVector) -> Result<Self> {
        Self::pure_with_fock(space, 1, vector)
    }

    pub fn pure_with_fock(space: DickeSpace, fock_levels: usize, vector: CVector) -> Result<Self> {
        let d = space.dimension() * fock_levels;
        if vector.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: vector.len() });
        }
        let state = Self::Pure { space, fock_levels, vector };
        state.validate()?;
        Ok(state)
    }

    pub fn density(space: DickeSpace, matrix: CMatrix) -> Result<Self> {
        Self::density_with_fock(space, 1, matrix)
    }

    pub fn density_with_fock(space: DickeSpace, fock_levels: usize, matrix: CMatrix) -> Result<Self> {
        let d = space.dimension() * fock_levels;
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: matrix.nrows() });
        }
        let state = Self::Density { space, fock_levels, matrix };
        state.validate()?;
        Ok(state)
    }

    /// Builds without validation; used internally by integrators, which
    /// check invariants at their own tolerances.
    pub(crate) fn from_parts_unchecked_density(space: DickeSpace, fock_levels: usize, matrix: CMatrix) -> Self {
        Self::Density { space, fock_levels, matrix }
    }

    pub(crate) fn from_parts_unchecked_pure(space: DickeSpace, fock_levels: usize, vector: CVector) -> Self {
        Self::Pure { space, fock_levels, vector }
    }

    pub fn space(&self) -> DickeSpace {
        match self {
            Self::Pure { space, .. } | Self::Density { space, .. } => *space,
        }
    }

    pub fn fock_levels(&self) -> usize {
        match self {
            Self::Pure { fock_levels, .. } | Self::Density { fock_levels, .. } => *fock_levels,
        }
    }

    pub fn dimension(&self) -> usize {
        self.space().dimension() * self.fock_levels()
    }

    /// Checks the norm/trace, Hermiticity and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Pure { vector, .. } => {
                let n2 = vector.norm_squared();
                if (n2 - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!("pure state norm² = {n2}")));
                }
            }
            Self::Density { matrix, .. } => {
                let tr = matrix.trace();
                if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
                    return Err(Error::Domain(format!("density trace = {tr}")));
                }
                let defect = crate::linalg::hermiticity_defect(matrix);
                if defect > 1e-12 {
                    return Err(Error::Domain(format!("density not Hermitian: {defect:e}")));
                }
                let min = crate::linalg::hermitian_eigenvalues(matrix)[0];
                if min < -1e-8 {
                    return Err(Error::Domain(format!("density eigenvalue {min:e} < 0")));
                }
            }
        }
        Ok(())
    }

    pub fn to_density(&self) -> CMatrix {
        match self {
            Self::Pure { vector, .. } => vector * vector.adjoint(),
            Self::Density { matrix, .. } => matrix.clone(),
        }
    }

    /// Photon mode traced out.
    pub fn reduced_dicke(&self) -> CMatrix {
        let rho = self.to_density();
        let f = self.fock_levels();
        if f == 1 {
            return rho;
        }
        let d = self.space().dimension();
        CMatrix::from_fn(d, d, |i, j| (0..f).map(|n| rho[(i * f + n, j * f + n)]).sum())
    }

    /// Populations of the Dicke rungs, ascending in m.
    pub fn dicke_populations(&self) -> Vec<f64> {
        let f = self.fock_levels();
        let d = self.space().dimension();
        match self {
            Self::Pure { vector, .. } => (0..d)
                .map(|i| (0..f).map(|n| vector[i * f + n].norm_sqr()).sum())
                .collect(),
            Self::Density { matrix, .. } => (0..d)
                .map(|i| (0..f).map(|n| matrix[(i * f + n, i * f + n)].re).sum())
                .collect(),
        }
    }

    /// Populations of each photon number (Dicke traced out).
    pub fn photon_populations(&self) -> Vec<f64> {
        let f = self.fock_levels();
        let d = self.space().dimension();
        let diag: Vec<f64> = match self {
            Self::Pure { vector, .. } => vector.iter().map(|z| z.norm_sqr()).collect(),
            Self::Density { matrix, .. } => (0..matrix.nrows()).map(|i| matrix[(i, i)].re).collect(),
        };
        (0..f).map(|n| (0..d).map(|i| diag[i * f + n]).sum()).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Pure { space, fock_levels, vector } => serde_json::json!({
                "representation": "pure",
                "n_atoms": space.n_atoms(),
                "fock_levels": fock_levels,
                "dimension": vector.len(),
                "data": vector.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            }),
            Self::Density { space, fock_levels, matrix } => {
                let mut v = matrix_json(matrix);
                v["representation"] = "density".into();
                v["n_atoms"] = space.n_atoms().into();
                v["fock_levels"] = (*fock_levels).into();
                v
            }
        }
    }
}

/// Dicke basis state `|m⟩`.
pub fn dicke_state(space: DickeSpace, m: f64) -> Result<QuantumState> {
    let i = space
        .index_of(m)
        .ok_or_else(|| Error::Domain(format!("m = {m} is not a rung")))?;
    let mut v = CVector::zeros(space.dimension());
    v[i] = c(1.0);
    QuantumState::pure(space, v)
}

/// Coherent spin state pointing along (sinθ cosφ, sinθ sinφ, cosθ).
///
/// Amplitudes are `sqrt(C(N,k)) cos^k(θ/2) sin^(N-k)(θ/2) e^{i(N-k)φ}` with
/// `k = m + N/2` up-spins, evaluated in log space so N in the thousands
/// does not overflow.
pub fn coherent_spin_state(space: DickeSpace, theta: f64, phi: f64) -> Result<QuantumState> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} outside [0, π]")));
    }
    let n = space.n_atoms();
    let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let ln_pow = |base: f64, e: usize| -> Option<f64> {
        if e == 0 {
            Some(0.0)
        } else if base <= 0.0 {
            None
        } else {
            Some(e as f64 * base.ln())
        }
    };
    let v = CVector::from_iterator(
        space.dimension(),
        (0..=n).map(|k| {
            match (ln_pow(ch.abs(), k), ln_pow(sh.abs(), n - k)) {
                (Some(a), Some(b)) => {
                    let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
                    let mag = (0.5 * ln_binom + a + b).exp();
                    C64::from_polar(mag, (n - k) as f64 * phi)
                }
                _ => C64::new(0.0, 0.0),
            }
        }),
    );
    let norm = v.norm();
    QuantumState::pure(space, v / c(norm))
}

/// Lifts a Dicke-space matrix onto Dicke ⊗ Fock(`fock_levels`).
pub fn lift(op: &CMatrix, fock_levels: usize) -> CMatrix {
    if fock_levels == 1 {
        op.clone()
    } else {
        op.kronecker(&CMatrix::identity(fock_levels, fock_levels))
    }
}

/// `⟨O⟩ = Tr(ρ O)` or `⟨ψ|O|ψ⟩`. Dicke-only operators are lifted onto the
/// full space when the state carries a photon mode.
pub fn expectation(state: &QuantumState, op: &CollectiveOperator) -> Result<C64> {
    if op.space() != state.space() {
        return Err(Error::DimensionMismatch {
            expected: state.space().dimension(),
            got: op.space().dimension(),
        });
    }
    let f = state.fock_levels();
    match state {
        QuantumState::Pure { vector, .. } => {
            let m = lift(op.matrix(), f);
            Ok(vector.dotc(&(&m * vector)))
        }
        QuantumState::Density { .. } => {
            let rho = state.reduced_dicke();
            Ok((&rho * op.matrix()).trace())
        }
    }
}

/// `Re ⟨O²⟩`.
pub fn second_moment(state: &QuantumState, op: &CollectiveOperator) -> Result<f64> {
    let sq = op.mul(op)?;
    Ok(expectation(state, &sq)?.re)
}

/// Mean collective spin vector (⟨Jx⟩, ⟨Jy⟩, ⟨Jz⟩).
pub fn spin_vector(state: &QuantumState) -> [f64; 3] {
    let s = state.space();
    let ev = |k| expectation(state, &CollectiveOperator::build(s, k)).map(|z| z.re).unwrap_or(f64::NAN);
    [ev(OperatorKind::X), ev(OperatorKind::Y), ev(OperatorKind::Z)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, unitary_exp, I};
    use approx::assert_abs_diff_eq;

    fn ops(n: usize) -> (CollectiveOperator, CollectiveOperator, CollectiveOperator) {
        let s = DickeSpace::new(n).unwrap();
        (
            CollectiveOperator::build(s, OperatorKind::Plus),
            CollectiveOperator::build(s, OperatorKind::Minus),
            CollectiveOperator::build(s, OperatorKind::Z),
        )
    }

    #[test]
    fn ladder_examples() {
        assert_eq!(ladder_coefficient(2, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(ladder_coefficient(2, 0.0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(ladder_coefficient(3, -0.5).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn ladder_rejects_bad_rungs() {
        assert!(ladder_coefficient(2, 2.0).is_err());
        assert!(ladder_coefficient(2, 0.5).is_err());
        assert!(ladder_coefficient(3, 0.0).is_err());
        assert!(ladder_coefficient(0, 0.0).is_err());
    }

    #[test]
    fn space_layout() {
        let s = DickeSpace::new(4).unwrap();
        assert_eq!(s.dimension(), 5);
        let m = s.m_values();
        assert_eq!(m, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(m.windows(2).all(|w| w[1] - w[0] == 1.0));
    }

    #[test]
    fn single_spin_jz() {
        let (_, _, jz) = ops(1);
        assert_eq!(jz.matrix()[(0, 0)], c(-0.5));
        assert_eq!(jz.matrix()[(1, 1)], c(0.5));
        assert!(jz.is_hermitian());
    }

    #[test]
    fn triple_raise_from_bottom() {
        let s = DickeSpace::new(3).unwrap();
        let p3 = raising_power(s, 3);
        assert_abs_diff_eq!(p3[(3, 0)].re, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn su2_algebra() {
        for n in [1usize, 2, 5, 17, 50] {
            let s = DickeSpace::new(n).unwrap();
            let (jp, jm, jz) = ops(n);
            let jx = CollectiveOperator::build(s, OperatorKind::X);
            let jy = CollectiveOperator::build(s, OperatorKind::Y);
            let tol = 1e-12 * (n as f64).powi(2).max(1.0);
            let xy = jx.commutator(&jy).unwrap();
            assert!(max_abs_diff(xy.matrix(), &(jz.matrix() * I)) < tol);
            let zp = jz.commutator(&jp).unwrap();
            assert!(max_abs_diff(zp.matrix(), jp.matrix()) < tol);
            let zm = jz.commutator(&jm).unwrap();
            assert!(max_abs_diff(zm.matrix(), &(-jm.matrix())) < tol);
            let pm = jp.commutator(&jm).unwrap();
            assert!(max_abs_diff(pm.matrix(), &(jz.matrix() * c(2.0))) < tol);
            assert_eq!(jp.matrix().adjoint(), *jm.matrix());
        }
    }

    #[test]
    fn phase_covariance_of_raising() {
        let n = 6;
        let (jp, _, jz) = ops(n);
        let phi = 0.731;
        let u = unitary_exp(jz.matrix(), -phi);
        let ud = unitary_exp(jz.matrix(), phi);
        let lhs = &u * jp.matrix() * &ud;
        let rhs = jp.matrix() * C64::from_polar(1.0, phi);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn raising_power_annihilates_top_rungs() {
        let n = 7;
        let s = DickeSpace::new(n).unwrap();
        for k in 1..=4u32 {
            let p = raising_power(s, k);
            for col in (s.dimension() - k as usize)..s.dimension() {
                assert!(p.column(col).iter().all(|z| *z == c(0.0)));
            }
        }
    }

    #[test]
    fn css_examples() {
        let s = DickeSpace::new(8).unwrap();
        let top = coherent_spin_state(s, 0.0, 0.3).unwrap();
        assert_abs_diff_eq!(spin_vector(&top)[2], 4.0, epsilon = 1e-12);

        let s1 = DickeSpace::new(1).unwrap();
        let eq = coherent_spin_state(s1, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        if let QuantumState::Pure { vector, .. } = &eq {
            assert_abs_diff_eq!(vector[0].re, 0.5f64.sqrt(), epsilon = 1e-12);
            assert_abs_diff_eq!(vector[1].re, 0.5f64.sqrt(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(spin_vector(&eq)[0], 0.5, epsilon = 1e-12);
        assert!(coherent_spin_state(s, -0.1, 0.0).is_err());
    }

    #[test]
    fn css_matches_rotated_top_state() {
        // Oracle: R = e^{-iφJz} e^{-iθJy} applied to |+N/2⟩.
        let n = 10;
        let s = DickeSpace::new(n).unwrap();
        let (theta, phi) = (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_3);
        let jy = CollectiveOperator::build(s, OperatorKind::Y);
        let (_, _, jz) = ops(n);
        let mut top = CVector::zeros(n + 1);
        top[n] = c(1.0);
        let rotated = unitary_exp(jz.matrix(), phi) * unitary_exp(jy.matrix(), theta) * top;
        let oracle = QuantumState::pure(s, rotated).unwrap();
        let css = coherent_spin_state(s, theta, phi).unwrap();
        let a = spin_vector(&css);
        let b = spin_vector(&oracle);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-9 * n as f64);
        }
        let j = n as f64 / 2.0;
        assert!((a[0] - j * theta.sin() * phi.cos()).abs() < 1e-9 * n as f64);
        assert!((a[1] - j * theta.sin() * phi.sin()).abs() < 1e-9 * n as f64);
        assert!((a[2] - j * theta.cos()).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn expectation_examples() {
        let n = 12;
        let s = DickeSpace::new(n).unwrap();
        let top = dicke_state(s, 6.0).unwrap();
        let jz = CollectiveOperator::build(s, OperatorKind::Z);
        assert_abs_diff_eq!(expectation(&top, &jz).unwrap().re, 6.0, epsilon = 1e-12);

        let eq = coherent_spin_state(s, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let jy = CollectiveOperator::build(s, OperatorKind::Y);
        assert!(expectation(&eq, &jy).unwrap().norm() < 1e-12);

        let jx = CollectiveOperator::build(s, OperatorKind::X);
        let j2 = second_moment(&eq, &jx).unwrap() + second_moment(&eq, &jy).unwrap() + second_moment(&eq, &jz).unwrap();
        assert_abs_diff_eq!(j2, 6.0 * 7.0, epsilon = 1e-10);

        let other = CollectiveOperator::build(DickeSpace::new(3).unwrap(), OperatorKind::Z);
        assert!(matches!(expectation(&eq, &other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn density_invariants_checked() {
        let s = DickeSpace::new(2).unwrap();
        let bad = CMatrix::identity(3, 3);
        assert!(QuantumState::density(s, bad).is_err());
        let good = CMatrix::identity(3, 3) * c(1.0 / 3.0);
        assert!(QuantumState::density(s, good).is_ok());
        let mut neg = CMatrix::zeros(3, 3);
        neg[(0, 0)] = c(1.1);
        neg[(1, 1)] = c(-0.1);
        assert!(QuantumState::density(s, neg).is_err());
    }

    #[test]
    fn operator_json_round_trip() {
        let s = DickeSpace::new(3).unwrap();
        let jy = CollectiveOperator::build(s, OperatorKind::Y);
        let v = jy.to_json();
        assert_eq!(v["dimension"], 4);
        let back = CollectiveOperator::from_json(s, &v).unwrap();
        assert_eq!(back, jy);
    }
}
