//! Time evolution: Lindblad master equation on the Dicke ladder, the full
//! time-dependent atom-cavity model on Dicke ⊗ Fock, and the collective
//! mean-field equations.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::dicke::{lift, CollectiveOperator, DickeSpace, OperatorKind, QuantumState};
use crate::effective::Tone;
use crate::linalg::{c, dagger, CMatrix, CVector, I};
use crate::ode::{dopri5, rk4_fixed, Stats, Tolerances};
use crate::{Error, Result, C64};

/// Time series of collective-spin observables.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// (⟨Jx⟩, ⟨Jy⟩, ⟨Jz⟩) in absolute units.
    pub spin: Vec<[f64; 3]>,
    /// |⟨J⟩|/(N/2).
    pub norm: Vec<f64>,
    pub metadata: serde_json::Value,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, spin: [f64; 3], half_n: f64) {
        let r = (spin[0].powi(2) + spin[1].powi(2) + spin[2].powi(2)).sqrt();
        self.times.push(t);
        self.spin.push(spin);
        self.norm.push(r / half_n);
    }

    /// CSV with columns t_s, Jx, Jy, Jz, norm; metadata on a leading
    /// `# metadata:` line.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# metadata: {}", self.metadata);
        s.push_str("t_s,Jx,Jy,Jz,norm\n");
        for k in 0..self.times.len() {
            let j = self.spin[k];
            let _ = writeln!(s, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", self.times[k], j[0], j[1], j[2], self.norm[k]);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct LindbladProblem {
    pub hamiltonian: CMatrix,
    /// (rate, operator) pairs; the dissipator uses √rate·L.
    pub jumps: Vec<(f64, CMatrix)>,
    pub times: Vec<f64>,
    pub initial: QuantumState,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone)]
pub struct LindbladResult {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub trajectory: Trajectory,
    pub stats: Stats,
}

/// Right-hand side of the master equation in vectorized (column-major)
/// form, with the anti-Hermitian part folded into an effective Hamiltonian.
pub struct Liouvillian {
    d: usize,
    heff: CMatrix,
    heff_dag: CMatrix,
    jumps: Vec<(CMatrix, CMatrix)>,
}

impl Liouvillian {
    pub fn new(h: &CMatrix, jumps: &[(f64, CMatrix)]) -> Result<Self> {
        let d = h.nrows();
        let mut heff = h.clone();
        let mut js = Vec::new();
        for (rate, l) in jumps {
            if *rate < 0.0 {
                return Err(Error::Domain(format!("negative jump rate {rate}")));
            }
            if l.nrows() != d {
                return Err(Error::DimensionMismatch { expected: d, got: l.nrows() });
            }
            if *rate == 0.0 {
                continue;
            }
            let sl = l * c(rate.sqrt());
            let sld = dagger(&sl);
            heff -= (&sld * &sl) * C64::new(0.0, 0.5);
            js.push((sl, sld));
        }
        let heff_dag = dagger(&heff);
        Ok(Self { d, heff, heff_dag, jumps: js })
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = (&self.heff * rho - rho * &self.heff_dag) * (-I);
        for (l, ld) in &self.jumps {
            out += l * rho * ld;
        }
        out
    }

    fn apply_vec(&self, y: &DVector<C64>, dy: &mut DVector<C64>) {
        let rho = CMatrix::from_column_slice(self.d, self.d, y.as_slice());
        let out = self.apply(&rho);
        dy.as_mut_slice().copy_from_slice(out.as_slice());
    }
}

fn spin_of_density(rho: &CMatrix, ops: &[CMatrix; 3]) -> [f64; 3] {
    let ev = |o: &CMatrix| (rho * o).trace().re;
    [ev(&ops[0]), ev(&ops[1]), ev(&ops[2])]
}

fn spin_ops(space: DickeSpace) -> [CMatrix; 3] {
    [
        CollectiveOperator::build(space, OperatorKind::X).into_matrix(),
        CollectiveOperator::build(space, OperatorKind::Y).into_matrix(),
        CollectiveOperator::build(space, OperatorKind::Z).into_matrix(),
    ]
}

pub fn evolve_lindblad(problem: &LindbladProblem) -> Result<LindbladResult> {
    let space = problem.initial.space();
    if problem.initial.fock_levels() != 1 {
        return Err(Error::Domain("Lindblad engine works on the bare Dicke ladder".into()));
    }
    let d = space.dimension();
    if problem.hamiltonian.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: problem.hamiltonian.nrows() });
    }
    let liou = Liouvillian::new(&problem.hamiltonian, &problem.jumps)?;
    let rho0 = problem.initial.to_density();
    let y0 = DVector::from_column_slice(rho0.as_slice());
    let (ys, stats) = dopri5(|_, y, dy| liou.apply_vec(y, dy), 0.0, &y0, &problem.times, problem.tolerances)?;

    let ops = spin_ops(space);
    let mut traj = Trajectory {
        metadata: serde_json::json!({
            "engine": "lindblad",
            "n_atoms": space.n_atoms(),
            "rtol": problem.tolerances.rtol,
            "atol": problem.tolerances.atol,
            "stats": stats,
        }),
        ..Default::default()
    };
    let mut states = Vec::with_capacity(ys.len());
    for (t, y) in problem.times.iter().zip(ys) {
        let rho = CMatrix::from_column_slice(d, d, y.as_slice());
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-7 || tr.im.abs() > 1e-7 {
            return Err(Error::Integrator(format!("trace drifted to {tr} at t = {t:e}")));
        }
        traj.push(*t, spin_of_density(&rho, &ops), space.spin());
        states.push(rho);
    }
    if let Some(last) = states.last() {
        let min = crate::linalg::hermitian_eigenvalues(last)[0];
        if min < -1e-6 {
            return Err(Error::Integrator(format!("positivity lost: eigenvalue {min:e}")));
        }
    }
    Ok(LindbladResult { times: problem.times.clone(), states, trajectory: traj, stats })
}

/// Exact pure-state evolution under a time-independent Hamiltonian.
pub fn evolve_pure(h: &CMatrix, psi0: &CVector, times: &[f64]) -> Vec<CVector> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let coeff = v.adjoint() * psi0;
    times
        .iter()
        .map(|&t| {
            let ph = CVector::from_iterator(coeff.len(), coeff.iter().zip(eig.eigenvalues.iter()).map(|(a, e)| a * (-I * *e * t).exp()));
            v * ph
        })
        .collect()
}

/// Spin trajectory of pure-state evolution.
pub fn pure_trajectory(space: DickeSpace, h: &CMatrix, psi0: &CVector, times: &[f64]) -> Trajectory {
    let ops = spin_ops(space);
    let mut traj = Trajectory { metadata: serde_json::json!({"engine": "pure", "n_atoms": space.n_atoms()}), ..Default::default() };
    for (t, psi) in times.iter().zip(evolve_pure(h, psi0, times)) {
        let ev = |o: &CMatrix| psi.dotc(&(o * &psi)).re;
        traj.push(*t, [ev(&ops[0]), ev(&ops[1]), ev(&ops[2])], space.spin());
    }
    traj
}

/// Time-dependent atom-cavity problem in the interaction picture of
/// ω_c′b†b + ω_zJz, with the tones displaced out of the cavity field.
#[derive(Debug, Clone)]
pub struct FullCavityProblem {
    pub space: DickeSpace,
    /// Highest photon number kept in the fluctuation mode b.
    pub fock_cutoff: usize,
    pub g: f64,
    pub omega_z: f64,
    pub kappa: f64,
    pub tones: [Tone; 2],
    /// sin² switch-on time of the tones; 0 switches on abruptly.
    pub ramp: f64,
    pub t_final: f64,
    /// Fixed step; defaults to 1/(50·fastest frequency).
    pub dt: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FullCavityResult {
    pub times: Vec<f64>,
    pub dicke_populations: Vec<Vec<f64>>,
    pub spin: Vec<[f64; 3]>,
    /// Largest 1 − P(n = 0) seen at any sample.
    pub max_photon_population: f64,
    pub max_top_fock_population: f64,
    pub steps: usize,
    pub dt: f64,
}

struct SparseTerm {
    freq: f64,
    ramp_power: i32,
    entries: Vec<(usize, usize, C64)>,
}

impl FullCavityProblem {
    pub fn fock_levels(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn ramp_factor(&self, t: f64) -> f64 {
        if self.ramp <= 0.0 || t >= self.ramp {
            1.0
        } else {
            (0.5 * std::f64::consts::PI * t / self.ramp).sin().powi(2)
        }
    }

    /// ∫₀ᵗ r(s)² ds, the effective-time of any term quadratic in the drives.
    pub fn ramp_integral_sq(&self, t: f64) -> f64 {
        if self.ramp <= 0.0 {
            return t;
        }
        let tau = self.ramp;
        let s = t.min(tau);
        // ∫ sin⁴(πs/2τ) ds = 3s/8 − τ sin(πs/τ)/(2π) + τ sin(2πs/τ)/(16π)
        let pi = std::f64::consts::PI;
        let part = 3.0 * s / 8.0 - tau * (pi * s / tau).sin() / (2.0 * pi) + tau * (2.0 * pi * s / tau).sin() / (16.0 * pi);
        part + (t - s).max(0.0)
    }

    fn terms(&self) -> Vec<SparseTerm> {
        let f = self.fock_levels();
        let jp = CollectiveOperator::build(self.space, OperatorKind::Plus).into_matrix();
        let jm = dagger(&jp);
        let mut b = CMatrix::zeros(f, f);
        for k in 1..f {
            b[(k - 1, k)] = c((k as f64).sqrt());
        }
        let bd = dagger(&b);
        let id_f = CMatrix::identity(f, f);
        let wz = self.omega_z;
        let g = self.g;
        let mut raw: Vec<(f64, i32, CMatrix)> = Vec::new();
        let nb = &bd * &b;
        for (s, jop) in [(1.0, &jp), (-1.0, &jm)] {
            raw.push((s * wz, 0, jop.kronecker(&nb) * c(g)));
            for t in &self.tones {
                raw.push((s * wz - t.offset, 1, jop.kronecker(&bd) * (t.alpha * g)));
                raw.push((s * wz + t.offset, 1, jop.kronecker(&b) * (t.alpha.conj() * g)));
            }
            for tj in &self.tones {
                for tk in &self.tones {
                    raw.push((s * wz + tj.offset - tk.offset, 2, jop.kronecker(&id_f) * (tj.alpha.conj() * tk.alpha * g)));
                }
            }
        }
        let mut out: Vec<SparseTerm> = Vec::new();
        for (freq, p, m) in raw {
            let entries: Vec<_> = (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .filter(|&(i, j)| m[(i, j)] != C64::default()).map(|(i, j)| (i, j, m[(i, j)]))
                .collect();
            if entries.is_empty() {
                continue;
            }
            if let Some(t) = out.iter_mut().find(|t| t.ramp_power == p && (t.freq - freq).abs() < 1e-12 * wz) {
                for e in entries {
                    if let Some(x) = t.entries.iter_mut().find(|x| x.0 == e.0 && x.1 == e.1) {
                        x.2 += e.2;
                    } else {
                        t.entries.push(e);
                    }
                }
            } else {
                out.push(SparseTerm { freq, ramp_power: p, entries });
            }
        }
        out
    }

    fn max_frequency(&self) -> f64 {
        self.terms().iter().map(|t| t.freq.abs()).fold(self.omega_z, f64::max)
    }

    pub fn default_dt(&self) -> f64 {
        1.0 / (50.0 * self.max_frequency())
    }
}

/// Fixed-step RK4 evolution of the full model. Pure-state path for κ = 0,
/// density matrix with the cavity jump √κ b otherwise.
pub fn evolve_full_cavity(problem: &FullCavityProblem, initial: &QuantumState) -> Result<FullCavityResult> {
    let space = problem.space;
    if initial.space() != space {
        return Err(Error::DimensionMismatch { expected: space.dimension(), got: initial.space().dimension() });
    }
    let f = problem.fock_levels();
    let dim = space.dimension() * f;
    let terms = problem.terms();
    let dt_max = problem.default_dt();
    let dt0 = problem.dt.unwrap_or(dt_max).min(dt_max);
    let n_steps = (problem.t_final / dt0).ceil().max(1.0) as usize;
    let dt = problem.t_final / n_steps as f64;
    let samples = problem.samples.max(2);
    let stride = (n_steps / (samples - 1)).max(1);

    let ops = spin_ops(space);
    let mut result = FullCavityResult {
        times: Vec::new(),
        dicke_populations: Vec::new(),
        spin: Vec::new(),
        max_photon_population: 0.0,
        max_top_fock_population: 0.0,
        steps: n_steps,
        dt,
    };
    let record = |t: f64, st: &QuantumState, res: &mut FullCavityResult| {
        let ph = st.photon_populations();
        res.max_photon_population = res.max_photon_population.max(1.0 - ph[0]);
        res.max_top_fock_population = res.max_top_fock_population.max(ph[f - 1]);
        res.times.push(t);
        res.dicke_populations.push(st.dicke_populations());
        let rho = st.reduced_dicke();
        res.spin.push(spin_of_density(&rho, &ops));
    };

    let coeffs = |t: f64| -> Vec<C64> {
        let r = problem.ramp_factor(t);
        terms.iter().map(|k| C64::from_polar(r.powi(k.ramp_power), k.freq * t)).collect()
    };

    let lifted = match initial.fock_levels() {
        1 => match initial {
            QuantumState::Pure { vector, .. } => {
                let mut v = CVector::zeros(dim);
                for i in 0..space.dimension() {
                    v[i * f] = vector[i];
                }
                QuantumState::pure_with_fock(space, f, v)?
            }
            QuantumState::Density { matrix, .. } => {
                let mut vac = CMatrix::zeros(f, f);
                vac[(0, 0)] = c(1.0);
                QuantumState::density_with_fock(space, f, matrix.kronecker(&vac))?
            }
        },
        l if l == f => initial.clone(),
        l => return Err(Error::DimensionMismatch { expected: f, got: l }),
    };

    if problem.kappa == 0.0 {
        let psi0 = match &lifted {
            QuantumState::Pure { vector, .. } => vector.clone(),
            QuantumState::Density { .. } => {
                return Err(Error::Unsupported("lossless full-cavity path expects a pure state".into()))
            }
        };
        let rhs = |t: f64, y: &CVector, dy: &mut CVector| {
            dy.fill(C64::default());
            for (term, w) in terms.iter().zip(coeffs(t)) {
                let w = -I * w;
                for &(i, j, v) in &term.entries {
                    dy[i] += w * v * y[j];
                }
            }
        };
        let mut err = None;
        rk4_fixed(rhs, 0.0, &psi0, dt, n_steps, |s, t, y| {
            if (s % stride == 0 || s == n_steps) && err.is_none() {
                let st = QuantumState::from_parts_unchecked_pure(space, f, y.clone());
                record(t, &st, &mut result);
                if (y.norm_squared() - 1.0).abs() > 1e-6 {
                    err = Some(Error::Integrator(format!("norm drift {:.3e}", y.norm_squared() - 1.0)));
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    } else {
        let mut b = CMatrix::zeros(f, f);
        for k in 1..f {
            b[(k - 1, k)] = c((k as f64).sqrt());
        }
        let bl = lift(&CMatrix::identity(space.dimension(), space.dimension()), 1).kronecker(&b) * c(problem.kappa.sqrt());
        let bld = dagger(&bl);
        let damp = (&bld * &bl) * C64::new(0.0, -0.5);
        let rho0 = lifted.to_density();
        let y0 = DVector::from_column_slice(rho0.as_slice());
        let rhs = |t: f64, y: &CVector, dy: &mut CVector| {
            let mut h = damp.clone();
            for (term, w) in terms.iter().zip(coeffs(t)) {
                for &(i, j, v) in &term.entries {
                    h[(i, j)] += w * v;
                }
            }
            let rho = CMatrix::from_column_slice(dim, dim, y.as_slice());
            let out = (&h * &rho - &rho * dagger(&h)) * (-I) + &bl * &rho * &bld;
            dy.as_mut_slice().copy_from_slice(out.as_slice());
        };
        rk4_fixed(rhs, 0.0, &y0, dt, n_steps, |s, t, y| {
            if s % stride == 0 || s == n_steps {
                let rho = CMatrix::from_column_slice(dim, dim, y.as_slice());
                let st = QuantumState::from_parts_unchecked_density(space, f, rho);
                record(t, &st, &mut result);
            }
        });
    }
    if result.max_top_fock_population > 1e-4 {
        return Err(Error::Cutoff { population: result.max_top_fock_population, suggested: problem.fock_cutoff + 2 });
    }
    Ok(result)
}

/// Normalized Bloch vector J/(N/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldState {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl MeanFieldState {
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self { sx: theta.sin() * phi.cos(), sy: theta.sin() * phi.sin(), sz: theta.cos() }
    }

    pub fn norm(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    /// (θ, φ) with φ in (−π, π].
    pub fn angles(&self) -> (f64, f64) {
        let r = self.norm();
        ((self.sz / r).clamp(-1.0, 1.0).acos(), self.sy.atan2(self.sx))
    }

    fn to_vec(self) -> DVector<f64> {
        DVector::from_vec(vec![self.sx, self.sy, self.sz])
    }

    fn from_vec(v: &DVector<f64>) -> Self {
        Self { sx: v[0], sy: v[1], sz: v[2] }
    }
}

/// Mean-field model of H = χ(J₊ⁿe^{inφ_d} + h.c.) + εJz with balanced
/// per-channel decay Γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldModel {
    pub n_body: u32,
    /// Collective strength χ_n·N^(n−1), rad/s.
    pub chi_n: f64,
    pub phi_d: f64,
    pub gamma: f64,
    /// Coefficient ε of an added εJz term (frame detuning), rad/s.
    pub z_field: f64,
}

impl MeanFieldModel {
    pub fn new(n_body: u32, chi_n: f64, phi_d: f64) -> Self {
        Self { n_body, chi_n, phi_d, gamma: 0.0, z_field: 0.0 }
    }

    /// (ds₊/dt, dsz/dt) for s = J/(N/2).
    pub fn derivatives(&self, s: &MeanFieldState) -> (C64, f64) {
        let n = self.n_body as i32;
        let cn = C64::from_polar(self.chi_n / 2f64.powi(n - 1), n as f64 * self.phi_d);
        let sp = C64::new(s.sx, s.sy);
        let sm = sp.conj();
        let nn = n as f64;
        let dz = (-I * nn * (cn * sp.powi(n) - cn.conj() * sm.powi(n))).re - 2.0 * self.gamma * s.sz;
        let dp = -I * 2.0 * nn * cn.conj() * s.sz * sm.powi(n - 1) - sp * self.gamma + I * self.z_field * sp;
        (dp, dz)
    }

    /// Tangent-plane flow (dθ/dt, dφ/dt).
    pub fn polar_flow(&self, theta: f64, phi: f64) -> (f64, f64) {
        let s = MeanFieldState::from_angles(theta, phi);
        let (dp, dz) = self.derivatives(&s);
        let st = theta.sin();
        let dtheta = -dz / st;
        let rho2 = s.sx * s.sx + s.sy * s.sy;
        let dphi = (s.sx * dp.im - s.sy * dp.re) / rho2;
        (dtheta, dphi)
    }

    pub fn evolve(&self, initial: MeanFieldState, times: &[f64], tol: Tolerances) -> Result<Vec<MeanFieldState>> {
        let rhs = |_: f64, y: &DVector<f64>, dy: &mut DVector<f64>| {
            let (dp, dz) = self.derivatives(&MeanFieldState::from_vec(y));
            dy[0] = dp.re;
            dy[1] = dp.im;
            dy[2] = dz;
        };
        let (ys, _) = dopri5(rhs, 0.0, &initial.to_vec(), times, tol)?;
        Ok(ys.iter().map(MeanFieldState::from_vec).collect())
    }

    pub fn trajectory(&self, initial: MeanFieldState, times: &[f64], n_atoms: usize) -> Result<Trajectory> {
        let tol = Tolerances::meanfield();
        let states = self.evolve(initial, times, tol)?;
        let h = n_atoms as f64 / 2.0;
        let mut traj = Trajectory {
            metadata: serde_json::json!({"engine": "meanfield", "model": self, "rtol": tol.rtol, "atol": tol.atol}),
            ..Default::default()
        };
        for (t, s) in times.iter().zip(states) {
            traj.push(*t, [s.sx * h, s.sy * h, s.sz * h], h);
        }
        Ok(traj)
    }
}

/// Convenience wrapper around [`MeanFieldModel::derivatives`] in absolute
/// units: returns (dJ₊/dt, dJz/dt) for H = χ(J₊³e^{3iφ_d} + h.c.).
pub fn meanfield_derivatives(jp: C64, jz: f64, chi3: f64, n_atoms: usize, phi_d: f64, gamma: f64) -> (C64, f64) {
    let h = n_atoms as f64 / 2.0;
    let m = MeanFieldModel { n_body: 3, chi_n: chi3 * (n_atoms as f64).powi(2), phi_d, gamma, z_field: 0.0 };
    let (dp, dz) = m.derivatives(&MeanFieldState { sx: jp.re / h, sy: jp.im / h, sz: jz / h });
    (dp * h, dz * h)
}

/// Exact n-body Hamiltonian χ(J₊ⁿe^{inφ_d} + h.c.) + εJz.
pub fn n_body_hamiltonian(space: DickeSpace, n: u32, chi: f64, phi_d: f64, z_field: f64) -> CMatrix {
    let jpn = crate::dicke::raising_power(space, n);
    let cn = C64::from_polar(chi, n as f64 * phi_d);
    let jz = CollectiveOperator::build(space, OperatorKind::Z).into_matrix();
    &jpn * cn + dagger(&jpn) * cn.conj() + jz * c(z_field)
}
