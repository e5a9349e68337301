//! Explicit Runge-Kutta integrators over nalgebra vectors.

use nalgebra::{ComplexField, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, h_min: 0.0, max_steps: 10_000_000 }
    }

    pub fn meanfield() -> Self {
        Self::new(1e-9, 1e-12)
    }

    pub fn master() -> Self {
        Self::new(1e-7, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lin<T: ComplexField<RealField = f64> + Copy>(
    out: &mut DVector<T>,
    y: &DVector<T>,
    h: f64,
    terms: &[(f64, &DVector<T>)],
) {
    out.copy_from(y);
    for (c, k) in terms {
        if *c != 0.0 {
            out.axpy(T::from_real(h * c), k, T::one());
        }
    }
}

/// Adaptive Dormand-Prince integration of `y' = f(t, y)`, reporting the
/// state at each time in `t_out` (ascending, all ≥ `t0`).
pub fn dopri5<T, F>(
    mut f: F,
    t0: f64,
    y0: &DVector<T>,
    t_out: &[f64],
    tol: Tolerances,
) -> Result<(Vec<DVector<T>>, Stats)>
where
    T: ComplexField<RealField = f64> + Copy,
    F: FnMut(f64, &DVector<T>, &mut DVector<T>),
{
    let n = y0.len();
    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(t_out.len());
    let mut y = y0.clone();
    let mut t = t0;
    let z = || DVector::<T>::zeros(n);
    let (mut k1, mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (z(), z(), z(), z(), z(), z(), z());
    let (mut tmp, mut ynew) = (z(), z());

    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&y, &k1, tol);

    for &target in t_out {
        if target < t {
            return Err(Error::Integrator("output times must be ascending".into()));
        }
        while t < target {
            if stats.accepted + stats.rejected > tol.max_steps {
                return Err(Error::Integrator(format!("step budget exhausted at t = {t:e}")));
            }
            let h_prop = h;
            let last = t + h >= target;
            if last {
                h = target - t;
            }
            lin(&mut tmp, &y, h, &[(A21, &k1)]);
            f(t + C2 * h, &tmp, &mut k2);
            lin(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * h, &tmp, &mut k3);
            lin(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * h, &tmp, &mut k4);
            lin(&mut tmp, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * h, &tmp, &mut k5);
            lin(&mut tmp, &y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            f(t + h, &tmp, &mut k6);
            lin(&mut ynew, &y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            f(t + h, &ynew, &mut k7);
            stats.evaluations += 6;

            let mut acc = 0.0;
            for i in 0..n {
                let e = (k1[i] * T::from_real(E1)
                    + k3[i] * T::from_real(E3)
                    + k4[i] * T::from_real(E4)
                    + k5[i] * T::from_real(E5)
                    + k6[i] * T::from_real(E6)
                    + k7[i] * T::from_real(E7))
                .modulus()
                    * h;
                let sc = tol.atol + tol.rtol * y[i].modulus().max(ynew[i].modulus());
                acc += (e / sc).powi(2);
            }
            let err = (acc / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integrator(format!("non-finite error estimate at t = {t:e}")));
            }
            if err <= 1.0 {
                t = if last { target } else { t + h };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
            } else {
                stats.rejected += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if last && err <= 1.0 { h_prop.max(h * fac) } else { h * fac };
            if h <= tol.h_min || h < 1e-14 * t.abs().max(1e-300) {
                return Err(Error::Integrator(format!("step size collapsed at t = {t:e}")));
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step<T: ComplexField<RealField = f64> + Copy>(y: &DVector<T>, f0: &DVector<T>, tol: Tolerances) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = tol.atol + tol.rtol * y[i].modulus();
        d0 += (y[i].modulus() / sc).powi(2);
        d1 += (f0[i].modulus() / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

/// Classic fixed-step RK4. `observe(step, t, y)` runs before the first step
/// and after every step.
pub fn rk4_fixed<T, F, O>(mut f: F, t0: f64, y0: &DVector<T>, dt: f64, n_steps: usize, mut observe: O) -> DVector<T>
where
    T: ComplexField<RealField = f64> + Copy,
    F: FnMut(f64, &DVector<T>, &mut DVector<T>),
    O: FnMut(usize, f64, &DVector<T>),
{
    let n = y0.len();
    let mut y = y0.clone();
    let z = || DVector::<T>::zeros(n);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (z(), z(), z(), z(), z());
    observe(0, t0, &y);
    let half = T::from_real(dt / 2.0);
    for s in 0..n_steps {
        let t = t0 + s as f64 * dt;
        f(t, &y, &mut k1);
        tmp.copy_from(&y);
        tmp.axpy(half, &k1, T::one());
        f(t + dt / 2.0, &tmp, &mut k2);
        tmp.copy_from(&y);
        tmp.axpy(half, &k2, T::one());
        f(t + dt / 2.0, &tmp, &mut k3);
        tmp.copy_from(&y);
        tmp.axpy(T::from_real(dt), &k3, T::one());
        f(t + dt, &tmp, &mut k4);
        let w = T::from_real(dt / 6.0);
        let w2 = T::from_real(dt / 3.0);
        y.axpy(w, &k1, T::one());
        y.axpy(w2, &k2, T::one());
        y.axpy(w2, &k3, T::one());
        y.axpy(w, &k4, T::one());
        observe(s + 1, t0 + (s + 1) as f64 * dt, &y);
    }
    y
}
