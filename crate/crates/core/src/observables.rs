//! Physical observables of phase-space points, and Ito augmentation of an SDE with an
//! observable coordinate.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisValues, POLE_FLOOR};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PhaseState};
use crate::sde::{ObservableMap, SdeSystem};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Per-realization contributions to the atomic density matrix and mode quadratures.
///
/// `rho21` and `rho12` are not complex conjugates on a single realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSet {
    pub rho21: Complex64,
    pub rho12: Complex64,
    /// Inversion `rho22 - rho11`.
    pub nu: Complex64,
    /// `e_n = beta_n + alpha_n`, the contribution to `<a_n^dagger + a_n>`.
    pub e: Vec<Complex64>,
    /// `h_n = i (beta_n - alpha_n)`, the contribution to `i <a_n^dagger - a_n>`.
    pub h: Vec<Complex64>,
}

impl ObservableSet {
    pub fn rho11(&self) -> Complex64 {
        0.5 * (1.0 - self.nu)
    }

    pub fn rho22(&self) -> Complex64 {
        0.5 * (1.0 + self.nu)
    }

    /// `E(x) = sum_n e_p(omega_n) e_n sin(k_n x)`.
    pub fn electric_field(&self, params: &ModelParams, x: f64) -> Complex64 {
        self.e
            .iter()
            .enumerate()
            .map(|(n, en)| params.field_per_photon(n) * en * (params.wave_number(n) * x).sin())
            .sum()
    }

    /// `H(x) = -(1/Z) sum_n e_p(omega_n) h_n cos(k_n x)`.
    pub fn magnetic_field(&self, params: &ModelParams, x: f64) -> Complex64 {
        let sum: Complex64 = self
            .h
            .iter()
            .enumerate()
            .map(|(n, hn)| params.field_per_photon(n) * hn * (params.wave_number(n) * x).cos())
            .sum();
        -sum / params.impedance()
    }
}

/// `(rho21, rho12, nu)` from the projector `Lambda_A`.
pub fn fermionic_moments(v: &BasisValues) -> Result<(Complex64, Complex64, Complex64)> {
    let norm = v.norm();
    if !(norm.norm() >= POLE_FLOOR) {
        return Err(Error::Singularity {
            quantity: "1 + h h~",
            magnitude: norm.norm(),
        });
    }
    Ok((v.h / norm, v.htilde / norm, (v.h * v.htilde - 1.0) / norm))
}

pub fn project(family: &BasisFamily, state: &PhaseState) -> Result<ObservableSet> {
    let v = family.eval(state.z, state.w)?;
    let (rho21, rho12, nu) = fermionic_moments(&v)?;
    Ok(ObservableSet {
        rho21,
        rho12,
        nu,
        e: state.alpha.iter().zip(&state.beta).map(|(a, b)| b + a).collect(),
        h: state.alpha.iter().zip(&state.beta).map(|(a, b)| I * (b - a)).collect(),
    })
}

/// Selectable output quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObservableKind {
    Rho11,
    Rho22,
    Rho21,
    Rho12,
    Nu,
    /// Zero-based mode index.
    E(usize),
    H(usize),
    FieldE(f64),
    FieldH(f64),
}

impl ObservableKind {
    pub fn value(&self, set: &ObservableSet, params: &ModelParams) -> Complex64 {
        match *self {
            ObservableKind::Rho11 => set.rho11(),
            ObservableKind::Rho22 => set.rho22(),
            ObservableKind::Rho21 => set.rho21,
            ObservableKind::Rho12 => set.rho12,
            ObservableKind::Nu => set.nu,
            ObservableKind::E(n) => set.e[n],
            ObservableKind::H(n) => set.h[n],
            ObservableKind::FieldE(x) => set.electric_field(params, x),
            ObservableKind::FieldH(x) => set.magnetic_field(params, x),
        }
    }

    /// Fails for mode indices beyond the model.
    pub fn check(&self, params: &ModelParams) -> Result<()> {
        match *self {
            ObservableKind::E(n) | ObservableKind::H(n) if n >= params.mode_count() => Err(
                Error::Validation(format!("observable {self} refers to a missing mode")),
            ),
            _ => Ok(()),
        }
    }

    /// The default column set: populations and the coherence.
    pub fn defaults() -> Vec<ObservableKind> {
        vec![
            ObservableKind::Rho11,
            ObservableKind::Rho22,
            ObservableKind::Rho21,
            ObservableKind::Rho12,
            ObservableKind::Nu,
        ]
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::Rho11 => write!(f, "rho_11"),
            ObservableKind::Rho22 => write!(f, "rho_22"),
            ObservableKind::Rho21 => write!(f, "rho_21"),
            ObservableKind::Rho12 => write!(f, "rho_12"),
            ObservableKind::Nu => write!(f, "nu"),
            ObservableKind::E(n) => write!(f, "e_{}", n + 1),
            ObservableKind::H(n) => write!(f, "h_{}", n + 1),
            ObservableKind::FieldE(x) => write!(f, "E_at_{x}"),
            ObservableKind::FieldH(x) => write!(f, "H_at_{x}"),
        }
    }
}

impl FromStr for ObservableKind {
    type Err = Error;

    /// Accepts the column names (`rho_11`, `e_1`, `E_at_0.5`) and the short forms
    /// `rho11`, `E(0.5)`, `H(0.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let invalid = || Error::Validation(format!("unknown observable '{s}'"));
        let mode = |digits: &str| -> Result<usize> {
            match digits.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n - 1),
                _ => Err(invalid()),
            }
        };
        let position = |text: &str| -> Result<f64> {
            text.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(invalid)
        };
        Ok(match s {
            "rho_11" | "rho11" => ObservableKind::Rho11,
            "rho_22" | "rho22" => ObservableKind::Rho22,
            "rho_21" | "rho21" => ObservableKind::Rho21,
            "rho_12" | "rho12" => ObservableKind::Rho12,
            "nu" => ObservableKind::Nu,
            _ => {
                if let Some(rest) = s.strip_prefix("E_at_") {
                    ObservableKind::FieldE(position(rest)?)
                } else if let Some(rest) = s.strip_prefix("H_at_") {
                    ObservableKind::FieldH(position(rest)?)
                } else if let Some(rest) = s.strip_prefix("E(").and_then(|r| r.strip_suffix(')')) {
                    ObservableKind::FieldE(position(rest)?)
                } else if let Some(rest) = s.strip_prefix("H(").and_then(|r| r.strip_suffix(')')) {
                    ObservableKind::FieldH(position(rest)?)
                } else if let Some(rest) = s.strip_prefix("e_") {
                    ObservableKind::E(mode(rest)?)
                } else if let Some(rest) = s.strip_prefix("h_") {
                    ObservableKind::H(mode(rest)?)
                } else {
                    return Err(invalid());
                }
            }
        })
    }
}

/// Post-hoc projection of Jaynes-Cummings phase-space points.
pub struct JcObservables {
    kinds: Vec<ObservableKind>,
    family: BasisFamily,
    params: ModelParams,
}

impl JcObservables {
    pub fn new(kinds: Vec<ObservableKind>, family: BasisFamily, params: ModelParams) -> Result<Self> {
        for k in &kinds {
            k.check(&params)?;
        }
        Ok(JcObservables {
            kinds,
            family,
            params,
        })
    }
}

impl ObservableMap for JcObservables {
    fn names(&self) -> Vec<String> {
        self.kinds.iter().map(|k| k.to_string()).collect()
    }

    fn eval_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let set = project(&self.family, &PhaseState::from_flat(x)?)?;
        for (k, o) in self.kinds.iter().zip(out.iter_mut()) {
            *o = k.value(&set, &self.params);
        }
        Ok(())
    }
}

/// A scalar function of the state with closed-form first and second derivatives.
pub trait ScalarObservable: Sync {
    fn value(&self, x: &[Complex64]) -> Result<Complex64>;
    /// Writes `d v / d x_i`.
    fn gradient(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()>;
    /// Writes `d^2 v / d x_p d x_q`.
    fn hessian(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()>;
}

/// `v(x) = x_i`.
#[derive(Debug, Clone, Copy)]
pub struct Coordinate(pub usize);

impl ScalarObservable for Coordinate {
    fn value(&self, x: &[Complex64]) -> Result<Complex64> {
        Ok(x[self.0])
    }
    fn gradient(&self, _: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        out.fill(Complex64::new(0.0, 0.0));
        out[self.0] = Complex64::new(1.0, 0.0);
        Ok(())
    }
    fn hessian(&self, _: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        out.fill(Complex64::new(0.0, 0.0));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermionicMoment {
    Rho21,
    Rho12,
    Nu,
}

/// `rho21`, `rho12` or `nu` as a function of `(z, w)` in a Jaynes-Cummings state with
/// `modes` cavity modes.
#[derive(Debug, Clone, Copy)]
pub struct FermionicObservable {
    pub moment: FermionicMoment,
    pub family: BasisFamily,
    pub modes: usize,
}

/// Value and partials of `F(h, h~)`: `(F, F_h, F_t, F_hh, F_ht, F_tt)`.
type Partials = (Complex64, Complex64, Complex64, Complex64, Complex64, Complex64);

impl FermionicObservable {
    pub fn new(moment: FermionicMoment, family: BasisFamily, modes: usize) -> Self {
        FermionicObservable {
            moment,
            family,
            modes,
        }
    }

    fn eval(&self, x: &[Complex64]) -> Result<(BasisValues, Partials)> {
        let n = self.modes;
        let v = self.family.eval(x[2 * n], x[2 * n + 1])?;
        let norm = v.norm();
        if !(norm.norm() >= POLE_FLOOR) {
            return Err(Error::Singularity {
                quantity: "1 + h h~",
                magnitude: norm.norm(),
            });
        }
        let (h, t) = (v.h, v.htilde);
        let n2 = norm * norm;
        let n3 = n2 * norm;
        let partials = match self.moment {
            FermionicMoment::Rho21 => (
                h / norm,
                1.0 / n2,
                -h * h / n2,
                -2.0 * t / n3,
                -2.0 * h / n3,
                2.0 * h * h * h / n3,
            ),
            FermionicMoment::Rho12 => (
                t / norm,
                -t * t / n2,
                1.0 / n2,
                2.0 * t * t * t / n3,
                -2.0 * t / n3,
                -2.0 * h / n3,
            ),
            FermionicMoment::Nu => (
                (h * t - 1.0) / norm,
                2.0 * t / n2,
                2.0 * h / n2,
                -4.0 * t * t / n3,
                (2.0 - 2.0 * h * t) / n3,
                -4.0 * h * h / n3,
            ),
        };
        Ok((v, partials))
    }
}

impl ScalarObservable for FermionicObservable {
    fn value(&self, x: &[Complex64]) -> Result<Complex64> {
        Ok(self.eval(x)?.1 .0)
    }

    fn gradient(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let (v, (_, fh, ft, ..)) = self.eval(x)?;
        out.fill(Complex64::new(0.0, 0.0));
        out[2 * self.modes] = fh * v.h_prime;
        out[2 * self.modes + 1] = ft * v.htilde_prime;
        Ok(())
    }

    fn hessian(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        let (v, (_, fh, ft, fhh, fht, ftt)) = self.eval(x)?;
        let (zi, wi) = (2 * self.modes, 2 * self.modes + 1);
        out.fill(Complex64::new(0.0, 0.0));
        out[[zi, zi]] = fhh * v.h_prime * v.h_prime + fh * v.h_second;
        out[[wi, wi]] = ftt * v.htilde_prime * v.htilde_prime + ft * v.htilde_second;
        let cross = fht * v.h_prime * v.htilde_prime;
        out[[zi, wi]] = cross;
        out[[wi, zi]] = cross;
        Ok(())
    }
}

/// Appends `sigma = v(x)` as an extra coordinate evolved by Ito's formula.
///
/// The extra coordinate does not feed back into the original ones.
pub struct AugmentedSystem<S, V> {
    inner: S,
    observable: V,
}

impl<S: SdeSystem, V: ScalarObservable> AugmentedSystem<S, V> {
    pub fn new(inner: S, observable: V) -> Self {
        AugmentedSystem { inner, observable }
    }

    /// Initial augmented state `(x0, v(x0))`.
    pub fn initial(&self, x0: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = x0.to_vec();
        out.push(self.observable.value(x0)?);
        Ok(out)
    }

    fn split<'a>(&self, x: &'a [Complex64]) -> &'a [Complex64] {
        &x[..self.inner.state_dim()]
    }
}

pub fn extend_with_observable<S: SdeSystem, V: ScalarObservable>(system: S, v: V) -> AugmentedSystem<S, V> {
    AugmentedSystem::new(system, v)
}

impl<S: SdeSystem, V: ScalarObservable> SdeSystem for AugmentedSystem<S, V> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() + 1
    }

    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn drift_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let n = self.inner.state_dim();
        let base = self.split(x);
        self.inner.drift_into(base, &mut out[..n])?;
        let b = self.inner.noise(base)?;
        let mut grad = vec![Complex64::new(0.0, 0.0); n];
        let mut hess = Array2::zeros((n, n));
        self.observable.gradient(base, &mut grad)?;
        self.observable.hessian(base, &mut hess)?;
        let mut acc: Complex64 = out[..n].iter().zip(&grad).map(|(a, g)| a * g).sum();
        let diffusion = b.dot(&b.t());
        acc += 0.5 * (&diffusion * &hess).sum();
        out[n] = acc;
        Ok(())
    }

    fn noise_into(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        let n = self.inner.state_dim();
        let base = self.split(x);
        let b = self.inner.noise(base)?;
        let mut grad = vec![Complex64::new(0.0, 0.0); n];
        self.observable.gradient(base, &mut grad)?;
        out.slice_mut(ndarray::s![..n, ..]).assign(&b);
        for j in 0..b.ncols() {
            out[[n, j]] = (0..n).map(|i| b[[i, j]] * grad[i]).sum();
        }
        Ok(())
    }

    fn constant_noise(&self) -> bool {
        false
    }
}
