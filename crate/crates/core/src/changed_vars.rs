//! Physical phase-space variables and the stochastic Maxwell-Bloch form of the SDE.
//!
//! The flattened ordering is `(eps_1, eta_1, ..., eps_N, eta_N, rho21, rho12, nu)`, with
//! `eps_n = beta_n + alpha_n`, `eta_n = i (beta_n - alpha_n)` and the fermionic moments of
//! the projector.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, POLE_FLOOR};
use crate::error::{Error, Result};
use crate::model::{diffusion_jc_plus, drift_jc_plus, sqrt_i, ModelParams, PhaseState};
use crate::observables::{project, FermionicMoment, FermionicObservable, ObservableSet, ScalarObservable};
use crate::sde::SdeSystem;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance of the check `4 rho21 rho12 = (1 + nu)(1 - nu)`.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysState {
    pub eps: Vec<Complex64>,
    pub eta: Vec<Complex64>,
    pub rho21: Complex64,
    pub rho12: Complex64,
    pub nu: Complex64,
}

impl PhysState {
    pub fn mode_count(&self) -> usize {
        self.eps.len()
    }

    pub fn flatten(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(2 * self.mode_count() + 3);
        for (e, h) in self.eps.iter().zip(&self.eta) {
            out.push(*e);
            out.push(*h);
        }
        out.extend([self.rho21, self.rho12, self.nu]);
        out
    }

    pub fn from_flat(x: &[Complex64]) -> Result<Self> {
        if x.len() < 3 || x.len() % 2 == 0 {
            return Err(Error::Validation(format!(
                "physical state of length {} is not 2N+3",
                x.len()
            )));
        }
        let n = (x.len() - 3) / 2;
        Ok(PhysState {
            eps: (0..n).map(|k| x[2 * k]).collect(),
            eta: (0..n).map(|k| x[2 * k + 1]).collect(),
            rho21: x[2 * n],
            rho12: x[2 * n + 1],
            nu: x[2 * n + 2],
        })
    }

    pub fn observables(&self) -> ObservableSet {
        ObservableSet {
            rho21: self.rho21,
            rho12: self.rho12,
            nu: self.nu,
            e: self.eps.clone(),
            h: self.eta.clone(),
        }
    }
}

pub fn to_physical(family: &BasisFamily, state: &PhaseState) -> Result<PhysState> {
    let set = project(family, state)?;
    Ok(PhysState {
        eps: set.e,
        eta: set.h,
        rho21: set.rho21,
        rho12: set.rho12,
        nu: set.nu,
    })
}

/// Inverts [`to_physical`] through `h = 2 rho21 / (1 - nu)` and `h~ = 2 rho12 / (1 - nu)`.
///
/// Requires the dual expression `h = (1 + nu) / (2 rho12)` to agree, i.e.
/// `4 rho21 rho12 = (1 + nu)(1 - nu)` to [`CONSISTENCY_TOLERANCE`].
pub fn from_physical(family: &BasisFamily, phys: &PhysState) -> Result<PhaseState> {
    let one_minus = 1.0 - phys.nu;
    if !(one_minus.norm() >= POLE_FLOOR) {
        return Err(Error::Singularity {
            quantity: "1 - nu",
            magnitude: one_minus.norm(),
        });
    }
    let lhs = 4.0 * phys.rho21 * phys.rho12;
    let rhs = (1.0 + phys.nu) * one_minus;
    let scale = 1f64.max(lhs.norm()).max(rhs.norm());
    if !((lhs - rhs).norm() <= CONSISTENCY_TOLERANCE * scale) {
        return Err(Error::InconsistentState {
            from_rho21: 2.0 * phys.rho21 / one_minus,
            from_rho12: (1.0 + phys.nu) / (2.0 * phys.rho12),
        });
    }
    Ok(PhaseState {
        alpha: phys.eps.iter().zip(&phys.eta).map(|(e, h)| 0.5 * (e + I * h)).collect(),
        beta: phys.eps.iter().zip(&phys.eta).map(|(e, h)| 0.5 * (e - I * h)).collect(),
        z: family.invert_h(2.0 * phys.rho21 / one_minus)?,
        w: family.invert_htilde(2.0 * phys.rho12 / one_minus)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct BarCoefficients {
    omega: Vec<f64>,
    gs: Vec<f64>,
    atom: f64,
    gamma1: f64,
    gamma2: f64,
    nu0: f64,
    rate_12: f64,
    rate_21: f64,
    rate_dephasing: f64,
}

impl BarCoefficients {
    fn new(params: &ModelParams) -> Self {
        BarCoefficients {
            omega: params.mode_frequencies.clone(),
            gs: params.effective_couplings(),
            atom: params.atom_frequency,
            gamma1: params.gamma1(),
            gamma2: params.gamma2(),
            nu0: params.nu0(),
            rate_12: params.rate_12,
            rate_21: params.rate_21,
            rate_dephasing: params.rate_dephasing,
        }
    }

    fn modes(&self) -> usize {
        self.omega.len()
    }

    fn check_len(&self, x: &[Complex64]) -> Result<()> {
        if x.len() == 2 * self.modes() + 3 {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "physical state has length {}, expected {}",
                x.len(),
                2 * self.modes() + 3
            )))
        }
    }

    fn drift(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.check_len(x)?;
        let n = self.modes();
        let (r21, r12, nu) = (x[2 * n], x[2 * n + 1], x[2 * n + 2]);
        let mut drive = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let (e, h) = (x[2 * k], x[2 * k + 1]);
            out[2 * k] = self.omega[k] * h;
            out[2 * k + 1] = -self.omega[k] * e - 2.0 * self.gs[k] * (r21 + r12);
            drive += self.gs[k] * e;
        }
        out[2 * n] = -I * self.atom * r21 + I * drive * nu - self.gamma2 * r21;
        out[2 * n + 1] = I * self.atom * r12 - I * drive * nu - self.gamma2 * r12;
        out[2 * n + 2] = 2.0 * I * drive * (r21 - r12) - self.gamma1 * (nu - self.nu0);
        Ok(())
    }

    fn noise(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        self.check_len(x)?;
        let n = self.modes();
        let (r21, r12, nu) = (x[2 * n], x[2 * n + 1], x[2 * n + 2]);
        let one_minus = 1.0 - nu;
        if !(one_minus.norm() >= POLE_FLOOR) {
            return Err(Error::Singularity {
                quantity: "1 - nu",
                magnitude: one_minus.norm(),
            });
        }
        let quarter = one_minus * one_minus / 4.0;
        let p = (4.0 * r21 * r21 / (one_minus * one_minus) - 1.0).sqrt();
        let q = (4.0 * r12 * r12 / (one_minus * one_minus) - 1.0).sqrt();
        let p_dual = ((1.0 + nu) * (1.0 + nu) / (4.0 * r12 * r12) - 1.0).sqrt();
        let q_dual = ((1.0 + nu) * (1.0 + nu) / (4.0 * r21 * r21) - 1.0).sqrt();
        let r = [quarter * p, -r12 * r12 * p_dual, r12 * one_minus * p_dual];
        let s = [-r21 * r21 * q_dual, quarter * q, r21 * one_minus * q_dual];

        out.fill(Complex64::new(0.0, 0.0));
        let si = sqrt_i();
        for k in 0..n {
            let col = 4 * k;
            let a = si * Complex64::new(0.5 * self.gs[k], 0.0).sqrt();
            out[[2 * k, col]] = a * I * p;
            out[[2 * k, col + 1]] = -a * p;
            out[[2 * k + 1, col]] = a * p;
            out[[2 * k + 1, col + 1]] = a * I * p;
            out[[2 * k, col + 2]] = -a * I * q;
            out[[2 * k, col + 3]] = -a * q;
            out[[2 * k + 1, col + 2]] = a * q;
            out[[2 * k + 1, col + 3]] = -a * I * q;
            for j in 0..3 {
                out[[2 * n + j, col]] = -a * I * r[j];
                out[[2 * n + j, col + 1]] = -a * r[j];
                out[[2 * n + j, col + 2]] = -a * I * s[j];
                out[[2 * n + j, col + 3]] = a * s[j];
            }
        }
        let xr = (1.0 + nu) / one_minus;
        let t = ((2.0 * self.rate_dephasing * xr + self.rate_21 * xr * xr + self.rate_12) / 2.0).sqrt();
        let col = 4 * n;
        out[[2 * n, col]] = -t * I * (r21 * r21 + quarter);
        out[[2 * n, col + 1]] = t * (quarter - r21 * r21);
        out[[2 * n + 1, col]] = t * I * (r12 * r12 + quarter);
        out[[2 * n + 1, col + 1]] = t * (quarter - r12 * r12);
        out[[2 * n + 2, col]] = t * I * (r21 - r12) * one_minus;
        out[[2 * n + 2, col + 1]] = t * (r12 + r21) * one_minus;
        Ok(())
    }
}

/// Drift in physical variables: the cavity-mode Maxwell equations and the full-wave
/// Bloch equations with relaxation.
pub fn drift_bar(params: &ModelParams, phys: &PhysState) -> Result<Vec<Complex64>> {
    let x = phys.flatten();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    BarCoefficients::new(params).drift(&x, &mut out)?;
    Ok(out)
}

fn require_coherent_spin(family: &BasisFamily) -> Result<()> {
    match family {
        BasisFamily::CoherentSpin => Ok(()),
        other => Err(Error::UnsupportedFamily(match other {
            BasisFamily::AdditiveNoise { .. } => {
                "additive-noise (the physical-variable noise matrix is only known for coherent-spin states)"
            }
            BasisFamily::CoherentSpin => unreachable!(),
        })),
    }
}

/// Noise matrix in physical variables, `(2N+3) x (4N+2)`, coherent-spin states only.
pub fn noise_bar(params: &ModelParams, family: &BasisFamily, phys: &PhysState) -> Result<Array2<Complex64>> {
    require_coherent_spin(family)?;
    let x = phys.flatten();
    let mut out = Array2::zeros((x.len(), 4 * phys.mode_count() + 2));
    BarCoefficients::new(params).noise(&x, &mut out)?;
    Ok(out)
}

/// Jacobian `d phys / d state` of [`to_physical`], `(2N+3) x (2N+2)`.
pub fn physical_jacobian(family: &BasisFamily, state: &PhaseState) -> Result<Array2<Complex64>> {
    let n = state.mode_count();
    let x = state.flatten();
    let mut jac = Array2::zeros((2 * n + 3, 2 * n + 2));
    for k in 0..n {
        jac[[2 * k, 2 * k]] = Complex64::new(1.0, 0.0);
        jac[[2 * k, 2 * k + 1]] = Complex64::new(1.0, 0.0);
        jac[[2 * k + 1, 2 * k]] = -I;
        jac[[2 * k + 1, 2 * k + 1]] = I;
    }
    let mut grad = vec![Complex64::new(0.0, 0.0); x.len()];
    for (row, moment) in fermionic_rows(n) {
        FermionicObservable::new(moment, *family, n).gradient(&x, &mut grad)?;
        jac.row_mut(row).assign(&ndarray::ArrayView1::from(&grad));
    }
    Ok(jac)
}

fn fermionic_rows(n: usize) -> [(usize, FermionicMoment); 3] {
    [
        (2 * n, FermionicMoment::Rho21),
        (2 * n + 1, FermionicMoment::Rho12),
        (2 * n + 2, FermionicMoment::Nu),
    ]
}

/// Drift of the physical variables obtained from the dissipative Jaynes-Cummings SDE by
/// Ito's formula, `J A + (1/2) D : Hess`.
///
/// The mode quadratures are linear in the state and get no second-order term.
pub fn ito_drift(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Vec<Complex64>> {
    let n = state.mode_count();
    let x = state.flatten();
    let a = ndarray::Array1::from(drift_jc_plus(params, family, state)?);
    let d = diffusion_jc_plus(params, family, state)?;
    let mut out = physical_jacobian(family, state)?.dot(&a).to_vec();
    let mut hess = Array2::zeros((x.len(), x.len()));
    for (row, moment) in fermionic_rows(n) {
        FermionicObservable::new(moment, *family, n).hessian(&x, &mut hess)?;
        out[row] += 0.5 * (&d * &hess).sum();
    }
    Ok(out)
}

/// Electric and magnetic field `(E(x), H(x))` reconstructed from the mode amplitudes.
///
/// In the multipolar coupling used here the reconstructed `E` is the displacement
/// field divided by `epsilon0`.
pub fn reconstruct_fields(params: &ModelParams, phys: &PhysState, x: f64) -> (Complex64, Complex64) {
    let set = phys.observables();
    (set.electric_field(params, x), set.magnetic_field(params, x))
}

/// `sum_n i g_n eps_n sin(k_n x0)`, the field drive of the Bloch equations.
pub fn mode_drive(params: &ModelParams, phys: &PhysState) -> Complex64 {
    params
        .effective_couplings()
        .iter()
        .zip(&phys.eps)
        .map(|(gs, e)| I * gs * e)
        .sum()
}

/// The same drive written through the dipole moment, `-(i / hbar) m21 E(x0)`.
pub fn dipole_drive(params: &ModelParams, phys: &PhysState) -> Result<Complex64> {
    let m21 = params.dipole_moment()?;
    let (e, _) = reconstruct_fields(params, phys, params.atom_position);
    Ok(-I / params.hbar * m21 * e)
}

/// The stochastic Maxwell-Bloch SDE in physical variables.
///
/// The noise entries are numerically fragile; this system is exposed as an experimental
/// engine.
#[derive(Debug, Clone)]
pub struct MbSdeSystem {
    coeffs: BarCoefficients,
}

impl MbSdeSystem {
    pub fn new(params: &ModelParams, family: &BasisFamily) -> Result<Self> {
        params.validate()?;
        require_coherent_spin(family)?;
        Ok(MbSdeSystem {
            coeffs: BarCoefficients::new(params),
        })
    }
}

impl SdeSystem for MbSdeSystem {
    fn state_dim(&self) -> usize {
        2 * self.coeffs.modes() + 3
    }

    fn noise_dim(&self) -> usize {
        4 * self.coeffs.modes() + 2
    }

    fn drift_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.coeffs.drift(x, out)
    }

    fn noise_into(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        self.coeffs.noise(x, out)
    }
}

/// Observables of a flattened [`PhysState`].
pub struct PhysObservables {
    kinds: Vec<crate::observables::ObservableKind>,
    params: ModelParams,
}

impl PhysObservables {
    pub fn new(kinds: Vec<crate::observables::ObservableKind>, params: ModelParams) -> Result<Self> {
        for k in &kinds {
            k.check(&params)?;
        }
        Ok(PhysObservables { kinds, params })
    }
}

impl crate::sde::ObservableMap for PhysObservables {
    fn names(&self) -> Vec<String> {
        self.kinds.iter().map(|k| k.to_string()).collect()
    }

    fn eval_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let set = PhysState::from_flat(x)?.observables();
        for (k, o) in self.kinds.iter().zip(out.iter_mut()) {
            *o = k.value(&set, &self.params);
        }
        Ok(())
    }
}
