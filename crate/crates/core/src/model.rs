//! Full-wave Jaynes-Cummings model in positive-P phase space.
//!
//! The flattened phase-space ordering is `(alpha_1, beta_1, ..., alpha_N, beta_N, z, w)`.
//! Noise columns come in groups of four per mode, followed by two dissipative columns
//! when any relaxation rate is nonzero.

use std::f64::consts::{FRAC_PI_4, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisValues};
use crate::error::{Error, Result};
use crate::init::InitDistribution;
use crate::sde::SdeSystem;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Principal square root of `i`.
pub fn sqrt_i() -> Complex64 {
    Complex64::from_polar(1.0, FRAC_PI_4)
}

/// Cavity, atom and dissipation parameters.
///
/// Wave numbers are `k_n = n pi / l` for mode index `n = 1..N`, so the position factor
/// `sin(k_n x0)` follows the cavity geometry even when mode frequencies are given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hbar: f64,
    /// Atomic transition angular frequency `Omega`.
    pub atom_frequency: f64,
    pub cavity_length: f64,
    pub area: f64,
    pub epsilon0: f64,
    pub mu0: f64,
    pub mode_frequencies: Vec<f64>,
    /// `g(omega_n)` per mode.
    pub couplings: Vec<f64>,
    pub atom_position: f64,
    /// Pumping rate `r12` (ground to excited).
    pub rate_12: f64,
    /// Decay rate `r21` (excited to ground).
    pub rate_21: f64,
    /// Pure dephasing rate `r_p`.
    pub rate_dephasing: f64,
}

impl ModelParams {
    /// One mode in dimensionless units (`hbar = epsilon0 = mu0 = l = A = 1`) with the atom
    /// at the field antinode `x0 = l / 2`.
    pub fn single_mode(atom_frequency: f64, mode_frequency: f64, coupling: f64) -> Self {
        ModelParams {
            hbar: 1.0,
            atom_frequency,
            cavity_length: 1.0,
            area: 1.0,
            epsilon0: 1.0,
            mu0: 1.0,
            mode_frequencies: vec![mode_frequency],
            couplings: vec![coupling],
            atom_position: 0.5,
            rate_12: 0.0,
            rate_21: 0.0,
            rate_dephasing: 0.0,
        }
    }

    /// Mode frequencies `omega_n = pi c n / l` from the cavity geometry.
    pub fn geometric_frequencies(cavity_length: f64, epsilon0: f64, mu0: f64, modes: usize) -> Vec<f64> {
        let c = 1.0 / (epsilon0 * mu0).sqrt();
        (1..=modes).map(|n| PI * c * n as f64 / cavity_length).collect()
    }

    pub fn with_rates(mut self, rate_12: f64, rate_21: f64, rate_dephasing: f64) -> Self {
        self.rate_12 = rate_12;
        self.rate_21 = rate_21;
        self.rate_dephasing = rate_dephasing;
        self
    }

    pub fn mode_count(&self) -> usize {
        self.mode_frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let n = self.mode_count();
        if n == 0 {
            return bad("at least one cavity mode is required".into());
        }
        if self.couplings.len() != n {
            return bad(format!("{} couplings given for {n} modes", self.couplings.len()));
        }
        for (name, v) in [
            ("hbar", self.hbar),
            ("cavity_length", self.cavity_length),
            ("area", self.area),
            ("epsilon0", self.epsilon0),
            ("mu0", self.mu0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !self.atom_frequency.is_finite() {
            return bad("atom_frequency must be finite".into());
        }
        if self.mode_frequencies.iter().chain(&self.couplings).any(|v| !v.is_finite()) {
            return bad("mode frequencies and couplings must be finite".into());
        }
        if self.mode_frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return bad("mode frequencies must be strictly increasing".into());
        }
        if !(self.atom_position > 0.0 && self.atom_position < self.cavity_length) {
            return bad(format!(
                "atom position {} must lie strictly inside (0, {})",
                self.atom_position, self.cavity_length
            ));
        }
        for (name, v) in [
            ("rate_12", self.rate_12),
            ("rate_21", self.rate_21),
            ("rate_dephasing", self.rate_dephasing),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn is_dissipative(&self) -> bool {
        self.rate_12 != 0.0 || self.rate_21 != 0.0 || self.rate_dephasing != 0.0
    }

    /// Population relaxation rate `r12 + r21`.
    pub fn gamma1(&self) -> f64 {
        self.rate_12 + self.rate_21
    }

    /// Coherence relaxation rate `(r12 + r21) / 2 + r_p`.
    pub fn gamma2(&self) -> f64 {
        0.5 * self.gamma1() + self.rate_dephasing
    }

    /// Steady-state inversion, zero without population relaxation.
    pub fn nu0(&self) -> f64 {
        let g1 = self.gamma1();
        if g1 == 0.0 {
            0.0
        } else {
            (self.rate_12 - self.rate_21) / g1
        }
    }

    pub fn speed_of_light(&self) -> f64 {
        1.0 / (self.epsilon0 * self.mu0).sqrt()
    }

    /// Free-space impedance `sqrt(mu0 / epsilon0)`.
    pub fn impedance(&self) -> f64 {
        (self.mu0 / self.epsilon0).sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.cavity_length * self.area
    }

    pub fn wave_number(&self, mode: usize) -> f64 {
        PI * (mode + 1) as f64 / self.cavity_length
    }

    /// `sin(k_n x0)` for zero-based `mode`.
    pub fn position_factor(&self, mode: usize) -> f64 {
        (self.wave_number(mode) * self.atom_position).sin()
    }

    /// `g_n sin(k_n x0)` per mode.
    pub fn effective_couplings(&self) -> Vec<f64> {
        (0..self.mode_count())
            .map(|n| self.couplings[n] * self.position_factor(n))
            .collect()
    }

    /// Electric field per photon `sqrt(hbar omega_n / (epsilon0 V))`.
    pub fn field_per_photon(&self, mode: usize) -> f64 {
        (self.hbar * self.mode_frequencies[mode] / (self.epsilon0 * self.volume())).sqrt()
    }

    /// Dipole moment `m21 = -hbar g_n / e_p(omega_n)`, which must agree across modes.
    pub fn dipole_moment(&self) -> Result<f64> {
        let per_mode: Vec<f64> = (0..self.mode_count())
            .map(|n| -self.hbar * self.couplings[n] / self.field_per_photon(n))
            .collect();
        let first = per_mode[0];
        for (n, &m) in per_mode.iter().enumerate() {
            if (m - first).abs() > 1e-9 * first.abs().max(m.abs()).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParams(format!(
                    "couplings are not proportional to the field per photon: m21 = {first} for mode 1 but {m} for mode {}",
                    n + 1
                )));
            }
        }
        Ok(first)
    }
}

/// A positive-P phase-space point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub z: Complex64,
    pub w: Complex64,
}

impl PhaseState {
    pub fn mode_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn flatten(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(2 * self.mode_count() + 2);
        for (a, b) in self.alpha.iter().zip(&self.beta) {
            out.push(*a);
            out.push(*b);
        }
        out.push(self.z);
        out.push(self.w);
        out
    }

    pub fn from_flat(x: &[Complex64]) -> Result<Self> {
        if x.len() < 2 || x.len() % 2 != 0 {
            return Err(Error::Validation(format!(
                "phase-space vector of length {} is not 2(N+1)",
                x.len()
            )));
        }
        let n = x.len() / 2 - 1;
        Ok(PhaseState {
            alpha: (0..n).map(|k| x[2 * k]).collect(),
            beta: (0..n).map(|k| x[2 * k + 1]).collect(),
            z: x[2 * n],
            w: x[2 * n + 1],
        })
    }
}

/// Initial phase-space vector: coherent field `alpha_n = conj(beta_n) = alpha0_n` and a
/// fermionic point drawn from `dist` with a uniform variate from `seed`.
pub fn sample_initial(alpha0: &[Complex64], dist: &InitDistribution, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = dist.sample(rng.random());
    PhaseState {
        alpha: alpha0.to_vec(),
        beta: alpha0.iter().map(|a| a.conj()).collect(),
        z: point.z,
        w: point.w,
    }
    .flatten()
}

/// Precomputed per-mode coefficients shared by all phase-space evaluations.
#[derive(Debug, Clone, PartialEq)]
struct Coefficients {
    omega: Vec<f64>,
    gs: Vec<f64>,
    atom: f64,
    rate_12: f64,
    rate_21: f64,
    rate_dephasing: f64,
}

impl Coefficients {
    fn new(params: &ModelParams) -> Self {
        Coefficients {
            omega: params.mode_frequencies.clone(),
            gs: params.effective_couplings(),
            atom: params.atom_frequency,
            rate_12: params.rate_12,
            rate_21: params.rate_21,
            rate_dephasing: params.rate_dephasing,
        }
    }

    fn modes(&self) -> usize {
        self.omega.len()
    }

    fn check_len(&self, x: &[Complex64]) -> Result<()> {
        if x.len() == 2 * self.modes() + 2 {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "state has length {}, expected {}",
                x.len(),
                2 * self.modes() + 2
            )))
        }
    }

    fn basis(&self, family: &BasisFamily, x: &[Complex64]) -> Result<BasisValues> {
        let n = self.modes();
        let v = family.eval(x[2 * n], x[2 * n + 1])?;
        v.check_regular()?;
        Ok(v)
    }

    fn drift(&self, family: &BasisFamily, x: &[Complex64], out: &mut [Complex64], dissipative: bool) -> Result<()> {
        self.check_len(x)?;
        let n = self.modes();
        let v = self.basis(family, x)?;
        let (h, ht) = (v.h, v.htilde);
        let norm = v.norm();
        let c = (h + ht) / norm;
        let mut field = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let (a, b) = (x[2 * k], x[2 * k + 1]);
            out[2 * k] = I * (-self.omega[k] * a - self.gs[k] * c);
            out[2 * k + 1] = I * (self.omega[k] * b + self.gs[k] * c);
            field += self.gs[k] * (a + b);
        }
        out[2 * n] = I * (-self.atom * h / v.h_prime + field * v.ratio);
        out[2 * n + 1] = I * (self.atom * ht / v.htilde_prime - field * v.ratio_tilde);
        if dissipative {
            out[2 * n] += self.relaxation(h, ht, norm) / v.h_prime;
            out[2 * n + 1] += self.relaxation(ht, h, norm) / v.htilde_prime;
        }
        Ok(())
    }

    /// Dissipative drift numerator for the `h` row; swap arguments for the `h~` row.
    fn relaxation(&self, h: Complex64, other: Complex64, norm: Complex64) -> Complex64 {
        let hh = h * other;
        (-self.rate_dephasing * h * (1.0 - hh) - 0.5 * self.rate_21 * h * (1.0 + 3.0 * hh)
            + 0.5 * self.rate_12 * h * (3.0 + hh))
            / norm
    }

    /// `d = (2 r_p h h~ + r21 h^2 h~^2 + r12) / (h' h~')`.
    fn dissipative_entry(&self, v: &BasisValues) -> Complex64 {
        let hh = v.h * v.htilde;
        (2.0 * self.rate_dephasing * hh + self.rate_21 * hh * hh + self.rate_12)
            / (v.h_prime * v.htilde_prime)
    }

    fn diffusion(&self, family: &BasisFamily, x: &[Complex64], dissipative: bool) -> Result<Array2<Complex64>> {
        self.check_len(x)?;
        let n = self.modes();
        let v = self.basis(family, x)?;
        let dim = 2 * n + 2;
        let (zi, wi) = (2 * n, 2 * n + 1);
        let mut d = Array2::zeros((dim, dim));
        for k in 0..n {
            let dn = I * self.gs[k] * v.ratio;
            let dtn = -I * self.gs[k] * v.ratio_tilde;
            d[[2 * k, zi]] = dn;
            d[[zi, 2 * k]] = dn;
            d[[2 * k + 1, wi]] = dtn;
            d[[wi, 2 * k + 1]] = dtn;
        }
        if dissipative {
            let e = self.dissipative_entry(&v);
            d[[zi, wi]] = e;
            d[[wi, zi]] = e;
        }
        Ok(d)
    }

    fn noise_dim(&self, dissipative: bool) -> usize {
        4 * self.modes() + if dissipative { 2 } else { 0 }
    }

    fn noise(&self, family: &BasisFamily, x: &[Complex64], out: &mut Array2<Complex64>, dissipative: bool) -> Result<()> {
        self.check_len(x)?;
        let n = self.modes();
        let v = self.basis(family, x)?;
        let (zi, wi) = (2 * n, 2 * n + 1);
        out.fill(Complex64::new(0.0, 0.0));
        let si = sqrt_i();
        for k in 0..n {
            let col = 4 * k;
            let p = si * (0.5 * self.gs[k] * v.ratio).sqrt();
            let q = si * (0.5 * self.gs[k] * v.ratio_tilde).sqrt();
            out[[2 * k, col]] = I * p;
            out[[2 * k, col + 1]] = -p;
            out[[zi, col]] = -I * p;
            out[[zi, col + 1]] = -p;
            out[[2 * k + 1, col + 2]] = -I * q;
            out[[2 * k + 1, col + 3]] = -q;
            out[[wi, col + 2]] = -I * q;
            out[[wi, col + 3]] = q;
        }
        if dissipative {
            let col = 4 * n;
            let t = (0.5 * self.dissipative_entry(&v)).sqrt();
            out[[zi, col]] = -I * t;
            out[[zi, col + 1]] = t;
            out[[wi, col]] = I * t;
            out[[wi, col + 1]] = t;
        }
        Ok(())
    }
}

fn zero_vec(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

/// Drift vector without dissipation.
pub fn drift_jc(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Vec<Complex64>> {
    let x = state.flatten();
    let mut out = zero_vec(x.len());
    Coefficients::new(params).drift(family, &x, &mut out, false)?;
    Ok(out)
}

/// Diffusion matrix without dissipation.
pub fn diffusion_jc(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Array2<Complex64>> {
    Coefficients::new(params).diffusion(family, &state.flatten(), false)
}

/// Noise matrix with `4N` columns, `B B^T = D`.
pub fn noise_jc(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Array2<Complex64>> {
    let coeffs = Coefficients::new(params);
    let x = state.flatten();
    let mut out = Array2::zeros((x.len(), coeffs.noise_dim(false)));
    coeffs.noise(family, &x, &mut out, false)?;
    Ok(out)
}

/// Drift vector including the Lindblad relaxation terms.
pub fn drift_jc_plus(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Vec<Complex64>> {
    let x = state.flatten();
    let mut out = zero_vec(x.len());
    Coefficients::new(params).drift(family, &x, &mut out, true)?;
    Ok(out)
}

pub fn diffusion_jc_plus(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Array2<Complex64>> {
    Coefficients::new(params).diffusion(family, &state.flatten(), true)
}

/// Noise matrix with `4N + 2` columns; the last two carry the relaxation noise.
pub fn noise_jc_plus(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Result<Array2<Complex64>> {
    let coeffs = Coefficients::new(params);
    let x = state.flatten();
    let mut out = Array2::zeros((x.len(), coeffs.noise_dim(true)));
    coeffs.noise(family, &x, &mut out, true)?;
    Ok(out)
}

/// The Jaynes-Cummings SDE on flattened phase-space vectors.
///
/// Uses the dissipative drift and noise only when some rate is nonzero, so a
/// dissipation-free model carries exactly `4N` noise columns.
#[derive(Debug, Clone)]
pub struct JcSystem {
    coeffs: Coefficients,
    family: BasisFamily,
    dissipative: bool,
}

impl JcSystem {
    pub fn new(params: &ModelParams, family: BasisFamily) -> Result<Self> {
        params.validate()?;
        Ok(JcSystem {
            coeffs: Coefficients::new(params),
            family,
            dissipative: params.is_dissipative(),
        })
    }

    /// Forces the dissipative layout even when every rate is zero.
    pub fn with_dissipative_layout(mut self) -> Self {
        self.dissipative = true;
        self
    }

    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.modes()
    }

    pub fn diffusion(&self, x: &[Complex64]) -> Result<Array2<Complex64>> {
        self.coeffs.diffusion(&self.family, x, self.dissipative)
    }
}

impl SdeSystem for JcSystem {
    fn state_dim(&self) -> usize {
        2 * self.coeffs.modes() + 2
    }

    fn noise_dim(&self) -> usize {
        self.coeffs.noise_dim(self.dissipative)
    }

    fn drift_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.coeffs.drift(&self.family, x, out, self.dissipative)
    }

    fn noise_into(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        self.coeffs.noise(&self.family, x, out, self.dissipative)
    }

    fn constant_noise(&self) -> bool {
        !self.dissipative && matches!(self.family, BasisFamily::AdditiveNoise { .. })
    }
}
