//! Nonorthogonal two-level basis states.
//!
//! A family is fixed by the analytic function `h = g / f` of the unnormalized
//! state `f(z)|down> + g(z)|up>`. The companion `h~(w) = conj(h(conj(w)))` is
//! the same function with conjugated parameters. Everything downstream (the
//! fermionic projector, drift, diffusion, observables) depends on the family
//! only through `h`, `h~` and their derivatives.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible magnitude for denominators that vanish at phase-space poles.
pub const POLE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum BasisFamily {
    /// Coherent spin states, `h(z) = z`.
    CoherentSpin,
    /// `h(z) = (1 - e^{2z/delta + kappa}) / (1 + e^{2z/delta + kappa})`, which solves
    /// `delta h' = h^2 - 1` and makes the Jaynes-Cummings noise matrix constant.
    AdditiveNoise { delta: Complex64, kappa: Complex64 },
}

/// `h`, `h~` and the derivative combinations the drift and noise need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub h: Complex64,
    pub h_prime: Complex64,
    pub h_second: Complex64,
    pub htilde: Complex64,
    pub htilde_prime: Complex64,
    pub htilde_second: Complex64,
    /// `(h^2 - 1) / h'`, exactly `delta` for the additive-noise family.
    pub ratio: Complex64,
    /// `(h~^2 - 1) / h~'`, exactly `conj(delta)` for the additive-noise family.
    pub ratio_tilde: Complex64,
}

impl BasisValues {
    /// `1 + h h~`, the normalization of the fermionic projector.
    pub fn norm(&self) -> Complex64 {
        1.0 + self.h * self.htilde
    }

    /// Fails when `h'`, `h~'` or `1 + h h~` is within the pole floor of zero.
    pub fn check_regular(&self) -> Result<()> {
        check_floor("h'", self.h_prime)?;
        check_floor("h~'", self.htilde_prime)?;
        check_floor("1 + h h~", self.norm())
    }
}

fn check_floor(quantity: &'static str, value: Complex64) -> Result<()> {
    let magnitude = value.norm();
    // NaN must also trip the floor.
    if magnitude >= POLE_FLOOR {
        Ok(())
    } else {
        Err(Error::Singularity {
            quantity,
            magnitude,
        })
    }
}

impl BasisFamily {
    pub fn additive_noise(delta: Complex64, kappa: Complex64) -> Result<Self> {
        if delta.norm() == 0.0 || !delta.is_finite() || !kappa.is_finite() {
            return Err(Error::InvalidParams(format!(
                "additive-noise family needs finite delta != 0 (got delta = {delta}, kappa = {kappa})"
            )));
        }
        Ok(BasisFamily::AdditiveNoise { delta, kappa })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisFamily::CoherentSpin => "coherent-spin",
            BasisFamily::AdditiveNoise { .. } => "additive-noise",
        }
    }

    /// Evaluates `h(z)` and `h~(w)` with their first two derivatives.
    ///
    /// Only the additive-noise family has poles here; `eval` reports them through
    /// [`Error::Singularity`]. Regularity of `h'` and `1 + h h~` is checked separately
    /// by [`BasisValues::check_regular`].
    pub fn eval(&self, z: Complex64, w: Complex64) -> Result<BasisValues> {
        match *self {
            BasisFamily::CoherentSpin => {
                let one = Complex64::new(1.0, 0.0);
                let zero = Complex64::new(0.0, 0.0);
                Ok(BasisValues {
                    h: z,
                    h_prime: one,
                    h_second: zero,
                    htilde: w,
                    htilde_prime: one,
                    htilde_second: zero,
                    ratio: z * z - 1.0,
                    ratio_tilde: w * w - 1.0,
                })
            }
            BasisFamily::AdditiveNoise { delta, kappa } => {
                let h = logistic_h(z, delta, kappa)?;
                let htilde = logistic_h(w, delta.conj(), kappa.conj())?;
                let h_prime = (h * h - 1.0) / delta;
                let htilde_prime = (htilde * htilde - 1.0) / delta.conj();
                Ok(BasisValues {
                    h,
                    h_prime,
                    h_second: 2.0 * h * h_prime / delta,
                    htilde,
                    htilde_prime,
                    htilde_second: 2.0 * htilde * htilde_prime / delta.conj(),
                    ratio: delta,
                    ratio_tilde: delta.conj(),
                })
            }
        }
    }

    /// Solves `h(z) = target`, principal logarithm branch for the additive-noise family.
    pub fn invert_h(&self, target: Complex64) -> Result<Complex64> {
        match *self {
            BasisFamily::CoherentSpin => Ok(target),
            BasisFamily::AdditiveNoise { delta, kappa } => invert_logistic(target, delta, kappa),
        }
    }

    /// Solves `h~(w) = target` through `w = conj(z)` with `h(z) = conj(target)`.
    pub fn invert_htilde(&self, target: Complex64) -> Result<Complex64> {
        self.invert_h(target.conj()).map(|z| z.conj())
    }
}

/// `(1 - e^x) / (1 + e^x)` with `x = 2z/delta + kappa`, evaluated without overflow.
fn logistic_h(z: Complex64, delta: Complex64, kappa: Complex64) -> Result<Complex64> {
    let x = 2.0 * z / delta + kappa;
    if x.re <= 0.0 {
        let e = x.exp();
        let den = 1.0 + e;
        check_floor("1 + exp(2z/delta + kappa)", den)?;
        Ok((1.0 - e) / den)
    } else {
        // |e^x| > 1: divide through by e^x. |1 + e^x| >= |1 + e^-x| on this half-plane.
        let e = (-x).exp();
        let den = e + 1.0;
        check_floor("1 + exp(2z/delta + kappa)", den)?;
        Ok((e - 1.0) / den)
    }
}

fn invert_logistic(target: Complex64, delta: Complex64, kappa: Complex64) -> Result<Complex64> {
    let plus = 1.0 + target;
    let minus = 1.0 - target;
    if plus.norm() < POLE_FLOOR || minus.norm() < POLE_FLOOR || !target.is_finite() {
        return Err(Error::UnreachableTarget { target });
    }
    Ok(0.5 * delta * ((minus / plus).ln() - kappa))
}
