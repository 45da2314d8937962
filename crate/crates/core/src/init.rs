//! Discrete phase-space initialization of the two-level atom.
//!
//! A valid 2x2 density matrix with `0 < rho11 < 1` is written exactly as a
//! three-point mixture of fermionic projectors `Lambda_A(z_i, w_i)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};

/// Entries in the `(down, up)` basis: `rho11 = <down|rho|down>`, `rho21 = <up|rho|down>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicDensity {
    pub rho11: Complex64,
    pub rho12: Complex64,
    pub rho21: Complex64,
    pub rho22: Complex64,
}

impl AtomicDensity {
    /// Builds the hermitian, unit-trace matrix with the given ground population and coherence.
    /// Positivity is not checked here; [`init_points`] reports it.
    pub fn new(rho11: f64, rho12: Complex64) -> Result<Self> {
        if !rho11.is_finite() || !rho12.is_finite() {
            return Err(Error::InvalidDensity(format!(
                "non-finite entries rho11 = {rho11}, rho12 = {rho12}"
            )));
        }
        Ok(AtomicDensity {
            rho11: Complex64::new(rho11, 0.0),
            rho12,
            rho21: rho12.conj(),
            rho22: Complex64::new(1.0 - rho11, 0.0),
        })
    }

    /// Thermal state of a level splitting `hbar * Omega` at inverse temperature `beta`,
    /// parameterized by `x = beta * hbar * Omega`.
    pub fn thermal(x: f64) -> Self {
        let rho11 = 1.0 / (1.0 + (-x).exp());
        AtomicDensity::new(rho11, Complex64::new(0.0, 0.0)).expect("finite thermal state")
    }

    pub fn as_matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.rho11, self.rho12], [self.rho21, self.rho22]]
    }

    /// Population inversion `rho22 - rho11`.
    pub fn inversion(&self) -> f64 {
        (self.rho22 - self.rho11).re
    }
}

/// The fermionic projector `Lambda_A(z, w)` as a matrix in the `(down, up)` basis.
pub fn projector(family: &BasisFamily, z: Complex64, w: Complex64) -> Result<[[Complex64; 2]; 2]> {
    let v = family.eval(z, w)?;
    let norm = v.norm();
    if norm.norm() < crate::basis::POLE_FLOOR {
        return Err(Error::Singularity {
            quantity: "1 + h h~",
            magnitude: norm.norm(),
        });
    }
    Ok([
        [1.0 / norm, v.htilde / norm],
        [v.h / norm, v.h * v.htilde / norm],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPoint {
    pub weight: f64,
    pub z: Complex64,
    pub w: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub points: [InitPoint; 3],
}

impl InitDistribution {
    /// Picks a point by inverse-CDF lookup of a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> &InitPoint {
        let mut acc = 0.0;
        for point in &self.points {
            acc += point.weight;
            if u < acc {
                return point;
            }
        }
        // u sits in the rounding gap just below 1: fall back to the last weighted point.
        self.points
            .iter()
            .rev()
            .find(|p| p.weight > 0.0)
            .unwrap_or(&self.points[2])
    }

    /// `sum_i q_i Lambda_A(z_i, w_i)`.
    pub fn reconstruct(&self, family: &BasisFamily) -> Result<[[Complex64; 2]; 2]> {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for point in &self.points {
            let lambda = projector(family, point.z, point.w)?;
            for (row, lrow) in out.iter_mut().zip(lambda.iter()) {
                for (entry, l) in row.iter_mut().zip(lrow.iter()) {
                    *entry += point.weight * l;
                }
            }
        }
        Ok(out)
    }
}

/// Three-point distribution reproducing `rho` under the projector of `family`.
///
/// With `p = rho11`, `rho12 = r e^{i phi}` and `K = sqrt(1/p - 1)` the weights are
/// `(q, (1-q)/2, (1-q)/2)` with `q = r (1 + K^2) / K`, and the points satisfy
/// `h(z1) = K e^{-i phi}`, `h~(w1) = K e^{i phi}`, `h(z2) = h~(w2) = K`,
/// `h(z3) = h~(w3) = -K`.
pub fn init_points(rho: &AtomicDensity, family: &BasisFamily) -> Result<InitDistribution> {
    let p = rho.rho11.re;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::BoundaryPopulation { rho11: p });
    }
    let r = rho.rho12.norm();
    let phi = if r == 0.0 { 0.0 } else { rho.rho12.arg() };
    let k = (1.0 / p - 1.0).sqrt();
    let mut q = r * (1.0 + k * k) / k;
    if q > 1.0 + 1e-12 {
        return Err(Error::PositivityViolation { q });
    }
    q = q.min(1.0);

    let phase = Complex64::from_polar(k, phi);
    let kc = Complex64::new(k, 0.0);
    let rest = 0.5 * (1.0 - q);
    Ok(InitDistribution {
        points: [
            InitPoint {
                weight: q,
                z: family.invert_h(phase.conj())?,
                w: family.invert_htilde(phase)?,
            },
            InitPoint {
                weight: rest,
                z: family.invert_h(kc)?,
                w: family.invert_htilde(kc)?,
            },
            InitPoint {
                weight: rest,
                z: family.invert_h(-kc)?,
                w: family.invert_htilde(-kc)?,
            },
        ],
    })
}
