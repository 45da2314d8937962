//! Deterministic Maxwell-Bloch equations in cavity-mode form.
//!
//! The state lives on the hermitian slice: real mode quadratures, `rho12 = conj(rho21)`
//! and a real inversion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::changed_vars::PhysState;
use crate::error::{Error, Result};
use crate::init::AtomicDensity;
use crate::model::ModelParams;
use crate::observables::ObservableSet;
use crate::sde::TimeGrid;

/// Slack allowed on the Bloch-sphere bound `|rho21|^2 <= (1 - nu^2) / 4`.
pub const BLOCH_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbState {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho21: Complex64,
    pub nu: f64,
}

impl MbState {
    /// Coherent field amplitudes and an atomic density matrix.
    pub fn from_initial(alpha: &[Complex64], atom: &AtomicDensity) -> Self {
        MbState {
            eps: alpha.iter().map(|a| 2.0 * a.re).collect(),
            eta: alpha.iter().map(|a| 2.0 * a.im).collect(),
            rho21: atom.rho21,
            nu: atom.inversion(),
        }
    }

    pub fn to_phys(&self) -> PhysState {
        let c = |v: f64| Complex64::new(v, 0.0);
        PhysState {
            eps: self.eps.iter().map(|&v| c(v)).collect(),
            eta: self.eta.iter().map(|&v| c(v)).collect(),
            rho21: self.rho21,
            rho12: self.rho21.conj(),
            nu: c(self.nu),
        }
    }

    pub fn observables(&self) -> ObservableSet {
        self.to_phys().observables()
    }

    /// True when the state lies inside the Bloch ball up to [`BLOCH_SLACK`].
    pub fn within_bloch_bound(&self) -> bool {
        self.rho21.norm_sqr() <= (1.0 - self.nu * self.nu) / 4.0 + BLOCH_SLACK
    }

    fn axpy(&self, k: &MbState, h: f64) -> MbState {
        MbState {
            eps: self.eps.iter().zip(&k.eps).map(|(x, d)| x + h * d).collect(),
            eta: self.eta.iter().zip(&k.eta).map(|(x, d)| x + h * d).collect(),
            rho21: self.rho21 + h * k.rho21,
            nu: self.nu + h * k.nu,
        }
    }
}

/// Time derivative of the Maxwell-Bloch state.
pub fn mb_rhs(params: &ModelParams, state: &MbState) -> MbState {
    let gs = params.effective_couplings();
    let drive: f64 = gs.iter().zip(&state.eps).map(|(g, e)| g * e).sum();
    let i = Complex64::new(0.0, 1.0);
    MbState {
        eps: params
            .mode_frequencies
            .iter()
            .zip(&state.eta)
            .map(|(w, h)| w * h)
            .collect(),
        eta: params
            .mode_frequencies
            .iter()
            .zip(state.eps.iter().zip(&gs))
            .map(|(w, (e, g))| -w * e - 4.0 * g * state.rho21.re)
            .collect(),
        rho21: -i * params.atom_frequency * state.rho21 + i * drive * state.nu
            - params.gamma2() * state.rho21,
        nu: -4.0 * drive * state.rho21.im - params.gamma1() * (state.nu - params.nu0()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<MbState>,
    /// Grid points at which the Bloch bound was exceeded.
    pub bloch_violations: usize,
}

impl MbTrajectory {
    pub fn observables(&self) -> Vec<ObservableSet> {
        self.states.iter().map(MbState::observables).collect()
    }
}

/// Classical RK4 with `substeps` steps per grid interval.
pub fn evolve_mb(params: &ModelParams, state0: &MbState, grid: &TimeGrid, substeps: usize) -> Result<MbTrajectory> {
    params.validate()?;
    grid.validate()?;
    if state0.eps.len() != params.mode_count() || state0.eta.len() != params.mode_count() {
        return Err(Error::Validation(format!(
            "state has {} modes, model has {}",
            state0.eps.len(),
            params.mode_count()
        )));
    }
    let substeps = substeps.max(1);
    let dt = grid.dt() / substeps as f64;
    let mut x = state0.clone();
    let mut states = Vec::with_capacity(grid.points());
    let mut violations = usize::from(!x.within_bloch_bound());
    states.push(x.clone());
    for _ in 1..grid.points() {
        for _ in 0..substeps {
            let k1 = mb_rhs(params, &x);
            let k2 = mb_rhs(params, &x.axpy(&k1, 0.5 * dt));
            let k3 = mb_rhs(params, &x.axpy(&k2, 0.5 * dt));
            let k4 = mb_rhs(params, &x.axpy(&k3, dt));
            x = x
                .axpy(&k1, dt / 6.0)
                .axpy(&k2, dt / 3.0)
                .axpy(&k3, dt / 3.0)
                .axpy(&k4, dt / 6.0);
        }
        if !x.within_bloch_bound() {
            violations += 1;
        }
        states.push(x.clone());
    }
    if violations > 0 {
        log::warn!("Bloch bound exceeded at {violations} grid points");
    }
    Ok(MbTrajectory {
        grid: *grid,
        states,
        bloch_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changed_vars::drift_bar;

    fn state() -> MbState {
        MbState {
            eps: vec![1.3],
            eta: vec![-0.4],
            rho21: Complex64::new(0.2, -0.15),
            nu: -0.3,
        }
    }

    #[test]
    fn rhs_equals_physical_drift_on_hermitian_slice() {
        let params = ModelParams::single_mode(1000.0, 1100.0, 200.0).with_rates(2.0, 3.0, 0.7);
        let d = mb_rhs(&params, &state());
        let bar = drift_bar(&params, &state().to_phys()).unwrap();
        let flat = d.to_phys().flatten();
        for (a, b) in flat.iter().zip(&bar) {
            assert!((a - b).norm() <= 1e-14 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn free_oscillators_keep_amplitude() {
        let mut params = ModelParams::single_mode(1000.0, 1100.0, 0.0);
        params.couplings = vec![0.0];
        let grid = TimeGrid::new(0.0, 1e-2, 2000).unwrap();
        let traj = evolve_mb(&params, &state(), &grid, 1).unwrap();
        let e0 = 1.3f64.powi(2) + 0.4f64.powi(2);
        for s in &traj.states {
            assert!((s.eps[0].powi(2) + s.eta[0].powi(2) - e0).abs() < 1e-10);
            assert!((s.rho21.norm() - state().rho21.norm()).abs() < 1e-12);
        }
        assert_eq!(traj.bloch_violations, 0);
    }

    #[test]
    fn relaxation_closed_form() {
        let mut params = ModelParams::single_mode(1000.0, 1100.0, 0.0).with_rates(20.0, 60.0, 15.0);
        params.couplings = vec![0.0];
        let grid = TimeGrid::new(0.0, 0.05, 1000).unwrap();
        let traj = evolve_mb(&params, &state(), &grid, 4).unwrap();
        let (g1, g2, nu0) = (params.gamma1(), params.gamma2(), params.nu0());
        for (t, s) in grid.times().iter().zip(&traj.states) {
            let nu = nu0 + (-0.3 - nu0) * (-g1 * t).exp();
            assert!((s.nu - nu).abs() < 1e-8);
            let r = state().rho21.norm() * (-g2 * t).exp();
            assert!((s.rho21.norm() - r).abs() < 1e-8);
        }
    }
}
