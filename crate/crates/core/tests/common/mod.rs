//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the formulas under test: basis functions, diffusion entries and
//! the change of variables are written out again from their closed forms, and derivatives
//! come from finite differences.

#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use pstoch::model::{drift_jc_plus, noise_jc_plus};
use pstoch::{BasisFamily, ModelParams, PhaseState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

pub fn benchmark_params() -> ModelParams {
    ModelParams::single_mode(1000.0, 1100.0, 200.0)
}

pub fn additive(delta: f64) -> BasisFamily {
    BasisFamily::AdditiveNoise {
        delta: c(delta, 0.0),
        kappa: c(0.0, 0.0),
    }
}

/// `h(z)`: `z`, or `-tanh(x / 2)` with `x = 2 z / delta + kappa`.
pub fn h_of(family: &BasisFamily, z: Complex64) -> Complex64 {
    match *family {
        BasisFamily::CoherentSpin => z,
        BasisFamily::AdditiveNoise { delta, kappa } => -((2.0 * z / delta + kappa) / 2.0).tanh(),
    }
}

/// `h~(w)`, the same family with conjugated parameters.
pub fn htilde_of(family: &BasisFamily, w: Complex64) -> Complex64 {
    match *family {
        BasisFamily::CoherentSpin => w,
        BasisFamily::AdditiveNoise { delta, kappa } => {
            -((2.0 * w / delta.conj() + kappa.conj()) / 2.0).tanh()
        }
    }
}

/// `h'(z)`: `1`, or `-sech^2(x / 2) / delta`.
pub fn h_prime_of(family: &BasisFamily, z: Complex64) -> Complex64 {
    match *family {
        BasisFamily::CoherentSpin => c(1.0, 0.0),
        BasisFamily::AdditiveNoise { delta, kappa } => {
            let ch = ((2.0 * z / delta + kappa) / 2.0).cosh();
            -1.0 / (ch * ch * delta)
        }
    }
}

pub fn htilde_prime_of(family: &BasisFamily, w: Complex64) -> Complex64 {
    match *family {
        BasisFamily::CoherentSpin => c(1.0, 0.0),
        BasisFamily::AdditiveNoise { delta, kappa } => {
            let ch = ((2.0 * w / delta.conj() + kappa.conj()) / 2.0).cosh();
            -1.0 / (ch * ch * delta.conj())
        }
    }
}

/// `g_n sin(n pi x0 / l)`.
pub fn effective_coupling(params: &ModelParams, mode: usize) -> f64 {
    let k = (mode + 1) as f64 * PI / params.cavity_length;
    params.couplings[mode] * (k * params.atom_position).sin()
}

/// Diffusion matrix assembled entry by entry from the Fokker-Planck coefficients.
pub fn diffusion_oracle(params: &ModelParams, family: &BasisFamily, state: &PhaseState, dissipative: bool) -> Array2<Complex64> {
    let n = state.alpha.len();
    let (zi, wi) = (2 * n, 2 * n + 1);
    let h = h_of(family, state.z);
    let ht = htilde_of(family, state.w);
    let hp = h_prime_of(family, state.z);
    let htp = htilde_prime_of(family, state.w);
    let mut d = Array2::zeros((2 * n + 2, 2 * n + 2));
    for k in 0..n {
        let gs = effective_coupling(params, k);
        d[[2 * k, zi]] = I * gs * (h * h - 1.0) / hp;
        d[[zi, 2 * k]] = d[[2 * k, zi]];
        d[[2 * k + 1, wi]] = -I * gs * (ht * ht - 1.0) / htp;
        d[[wi, 2 * k + 1]] = d[[2 * k + 1, wi]];
    }
    if dissipative {
        let x = h * ht;
        let e = (2.0 * params.rate_dephasing * x + params.rate_21 * x * x + params.rate_12) / (hp * htp);
        d[[zi, wi]] = e;
        d[[wi, zi]] = e;
    }
    d
}

/// `(eps_1, eta_1, ..., rho21, rho12, nu)` of a flattened phase-space vector.
pub fn physical_map(family: &BasisFamily, x: &[Complex64]) -> Vec<Complex64> {
    let n = (x.len() - 2) / 2;
    let mut out = Vec::with_capacity(2 * n + 3);
    for k in 0..n {
        let (a, b) = (x[2 * k], x[2 * k + 1]);
        out.push(b + a);
        out.push(I * (b - a));
    }
    let h = h_of(family, x[2 * n]);
    let ht = htilde_of(family, x[2 * n + 1]);
    let norm = 1.0 + h * ht;
    out.push(h / norm);
    out.push(ht / norm);
    out.push((h * ht - 1.0) / norm);
    out
}

fn shifted(x: &[Complex64], moves: &[(usize, f64)]) -> Vec<Complex64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

fn richardson<F: Fn(f64) -> Vec<Complex64>>(estimate: F, step: f64) -> Vec<Complex64> {
    let coarse = estimate(step);
    let fine = estimate(step / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Jacobian of a holomorphic map by Richardson-extrapolated central differences.
pub fn jacobian_fd<F: Fn(&[Complex64]) -> Vec<Complex64>>(f: F, x: &[Complex64], step: f64) -> Array2<Complex64> {
    let rows = f(x).len();
    let mut jac = Array2::zeros((rows, x.len()));
    for j in 0..x.len() {
        let col = richardson(
            |e| {
                let up = f(&shifted(x, &[(j, e)]));
                let down = f(&shifted(x, &[(j, -e)]));
                up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * e)).collect()
            },
            step,
        );
        for (i, v) in col.into_iter().enumerate() {
            jac[[i, j]] = v;
        }
    }
    jac
}

/// Second derivatives `d^2 f_k / dx_p dx_q` for every output `k`.
pub fn hessians_fd<F: Fn(&[Complex64]) -> Vec<Complex64>>(f: F, x: &[Complex64], step: f64) -> Vec<Array2<Complex64>> {
    let rows = f(x).len();
    let n = x.len();
    let mut out = vec![Array2::zeros((n, n)); rows];
    for p in 0..n {
        for q in p..n {
            let col = richardson(
                |e| {
                    if p == q {
                        let (up, mid, down) = (f(&shifted(x, &[(p, e)])), f(x), f(&shifted(x, &[(p, -e)])));
                        (0..rows).map(|k| (up[k] - 2.0 * mid[k] + down[k]) / (e * e)).collect()
                    } else {
                        let pp = f(&shifted(x, &[(p, e), (q, e)]));
                        let pm = f(&shifted(x, &[(p, e), (q, -e)]));
                        let mp = f(&shifted(x, &[(p, -e), (q, e)]));
                        let mm = f(&shifted(x, &[(p, -e), (q, -e)]));
                        (0..rows).map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * e * e)).collect()
                    }
                },
                step,
            );
            for (k, v) in col.into_iter().enumerate() {
                out[k][[p, q]] = v;
                out[k][[q, p]] = v;
            }
        }
    }
    out
}

/// Random model with `modes` modes at generic coupling, position and rates.
pub fn random_params(rng: &mut ChaCha8Rng, modes: usize, dissipative: bool) -> ModelParams {
    let mut p = ModelParams::single_mode(rng.random_range(500.0..1500.0), 1.0, 1.0);
    let mut w = rng.random_range(500.0..1000.0);
    p.mode_frequencies = (0..modes)
        .map(|_| {
            w += rng.random_range(50.0..400.0);
            w
        })
        .collect();
    p.couplings = (0..modes).map(|_| rng.random_range(-300.0..300.0)).collect();
    p.atom_position = rng.random_range(0.05..0.95);
    if dissipative {
        p = p.with_rates(
            rng.random_range(0.0..80.0),
            rng.random_range(0.0..80.0),
            rng.random_range(0.0..80.0),
        );
    }
    p
}

/// Random state away from the projector pole and from vanishing `h'`.
pub fn random_state(rng: &mut ChaCha8Rng, modes: usize, family: &BasisFamily) -> PhaseState {
    loop {
        let s = PhaseState {
            alpha: (0..modes).map(|_| random_complex(rng, 2.0)).collect(),
            beta: (0..modes).map(|_| random_complex(rng, 2.0)).collect(),
            z: random_complex(rng, 1.2),
            w: random_complex(rng, 1.2),
        };
        let norm = 1.0 + h_of(family, s.z) * htilde_of(family, s.w);
        if norm.norm() > 0.25 && h_prime_of(family, s.z).norm() > 1e-2 && htilde_prime_of(family, s.w).norm() > 1e-2 {
            return s;
        }
    }
}

pub fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn relative_error(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(f64::MIN_POSITIVE)
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Classical RK4 for `x' = f(x)`, returning the state after every step.
pub fn rk4<F>(f: F, x0: &[Complex64], dt: f64, steps: usize) -> Vec<Vec<Complex64>>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let axpy = |x: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
        x.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, &k1, dt / 2.0));
        let k3 = f(&axpy(&x, &k2, dt / 2.0));
        let k4 = f(&axpy(&x, &k3, dt));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

/// `J A + (1/2) sum_pq (B B^T)_pq d^2 phys / dx_p dx_q` with all derivatives by finite differences.
pub fn ito_drift_fd(params: &ModelParams, family: &BasisFamily, state: &PhaseState) -> Vec<Complex64> {
    let x = state.flatten();
    let map = |y: &[Complex64]| physical_map(family, y);
    let jac = jacobian_fd(map, &x, 1e-3);
    let hess = hessians_fd(map, &x, 1e-3);
    let a = ndarray::Array1::from(drift_jc_plus(params, family, state).unwrap());
    let b = noise_jc_plus(params, family, state).unwrap();
    let d = b.dot(&b.t());
    let mut out = jac.dot(&a).to_vec();
    for (k, h) in hess.iter().enumerate() {
        out[k] += 0.5 * (&d * h).sum();
    }
    out
}
