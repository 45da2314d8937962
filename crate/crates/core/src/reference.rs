//! Truncated-Fock master-equation integrator used as ground truth.
//!
//! Basis index of `|n_1, ..., n_N> (x) |s>` is `s + 2 sum_k n_k (n_max + 1)^k`, with the
//! atomic state `s = 0` for `|down>` and `s = 1` for `|up>`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::AtomicDensity;
use crate::model::ModelParams;
use crate::observables::ObservableSet;
use crate::sde::TimeGrid;

pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Largest tolerated `|tr rho - 1|` before the evolution is aborted.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedSpace {
    pub n_max: usize,
    pub modes: usize,
}

impl TruncatedSpace {
    pub fn new(n_max: usize, modes: usize, cap: usize) -> Result<Self> {
        if n_max < 1 || modes < 1 {
            return Err(Error::Validation(
                "the Fock space needs n_max >= 1 and at least one mode".into(),
            ));
        }
        let space = TruncatedSpace { n_max, modes };
        let dim = (n_max + 1)
            .checked_pow(modes as u32)
            .and_then(|d| d.checked_mul(2))
            .unwrap_or(usize::MAX);
        if dim > cap {
            return Err(Error::CapExceeded { dim, cap });
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1).pow(self.modes as u32)
    }

    /// Index offset between `n_k` and `n_k + 1` with everything else fixed.
    pub fn stride(&self, mode: usize) -> usize {
        2 * (self.n_max + 1).pow(mode as u32)
    }

    pub fn index(&self, photons: &[usize], atom: usize) -> usize {
        atom + photons
            .iter()
            .enumerate()
            .map(|(k, n)| n * self.stride(k))
            .sum::<usize>()
    }

    pub fn photons(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % (self.n_max + 1)
    }

    pub fn atom(&self, index: usize) -> usize {
        index % 2
    }
}

/// Row-compressed square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[[i, j]] += v;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .iter()
            .filter(|(c, _)| *c == j)
            .map(|(_, v)| *v)
            .sum()
    }
}

/// `hbar Omega S_z + sum hbar omega_n a^dag a + sum hbar g_n s_n (a^dag + a)(S_+ + S_-)`
/// without the rotating-wave approximation.
pub fn build_hamiltonian(params: &ModelParams, space: &TruncatedSpace) -> Result<SparseMatrix> {
    params.validate()?;
    if params.mode_count() != space.modes {
        return Err(Error::Validation(format!(
            "model has {} modes but the Fock space has {}",
            params.mode_count(),
            space.modes
        )));
    }
    let dim = space.dim();
    let gs = params.effective_couplings();
    let hbar = params.hbar;
    let mut rows = vec![Vec::new(); dim];
    for (i, row) in rows.iter_mut().enumerate() {
        let atom = space.atom(i);
        let sz = if atom == 1 { 0.5 } else { -0.5 };
        let mut diag = hbar * params.atom_frequency * sz;
        for k in 0..space.modes {
            diag += hbar * params.mode_frequencies[k] * space.photons(i, k) as f64;
        }
        row.push((i, Complex64::new(diag, 0.0)));
        // (S_+ + S_-) flips the atom; (a^dag + a) moves one photon up or down.
        let flipped = i ^ 1;
        for k in 0..space.modes {
            let n = space.photons(i, k);
            let stride = space.stride(k);
            if n > 0 {
                row.push((flipped - stride, Complex64::new(hbar * gs[k] * (n as f64).sqrt(), 0.0)));
            }
            if n < space.n_max {
                row.push((flipped + stride, Complex64::new(hbar * gs[k] * ((n + 1) as f64).sqrt(), 0.0)));
            }
        }
    }
    Ok(SparseMatrix { dim, rows })
}

/// Product state of truncated, renormalized coherent states and the atomic density.
pub fn initial_density(space: &TruncatedSpace, alpha: &[Complex64], atom: &AtomicDensity) -> Result<Array2<Complex64>> {
    if alpha.len() != space.modes {
        return Err(Error::Validation(format!(
            "{} coherent amplitudes given for {} modes",
            alpha.len(),
            space.modes
        )));
    }
    let per_mode: Vec<Vec<Complex64>> = alpha
        .iter()
        .map(|&a| {
            let mut amp = Vec::with_capacity(space.n_max + 1);
            let mut c = Complex64::new(1.0, 0.0);
            for n in 0..=space.n_max {
                if n > 0 {
                    c = c * a / (n as f64).sqrt();
                }
                amp.push(c);
            }
            let norm = amp.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            amp.iter().map(|v| v / norm).collect()
        })
        .collect();
    let dim = space.dim();
    let field: Vec<Complex64> = (0..dim / 2)
        .map(|p| {
            (0..space.modes)
                .map(|k| per_mode[k][space.photons(2 * p, k)])
                .product()
        })
        .collect();
    let m = atom.as_matrix();
    let mut rho = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            rho[[i, j]] = field[i / 2] * field[j / 2].conj() * m[i % 2][j % 2];
        }
    }
    Ok(rho)
}

/// Lindblad right-hand side of the master equation, written into `out`.
pub fn master_rhs(params: &ModelParams, h: &SparseMatrix, rho: &Array2<Complex64>, out: &mut Array2<Complex64>) {
    let dim = h.dim;
    let r = rho.as_slice().expect("standard layout");
    let o = out.as_slice_mut().expect("standard layout");
    o.fill(ZERO);
    let scale = -I / params.hbar;
    // -(i / hbar) H rho
    for (i, row) in h.rows.iter().enumerate() {
        let out_row = &mut o[i * dim..(i + 1) * dim];
        for &(k, v) in row {
            let c = scale * v;
            for (dst, src) in out_row.iter_mut().zip(&r[k * dim..(k + 1) * dim]) {
                *dst += c * src;
            }
        }
    }
    // +(i / hbar) rho H
    for i in 0..dim {
        let (rho_row, out_row) = (&r[i * dim..(i + 1) * dim], &mut o[i * dim..(i + 1) * dim]);
        for (k, hrow) in h.rows.iter().enumerate() {
            let c = -scale * rho_row[k];
            if c == ZERO {
                continue;
            }
            for &(j, v) in hrow {
                out_row[j] += c * v;
            }
        }
    }
    let (rp, r21, r12) = (params.rate_dephasing, params.rate_21, params.rate_12);
    if rp == 0.0 && r21 == 0.0 && r12 == 0.0 {
        return;
    }
    for i in 0..dim {
        for j in 0..dim {
            let v = r[i * dim + j];
            let d = &mut o[i * dim + j];
            match (i % 2, j % 2) {
                (0, 0) => *d += r21 * r[(i + 1) * dim + j + 1] - r12 * v,
                (1, 1) => *d += r12 * r[(i - 1) * dim + j - 1] - r21 * v,
                _ => *d -= (rp + 0.5 * (r21 + r12)) * v,
            }
        }
    }
}

/// Health indicators of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    pub trace: f64,
    /// `max |rho - rho^dag|`.
    pub hermiticity: f64,
    /// `Re tr(H rho)`.
    pub energy: f64,
    /// `tr rho^2`.
    pub purity: f64,
}

pub fn monitors(h: &SparseMatrix, rho: &Array2<Complex64>) -> Monitors {
    let dim = h.dim;
    let mut trace = 0.0;
    let mut herm: f64 = 0.0;
    let mut purity = ZERO;
    for i in 0..dim {
        trace += rho[[i, i]].re;
        for j in 0..dim {
            herm = herm.max((rho[[i, j]] - rho[[j, i]].conj()).norm());
            purity += rho[[i, j]] * rho[[j, i]];
        }
    }
    let energy: Complex64 = h
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
        .map(|(i, j, v)| v * rho[[j, i]])
        .sum();
    Monitors {
        trace,
        hermiticity: herm,
        energy: energy.re,
        purity: purity.re,
    }
}

/// Atomic reduced density matrix and mode quadratures `<a^dag + a>`, `i <a^dag - a>`.
pub fn observables(space: &TruncatedSpace, rho: &Array2<Complex64>) -> ObservableSet {
    let dim = space.dim();
    let (mut r11, mut r22, mut r21, mut r12) = (ZERO, ZERO, ZERO, ZERO);
    for p in (0..dim).step_by(2) {
        r11 += rho[[p, p]];
        r22 += rho[[p + 1, p + 1]];
        r21 += rho[[p + 1, p]];
        r12 += rho[[p, p + 1]];
    }
    let mut e = Vec::with_capacity(space.modes);
    let mut h = Vec::with_capacity(space.modes);
    for k in 0..space.modes {
        let stride = space.stride(k);
        let mut a = ZERO;
        for j in 0..dim {
            let n = space.photons(j, k);
            if n > 0 {
                a += (n as f64).sqrt() * rho[[j, j - stride]];
            }
        }
        e.push(Complex64::new(2.0 * a.re, 0.0));
        h.push(Complex64::new(2.0 * a.im, 0.0));
    }
    ObservableSet {
        rho21: r21,
        rho12: r12,
        nu: r22 - r11,
        e,
        h,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub grid: TimeGrid,
    pub sets: Vec<ObservableSet>,
    pub monitors: Vec<Monitors>,
}

/// Classical RK4 with `substeps` steps per grid interval.
pub fn evolve(
    params: &ModelParams,
    space: &TruncatedSpace,
    rho0: &Array2<Complex64>,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<ReferenceTrajectory> {
    grid.validate()?;
    let h = build_hamiltonian(params, space)?;
    let dim = space.dim();
    if rho0.dim() != (dim, dim) {
        return Err(Error::Validation(format!(
            "initial density is {:?}, expected {dim}x{dim}",
            rho0.dim()
        )));
    }
    let substeps = substeps.max(1);
    let dt = grid.dt() / substeps as f64;
    let mut rho = rho0.as_standard_layout().to_owned();
    let mut k1 = Array2::zeros((dim, dim));
    let mut k2 = Array2::zeros((dim, dim));
    let mut k3 = Array2::zeros((dim, dim));
    let mut k4 = Array2::zeros((dim, dim));
    let mut tmp = Array2::zeros((dim, dim));

    let mut sets = Vec::with_capacity(grid.points());
    let mut mons = Vec::with_capacity(grid.points());
    let record = |rho: &Array2<Complex64>, t: f64, sets: &mut Vec<ObservableSet>, mons: &mut Vec<Monitors>| {
        let m = monitors(&h, rho);
        if (m.trace - 1.0).abs() > TRACE_DRIFT_LIMIT || !m.trace.is_finite() {
            return Err(Error::TraceDrift { t, trace: m.trace });
        }
        sets.push(observables(space, rho));
        mons.push(m);
        Ok(())
    };
    record(&rho, grid.time(0), &mut sets, &mut mons)?;
    for i in 1..grid.points() {
        for _ in 0..substeps {
            master_rhs(params, &h, &rho, &mut k1);
            tmp.assign(&rho);
            tmp.scaled_add(Complex64::new(0.5 * dt, 0.0), &k1);
            master_rhs(params, &h, &tmp, &mut k2);
            tmp.assign(&rho);
            tmp.scaled_add(Complex64::new(0.5 * dt, 0.0), &k2);
            master_rhs(params, &h, &tmp, &mut k3);
            tmp.assign(&rho);
            tmp.scaled_add(Complex64::new(dt, 0.0), &k3);
            master_rhs(params, &h, &tmp, &mut k4);
            ndarray::Zip::from(&mut rho)
                .and(&k1)
                .and(&k2)
                .and(&k3)
                .and(&k4)
                .for_each(|r, a, b, c, d| *r += (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d));
        }
        record(&rho, grid.time(i), &mut sets, &mut mons)?;
    }
    Ok(ReferenceTrajectory {
        grid: *grid,
        sets,
        monitors: mons,
    })
}
