//! Euler-Maruyama integration of complex Ito SDEs driven by real Wiener increments,
//! and reproducible parallel ensembles.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paths with any component above this magnitude are treated as divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Paths per work unit. Fixed so the reduction tree does not depend on the worker count.
const CHUNK: usize = 32;

/// `dX = A(X) dt + B(X) dW` with complex `A`, `B` and a real Wiener process `W`.
pub trait SdeSystem: Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()>;
    /// Writes the `state_dim x noise_dim` noise matrix.
    fn noise_into(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()>;

    /// True when the noise matrix does not depend on the state, so integrators may
    /// evaluate it once.
    fn constant_noise(&self) -> bool {
        false
    }

    fn drift(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.state_dim()];
        self.drift_into(x, &mut out)?;
        Ok(out)
    }

    fn noise(&self, x: &[Complex64]) -> Result<Array2<Complex64>> {
        let mut out = Array2::zeros((self.state_dim(), self.noise_dim()));
        self.noise_into(x, &mut out)?;
        Ok(out)
    }
}

impl<S: SdeSystem + ?Sized> SdeSystem for &S {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn drift_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        (**self).drift_into(x, out)
    }
    fn noise_into(&self, x: &[Complex64], out: &mut Array2<Complex64>) -> Result<()> {
        (**self).noise_into(x, out)
    }
    fn constant_noise(&self) -> bool {
        (**self).constant_noise()
    }
}

/// Equidistant grid with `steps + 1` points on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Result<Self> {
        let grid = TimeGrid {
            t_start,
            t_end,
            steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidGrid("steps must be at least 1".into()));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::InvalidGrid(format!(
                "need finite t_end > t_start, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }

    pub fn points(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_end
        } else {
            self.t_start + (self.t_end - self.t_start) * (i as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points()).map(|i| self.time(i)).collect()
    }
}

/// One Euler-Maruyama step `x + A(x) dt + B(x) dW`.
pub fn em_step<S: SdeSystem + ?Sized>(
    system: &S,
    state: &[Complex64],
    dt: f64,
    dw: &[f64],
) -> Result<Vec<Complex64>> {
    let mut drift = vec![Complex64::new(0.0, 0.0); system.state_dim()];
    let mut noise = Array2::zeros((system.state_dim(), system.noise_dim()));
    let mut next = state.to_vec();
    system.drift_into(state, &mut drift)?;
    system.noise_into(state, &mut noise)?;
    apply_increment(&mut next, &drift, &noise, dt, dw);
    Ok(next)
}

fn apply_increment(
    x: &mut [Complex64],
    drift: &[Complex64],
    noise: &Array2<Complex64>,
    dt: f64,
    dw: &[f64],
) {
    for (i, xi) in x.iter_mut().enumerate() {
        let mut acc = drift[i] * dt;
        for (b, d) in noise.row(i).iter().zip(dw) {
            acc += b * d;
        }
        *xi += acc;
    }
}

fn out_of_bounds(x: &[Complex64], threshold: f64) -> bool {
    x.iter().any(|v| !v.is_finite() || v.norm() > threshold)
}

/// RNG stream for path `index` under `master_seed`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Seed handed to the initial-state sampler of path `index`.
pub fn init_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Integrates one path, calling `visit(i, x_i)` at every grid point reached.
///
/// Returns the index of the first grid point that was out of bounds, or `None` when the
/// path completed. Evaluation errors of the system or of `visit` count as divergence.
pub fn integrate_path<S, R, F>(
    system: &S,
    init: &[Complex64],
    grid: &TimeGrid,
    rng: &mut R,
    threshold: f64,
    mut visit: F,
) -> Option<usize>
where
    S: SdeSystem + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &[Complex64]) -> Result<()>,
{
    let n = system.state_dim();
    let m = system.noise_dim();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut x = init.to_vec();
    let mut drift = vec![Complex64::new(0.0, 0.0); n];
    let mut noise = Array2::zeros((n, m));
    let mut dw = vec![0.0; m];
    let constant = system.constant_noise();
    if constant && system.noise_into(&x, &mut noise).is_err() {
        return Some(0);
    }

    if out_of_bounds(&x, threshold) || visit(0, &x).is_err() {
        return Some(0);
    }
    for i in 1..grid.points() {
        if system.drift_into(&x, &mut drift).is_err() {
            return Some(i);
        }
        if !constant && system.noise_into(&x, &mut noise).is_err() {
            return Some(i);
        }
        for d in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *d = z * sqrt_dt;
        }
        apply_increment(&mut x, &drift, &noise, dt, &dw);
        if out_of_bounds(&x, threshold) || visit(i, &x).is_err() {
            return Some(i);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// States at the grid points reached, truncated at divergence.
    pub states: Vec<Vec<Complex64>>,
    pub diverged: bool,
}

/// Single path with increments drawn from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn simulate_path<S: SdeSystem + ?Sized>(
    system: &S,
    init: &[Complex64],
    grid: &TimeGrid,
    seed: u64,
) -> Path {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path_with(system, init, grid, &mut rng, DEFAULT_DIVERGENCE_THRESHOLD)
}

pub fn simulate_path_with<S: SdeSystem + ?Sized, R: Rng + ?Sized>(
    system: &S,
    init: &[Complex64],
    grid: &TimeGrid,
    rng: &mut R,
    threshold: f64,
) -> Path {
    let mut states = Vec::with_capacity(grid.points());
    let diverged = integrate_path(system, init, grid, rng, threshold, |_, x| {
        states.push(x.to_vec());
        Ok(())
    })
    .is_some();
    Path { states, diverged }
}

/// Complex-valued functions of the state recorded along every path.
pub trait ObservableMap: Sync {
    fn names(&self) -> Vec<String>;
    fn eval_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()>;
}

type ObservableFn = Box<dyn Fn(&[Complex64]) -> Result<Complex64> + Send + Sync>;

/// A list of named closures.
#[derive(Default)]
pub struct FnObservables {
    entries: Vec<(String, ObservableFn)>,
}

impl FnObservables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(
        mut self,
        name: impl Into<String>,
        f: impl Fn(&[Complex64]) -> Result<Complex64> + Send + Sync + 'static,
    ) -> Self {
        self.entries.push((name.into(), Box::new(f)));
        self
    }

    /// Records every state component as `x_<i>`.
    pub fn components(dim: usize) -> Self {
        (0..dim).fold(Self::new(), |acc, i| acc.with(format!("x_{i}"), move |x| Ok(x[i])))
    }
}

impl ObservableMap for FnObservables {
    fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    fn eval_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        for ((_, f), o) in self.entries.iter().zip(out.iter_mut()) {
            *o = f(x)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub divergence_threshold: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            workers: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub grid: TimeGrid,
    pub names: Vec<String>,
    /// `mean[k][t]` for observable `k` at grid point `t`.
    pub mean: Vec<Vec<Complex64>>,
    /// Standard error of the real part.
    pub stderr_re: Vec<Vec<f64>>,
    /// Standard error of the imaginary part.
    pub stderr_im: Vec<Vec<f64>>,
    pub runs_requested: usize,
    pub runs_diverged: usize,
    pub diverged: Vec<usize>,
}

impl EnsembleResult {
    /// Runs that entered the statistics.
    pub fn runs_completed(&self) -> usize {
        self.runs_requested - self.runs_diverged
    }

    /// Standard error of the complex mean, `sqrt(se_re^2 + se_im^2)`.
    pub fn stderr(&self, k: usize, t: usize) -> f64 {
        self.stderr_re[k][t].hypot(self.stderr_im[k][t])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn divergence_fraction(&self) -> f64 {
        self.runs_diverged as f64 / self.runs_requested as f64
    }
}

/// Streaming mean and sum of squared deviations per complex series entry.
#[derive(Debug, Clone)]
struct Accumulator {
    count: usize,
    mean: Vec<Complex64>,
    m2_re: Vec<f64>,
    m2_im: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            count: 0,
            mean: vec![Complex64::new(0.0, 0.0); len],
            m2_re: vec![0.0; len],
            m2_im: vec![0.0; len],
        }
    }

    fn push(&mut self, sample: &[Complex64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &x) in sample.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            let after = x - self.mean[i];
            self.m2_re[i] += delta.re * after.re;
            self.m2_im[i] += delta.im * after.im;
        }
    }

    /// Pairwise combination of two disjoint sample sets.
    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * (nb / n);
            self.m2_re[i] += other.m2_re[i] + delta.re * delta.re * na * nb / n;
            self.m2_im[i] += other.m2_im[i] + delta.im * delta.im * na * nb / n;
        }
        self.count += other.count;
    }

    fn stderr(m2: f64, count: usize) -> f64 {
        if count < 2 {
            0.0
        } else {
            (m2 / ((count - 1) as f64 * count as f64)).sqrt()
        }
    }
}

struct ChunkOutcome {
    acc: Accumulator,
    diverged: Vec<usize>,
}

/// Runs `runs` independent paths and averages the observables over the completed ones.
///
/// Path `r` draws its initial state from `init_sampler(init_seed(master_seed, r))` and its
/// increments from `path_rng(master_seed, r)`. Paths are grouped into fixed chunks whose
/// statistics are merged in ascending order, so the result does not depend on `workers`.
pub fn run_ensemble<S, I, O>(
    system: &S,
    init_sampler: I,
    grid: &TimeGrid,
    runs: usize,
    master_seed: u64,
    observables: &O,
    options: &EnsembleOptions,
) -> Result<EnsembleResult>
where
    S: SdeSystem + ?Sized,
    I: Fn(u64) -> Result<Vec<Complex64>> + Sync,
    O: ObservableMap + ?Sized,
{
    grid.validate()?;
    if runs == 0 {
        return Err(Error::Validation("an ensemble needs at least one run".into()));
    }
    let names = observables.names();
    let k = names.len();
    let points = grid.points();
    let series_len = k * points;

    let run_chunk = |chunk: usize| -> ChunkOutcome {
        let mut acc = Accumulator::new(series_len);
        let mut diverged = Vec::new();
        let mut series = vec![Complex64::new(0.0, 0.0); series_len];
        let start = chunk * CHUNK;
        for r in start..(start + CHUNK).min(runs) {
            let init = match init_sampler(init_seed(master_seed, r as u64)) {
                Ok(x) if x.len() == system.state_dim() => x,
                _ => {
                    diverged.push(r);
                    continue;
                }
            };
            let mut rng = path_rng(master_seed, r as u64);
            let failed = integrate_path(
                system,
                &init,
                grid,
                &mut rng,
                options.divergence_threshold,
                |t, x| {
                    let slot = &mut series[t * k..(t + 1) * k];
                    observables.eval_into(x, slot)?;
                    if slot.iter().all(|v| v.is_finite()) {
                        Ok(())
                    } else {
                        Err(Error::Validation("non-finite observable".into()))
                    }
                },
            );
            match failed {
                None => acc.push(&series),
                Some(_) => diverged.push(r),
            }
        }
        ChunkOutcome { acc, diverged }
    };

    let chunks = runs.div_ceil(CHUNK);
    let outcomes: Vec<ChunkOutcome> = if options.workers == 1 {
        (0..chunks).map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    };

    let mut total = Accumulator::new(series_len);
    let mut diverged = Vec::new();
    for outcome in &outcomes {
        total.merge(&outcome.acc);
        diverged.extend_from_slice(&outcome.diverged);
    }
    if total.count == 0 {
        return Err(Error::AllPathsDiverged { runs });
    }
    if !diverged.is_empty() {
        log::warn!("{} of {} paths diverged", diverged.len(), runs);
    }

    let reshape = |flat: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..k)
            .map(|j| (0..points).map(|t| flat(t * k + j)).collect())
            .collect()
    };
    let count = total.count;
    Ok(EnsembleResult {
        grid: *grid,
        mean: (0..k)
            .map(|j| (0..points).map(|t| total.mean[t * k + j]).collect())
            .collect(),
        stderr_re: reshape(&|i| Accumulator::stderr(total.m2_re[i], count)),
        stderr_im: reshape(&|i| Accumulator::stderr(total.m2_im[i], count)),
        names,
        runs_requested: runs,
        runs_diverged: diverged.len(),
        diverged,
    })
}
