//! Randomized property suites over all modules, with a machine-readable report.
//!
//! Every suite draws its points from its own ChaCha stream of the master seed, so a
//! report is a pure function of [`InvariantOptions`].

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFamily;
use crate::changed_vars::{drift_bar, from_physical, ito_drift, noise_bar, physical_jacobian, to_physical};
use crate::config::{parse_config, serialize, Engine, RunConfig};
use crate::error::Result;
use crate::init::{init_points, AtomicDensity};
use crate::mb::{mb_rhs, MbState};
use crate::model::{diffusion_jc, diffusion_jc_plus, drift_jc, noise_jc, noise_jc_plus, sample_initial, JcSystem, ModelParams, PhaseState};
use crate::observables::{project, FermionicMoment, FermionicObservable, JcObservables, ObservableKind, ScalarObservable};
use crate::reference::{build_hamiltonian, master_rhs, monitors, TruncatedSpace};
use crate::sde::{run_ensemble, EnsembleOptions, TimeGrid};

/// Signature shared by the noise-matrix functions, so a suite can be pointed at a variant.
pub type NoiseFn = fn(&ModelParams, &BasisFamily, &PhaseState) -> Result<Array2<Complex64>>;

/// Failure messages kept per check.
const MAX_FAILURES: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct InvariantOptions {
    /// Random points per check.
    pub points: usize,
    pub seed: u64,
    /// Noise matrix of the dissipation-free model.
    pub noise: NoiseFn,
    /// Noise matrix of the dissipative model.
    pub noise_plus: NoiseFn,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        InvariantOptions {
            points: 100,
            seed: 0,
            noise: noise_jc,
            noise_plus: noise_jc_plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub points: usize,
    pub tolerance: f64,
    pub max_error: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub seed: u64,
    pub points: usize,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl InvariantReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable") + "\n"
    }
}

/// Accumulates the worst error of one check over its points.
struct Check {
    result: CheckResult,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Check {
            result: CheckResult {
                name: name.to_string(),
                passed: true,
                points: 0,
                tolerance,
                max_error: 0.0,
                failures: Vec::new(),
            },
        }
    }

    fn fail(&mut self, msg: String) {
        self.result.passed = false;
        if self.result.failures.len() < MAX_FAILURES {
            self.result.failures.push(msg);
        }
    }

    /// Records one point; an evaluation error counts as a failure.
    fn record(&mut self, point: usize, error: Result<f64>) {
        self.result.points += 1;
        match error {
            Ok(e) => {
                if e.is_nan() || e > self.result.max_error {
                    self.result.max_error = e;
                }
                if !(e <= self.result.tolerance) {
                    self.fail(format!("point {point}: error {e:e}"));
                }
            }
            Err(err) => self.fail(format!("point {point}: {err}")),
        }
    }

    fn finish(self) -> CheckResult {
        self.result
    }
}

fn suite(name: &str, checks: Vec<CheckResult>) -> SuiteReport {
    SuiteReport {
        name: name.to_string(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Runs every suite.
pub fn check_invariants(options: &InvariantOptions) -> InvariantReport {
    let suites: Vec<(&str, fn(&InvariantOptions, &mut ChaCha8Rng) -> Vec<CheckResult>)> = vec![
        ("basis_family", basis_suite),
        ("fermionic_init", init_suite),
        ("factorization", factorization_suite),
        ("sde_core", sde_suite),
        ("observables", observables_suite),
        ("changed_vars", changed_vars_suite),
        ("reference_sim", reference_suite),
        ("mb_semiclassical", mb_suite),
        ("cli_io", config_suite),
    ];
    let suites: Vec<SuiteReport> = suites
        .into_iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(i as u64);
            suite(name, f(options, &mut rng))
        })
        .collect();
    InvariantReport {
        seed: options.seed,
        points: options.points,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_complex(rng: &mut ChaCha8Rng, re: f64, im: f64) -> Complex64 {
    c(rng.random_range(-re..=re), rng.random_range(-im..=im))
}

fn random_family(rng: &mut ChaCha8Rng) -> BasisFamily {
    BasisFamily::AdditiveNoise {
        delta: c(rng.random_range(2.0..6.0), rng.random_range(-0.5..0.5)),
        kappa: random_complex(rng, 0.5, 0.3),
    }
}

fn families(rng: &mut ChaCha8Rng) -> [BasisFamily; 2] {
    [BasisFamily::CoherentSpin, random_family(rng)]
}

/// Random model with `modes` modes; dissipation-free unless `dissipative`.
fn random_params(rng: &mut ChaCha8Rng, modes: usize, dissipative: bool) -> ModelParams {
    let mut p = ModelParams::single_mode(rng.random_range(500.0..1500.0), 0.0, 0.0);
    let mut w = rng.random_range(500.0..1500.0);
    p.mode_frequencies = (0..modes)
        .map(|_| {
            w += rng.random_range(10.0..500.0);
            w
        })
        .collect();
    p.couplings = (0..modes).map(|_| rng.random_range(-300.0..300.0)).collect();
    p.atom_position = rng.random_range(0.05..0.95);
    if dissipative {
        p = p.with_rates(
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
        );
    }
    p
}

/// Random phase-space point with `|1 + h h~|` bounded away from the projector pole.
fn random_state(rng: &mut ChaCha8Rng, modes: usize, family: &BasisFamily) -> PhaseState {
    loop {
        let state = PhaseState {
            alpha: (0..modes).map(|_| random_complex(rng, 2.0, 2.0)).collect(),
            beta: (0..modes).map(|_| random_complex(rng, 2.0, 2.0)).collect(),
            z: random_complex(rng, 1.5, 1.0),
            w: random_complex(rng, 1.5, 1.0),
        };
        if let Ok(v) = family.eval(state.z, state.w) {
            if v.norm().norm() > 0.2 && v.h_prime.norm() > 1e-3 && v.htilde_prime.norm() > 1e-3 {
                return state;
            }
        }
    }
}

fn random_density(rng: &mut ChaCha8Rng) -> Result<AtomicDensity> {
    let p: f64 = rng.random_range(0.02..0.98);
    let r = (p * (1.0 - p)).sqrt() * rng.random_range(0.0..0.999);
    let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    AtomicDensity::new(p, Complex64::from_polar(r, phi))
}

fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `|a - b| / |b|` in the Frobenius norm, absolute when `b` vanishes.
fn relative(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let d = frobenius(&(a - b));
    let s = frobenius(b);
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Largest componentwise `|a - b| / (1 + |b|)`.
fn componentwise(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / (1.0 + y.norm()))
        .fold(0.0, f64::max)
}

fn outer(b: &Array2<Complex64>) -> Array2<Complex64> {
    b.dot(&b.t())
}

fn basis_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut derivative = Check::new("derivatives_match_finite_differences", 1e-6);
    let mut ratio = Check::new("noise_ratio_identity", 1e-12);
    let mut inverse = Check::new("inverse_round_trip", 1e-10);
    let step = 1e-6;
    for i in 0..opts.points {
        for family in families(rng) {
            let z = random_state(rng, 1, &family).z;
            derivative.record(
                i,
                (|| {
                    let v = family.eval(z, z)?;
                    let up = family.eval(z + step, z)?;
                    let down = family.eval(z - step, z)?;
                    let d1 = (up.h - down.h) / (2.0 * step);
                    let d2 = (up.h_prime - down.h_prime) / (2.0 * step);
                    Ok(((d1 - v.h_prime).norm() / (1.0 + v.h_prime.norm()))
                        .max((d2 - v.h_second).norm() / (1.0 + v.h_second.norm())))
                })(),
            );
            inverse.record(
                i,
                (|| {
                    let v = family.eval(z, z)?;
                    let back = family.eval(family.invert_h(v.h)?, family.invert_htilde(v.htilde)?)?;
                    Ok(((back.h - v.h).norm() + (back.htilde - v.htilde).norm()) / (1.0 + v.h.norm()))
                })(),
            );
            ratio.record(
                i,
                family.eval(z, -z).map(|v| {
                    let r = (v.h * v.h - 1.0) / v.h_prime;
                    let rt = (v.htilde * v.htilde - 1.0) / v.htilde_prime;
                    ((v.ratio - r).norm() / (1.0 + r.norm())).max((v.ratio_tilde - rt).norm() / (1.0 + rt.norm()))
                }),
            );
        }
    }
    vec![derivative.finish(), ratio.finish(), inverse.finish()]
}

fn max_entry(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> f64 {
    (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (a[i][j] - b[i][j]).norm())
        .fold(0.0, f64::max)
}

fn init_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut random = Check::new("reconstruction_random_densities", 1e-12);
    let mut thermal = Check::new("reconstruction_thermal_state", 1e-12);
    let mut weights = Check::new("weights_form_a_distribution", 1e-14);
    for i in 0..opts.points {
        random.record(
            i,
            (|| {
                let rho = random_density(rng)?;
                let dist = init_points(&rho, &BasisFamily::CoherentSpin)?;
                let total: f64 = dist.points.iter().map(|p| p.weight).sum();
                let negative = dist.points.iter().any(|p| p.weight < 0.0);
                weights.record(i, Ok(if negative { f64::INFINITY } else { (total - 1.0).abs() }));
                Ok(max_entry(&dist.reconstruct(&BasisFamily::CoherentSpin)?, &rho.as_matrix()))
            })(),
        );
    }
    let rho = AtomicDensity::thermal(1.0);
    for (i, family) in families(rng).iter().enumerate() {
        thermal.record(
            i,
            init_points(&rho, family).and_then(|d| Ok(max_entry(&d.reconstruct(family)?, &rho.as_matrix()))),
        );
    }
    vec![random.finish(), thermal.finish(), weights.finish()]
}

fn factorization_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut plain = Check::new("noise_reproduces_diffusion", 1e-12);
    let mut dissipative = Check::new("dissipative_noise_reproduces_diffusion", 1e-12);
    let mut constant = Check::new("additive_noise_matrix_is_constant", 0.0);
    for i in 0..opts.points {
        let modes = 1 + i % 3;
        for family in families(rng) {
            let params = random_params(rng, modes, false);
            let state = random_state(rng, modes, &family);
            plain.record(
                i,
                (|| Ok(relative(&outer(&(opts.noise)(&params, &family, &state)?), &diffusion_jc(&params, &family, &state)?)))(),
            );
            let params_plus = random_params(rng, modes, true);
            dissipative.record(
                i,
                (|| {
                    let b = (opts.noise_plus)(&params_plus, &family, &state)?;
                    Ok(relative(&outer(&b), &diffusion_jc_plus(&params_plus, &family, &state)?))
                })(),
            );
            if matches!(family, BasisFamily::AdditiveNoise { .. }) {
                let other = random_state(rng, modes, &family);
                constant.record(
                    i,
                    (|| {
                        let a = (opts.noise)(&params, &family, &state)?;
                        let b = (opts.noise)(&params, &family, &other)?;
                        Ok(if a == b { 0.0 } else { frobenius(&(&a - &b)).max(f64::MIN_POSITIVE) })
                    })(),
                );
            }
        }
    }
    vec![plain.finish(), dissipative.finish(), constant.finish()]
}

fn sde_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut rotation = Check::new("uncoupled_modes_rotate_freely", 1e-14);
    for i in 0..opts.points {
        let family = families(rng)[i % 2];
        let mut params = random_params(rng, 2, false);
        params.couplings = vec![0.0; 2];
        let state = random_state(rng, 2, &family);
        rotation.record(
            i,
            drift_jc(&params, &family, &state).map(|d| {
                let mut expected = Vec::new();
                for k in 0..2 {
                    let w = params.mode_frequencies[k];
                    expected.push(c(0.0, -w) * state.alpha[k]);
                    expected.push(c(0.0, w) * state.beta[k]);
                }
                componentwise(&d[..4], &expected) / params.mode_frequencies[1]
            }),
        );
    }

    let mut determinism = Check::new("ensemble_independent_of_worker_count", 0.0);
    let seed = rng.random::<u64>();
    determinism.record(
        0,
        (|| {
            let mut cfg = RunConfig::benchmark(Engine::SdeJc);
            cfg.grid = TimeGrid::new(0.0, cfg.grid.t_end / 64.0, 128)?;
            let system = JcSystem::new(&cfg.model, cfg.family)?;
            let dist = init_points(&cfg.atom, &cfg.family)?;
            let obs = JcObservables::new(ObservableKind::defaults(), cfg.family, cfg.model.clone())?;
            let sampler = |s: u64| Ok(sample_initial(&cfg.alpha, &dist, s));
            let run = |workers: usize| {
                let options = EnsembleOptions {
                    workers,
                    ..EnsembleOptions::default()
                };
                run_ensemble(&system, sampler, &cfg.grid, 100, seed, &obs, &options)
            };
            let (a, b) = (run(1)?, run(4)?);
            Ok(if a == b { 0.0 } else { 1.0 })
        })(),
    );
    vec![rotation.finish(), determinism.finish()]
}

fn observables_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut purity = Check::new("projector_moments_are_pure", 1e-12);
    let mut gradient = Check::new("moment_gradients_match_finite_differences", 1e-6);
    let step = 1e-6;
    for i in 0..opts.points {
        for family in families(rng) {
            let state = random_state(rng, 1, &family);
            purity.record(
                i,
                project(&family, &state).map(|s| {
                    let lhs = 4.0 * s.rho21 * s.rho12;
                    let rhs = (1.0 + s.nu) * (1.0 - s.nu);
                    let trace = (s.rho11() + s.rho22() - 1.0).norm();
                    ((lhs - rhs).norm() / (1.0 + rhs.norm())).max(trace)
                }),
            );
            for moment in [FermionicMoment::Rho21, FermionicMoment::Rho12, FermionicMoment::Nu] {
                let obs = FermionicObservable::new(moment, family, 1);
                let x = state.flatten();
                gradient.record(
                    i,
                    (|| {
                        let mut g = vec![Complex64::new(0.0, 0.0); x.len()];
                        obs.gradient(&x, &mut g)?;
                        let mut err: f64 = 0.0;
                        for j in 0..x.len() {
                            let (mut up, mut down) = (x.clone(), x.clone());
                            up[j] += step;
                            down[j] -= step;
                            let fd = (obs.value(&up)? - obs.value(&down)?) / (2.0 * step);
                            err = err.max((fd - g[j]).norm() / (1.0 + g[j].norm()));
                        }
                        Ok(err)
                    })(),
                );
            }
        }
    }
    vec![purity.finish(), gradient.finish()]
}

fn changed_vars_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut round_trip = Check::new("inverse_mapping_round_trip", 1e-9);
    let mut ito = Check::new("ito_transformed_drift_matches", 1e-6);
    let mut noise = Check::new("physical_noise_reproduces_mapped_diffusion", 1e-8);
    for i in 0..opts.points {
        let modes = 1 + i % 2;
        for family in families(rng) {
            let params = random_params(rng, modes, true);
            let state = random_state(rng, modes, &family);
            round_trip.record(
                i,
                (|| {
                    let phys = to_physical(&family, &state)?;
                    let back = to_physical(&family, &from_physical(&family, &phys)?)?;
                    Ok(componentwise(&back.flatten(), &phys.flatten()))
                })(),
            );
            ito.record(
                i,
                (|| {
                    let bar = drift_bar(&params, &to_physical(&family, &state)?)?;
                    Ok(componentwise(&ito_drift(&params, &family, &state)?, &bar))
                })(),
            );
            if family == BasisFamily::CoherentSpin {
                noise.record(
                    i,
                    (|| {
                        let jac = physical_jacobian(&family, &state)?;
                        let mapped = jac.dot(&diffusion_jc_plus(&params, &family, &state)?).dot(&jac.t());
                        let b = noise_bar(&params, &family, &to_physical(&family, &state)?)?;
                        Ok(relative(&outer(&b), &mapped))
                    })(),
                );
            }
        }
    }
    vec![round_trip.finish(), ito.finish(), noise.finish()]
}

fn reference_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut trace = Check::new("generator_preserves_trace", 1e-12);
    let mut hermitian = Check::new("generator_preserves_hermiticity", 1e-12);
    let mut energy = Check::new("closed_system_conserves_energy", 1e-10);
    let space = TruncatedSpace { n_max: 3, modes: 2 };
    let dim = space.dim();
    for i in 0..opts.points {
        let dissipative = i % 2 == 1;
        let params = random_params(rng, 2, dissipative);
        let a = Array2::from_shape_fn((dim, dim), |_| random_complex(rng, 1.0, 1.0));
        let mut rho = a.dot(&a.t().mapv(|v| v.conj()));
        let tr: Complex64 = rho.diag().sum();
        rho.mapv_inplace(|v| v / tr);
        let h = match build_hamiltonian(&params, &space) {
            Ok(h) => h,
            Err(e) => {
                trace.record(i, Err(e));
                continue;
            }
        };
        let mut out = Array2::zeros((dim, dim));
        master_rhs(&params, &h, &rho, &mut out);
        let scale = out.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
        let m = monitors(&h, &out);
        trace.record(i, Ok(m.trace.abs() / scale));
        hermitian.record(i, Ok(m.hermiticity / scale));
        if !dissipative {
            let e0 = monitors(&h, &rho).energy.abs().max(1.0);
            energy.record(i, Ok(m.energy.abs() / (scale * e0)));
        }
    }
    vec![trace.finish(), hermitian.finish(), energy.finish()]
}

fn mb_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut slice = Check::new("rhs_equals_physical_drift_on_hermitian_slice", 1e-14);
    for i in 0..opts.points {
        let modes = 1 + i % 3;
        let params = random_params(rng, modes, i % 2 == 1);
        let nu = rng.random_range(-1.0..1.0f64);
        let r = 0.5 * (1.0 - nu * nu).sqrt() * rng.random_range(0.0..1.0);
        let state = MbState {
            eps: (0..modes).map(|_| rng.random_range(-10.0..10.0)).collect(),
            eta: (0..modes).map(|_| rng.random_range(-10.0..10.0)).collect(),
            rho21: Complex64::from_polar(r, rng.random_range(-3.0..3.0)),
            nu,
        };
        slice.record(
            i,
            drift_bar(&params, &state.to_phys()).map(|bar| {
                let rhs = mb_rhs(&params, &state).to_phys().flatten();
                let scale = bar.iter().map(|v| v.norm()).fold(1.0, f64::max);
                rhs.iter().zip(&bar).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
            }),
        );
    }
    vec![slice.finish()]
}

fn config_suite(opts: &InvariantOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let mut round_trip = Check::new("serialized_config_reparses_equal", 0.0);
    let engines = [Engine::SdeJc, Engine::SdeMbExperimental, Engine::Reference, Engine::Mb];
    for i in 0..opts.points {
        let mut cfg = RunConfig::benchmark(engines[i % engines.len()]);
        cfg.seed = rng.random();
        cfg.runs = rng.random_range(1..10_000);
        cfg.model = cfg.model.with_rates(
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
        );
        cfg.alpha = vec![random_complex(rng, 5.0, 5.0)];
        cfg.grid.steps = rng.random_range(1..100_000);
        if cfg.engine == Engine::SdeMbExperimental {
            cfg.family = BasisFamily::CoherentSpin;
            cfg.experimental = true;
        } else if i % 2 == 0 {
            cfg.family = random_family(rng);
        }
        round_trip.record(
            i,
            parse_config(&serialize(&cfg)).map(|back| if back == cfg { 0.0 } else { 1.0 }),
        );
    }
    vec![round_trip.finish()]
}
