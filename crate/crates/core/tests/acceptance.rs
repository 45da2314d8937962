//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

mod common;

use common::*;
use num_complex::Complex64;
use pstoch::changed_vars::{drift_bar, noise_bar, to_physical};
use pstoch::config::{Engine, RunConfig};
use pstoch::mb::{evolve_mb, MbState};
use pstoch::model::{noise_jc, noise_jc_plus, sample_initial, sqrt_i};
use pstoch::observables::{ObservableKind, ObservableSet};
use pstoch::reference::{evolve, initial_density, ReferenceTrajectory, TruncatedSpace};
use pstoch::runner::run_sde_jc;
use pstoch::sde::FnObservables;
use pstoch::{init_points, run_ensemble, AtomicDensity, BasisFamily, EnsembleOptions, EnsembleResult, JcSystem, ModelParams, TimeGrid};
use rand::Rng;

/// Absolute floor on the standard error where every path carries the same value.
const STDERR_FLOOR: f64 = 1e-8;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { name, passed, detail }
}

fn within_stderr(diff: f64, stderr: f64) -> bool {
    diff <= 4.0 * stderr.max(STDERR_FLOOR)
}

fn reference_run(cfg: &RunConfig) -> ReferenceTrajectory {
    let space = TruncatedSpace::new(cfg.n_max, cfg.model.mode_count(), cfg.dimension_cap).unwrap();
    let rho0 = initial_density(&space, &cfg.alpha, &cfg.atom).unwrap();
    evolve(&cfg.model, &space, &rho0, &cfg.grid, cfg.substeps).unwrap()
}

fn benchmark_ensemble() -> EnsembleResult {
    let cfg = RunConfig::benchmark(Engine::SdeJc);
    let kinds = [ObservableKind::Rho11, ObservableKind::Rho22, ObservableKind::Rho21];
    run_sde_jc(&cfg, &kinds, &EnsembleOptions::default()).unwrap()
}

fn ensemble_tracks_reference(sde: &EnsembleResult, reference: &[ObservableSet]) -> Outcome {
    // (label, column, imaginary part?, reference value)
    type Pick = fn(&ObservableSet) -> f64;
    let series: [(&str, usize, bool, Pick); 4] = [
        ("rho11", 0, false, |s| s.rho11().re),
        ("rho22", 1, false, |s| s.rho22().re),
        ("Re rho21", 2, false, |s| s.rho21.re),
        ("Im rho21", 2, true, |s| s.rho21.im),
    ];
    let (mut max_abs, mut worst_sigma, mut violations) = (0.0f64, 0.0f64, 0usize);
    for (t, set) in reference.iter().enumerate() {
        for &(_, k, imag, pick) in &series {
            let (mean, se) = if imag {
                (sde.mean[k][t].im, sde.stderr_im[k][t])
            } else {
                (sde.mean[k][t].re, sde.stderr_re[k][t])
            };
            let diff = (mean - pick(set)).abs();
            max_abs = max_abs.max(diff);
            worst_sigma = worst_sigma.max(diff / se.max(STDERR_FLOOR));
            if diff > 0.05 || !within_stderr(diff, se) {
                violations += 1;
            }
        }
    }
    let fraction = sde.divergence_fraction();
    let passed = violations == 0 && max_abs <= 0.05 && fraction <= 0.01;
    outcome(
        "benchmark ensemble vs truncated-Fock reference",
        passed,
        format!(
            "max |mean - ref| = {max_abs:.4} (limit 0.05), worst {worst_sigma:.2} stderr (limit 4), \
             {violations} point violations, diverged {}/{} ({:.2}%, limit 1%)",
            sde.runs_diverged,
            sde.runs_requested,
            100.0 * fraction
        ),
    )
}

fn final_stderr_of_z_and_w(family: BasisFamily, runs: usize) -> Result<[f64; 2], String> {
    let cfg = RunConfig::benchmark(Engine::SdeJc);
    let system = JcSystem::new(&cfg.model, family).unwrap();
    let dist = init_points(&cfg.atom, &family).unwrap();
    let sampler = |seed: u64| Ok(sample_initial(&cfg.alpha, &dist, seed));
    let obs = FnObservables::new().with("z", |x| Ok(x[2])).with("w", |x| Ok(x[3]));
    let result = run_ensemble(&system, sampler, &cfg.grid, runs, cfg.seed, &obs, &EnsembleOptions::default())
        .map_err(|e| e.to_string())?;
    let last = cfg.grid.points() - 1;
    Ok([result.stderr(0, last), result.stderr(1, last)])
}

fn additive_noise_resolves_the_ensemble() -> Outcome {
    let additive = final_stderr_of_z_and_w(additive(4.0), 1000);
    let coherent = final_stderr_of_z_and_w(BasisFamily::CoherentSpin, 1000);
    let name = "additive-noise vs coherent-spin standard error at t_N";
    match (additive, coherent) {
        (Ok(a), Ok(c)) => {
            let ratios = [c[0] / a[0], c[1] / a[1]];
            outcome(
                name,
                ratios.iter().all(|r| *r >= 3.0),
                format!(
                    "stderr z: {:.4} vs {:.4}, w: {:.4} vs {:.4}; ratios {:.2}, {:.2} (need >= 3)",
                    a[0], c[0], a[1], c[1], ratios[0], ratios[1]
                ),
            )
        }
        (a, c) => outcome(name, false, format!("ensemble failed: additive {a:?}, coherent {c:?}")),
    }
}

fn factorization() -> Outcome {
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let modes = 1 + i % 3;
        let delta = r.random_range(2.0..6.0);
        for family in [BasisFamily::CoherentSpin, additive(delta)] {
            let params = random_params(&mut r, modes, true);
            let state = random_state(&mut r, modes, &family);
            let mut free = params.clone();
            free.rate_12 = 0.0;
            free.rate_21 = 0.0;
            free.rate_dephasing = 0.0;
            let b = noise_jc(&free, &family, &state).unwrap();
            worst = worst.max(relative_error(&b.dot(&b.t()), &diffusion_oracle(&free, &family, &state, false)));
            let b = noise_jc_plus(&params, &family, &state).unwrap();
            worst = worst.max(relative_error(&b.dot(&b.t()), &diffusion_oracle(&params, &family, &state, true)));
        }
    }

    // State independence and the closed form of the additive-noise matrix.
    let mut constant = true;
    for i in 0..100 {
        let modes = 1 + i % 3;
        let delta: f64 = r.random_range(2.0..6.0);
        let family = additive(delta);
        let params = random_params(&mut r, modes, false);
        let gs = params.effective_couplings();
        let mut expected = ndarray::Array2::<Complex64>::zeros((2 * modes + 2, 4 * modes));
        let (zi, wi) = (2 * modes, 2 * modes + 1);
        for k in 0..modes {
            let p = sqrt_i() * (0.5 * gs[k] * c(delta, 0.0)).sqrt();
            // conj(delta) carries a negative zero, which picks the other root for gs < 0.
            let q = sqrt_i() * (0.5 * gs[k] * c(delta, 0.0).conj()).sqrt();
            let col = 4 * k;
            expected[[2 * k, col]] = I * p;
            expected[[2 * k, col + 1]] = -p;
            expected[[zi, col]] = -I * p;
            expected[[zi, col + 1]] = -p;
            expected[[2 * k + 1, col + 2]] = -I * q;
            expected[[2 * k + 1, col + 3]] = -q;
            expected[[wi, col + 2]] = -I * q;
            expected[[wi, col + 3]] = q;
        }
        for _ in 0..5 {
            let state = random_state(&mut r, modes, &family);
            constant &= noise_jc(&params, &family, &state).unwrap() == expected;
        }
    }
    outcome(
        "noise factorization",
        worst <= 1e-12 && constant,
        format!("worst relative ||B B^T - D|| = {worst:.2e} (limit 1e-12), additive-noise matrix equals closed form exactly: {constant}"),
    )
}

fn projector_oracle(family: &BasisFamily, z: Complex64, w: Complex64) -> [[Complex64; 2]; 2] {
    let (h, ht) = (h_of(family, z), htilde_of(family, w));
    let n = 1.0 + h * ht;
    [[1.0 / n, ht / n], [h / n, h * ht / n]]
}

fn reconstruction_error(rho: &AtomicDensity, family: &BasisFamily) -> f64 {
    let dist = init_points(rho, family).unwrap();
    let want = rho.as_matrix();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let got: Complex64 = dist
                .points
                .iter()
                .map(|p| p.weight * projector_oracle(family, p.z, p.w)[i][j])
                .sum();
            worst = worst.max((got - want[i][j]).norm());
        }
    }
    worst
}

fn initialization() -> Outcome {
    let mut r = rng(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p: f64 = r.random_range(0.01..0.99);
        let coherence = Complex64::from_polar(r.random_range(0.0..1.0) * (p * (1.0 - p)).sqrt(), r.random_range(-3.14..3.14));
        let rho = AtomicDensity::new(p, coherence).unwrap();
        worst = worst.max(reconstruction_error(&rho, &BasisFamily::CoherentSpin));
    }
    let thermal = AtomicDensity::thermal(1.0);
    let thermal_worst = reconstruction_error(&thermal, &BasisFamily::CoherentSpin).max(reconstruction_error(&thermal, &additive(4.0)));
    outcome(
        "three-point initialization",
        worst <= 1e-12 && thermal_worst <= 1e-12,
        format!("random densities {worst:.2e}, thermal state (both families) {thermal_worst:.2e} (limit 1e-12)"),
    )
}

fn ito_consistency() -> Outcome {
    let mut r = rng(1003);
    let mut drift_worst: f64 = 0.0;
    for i in 0..100 {
        let modes = 1 + i % 2;
        for family in [BasisFamily::CoherentSpin, additive(4.0)] {
            let params = random_params(&mut r, modes, true);
            let state = random_state(&mut r, modes, &family);
            let expected = ito_drift_fd(&params, &family, &state);
            let got = drift_bar(&params, &to_physical(&family, &state).unwrap()).unwrap();
            for (g, e) in got.iter().zip(&expected) {
                drift_worst = drift_worst.max((g - e).norm() / (1.0 + e.norm()));
            }
        }
    }
    let family = BasisFamily::CoherentSpin;
    let mut noise_worst: f64 = 0.0;
    for i in 0..100 {
        let modes = 1 + i % 2;
        let params = random_params(&mut r, modes, true);
        let state = random_state(&mut r, modes, &family);
        let jac = jacobian_fd(|y| physical_map(&family, y), &state.flatten(), 1e-3);
        let b = noise_jc_plus(&params, &family, &state).unwrap();
        let mapped = jac.dot(&b.dot(&b.t())).dot(&jac.t());
        let bbar = noise_bar(&params, &family, &to_physical(&family, &state).unwrap()).unwrap();
        noise_worst = noise_worst.max(relative_error(&bbar.dot(&bbar.t()), &mapped));
    }
    outcome(
        "Ito transform of the changed variables",
        drift_worst <= 1e-6 && noise_worst <= 1e-8,
        format!("drift {drift_worst:.2e} (limit 1e-6), noise {noise_worst:.2e} (limit 1e-8)"),
    )
}

fn max_set_difference(a: &[ObservableSet], b: &[ObservableSet]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut d = (x.rho21 - y.rho21).norm().max((x.rho12 - y.rho12).norm()).max((x.nu - y.nu).norm());
            for k in 0..x.e.len() {
                d = d.max((x.e[k] - y.e[k]).norm()).max((x.h[k] - y.h[k]).norm());
            }
            d
        })
        .fold(0.0, f64::max)
}

fn reference_conservation(reference: &ReferenceTrajectory) -> Outcome {
    let m = &reference.monitors;
    let trace = m.iter().map(|x| (x.trace - 1.0).abs()).fold(0.0, f64::max);
    let herm = m.iter().map(|x| x.hermiticity).fold(0.0, f64::max);
    let e0 = m[0].energy;
    let energy = m.iter().map(|x| (x.energy - e0).abs() / e0.abs()).fold(0.0, f64::max);
    let mut fine = RunConfig::benchmark(Engine::Reference);
    fine.n_max = 80;
    let cutoff = max_set_difference(&reference.sets, &reference_run(&fine).sets);
    outcome(
        "reference integrator conservation",
        trace <= 1e-8 && herm <= 1e-10 && energy <= 1e-8 && cutoff <= 1e-6,
        format!(
            "trace {trace:.2e} (1e-8), hermiticity {herm:.2e} (1e-10), energy {energy:.2e} (1e-8), cutoff 60->80 {cutoff:.2e} (1e-6)"
        ),
    )
}

fn semiclassical_divergence(reference: &ReferenceTrajectory, ensemble_ok: bool) -> Outcome {
    let cfg = RunConfig::benchmark(Engine::Mb);
    let traj = evolve_mb(&cfg.model, &MbState::from_initial(&cfg.alpha, &cfg.atom), &cfg.grid, cfg.substeps).unwrap();
    let deviation = traj
        .observables()
        .iter()
        .zip(&reference.sets)
        .map(|(m, r)| (m.rho11() - r.rho11()).norm())
        .fold(0.0, f64::max);
    outcome(
        "Maxwell-Bloch departs from the quantum reference",
        deviation > 0.05 && ensemble_ok,
        format!("max |rho11_MB - rho11_ref| = {deviation:.4} (need > 0.05), stochastic ensemble agrees: {ensemble_ok}"),
    )
}

fn relaxation() -> Outcome {
    let mut params = ModelParams::single_mode(1000.0, 1100.0, 0.0).with_rates(20.0, 60.0, 15.0);
    params.couplings = vec![0.0];
    let atom = AtomicDensity::new(0.7, Complex64::from_polar(0.3, 0.5)).unwrap();
    let grid = TimeGrid::new(0.0, 0.02, 8192).unwrap();
    let nu_start = atom.inversion();
    let closed = |t: f64| {
        let nu = params.nu0() + (nu_start - params.nu0()) * (-params.gamma1() * t).exp();
        let rho21 = atom.rho21 * c(-params.gamma2(), -params.atom_frequency).scale(t).exp();
        (nu, rho21)
    };
    let times = grid.times();

    let mut cfg = RunConfig::benchmark(Engine::Reference);
    cfg.model = params.clone();
    cfg.atom = atom;
    cfg.grid = grid;
    let deterministic_error = |sets: &[ObservableSet]| {
        times
            .iter()
            .zip(sets)
            .map(|(&t, s)| {
                let (nu, rho21) = closed(t);
                (s.nu - nu).norm().max((s.rho21 - rho21).norm())
            })
            .fold(0.0, f64::max)
    };
    let reference_error = deterministic_error(&reference_run(&cfg).sets);
    let mb = evolve_mb(&params, &MbState::from_initial(&cfg.alpha, &atom), &grid, 1).unwrap();
    let mb_error = deterministic_error(&mb.observables());

    cfg.engine = Engine::SdeJc;
    let kinds = [ObservableKind::Nu, ObservableKind::Rho21];
    let mut sde_sigma: f64 = 0.0;
    let mut sde_ok = true;
    let mut diverged = Vec::new();
    for family in [BasisFamily::CoherentSpin, additive(4.0)] {
        cfg.family = family;
        let result = run_sde_jc(&cfg, &kinds, &EnsembleOptions::default()).unwrap();
        diverged.push(format!("{} {}/{}", family.name(), result.runs_diverged, result.runs_requested));
        for (i, &t) in times.iter().enumerate() {
            let (nu, rho21) = closed(t);
            let checks = [
                (result.mean[0][i].re - nu, result.stderr_re[0][i]),
                (result.mean[1][i].re - rho21.re, result.stderr_re[1][i]),
                (result.mean[1][i].im - rho21.im, result.stderr_im[1][i]),
            ];
            for (diff, se) in checks {
                sde_sigma = sde_sigma.max(diff.abs() / se.max(STDERR_FLOOR));
                sde_ok &= within_stderr(diff.abs(), se);
            }
        }
    }
    outcome(
        "uncoupled relaxation in all engines",
        reference_error <= 1e-8 && mb_error <= 1e-8 && sde_ok,
        format!(
            "reference {reference_error:.2e}, MB {mb_error:.2e} (limit 1e-8), SDE worst {sde_sigma:.2} stderr (limit 4), diverged {}",
            diverged.join(", ")
        ),
    )
}

#[test]
fn acceptance() {
    let reference = reference_run(&RunConfig::benchmark(Engine::Reference));
    let ensemble = benchmark_ensemble();
    let c1 = ensemble_tracks_reference(&ensemble, &reference.sets);
    let c1_passed = c1.passed;
    let outcomes = [
        c1,
        additive_noise_resolves_the_ensemble(),
        factorization(),
        initialization(),
        ito_consistency(),
        reference_conservation(&reference),
        semiclassical_divergence(&reference, c1_passed),
        relaxation(),
    ];
    for (i, o) in outcomes.iter().enumerate() {
        eprintln!("criterion {} {}: {}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().enumerate().filter(|(_, o)| !o.passed).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
