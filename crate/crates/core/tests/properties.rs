mod common;

use common::*;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use pstoch::changed_vars::{drift_bar, from_physical, to_physical};
use pstoch::config::{parse_config, serialize, Engine, RunConfig};
use pstoch::mb::{mb_rhs, MbState};
use pstoch::model::{diffusion_jc_plus, noise_jc_plus};
use pstoch::reference::{build_hamiltonian, master_rhs, TruncatedSpace};
use pstoch::runner::run_sde_jc;
use pstoch::{init_points, AtomicDensity, BasisFamily, EnsembleOptions, ModelParams, PhaseState};

fn complex(scale: f64) -> impl Strategy<Value = Complex64> {
    (-scale..scale, -scale..scale).prop_map(|(re, im)| c(re, im))
}

fn family() -> impl Strategy<Value = BasisFamily> {
    prop_oneof![
        Just(BasisFamily::CoherentSpin),
        (1.0..6.0f64, -0.4..0.4f64, complex(0.5)).prop_map(|(r, phi, kappa)| {
            BasisFamily::additive_noise(Complex64::from_polar(r, phi), kappa).unwrap()
        }),
    ]
}

fn params(modes: usize) -> impl Strategy<Value = ModelParams> {
    (
        500.0..1500.0f64,
        prop::collection::vec(50.0..400.0f64, modes),
        prop::collection::vec(-300.0..300.0f64, modes),
        0.05..0.95f64,
        (0.0..80.0f64, 0.0..80.0f64, 0.0..80.0f64),
    )
        .prop_map(|(omega, gaps, couplings, x0, (r12, r21, rp))| {
            let mut p = ModelParams::single_mode(omega, 1.0, 1.0);
            let mut w = 400.0;
            p.mode_frequencies = gaps.iter().map(|g| {
                w += g;
                w
            }).collect();
            p.couplings = couplings;
            p.atom_position = x0;
            p.with_rates(r12, r21, rp)
        })
}

fn phase_state(modes: usize) -> impl Strategy<Value = PhaseState> {
    (
        prop::collection::vec(complex(2.0), modes),
        prop::collection::vec(complex(2.0), modes),
        complex(1.2),
        complex(1.2),
    )
        .prop_map(|(alpha, beta, z, w)| PhaseState { alpha, beta, z, w })
}

fn regular(family: &BasisFamily, s: &PhaseState) -> bool {
    (1.0 + h_of(family, s.z) * htilde_of(family, s.w)).norm() > 0.25
        && h_prime_of(family, s.z).norm() > 1e-2
        && htilde_prime_of(family, s.w).norm() > 1e-2
}

fn density() -> impl Strategy<Value = AtomicDensity> {
    (0.02..0.98f64, 0.0..1.0f64, -3.1..3.1f64).prop_map(|(p, frac, phi)| {
        let r = frac * (p * (1.0 - p)).sqrt();
        AtomicDensity::new(p, Complex64::from_polar(r, phi)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn basis_inverse_round_trips(family in family(), target in complex(3.0)) {
        let z = family.invert_h(target).unwrap();
        prop_assert!((family.eval(z, z).unwrap().h - target).norm() <= 1e-10 * (1.0 + target.norm()));
        let w = family.invert_htilde(target).unwrap();
        prop_assert!((family.eval(w, w).unwrap().htilde - target).norm() <= 1e-10 * (1.0 + target.norm()));
    }

    #[test]
    fn init_mixture_reproduces_density(family in family(), rho in density()) {
        let dist = init_points(&rho, &family).unwrap();
        let weights: f64 = dist.points.iter().map(|p| p.weight).sum();
        prop_assert!((weights - 1.0).abs() < 1e-14);
        prop_assert!(dist.points.iter().all(|p| p.weight >= 0.0));
        let got = dist.reconstruct(&family).unwrap();
        let want = rho.as_matrix();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((got[i][j] - want[i][j]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn noise_factorizes_diffusion(family in family(), p in params(2), s in phase_state(2)) {
        prop_assume!(regular(&family, &s));
        let b = noise_jc_plus(&p, &family, &s).unwrap();
        let d = diffusion_jc_plus(&p, &family, &s).unwrap();
        prop_assert!(relative_error(&b.dot(&b.t()), &d) <= 1e-12);
        prop_assert!(relative_error(&d, &diffusion_oracle(&p, &family, &s, true)) <= 1e-12);
    }

    #[test]
    fn change_of_variables_round_trips(family in family(), s in phase_state(2)) {
        prop_assume!(regular(&family, &s));
        let phys = to_physical(&family, &s).unwrap();
        prop_assume!((1.0 - phys.nu).norm() > 1e-2);
        let back = from_physical(&family, &phys).unwrap();
        let again = to_physical(&family, &back).unwrap();
        prop_assert!(max_abs_diff(&again.flatten(), &phys.flatten()) <= 1e-9 * (1.0 + phys.flatten().iter().map(|v| v.norm()).fold(0.0, f64::max)));
    }

    #[test]
    fn mb_rhs_is_the_physical_drift_on_the_hermitian_slice(
        p in params(2),
        eps in prop::collection::vec(-3.0..3.0f64, 2),
        eta in prop::collection::vec(-3.0..3.0f64, 2),
        rho21 in complex(0.5),
        nu in -1.0..1.0f64,
    ) {
        let s = MbState { eps, eta, rho21, nu };
        let got = mb_rhs(&p, &s).to_phys().flatten();
        let want = drift_bar(&p, &s.to_phys()).unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn master_equation_preserves_trace_and_hermiticity(p in params(1), seed in any::<u64>()) {
        let space = TruncatedSpace::new(4, 1, 4096).unwrap();
        let h = build_hamiltonian(&p, &space).unwrap();
        let mut r = rng(seed);
        let dim = space.dim();
        let a = Array2::from_shape_fn((dim, dim), |_| random_complex(&mut r, 1.0));
        let rho = a.dot(&a.t().mapv(|v| v.conj()));
        let mut out = Array2::zeros((dim, dim));
        master_rhs(&p, &h, &rho, &mut out);
        let scale = frobenius(&out).max(1.0);
        let trace: Complex64 = out.diag().sum();
        prop_assert!(trace.norm() <= 1e-12 * scale);
        let skew = &out - &out.t().mapv(|v| v.conj());
        prop_assert!(frobenius(&skew) <= 1e-12 * scale);
    }

    #[test]
    fn configs_round_trip(p in params(2), seed in any::<u64>(), runs in 1usize..100_000, steps in 1usize..100_000, rho in density(), alpha in prop::collection::vec(complex(5.0), 2)) {
        let mut cfg = RunConfig::benchmark(Engine::SdeJc);
        cfg.model = p;
        cfg.seed = seed;
        cfg.runs = runs;
        cfg.grid.steps = steps;
        cfg.atom = rho;
        cfg.alpha = alpha;
        prop_assert_eq!(parse_config(&serialize(&cfg)).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensembles_do_not_depend_on_worker_count(seed in any::<u64>(), runs in 1usize..100, workers in 2usize..9) {
        let mut cfg = RunConfig::benchmark(Engine::SdeJc);
        cfg.seed = seed;
        cfg.runs = runs;
        cfg.grid.steps = 32;
        let kinds = cfg.columns();
        let serial = EnsembleOptions { workers: 1, ..EnsembleOptions::default() };
        let parallel = EnsembleOptions { workers, ..EnsembleOptions::default() };
        let a = run_sde_jc(&cfg, &kinds, &serial).unwrap();
        let b = run_sde_jc(&cfg, &kinds, &parallel).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
