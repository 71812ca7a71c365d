//! Randomized invariants across the modules.

use std::sync::OnceLock;

use eqstate::cones::{self, DEFAULT_Z_SAMPLES};
use eqstate::equilibrium::{self, ScanOptions};
use eqstate::grid::Grid;
use eqstate::perturbation::{self, CylinderAveraging, NoiseModel};
use eqstate::statistics::{self, Estimator, Observable};
use eqstate::symbolic;
use eqstate::transfer::CylinderModel;
use eqstate::{MapSpec, MarkovMap, Potential, RunConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench() -> &'static MarkovMap {
    static M: OnceLock<MarkovMap> = OnceLock::new();
    M.get_or_init(|| MarkovMap::benchmark(0.1).unwrap())
}

/// B(0.1) with `phi = 0.5 x` at depth 10.
fn bench_model() -> &'static CylinderModel {
    static M: OnceLock<CylinderModel> = OnceLock::new();
    M.get_or_init(|| CylinderModel::new(bench(), &Potential::linear(0.0, 0.5), 10).unwrap())
}

fn bench_grid() -> &'static Grid {
    static G: OnceLock<Grid> = OnceLock::new();
    G.get_or_init(|| Grid::new(bench(), 32).unwrap())
}

fn maps() -> Vec<MarkovMap> {
    vec![MarkovMap::doubling(), MarkovMap::tripling(), MarkovMap::golden_mean(), bench().clone()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn preimages_compose_and_split_by_atom(delta0 in 0.01f64..0.2, x in 0.0f64..1.0) {
        let mut all = maps();
        all.push(MarkovMap::benchmark(delta0).unwrap());
        for m in &all {
            let pre = m.preimages(x).unwrap();
            let target = m.atom_of(x).unwrap();
            let column = (0..m.num_atoms()).filter(|&i| m.allowed(i, target)).count();
            prop_assert_eq!(pre.len(), column);
            let mut atoms: Vec<usize> = pre.iter().map(|&y| m.atom_of(y).unwrap()).collect();
            for &y in &pre {
                prop_assert!((m.eval(y).unwrap() - x).abs() <= 1e-10);
            }
            atoms.dedup();
            prop_assert_eq!(atoms.len(), pre.len());
        }
    }

    #[test]
    fn itineraries_are_admissible(x in 0.0f64..1.0, n in 1usize..30) {
        for m in maps() {
            let w = symbolic::itinerary(&m, x, n).unwrap();
            prop_assert!(symbolic::is_admissible(&m, &w));
            let (a, b) = symbolic::cylinder_interval(&m, &w).unwrap();
            prop_assert!(a <= x && x < b + 1e-12);
        }
    }

    #[test]
    fn pliss_returns_exactly_the_passing_indices(b in prop::collection::vec(-2.0f64..2.0, 1..80), c1 in 0.05f64..0.5) {
        let got = symbolic::record_times(&b, c1);
        let want: Vec<usize> = (1..=b.len())
            .filter(|&m| (1..=m).all(|j| b[j - 1..m].iter().map(|v| v - c1).sum::<f64>() >= -1e-12))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn hyperbolic_times_satisfy_the_definition(x in 0.0f64..1.0, n in 1usize..25) {
        let m = bench();
        let c = 0.1;
        let mut derivs = Vec::new();
        let mut y = x;
        for _ in 0..n {
            derivs.push(m.derivative(y).unwrap().abs());
            y = m.eval(y).unwrap();
        }
        let times = symbolic::hyperbolic_times(m, x, n, c).unwrap();
        for t in 1..=n {
            let ok = (1..=t).all(|j| {
                let prod: f64 = derivs[t - j..t].iter().map(|d| 1.0 / d).product();
                prod <= (-2.0 * c * j as f64).exp() * (1.0 + 1e-12)
            });
            prop_assert_eq!(ok, times.contains(&t), "time {}", t);
        }
    }

    #[test]
    fn nu_is_a_left_eigenvector(seed in any::<u64>()) {
        let model = bench_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let g: Vec<f64> = (0..model.system.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lg = model.apply_normalized(&g);
        let nu = &model.spectral.nu;
        let lhs: f64 = lg.iter().zip(nu).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(nu).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn cone_metric_symmetry_scaling_triangle(seed in any::<u64>(), a in 0.1f64..10.0, b in 0.1f64..10.0) {
        let grid = bench_grid();
        let l = 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<_> = (0..3).map(|_| cones::random_cone_function(grid, l, 1.0, &mut rng)).collect();
        let d = |x: &eqstate::grid::GridFunction, y: &eqstate::grid::GridFunction| {
            cones::cone_metric(x, y, l, 1.0, DEFAULT_Z_SAMPLES).unwrap().psi
        };
        let d01 = d(&f[0], &f[1]);
        prop_assert!((d01 - d(&f[1], &f[0])).abs() <= 1e-9);
        let scaled = d(&f[0].scaled(a), &f[1].scaled(b));
        prop_assert!((scaled - d01).abs() <= 1e-9 * d01.max(1.0));
        prop_assert!(d(&f[0], &f[2]) <= d01 + d(&f[1], &f[2]) + 1e-9);
    }

    #[test]
    fn smaller_cone_nests(seed in any::<u64>(), sigma in 0.1f64..0.99) {
        let grid = bench_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = cones::random_cone_function(grid, sigma * 20.0, 1.0, &mut rng);
        prop_assert!(cones::in_cone(&g, sigma * 20.0, 1.0).inside);
        prop_assert!(cones::in_cone(&g, 20.0, 1.0).inside);
    }

    #[test]
    fn g_sums_to_one(x in 0.0f64..1.0) {
        let s = equilibrium::g_sum(bench(), &Potential::linear(0.0, 0.5), bench_model(), x).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-6, "{}", s);
    }

    #[test]
    fn correlation_is_bilinear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let u = Observable::Sine { frequency: 1 };
        let v = Observable::Cosine { frequency: 2 };
        let au = Observable::Affine { scale: a, offset: b, base: Box::new(u.clone()) };
        let model = bench_model();
        let c = statistics::correlation(bench(), model, &u, &v, 6, Estimator::Quadrature).unwrap();
        let ca = statistics::correlation(bench(), model, &au, &v, 6, Estimator::Quadrature).unwrap();
        for (x, y) in c.values.iter().zip(&ca.values) {
            prop_assert!((a * x - y).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn config_round_trips(depth in 1usize..=20, gamma in 0.01f64..0.99, seed in any::<u64>(), delta0 in 0.01f64..0.3) {
        let cfg = RunConfig { depth, gamma, seed, map: MapSpec::Benchmark { delta0 }, ..RunConfig::default() };
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), cfg.to_json());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda_bounds_and_shift_covariance(v in prop::collection::vec(0.0f64..1.0, 3), t in -2.0f64..2.0) {
        let m = bench();
        let p = Potential::per_atom(v.clone());
        let model = CylinderModel::new(m, &p, 6).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lam = model.lambda();
        prop_assert!(3.0 * lo.exp() * (1.0 - 1e-12) <= lam && lam <= 3.0 * hi.exp() * (1.0 + 1e-12));
        prop_assert!(model.spectral.nu.iter().all(|&x| x > 0.0));

        let shifted = CylinderModel::new(m, &p.shifted(t), 6).unwrap();
        prop_assert!((shifted.lambda() / lam - t.exp()).abs() <= 1e-12 * t.exp());
        for (a, b) in model.spectral.h.iter().zip(&shifted.spectral.h) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs());
        }
        for (a, b) in model.spectral.nu.iter().zip(&shifted.spectral.nu) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs());
        }
    }

    #[test]
    fn scan_maximizer_ignores_constant_shifts(v in prop::collection::vec(-0.5f64..0.5, 2), t in -2.0f64..2.0) {
        let m = MarkovMap::doubling();
        let p = Potential::per_atom(v);
        let opts = ScanOptions { max_grid: 2000, ..ScanOptions::default() };
        let a = equilibrium::variational_scan(&m, &p, opts).unwrap().best.unwrap();
        let b = equilibrium::variational_scan(&m, &p.shifted(t), opts).unwrap().best.unwrap();
        for (x, y) in a.stationary.iter().zip(&b.stationary) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
        prop_assert!((b.value - a.value - t).abs() <= 1e-9);
    }

    #[test]
    fn noise_conserves_mass_and_positivity(eps in 0.001f64..0.02, seed in any::<u64>()) {
        use rand::Rng;
        let m = bench();
        let model = CylinderModel::new(m, &Potential::linear(0.0, 0.5), 6).unwrap();
        let noise = NoiseModel::new(eps, 17).unwrap();
        let s = perturbation::perturbed_spectrum(m, &model, &noise).unwrap();
        let avg = CylinderAveraging::new(&model.system, &noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..model.system.len()).map(|_| rng.gen_range(0.01..1.0)).collect();
        let lg: Vec<f64> = avg.apply(&model.matrix.mul(&g)).iter().map(|x| x / s.lambda).collect();
        prop_assert!(lg.iter().all(|&x| x > 0.0));
        let lhs: f64 = lg.iter().zip(&s.nu).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(&s.nu).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-8, "{} vs {}", lhs, rhs);
    }
}

#[test]
fn benchmark_family_shape() {
    for delta0 in [0.01, 0.05, 0.1] {
        let m = MarkovMap::benchmark(delta0).unwrap();
        assert!((m.derivative(0.0).unwrap() - 1.0 / (1.0 + delta0)).abs() <= 1e-12);
        assert!((m.min_derivative() - 1.0 / (1.0 + delta0)).abs() <= 1e-12);
        assert!(m.eval(0.0).unwrap().abs() <= 1e-12);
        assert!((m.branches()[0].value(1.0 / 3.0) - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn branches_are_monotone() {
    for m in maps() {
        for (i, atom) in m.atoms().iter().enumerate() {
            let signs: Vec<bool> = (1..=100)
                .map(|k| m.derivative_in_atom(i, atom.left + atom.length() * k as f64 / 101.0) > 0.0)
                .collect();
            assert!(signs.iter().all(|&s| s == signs[0]));
        }
    }
}

#[test]
fn hyperbolic_cylinders_shrink() {
    let m = bench();
    let c = eqstate::hypotheses::equality_c(m, 0.9);
    // Words of length n include the last branch, so the whole product of
    // inverse derivatives is a tail and the image of the last atom has length <= 1.
    for n in 1..=8 {
        for w in symbolic::hyperbolic_cylinders(m, n, c, 14).unwrap() {
            let (a, b) = symbolic::cylinder_interval(m, &w).unwrap();
            assert!(b - a <= (-2.0 * c * n as f64).exp() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn equilibrium_measure_is_normalized_and_invariant() {
    let e = equilibrium::equilibrium_measure(bench_model());
    assert!((e.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!(e.weights.iter().all(|&w| w >= 0.0));
    assert!(e.invariance_defect <= 1e-10, "{}", e.invariance_defect);
}

#[test]
fn jensen_gap_vanishes_only_at_the_equilibrium() {
    let m = MarkovMap::doubling();
    let p = Potential::per_atom(vec![0.0, std::f64::consts::LN_2]);
    let model = CylinderModel::new(&m, &p, 6).unwrap();
    let mu = equilibrium::equilibrium_measure(&model).weights;
    assert!(equilibrium::jensen_gap(&p, &model, &mu).unwrap().abs() <= 1e-8);
    // Move 5% of the mass of each row toward the first symbol.
    let q = vec![vec![0.35, 0.65], vec![0.35, 0.65]];
    let pi = equilibrium::stationary_distribution(&q).unwrap();
    let eta = equilibrium::markov_cylinder_weights(&model.system, &q, &pi);
    assert!(equilibrium::jensen_gap(&p, &model, &eta).unwrap() < -1e-4);
}

#[test]
fn orbit_estimator_is_seeded_and_thread_independent() {
    let model = bench_model();
    let u = Observable::Sine { frequency: 1 };
    let est = Estimator::Orbit { length: 50_000, seed: 11 };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| statistics::correlation(bench(), model, &u, &u, 6, est).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.values), bits(&b.values));
    let q = statistics::correlation(bench(), model, &u, &u, 6, Estimator::Quadrature).unwrap();
    for n in 0..=6 {
        assert!((a.values[n] - q.values[n]).abs() <= 3.0 * a.stderr[n] + 1e-3, "lag {n}");
    }
}

#[test]
fn doubling_the_cutoff_stays_within_the_tail_bound() {
    let m = MarkovMap::benchmark(0.1).unwrap();
    let model = CylinderModel::new(&m, &Potential::zero(), 10).unwrap();
    let u = Observable::Sine { frequency: 1 };
    let a = statistics::green_kubo_variance(&m, &model, &u, 4).unwrap();
    let b = statistics::green_kubo_variance(&m, &model, &u, 8).unwrap();
    assert!((a.sigma2 - b.sigma2).abs() <= a.tail_bound + 1e-9, "{a:?} {b:?}");
}
