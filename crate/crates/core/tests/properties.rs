use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvbo_core::bounds::{
    mutual_info_exact, mutual_info_spectral, product_operator_spectrum, truncated_gaussian_mean, uniform_points,
};
use tvbo_core::gp::{mercer_posterior, sample_prior_path, Dataset, GpPosterior, Observation, DEFAULT_SAMPLE_CAP};
use tvbo_core::kernels::{
    low_rank_approx, CosineTerm, LowRankKernel, MaternNu, ProductKernel, SpatialKernel, SpectralValue, TemporalKernel,
};
use tvbo_core::linalg::Matrix;
use tvbo_core::spectral::{
    approx_product_spectrum, approx_temporal_spectrum, build_spatiotemporal_matrix, build_temporal_matrix,
    circulant_eigenvalues, circulant_embedding, eig_sym, Scale, SpaceTimePoint, Spectrum, SymMatrix, TimeGrid,
};
use tvbo_core::tvbo::{run_tvbo, TvboConfig};

fn nu() -> impl Strategy<Value = MaternNu> {
    prop_oneof![Just(MaternNu::Half), Just(MaternNu::ThreeHalves), Just(MaternNu::FiveHalves)]
}

fn low_rank() -> impl Strategy<Value = LowRankKernel> {
    (0.0..1.0f64, prop::collection::vec((0.05..3.0f64, 0.01..1.0f64), 0..4)).prop_map(|(c0, raw)| {
        let total: f64 = c0 + raw.iter().map(|t| t.1).sum::<f64>();
        let terms = raw.iter().map(|&(frequency, w)| CosineTerm { frequency, weight: w / total }).collect::<Vec<_>>();
        let constant = 1.0 - terms.iter().map(|t| t.weight).sum::<f64>();
        LowRankKernel::new(constant.max(0.0), terms).unwrap()
    })
}

fn continuous_kernel() -> impl Strategy<Value = TemporalKernel> {
    prop_oneof![
        (0.2..3.0f64).prop_map(|l| TemporalKernel::rbf(l).unwrap()),
        (nu(), 0.2..3.0f64).prop_map(|(n, l)| TemporalKernel::matern(n, l).unwrap()),
        (0.3..3.0f64, 0.6..5.0f64).prop_map(|(l, a)| TemporalKernel::rational_quadratic(l, a).unwrap()),
        (0.2..3.0f64).prop_map(|t| TemporalKernel::sinc(t).unwrap()),
        (0.2..3.0f64).prop_map(|t| TemporalKernel::sinc_squared(t).unwrap()),
    ]
}

fn any_kernel() -> impl Strategy<Value = TemporalKernel> {
    prop_oneof![
        4 => continuous_kernel(),
        1 => (0.3..3.0f64, 0.3..3.0f64).prop_map(|(r, l)| TemporalKernel::periodic(r, l).unwrap()),
        1 => low_rank().prop_map(|k| TemporalKernel::cosine_sum(k).unwrap()),
    ]
}

fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    (0..=n).map(|i| if i == 0 || i == n { 0.5 } else { 1.0 } * f(lo + i as f64 * h)).sum::<f64>() * h
}

/// Half-width of a frequency window holding at least 99.9% of the spectral mass.
fn mass_window(k: &TemporalKernel) -> f64 {
    match *k {
        TemporalKernel::Rbf { lengthscale } => 3.5 / (2.0 * std::f64::consts::PI * lengthscale),
        TemporalKernel::Matern { nu, lengthscale } => {
            let tail = match nu {
                MaternNu::Half => 4000.0,
                MaternNu::ThreeHalves => 60.0,
                MaternNu::FiveHalves => 20.0,
            };
            tail / lengthscale
        }
        TemporalKernel::RationalQuadratic { lengthscale, .. } => 8.0 / lengthscale,
        TemporalKernel::Sinc { bandlimit } | TemporalKernel::SincSquared { bandlimit } => bandlimit,
        _ => unreachable!(),
    }
}

fn min_eigenvalue(m: &SymMatrix) -> f64 {
    *eig_sym(m, false).unwrap().values.last().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernels_are_even(k in any_kernel(), lags in prop::collection::vec(-50.0..50.0f64, 1000)) {
        for u in lags {
            prop_assert_eq!(k.eval(u), k.eval(-u));
        }
    }

    #[test]
    fn densities_are_nonnegative(k in any_kernel()) {
        for i in -2000..=2000 {
            let w = i as f64 * 0.005;
            match k.spectral_density(w) {
                SpectralValue::Density(s) => prop_assert!(s >= -1e-12, "S({w}) = {s}"),
                SpectralValue::Lines(lines) => {
                    prop_assert!(lines.iter().all(|l| l.weight >= -1e-12));
                    let total: f64 = lines.iter().map(|l| l.weight).sum();
                    prop_assert!((total - 1.0).abs() < 1e-9);
                    break;
                }
            }
        }
    }

    #[test]
    fn kernel_matrices_are_psd(k in any_kernel(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let size = rng.random_range(1..=40);
            let times: Vec<f64> = (0..size).map(|_| rng.random_range(0.0..20.0)).collect();
            let m = Matrix::from_fn(size, size, |i, j| k.eval(times[i] - times[j]));
            let m = SymMatrix::new(m).unwrap();
            prop_assert!(min_eigenvalue(&m) >= -1e-8);
        }
    }

    #[test]
    fn temporal_matrices_are_toeplitz(k in any_kernel(), n in 2usize..40, delta in 0.01..2.0f64) {
        let m = build_temporal_matrix(&k, TimeGrid::new(n, delta).unwrap());
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                prop_assert_eq!(m.get(i, j), m.get(i + 1, j + 1));
            }
        }
    }

    #[test]
    fn heap_product_equals_brute_force(
        s in prop::collection::vec(0.0..5.0f64, 1..30),
        t in prop::collection::vec(0.0..5.0f64, 1..30),
        n in 1usize..=30,
    ) {
        let s = Spectrum::from_values(s, Scale::Matrix);
        let t = Spectrum::from_values(t, Scale::Matrix);
        let mut brute: Vec<f64> = s.values.iter().flat_map(|a| t.values.iter().map(move |b| a * b / n as f64)).collect();
        brute.sort_by(|a, b| b.total_cmp(a));
        brute.truncate(n);
        let p = approx_product_spectrum(&s, &t, n);
        prop_assert_eq!(&p.spectrum.values, &brute);
        for (v, &(i, j)) in p.spectrum.values.iter().zip(&p.pairs) {
            prop_assert_eq!(*v, s.values[i] * t.values[j] / n as f64);
        }
    }

    #[test]
    fn low_rank_rank_bound(k in low_rank(), extra in 0usize..40, delta in 0.05..0.9f64) {
        let l = k.terms.len();
        let n = 2 * l + 2 + extra;
        let m = build_temporal_matrix(&TemporalKernel::CosineSum(k), TimeGrid::new(n, delta).unwrap());
        prop_assert!(eig_sym(&m, false).unwrap().positive_count() <= 2 * l + 1);
    }

    #[test]
    fn dct_round_trip(r in 0.3..3.0f64, l in 0.5..3.0f64, delta in 0.05..1.0f64, n in 2usize..80) {
        let k = TemporalKernel::periodic(r, l).unwrap();
        let approx = low_rank_approx(&k, delta, n, 1e-12).unwrap();
        prop_assert!(approx.residual <= 1e-12);
        for j in 0..n {
            let u = j as f64 * delta;
            prop_assert!((approx.kernel.eval(u) - k.eval(u)).abs() <= 1e-10);
        }
    }

    #[test]
    fn commensurate_periodic_rank(r in 0.5..3.0f64, l in 0.5..2.0f64, k in prop_oneof![Just(3usize), Just(6usize)], n in 12usize..120) {
        let kernel = TemporalKernel::periodic(r, l).unwrap();
        let m = build_temporal_matrix(&kernel, TimeGrid::new(n, r / k as f64).unwrap());
        prop_assert_eq!(eig_sym(&m, false).unwrap().positive_count(), k);
    }

    #[test]
    fn truncated_mean_dominates_and_increases(mu in -5.0..5.0f64, s1 in 0.0..4.0f64, ds in 0.01..2.0f64) {
        let lo = truncated_gaussian_mean(mu, s1);
        prop_assert!(lo >= mu.max(0.0));
        let hi = truncated_gaussian_mean(mu, s1 + ds);
        prop_assert!(hi >= lo);
        // the increment σφ(μ/σ) underflows once |μ|/σ is large
        if mu.abs() <= 8.0 * (s1 + ds) {
            prop_assert!(hi > lo, "E at σ={s1}: {lo}, at σ={}: {hi}", s1 + ds);
        }
    }

    #[test]
    fn posterior_variance_stays_in_unit_interval(seed in any::<u64>(), size in 1usize..15, noise in prop_oneof![Just(0.0), 1e-4..1.0f64]) {
        let k = ProductKernel::new(SpatialKernel::rbf_iso(0.2, 2).unwrap(), TemporalKernel::matern(MaternNu::ThreeHalves, 0.8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..size)
            .map(|i| Observation { x: vec![rng.random(), rng.random()], t: 0.1 * (i + 1) as f64, y: rng.random_range(-3.0..3.0) })
            .collect();
        let post = GpPosterior::new(k, Dataset::from_records(noise, records).unwrap()).unwrap();
        for _ in 0..20 {
            let (_, v) = post.predict(&[rng.random(), rng.random()], rng.random_range(0.0..2.0));
            prop_assert!((-1e-8..=1.0 + 1e-8).contains(&v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn continuous_densities_integrate_to_one(k in continuous_kernel()) {
        let w = mass_window(&k);
        let scale = match k {
            TemporalKernel::Sinc { .. } | TemporalKernel::SincSquared { .. } => 1.0,
            _ => 0.05,
        };
        // ω = scale·sinh(s) spreads nodes over both the peak and the heavy tails
        let a = (w / scale).asinh();
        let total = trapezoid(|s| k.density(scale * s.sinh()).unwrap() * scale * s.cosh(), -a, a, 40_000);
        prop_assert!((total - 1.0).abs() <= 1e-3, "{} integrates to {total}", k.family_name());
    }

    #[test]
    fn regret_is_never_negative(seed in any::<u64>(), horizon in 1usize..25) {
        let config = TvboConfig { seed, horizon, resolution: 11, ..TvboConfig::with_temporal(TemporalKernel::rbf(0.5).unwrap()) };
        let trace = run_tvbo(&config).unwrap();
        prop_assert!(trace.steps.iter().all(|s| s.regret >= 0.0));
        prop_assert_eq!(trace, run_tvbo(&config).unwrap());
    }
}

#[test]
fn conditioning_never_increases_variance() {
    let k = ProductKernel::new(SpatialKernel::rbf_iso(0.25, 1).unwrap(), TemporalKernel::rbf(0.7).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let size = rng.random_range(0..12);
        let noise = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(1e-4..0.5) };
        let mut post = GpPosterior::new(k.clone(), Dataset::new(noise).unwrap()).unwrap();
        let queries: Vec<(f64, f64)> = (0..10).map(|_| (rng.random(), rng.random_range(0.0..3.0))).collect();
        for i in 0..=size {
            let before: Vec<f64> = queries.iter().map(|q| post.predict(&[q.0], q.1).1).collect();
            let obs = Observation { x: vec![rng.random()], t: 0.2 * (i + 1) as f64, y: rng.random_range(-2.0..2.0) };
            post = post.conditioned(obs).unwrap();
            for (q, b) in queries.iter().zip(&before) {
                assert!(post.predict(&[q.0], q.1).1 <= b + 1e-8);
            }
        }
    }
}

#[test]
fn circulant_and_toeplitz_spectra_converge() {
    let k = TemporalKernel::rbf(1.0).unwrap();
    let mad: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&n| {
            let grid = TimeGrid::new(n, 0.1).unwrap();
            let exact = eig_sym(&build_temporal_matrix(&k, grid), false).unwrap();
            let mut circ = circulant_eigenvalues(&circulant_embedding(&k, grid));
            circ.sort_by(|a, b| b.total_cmp(a));
            exact.values.iter().zip(&circ).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64
        })
        .collect();
    assert!(mad.windows(2).all(|w| w[1] < w[0]), "{mad:?}");
}

#[test]
fn density_samples_converge_to_the_spectrum() {
    for k in [
        TemporalKernel::rbf(1.0).unwrap(),
        TemporalKernel::matern(MaternNu::FiveHalves, 1.0).unwrap(),
        TemporalKernel::sinc_squared(1.0).unwrap(),
    ] {
        let mae: Vec<f64> = [50, 100, 200, 400]
            .iter()
            .map(|&n| {
                let grid = TimeGrid::new(n, 0.1).unwrap();
                let exact = eig_sym(&build_temporal_matrix(&k, grid), false).unwrap();
                let approx = approx_temporal_spectrum(&k, grid).unwrap().spectrum;
                exact.values.iter().zip(&approx.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64
            })
            .collect();
        assert!(mae.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{}: {mae:?}", k.family_name());
    }
}

#[test]
fn prior_draws_reproduce_the_kernel() {
    let k = ProductKernel::new(SpatialKernel::rbf_iso(0.3, 1).unwrap(), TemporalKernel::rbf(0.5).unwrap());
    let xs = vec![vec![0.2], vec![0.6]];
    let grid = TimeGrid::new(2, 0.4).unwrap();
    let draws = 500;
    let cells = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let samples: Vec<[f64; 4]> = (0..draws)
        .map(|seed| {
            let f = sample_prior_path(&k, &xs, grid, seed, DEFAULT_SAMPLE_CAP).unwrap();
            cells.map(|(i, j)| f[(i, j)])
        })
        .collect();
    let kv = |a: (usize, usize), b: (usize, usize)| k.eval(&xs[a.0], grid.time(a.1), &xs[b.0], grid.time(b.1));
    for a in 0..4 {
        for b in 0..4 {
            let products: Vec<f64> = samples.iter().map(|s| s[a] * s[b]).collect();
            let est = products.iter().sum::<f64>() / draws as f64;
            let truth = kv(cells[a], cells[b]);
            let se = ((kv(cells[a], cells[a]) * kv(cells[b], cells[b]) + truth * truth) / draws as f64).sqrt();
            assert!((est - truth).abs() <= 3.0 * se, "cov[{a}][{b}] = {est}, expected {truth} ± {se}");
        }
    }
}

#[test]
fn mutual_information_grows_with_the_dataset() {
    let k = ProductKernel::new(SpatialKernel::rbf_iso(0.2, 1).unwrap(), TemporalKernel::rbf(1.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let m = rng.random_range(1..n);
        let noise = rng.random_range(1e-3..1.0);
        let pts: Vec<SpaceTimePoint> =
            (0..n).map(|i| SpaceTimePoint::new(vec![rng.random()], 0.1 * (i + 1) as f64)).collect();
        let full = build_spatiotemporal_matrix(&k.spatial, &k.temporal, &pts).unwrap();
        let sub = full.leading(m);
        assert!(mutual_info_exact(&sub, noise).unwrap() <= mutual_info_exact(&full, noise).unwrap() + 1e-12);
    }
}

/// Mean absolute deviation of Mercer mean and variance from the exact posterior at the data.
fn mercer_deviation(n: usize) -> (f64, f64) {
    let k = ProductKernel::new(SpatialKernel::rbf_iso(0.2, 1).unwrap(), TemporalKernel::rbf(1.0).unwrap());
    let xs = uniform_points(0, 0, n, 1);
    let grid = TimeGrid::new(n, 0.1).unwrap();
    let f = sample_prior_path(&k, &xs, grid, 0, DEFAULT_SAMPLE_CAP).unwrap();
    let records = (0..n).map(|i| Observation { x: xs[i].clone(), t: grid.time(i), y: f[(i, i)] }).collect();
    let data = Dataset::from_records(0.01, records).unwrap();
    let pts = data.points();
    let spectrum = eig_sym(&build_spatiotemporal_matrix(&k.spatial, &k.temporal, &pts).unwrap(), true).unwrap();
    let post = GpPosterior::new(k.clone(), data.clone()).unwrap();
    let (mut dm, mut dv) = (0.0, 0.0);
    for p in &pts {
        let (am, av) = mercer_posterior(&k, &spectrum, &data, &p.x, p.t).unwrap();
        let (em, ev) = post.predict(&p.x, p.t);
        dm += (am - em).abs();
        dv += (av - ev).abs();
    }
    (dm / n as f64, dv / n as f64)
}

#[test]
fn mercer_approximation_improves_with_n() {
    let (m50, v50) = mercer_deviation(50);
    let (m200, v200) = mercer_deviation(200);
    assert!(m200 < m50, "mean deviation {m50} -> {m200}");
    assert!(v200 < v50, "variance deviation {v50} -> {v200}");
}

fn spectral_gap(kt: TemporalKernel, n: usize) -> f64 {
    let k = ProductKernel::new(SpatialKernel::rbf_iso(0.2, 1).unwrap(), kt);
    let (delta, noise) = (0.1, 0.01);
    let xs = uniform_points(0, 0, n, 1);
    let pts: Vec<SpaceTimePoint> =
        xs.iter().enumerate().map(|(i, x)| SpaceTimePoint::new(x.clone(), (i + 1) as f64 * delta)).collect();
    let exact = mutual_info_exact(&build_spatiotemporal_matrix(&k.spatial, &k.temporal, &pts).unwrap(), noise).unwrap();
    let spectral = mutual_info_spectral(&product_operator_spectrum(&k, &xs, delta).unwrap().spectrum, n, noise).unwrap();
    (spectral - exact).abs() / exact
}

fn assert_gap_narrows(kt: TemporalKernel) {
    let name = kt.family_name();
    let (g50, g200) = (spectral_gap(kt.clone(), 50), spectral_gap(kt, 200));
    assert!(g200 < g50, "{name}: relative gap {g50:.4} at n=50, {g200:.4} at n=200");
}

#[test]
fn spectral_information_gap_narrows_broadband() {
    assert_gap_narrows(TemporalKernel::rbf(1.0).unwrap());
}

#[test]
fn spectral_information_gap_narrows_band_limited() {
    assert_gap_narrows(TemporalKernel::sinc_squared(1.0).unwrap());
}

#[test]
fn spectral_information_gap_narrows_almost_periodic() {
    assert_gap_narrows(TemporalKernel::periodic(1.0, 1.0).unwrap());
}

#[test]
fn spectral_information_gap_narrows_low_rank() {
    assert_gap_narrows(TemporalKernel::cosine_sum(LowRankKernel::from_pairs(0.5, &[(1.0, 0.5)]).unwrap()).unwrap());
}
