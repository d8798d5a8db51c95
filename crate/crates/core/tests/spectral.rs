use approx::assert_abs_diff_eq;
use tvbo_core::kernels::{LowRankKernel, SpatialKernel, TemporalKernel};
use tvbo_core::linalg::Matrix;
use tvbo_core::spectral::{
    approx_lowrank_spectrum, approx_product_spectrum, approx_temporal_spectrum, build_spatiotemporal_matrix,
    build_temporal_matrix, circulant_embedding, count_in_interval, eig_sym, Scale, SpaceTimePoint, SpectralError,
    Spectrum, SymMatrix, TimeGrid,
};

fn grid(n: usize, delta: f64) -> TimeGrid {
    TimeGrid::new(n, delta).unwrap()
}

fn rbf(l: f64) -> TemporalKernel {
    TemporalKernel::rbf(l).unwrap()
}

fn cosine(c0: f64, pairs: &[(f64, f64)]) -> TemporalKernel {
    TemporalKernel::cosine_sum(LowRankKernel::from_pairs(c0, pairs).unwrap()).unwrap()
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn single_point_temporal_matrix() {
    let m = build_temporal_matrix(&TemporalKernel::periodic(1.0, 1.0).unwrap(), grid(1, 0.3));
    assert_eq!(m.matrix().as_slice(), &[1.0]);
}

#[test]
fn rbf_temporal_first_row() {
    let m = build_temporal_matrix(&rbf(1.0), grid(3, 1.0));
    assert_eq!(m.matrix().row(0), &[1.0, (-0.5f64).exp(), (-2.0f64).exp()]);
}

#[test]
fn constant_kernel_gives_rank_one_ones() {
    let m = build_temporal_matrix(&cosine(1.0, &[]), grid(3, 0.77));
    assert!(m.matrix().as_slice().iter().all(|&v| v == 1.0));
    assert_eq!(eig_sym(&m, false).unwrap().positive_count(), 1);
}

#[test]
fn spatiotemporal_entries() {
    let d = 0.3 * (2.0 * 2f64.ln()).sqrt();
    let dt = 0.8 * (2.0 * 2.5f64.ln()).sqrt();
    let ks = SpatialKernel::rbf_iso(0.3, 1).unwrap();
    let kt = rbf(0.8);
    let pts = vec![SpaceTimePoint::new(vec![0.1], 0.0), SpaceTimePoint::new(vec![0.1 + d], dt)];
    let m = build_spatiotemporal_matrix(&ks, &kt, &pts).unwrap();
    assert_abs_diff_eq!(m.get(0, 1), 0.2, epsilon = 1e-12);

    let pts = vec![SpaceTimePoint::new(vec![0.4], 1.0), SpaceTimePoint::new(vec![0.4], 1.0)];
    assert_eq!(build_spatiotemporal_matrix(&ks, &kt, &pts).unwrap().get(0, 1), 1.0);

    let pts = vec![SpaceTimePoint::new(vec![0.4], 1.0), SpaceTimePoint::new(vec![0.4], 1.7)];
    assert_eq!(build_spatiotemporal_matrix(&ks, &kt, &pts).unwrap().get(0, 1), kt.eval(0.7));

    let bad = vec![SpaceTimePoint::new(vec![0.4], 1.0), SpaceTimePoint::new(vec![0.4, 0.1], 1.7)];
    assert!(matches!(build_spatiotemporal_matrix(&ks, &kt, &bad), Err(SpectralError::DimensionMismatch { .. })));
}

#[test]
fn sym_matrix_rejects_asymmetry() {
    assert!(SymMatrix::new(Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]])).is_err());
    assert!(SymMatrix::new(Matrix::from_rows(&[vec![1.0, f64::NAN], vec![f64::NAN, 1.0]])).is_err());
    assert!(SymMatrix::new(Matrix::from_rows(&[vec![1.0, 0.5, 0.0]])).is_err());
}

#[test]
fn identity_and_ones_spectra() {
    let s = eig_sym(&SymMatrix::new(Matrix::identity(5)).unwrap(), false).unwrap();
    assert_eq!(s.values, vec![1.0; 5]);
    let n = 9;
    let ones = SymMatrix::new(Matrix::from_fn(n, n, |_, _| 1.0)).unwrap();
    let s = eig_sym(&ones, true).unwrap();
    assert_abs_diff_eq!(s.values[0], n as f64, epsilon = 1e-12);
    assert!(s.values[1..].iter().all(|v| v.abs() < 1e-12));
}

fn det3(m: &[[f64; 3]; 3], l: f64) -> f64 {
    let a = |i: usize, j: usize| m[i][j] - if i == j { l } else { 0.0 };
    a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
        + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
}

/// Roots of `det(M − λI)` by sign-change scan and bisection.
fn cubic_roots(m: &[[f64; 3]; 3]) -> Vec<f64> {
    let bound = m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let steps = 100_000;
    let mut roots = Vec::new();
    let h = 2.0 * bound / steps as f64;
    for k in 0..steps {
        let (mut lo, mut hi) = (-bound + k as f64 * h, -bound + (k + 1) as f64 * h);
        let (flo, fhi) = (det3(m, lo), det3(m, hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if det3(m, lo) * det3(m, mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

#[test]
fn toeplitz_three_by_three_matches_cubic_roots() {
    let (a, b) = ((-0.5f64).exp(), (-2.0f64).exp());
    let m = [[1.0, a, b], [a, 1.0, a], [b, a, 1.0]];
    let oracle = cubic_roots(&m);
    assert_eq!(oracle.len(), 3);
    let s = eig_sym(&build_temporal_matrix(&rbf(1.0), grid(3, 1.0)), true).unwrap();
    for (got, want) in s.values.iter().zip(&oracle) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    }
}

#[test]
fn eigenvectors_reconstruct_and_are_orthonormal() {
    let m = build_temporal_matrix(&TemporalKernel::sinc_squared(0.7).unwrap(), grid(40, 0.3));
    let s = eig_sym(&m, true).unwrap();
    let q = s.vectors.as_ref().unwrap();
    let lambda = Matrix::from_fn(40, 40, |i, j| if i == j { s.values[i] } else { 0.0 });
    let recon = q.matmul(&lambda).matmul(&q.transpose());
    let diff = Matrix::from_fn(40, 40, |i, j| recon[(i, j)] - m.get(i, j));
    assert!(diff.frobenius_norm() <= 1e-8 * m.matrix().frobenius_norm());
    let gram = q.transpose().matmul(q);
    let off = Matrix::from_fn(40, 40, |i, j| gram[(i, j)] - if i == j { 1.0 } else { 0.0 });
    assert!(off.max_abs() < 1e-8);
    assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn circulant_rows() {
    let k = rbf(0.6);
    assert_eq!(circulant_embedding(&k, grid(2, 0.4)), vec![1.0, 2.0 * k.eval(0.4)]);
    let row = circulant_embedding(&rbf(1.0), grid(3, 1.0));
    let (a, b) = ((-0.5f64).exp(), (-2.0f64).exp());
    assert_eq!(row, vec![1.0, a + b, b + a]);
    let row = circulant_embedding(&TemporalKernel::periodic(1.3, 0.5).unwrap(), grid(11, 0.21));
    for j in 1..11 {
        assert_eq!(row[j], row[11 - j]);
    }
}

#[test]
fn sinc_approximation_has_nyquist_zeros() {
    let a = approx_temporal_spectrum(&TemporalKernel::sinc(1.0).unwrap(), grid(100, 0.25)).unwrap();
    assert_eq!(a.spectrum.values.iter().filter(|&&v| v > 0.0).count(), 50);
    assert_eq!(a.spectrum.values.iter().filter(|&&v| v == 0.0).count(), 50);
    assert_eq!(a.frequencies.len(), 100);
    assert_eq!(a.samples.len(), 100);
}

#[test]
fn rbf_approximation_is_strictly_positive() {
    for (n, d) in [(10, 0.5), (100, 0.1), (400, 0.2)] {
        let a = approx_temporal_spectrum(&rbf(0.8), grid(n, d)).unwrap();
        assert!(a.spectrum.values.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn discrete_classes_have_no_density_approximation() {
    assert!(matches!(
        approx_temporal_spectrum(&TemporalKernel::periodic(1.0, 1.0).unwrap(), grid(10, 0.1)),
        Err(SpectralError::WrongClass(_))
    ));
    assert!(approx_temporal_spectrum(&cosine(1.0, &[]), grid(10, 0.1)).is_err());
}

#[test]
fn sinc_squared_triangular_profile() {
    let k = TemporalKernel::sinc_squared(1.0).unwrap();
    let mut errors = Vec::new();
    for n in [100, 200, 400] {
        let a = approx_temporal_spectrum(&k, grid(n, 0.5)).unwrap();
        let exact = eig_sym(&build_temporal_matrix(&k, grid(n, 0.5)), false).unwrap();
        errors.push(mean_abs_diff(&a.spectrum.values, &exact.values));
        if n == 200 {
            assert_eq!(a.spectrum.values[0], k.density(0.0).unwrap() / 0.5);
            assert!((a.spectrum.values[0] - exact.values[0]).abs() / exact.values[0] < 0.01);
            // the unsorted samples rise linearly to the peak at zero frequency and fall back
            let peak = a.samples.iter().cloned().fold(f64::MIN, f64::max);
            let at_zero = a.frequencies.iter().position(|&w| w == 0.0).unwrap();
            assert_eq!(a.samples[at_zero], peak);
        }
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn low_rank_spectrum_examples() {
    let s = approx_lowrank_spectrum(&LowRankKernel::from_pairs(0.5, &[(1.0, 0.5)]).unwrap(), 100);
    assert_eq!(&s.values[..4], &[50.0, 25.0, 25.0, 0.0]);
    assert_eq!(s.len(), 100);
    let exact = eig_sym(&build_temporal_matrix(&cosine(0.5, &[(1.0, 0.5)]), grid(100, 0.1)), false).unwrap();
    for i in 0..3 {
        assert!((exact.values[i] - s.values[i]).abs() <= 0.05 * s.values[i]);
    }

    let s = approx_lowrank_spectrum(&LowRankKernel::from_pairs(1.0, &[]).unwrap(), 7);
    assert_eq!(s.values, vec![7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    let s = approx_lowrank_spectrum(&LowRankKernel::from_pairs(0.2, &[(0.3, 0.5), (1.1, 0.3)]).unwrap(), 64);
    assert_eq!(s.values.iter().filter(|&&v| v > 0.0).count(), 5);
}

fn brute_force(s: &[f64], t: &[f64], n: usize) -> (Vec<f64>, Vec<(usize, usize)>) {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in s.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            all.push((a.max(0.0) * b.max(0.0) / n as f64, i, j));
        }
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    all.truncate(n);
    (all.iter().map(|a| a.0).collect(), all.iter().map(|a| (a.1, a.2)).collect())
}

#[test]
fn product_of_two_by_two() {
    let s = Spectrum::from_values(vec![2.0, 1.0], Scale::Matrix);
    let t = Spectrum::from_values(vec![3.0, 1.0], Scale::Matrix);
    let p = approx_product_spectrum(&s, &t, 3);
    let (values, pairs) = brute_force(&s.values, &t.values, 3);
    assert_eq!(p.spectrum.values, values);
    assert_eq!(p.spectrum.values, vec![2.0, 1.0, 2.0 / 3.0]);
    assert_eq!(p.pairs, pairs);
    assert_eq!(p.pairs, vec![(0, 0), (1, 0), (0, 1)]);
}

#[test]
fn product_with_zero_factor_is_zero() {
    let s = Spectrum::from_values(vec![0.0; 4], Scale::Matrix);
    let t = Spectrum::from_values(vec![3.0, 2.0, 1.0, 0.5], Scale::Matrix);
    let p = approx_product_spectrum(&s, &t, 4);
    assert_eq!(p.spectrum.values, vec![0.0; 4]);
}

#[test]
fn product_clips_negative_inputs() {
    let s = Spectrum::from_values(vec![1.0, -1e-12], Scale::Matrix);
    let t = Spectrum::from_values(vec![2.0, -1e-13], Scale::Matrix);
    let p = approx_product_spectrum(&s, &t, 4);
    assert!(p.spectrum.values.iter().all(|&v| v >= 0.0));
    assert_eq!(p.spectrum.values[0], 0.5);
}

#[test]
fn interval_counts() {
    let s = Spectrum::from_values(vec![3.0, 2.0, 1.5, 1.0, 0.2, 0.0], Scale::Matrix);
    assert_eq!(count_in_interval(&s, -1.0, -1.0), 0);
    assert_eq!(count_in_interval(&s, 1.0, 2.0), 3);
    assert_eq!(count_in_interval(&s, 3.5, 10.0), 0);
    let id = eig_sym(&SymMatrix::new(Matrix::identity(6)).unwrap(), false).unwrap();
    assert_eq!(count_in_interval(&id, 1.0, 1.0), 6);
}

#[test]
fn spectrum_csv_layout() {
    let s = Spectrum::from_values(vec![2.0, 0.5], Scale::Matrix);
    let mut buf = Vec::new();
    s.write_csv(&mut buf, Some(&[(0, 0), (1, 0)])).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "index,eigenvalue,provenance_i,provenance_j\n0,2.0,0,0\n1,0.5,1,0\n");
    let mut buf = Vec::new();
    s.write_csv(&mut buf, None).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "index,eigenvalue,provenance_i,provenance_j\n0,2.0,,\n1,0.5,,\n");
}

#[test]
fn operator_scaling() {
    let s = Spectrum::from_values(vec![4.0, 2.0], Scale::Matrix).to_operator(4);
    assert_eq!(s.values, vec![1.0, 0.5]);
    assert_eq!(s.scale, Scale::Operator);
    assert_eq!(s.to_operator(4).values, vec![1.0, 0.5]);
}

#[test]
fn time_grid_rejects_bad_input() {
    assert!(TimeGrid::new(0, 0.1).is_err());
    assert!(TimeGrid::new(3, 0.0).is_err());
    assert!(TimeGrid::new(3, -0.1).is_err());
    assert_eq!(grid(3, 0.5).times(), vec![0.5, 1.0, 1.5]);
}
