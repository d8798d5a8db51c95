//! Mutual information, regret upper and lower bounds, and eigenvalue-count scaling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::exec::Execution;
use crate::gp::{Eigenbasis, GpError};
use crate::kernels::ProductKernel;
use crate::spectral::{
    approx_product_spectrum, build_spatial_matrix, build_spatiotemporal_matrix, build_temporal_matrix,
    clip_negative, count_in_interval, eig_sym, ProductSpectrum, Scale, SpaceTimePoint, SpectralError, Spectrum,
    SymMatrix, TimeGrid,
};
use crate::tvbo::{beta_schedule, RegretTrace, TvboConfig};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("expected an operator-scaled spectrum")]
    ScaleMismatch,
    #[error("empty trajectory")]
    InsufficientData,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

fn check_noise(noise: f64) -> Result<(), BoundsError> {
    if noise > 0.0 && noise.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::InvalidInput(format!("noise variance must be positive, got {noise}")))
    }
}

/// `½ Σ ln(1 + λ_i(K) / σ₀²)` from the (clipped) eigenvalues of `K`.
pub fn mutual_info_exact(k: &SymMatrix, noise: f64) -> Result<f64, BoundsError> {
    check_noise(noise)?;
    let values = clip_negative(&eig_sym(k, false)?.values);
    Ok(0.5 * values.iter().map(|v| (v / noise).ln_1p()).sum::<f64>())
}

/// `½ Σ_{i≤n} ln(1 + n λ̄_i / σ₀²)` over operator eigenvalues.
pub fn mutual_info_spectral(spectrum: &Spectrum, n: usize, noise: f64) -> Result<f64, BoundsError> {
    if spectrum.scale != Scale::Operator {
        return Err(BoundsError::ScaleMismatch);
    }
    check_noise(noise)?;
    let nf = n as f64;
    Ok(0.5 * spectrum.values.iter().take(n).map(|v| (nf * v.max(0.0) / noise).ln_1p()).sum::<f64>())
}

/// `C₁ = σ₀⁻² / ln(1 + σ₀⁻²)`.
pub fn c1(noise: f64) -> f64 {
    let inv = 1.0 / noise;
    inv / inv.ln_1p()
}

/// `√(8 C₁ β_n σ₀² n I) + π²/6`, with negative `β_n` treated as 0.
pub fn upper_bound(n: usize, beta: f64, noise: f64, info: f64, c1: f64) -> f64 {
    (8.0 * c1 * beta.max(0.0) * noise * n as f64 * info.max(0.0)).sqrt() + PI * PI / 6.0
}

/// `E[max(0, X)]` for `X ~ N(μ, σ²)`: `μΦ(μ/σ) + σφ(μ/σ)`, and `max(0, μ)` at `σ = 0`.
pub fn truncated_gaussian_mean(mu: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return mu.max(0.0);
    }
    let z = mu / sigma;
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    mu * cdf + sigma * pdf
}

/// One step of an optimization run as seen by the lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Maximizer of the true objective at `t`.
    pub x_star: Vec<f64>,
    pub x_chosen: Vec<f64>,
    pub t: f64,
    /// True objective value at `(x_chosen, t)`.
    pub f_chosen: f64,
}

pub fn trajectory(trace: &RegretTrace) -> Vec<TrajectoryPoint> {
    trace
        .steps
        .iter()
        .map(|s| TrajectoryPoint { x_star: s.x_star.clone(), x_chosen: s.x_chosen.clone(), t: s.t, f_chosen: s.f_chosen })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundStep {
    pub iteration: usize,
    /// Eigenpairs retained for this step.
    pub rank: usize,
    pub mu_hat: f64,
    /// `2 − Σ λ̄_i (φ̄_i(a)² + φ̄_i(b)²)` before clipping.
    pub sigma2_raw: f64,
    /// `sigma2_raw` clipped to `[0, 2]`.
    pub sigma2: f64,
    /// `σ²(a) + σ²(b) − 2 Cov(a, b)`, the variance of `f(a) − f(b)`.
    pub sigma2_with_covariance: f64,
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub steps: Vec<LowerBoundStep>,
    pub total: f64,
    /// Fraction of steps where `sigma2_raw` fell outside `[0, 2]`.
    pub clipped_fraction: f64,
}

/// Per-step truncated-Gaussian lower bound on the expected cumulative regret.
///
/// Step `i` uses the eigendecomposition of the kernel matrix over the first `i − 1`
/// chosen points; step 1 has empty sums (`μ̂ = 0`, `σ̂² = 2`).
pub fn lower_bound(
    kernel: &ProductKernel,
    trajectory: &[TrajectoryPoint],
    exec: Execution,
) -> Result<LowerBound, BoundsError> {
    if trajectory.is_empty() {
        return Err(BoundsError::InsufficientData);
    }
    let points: Vec<SpaceTimePoint> = trajectory.iter().map(|p| SpaceTimePoint::new(p.x_chosen.clone(), p.t)).collect();
    let values: Vec<f64> = trajectory.iter().map(|p| p.f_chosen).collect();
    let full = build_spatiotemporal_matrix(&kernel.spatial, &kernel.temporal, &points)?;

    let steps = exec
        .map_range(0..trajectory.len(), |k| -> Result<LowerBoundStep, BoundsError> {
            let step = &trajectory[k];
            let (a, b) = (&step.x_star, &step.x_chosen);
            let prior_cov = kernel.eval(a, step.t, b, step.t);
            if k == 0 {
                return Ok(LowerBoundStep {
                    iteration: 1,
                    rank: 0,
                    mu_hat: 0.0,
                    sigma2_raw: 2.0,
                    sigma2: 2.0,
                    sigma2_with_covariance: 2.0 - 2.0 * prior_cov,
                    term: truncated_gaussian_mean(0.0, 2f64.sqrt()),
                });
            }
            let spectrum = eig_sym(&full.leading(k), true)?;
            let basis = Eigenbasis::new(kernel, &points[..k], &spectrum)?;
            let (pa, pb) = (basis.phi(a, step.t), basis.phi(b, step.t));
            let w = basis.weights(&values[..k]);
            let mu_hat = basis.mean(&pa, &w) - basis.mean(&pb, &w);
            let (va, vb) = (basis.variance(&pa), basis.variance(&pb));
            let sigma2_raw = va + vb;
            let cov = prior_cov - basis.explained_covariance(&pa, &pb);
            let sigma2 = sigma2_raw.clamp(0.0, 2.0);
            Ok(LowerBoundStep {
                iteration: k + 1,
                rank: basis.rank(),
                mu_hat,
                sigma2_raw,
                sigma2,
                sigma2_with_covariance: va + vb - 2.0 * cov,
                term: truncated_gaussian_mean(mu_hat, sigma2.sqrt()),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let total = steps.iter().map(|s| s.term).sum();
    let clipped = steps.iter().filter(|s| !(0.0..=2.0).contains(&s.sigma2_raw)).count();
    let clipped_fraction = clipped as f64 / steps.len() as f64;
    Ok(LowerBound { steps, total, clipped_fraction })
}

/// Product approximation of the operator spectrum for points `x_i` observed at `t_i = iΔ`.
pub fn product_operator_spectrum(
    kernel: &ProductKernel,
    xs: &[Vec<f64>],
    delta: f64,
) -> Result<ProductSpectrum, BoundsError> {
    let n = xs.len();
    let spatial = eig_sym(&build_spatial_matrix(&kernel.spatial, xs)?, false)?;
    let temporal = eig_sym(&build_temporal_matrix(&kernel.temporal, TimeGrid::new(n, delta)?), false)?;
    let p = approx_product_spectrum(&spatial, &temporal, n);
    Ok(ProductSpectrum { spectrum: p.spectrum.to_operator(n), pairs: p.pairs })
}

/// Upper bound evaluated after every step of `trace`.
pub fn upper_bound_series(config: &TvboConfig, trace: &RegretTrace) -> Vec<f64> {
    let noise = trace.noise_variance;
    let c = c1(noise);
    trace
        .information_series()
        .iter()
        .enumerate()
        .map(|(i, info)| {
            let n = i + 1;
            upper_bound(n, beta_schedule(n, config.confidence, config.dim(), config.lipschitz), noise, *info, c)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub mutual_info_exact: f64,
    pub mutual_info_spectral: f64,
    pub beta: f64,
    pub c1: f64,
    pub upper_bound: f64,
    /// Fraction of steps where the posterior standard deviation exceeded `σ₀`.
    pub c1_violation_fraction: f64,
    pub lower: LowerBound,
    pub cumulative_regret: f64,
}

pub fn bound_report(config: &TvboConfig, trace: &RegretTrace, exec: Execution) -> Result<BoundReport, BoundsError> {
    let traj = trajectory(trace);
    let n = traj.len();
    if n == 0 {
        return Err(BoundsError::InsufficientData);
    }
    let kernel = config.kernel();
    let noise = trace.noise_variance;
    let points: Vec<SpaceTimePoint> = traj.iter().map(|p| SpaceTimePoint::new(p.x_chosen.clone(), p.t)).collect();
    let k = build_spatiotemporal_matrix(&kernel.spatial, &kernel.temporal, &points)?;
    let mutual_info_exact = mutual_info_exact(&k, noise)?;
    let xs: Vec<Vec<f64>> = traj.iter().map(|p| p.x_chosen.clone()).collect();
    let product = product_operator_spectrum(&kernel, &xs, config.time_step)?;
    let mutual_info_spectral = mutual_info_spectral(&product.spectrum, n, noise)?;
    let beta = beta_schedule(n, config.confidence, config.dim(), config.lipschitz);
    let c = c1(noise);
    Ok(BoundReport {
        n,
        mutual_info_exact,
        mutual_info_spectral,
        beta,
        c1: c,
        upper_bound: upper_bound(n, beta, noise, mutual_info_exact, c),
        c1_violation_fraction: trace.sd_above_noise_fraction(),
        lower: lower_bound(&kernel, &traj, exec)?,
        cumulative_regret: trace.cumulative(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub ns: Vec<usize>,
    pub interval: (f64, f64),
    pub replications: usize,
    pub time_step: f64,
    pub noise_variance: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub count_mean: f64,
    pub count_stderr: f64,
    pub info_per_n_mean: f64,
    pub info_per_n_stderr: f64,
    /// Mean number of distinct spatial indices among the product-spectrum pairs.
    pub n0_mean: f64,
    pub counts: Vec<usize>,
    pub info_per_n: Vec<f64>,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Uniform points in `[0, 1]^dim` from stream `stream` of `seed`; prefixes are nested.
pub fn uniform_points(seed: u64, stream: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Eigenvalue counts of `K^(n)` in `[a, b]` and `I/n`, averaged over replications.
///
/// Replication `r` draws spatial points uniformly (stream `r` of `seed`) at `t_i = iΔ`.
pub fn scaling_diagnostic(
    kernel: &ProductKernel,
    config: &ScalingConfig,
    exec: Execution,
) -> Result<Vec<ScalingRow>, BoundsError> {
    if config.ns.windows(2).any(|w| w[0] > w[1]) {
        return Err(BoundsError::InvalidInput("n list must be ascending".into()));
    }
    if config.replications == 0 {
        return Err(BoundsError::InvalidInput("need at least one replication".into()));
    }
    let (a, b) = config.interval;
    let jobs: Vec<(usize, usize)> =
        config.ns.iter().flat_map(|&n| (0..config.replications).map(move |r| (n, r))).collect();
    let results = exec
        .map(&jobs, |&(n, r)| -> Result<(usize, f64, usize), BoundsError> {
            let xs = uniform_points(config.seed, r as u64, n, kernel.dim());
            let grid = TimeGrid::new(n, config.time_step)?;
            let ks = build_spatial_matrix(&kernel.spatial, &xs)?;
            let kt = build_temporal_matrix(&kernel.temporal, grid);
            let k = ks.hadamard(&kt);
            let spectrum = eig_sym(&k, false)?;
            let count = count_in_interval(&spectrum, a, b);
            let info = mutual_info_from_values(&spectrum.values, config.noise_variance)? / n as f64;
            let product = approx_product_spectrum(&eig_sym(&ks, false)?, &eig_sym(&kt, false)?, n);
            Ok((count, info, product.distinct_spatial()))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    Ok(config
        .ns
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let chunk = &results[idx * config.replications..(idx + 1) * config.replications];
            let counts: Vec<usize> = chunk.iter().map(|c| c.0).collect();
            let info_per_n: Vec<f64> = chunk.iter().map(|c| c.1).collect();
            let (count_mean, count_stderr) = mean_stderr(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            let (info_per_n_mean, info_per_n_stderr) = mean_stderr(&info_per_n);
            let n0_mean = chunk.iter().map(|c| c.2 as f64).sum::<f64>() / chunk.len() as f64;
            ScalingRow { n, count_mean, count_stderr, info_per_n_mean, info_per_n_stderr, n0_mean, counts, info_per_n }
        })
        .collect())
}

fn mutual_info_from_values(values: &[f64], noise: f64) -> Result<f64, BoundsError> {
    check_noise(noise)?;
    Ok(0.5 * clip_negative(values).iter().map(|v| (v / noise).ln_1p()).sum::<f64>())
}
