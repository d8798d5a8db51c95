//! GP-UCB on a fixed spatial grid with observations at `t_i = iΔ`.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::gp::{sample_prior_path_with, Dataset, GpError, GpPosterior, Observation, DEFAULT_SAMPLE_CAP};
use crate::kernels::{KernelError, ProductKernel, SpatialKernel, TemporalKernel};
use crate::spectral::{format_float, SpectralError, TimeGrid};

#[derive(Debug, Error)]
pub enum TvboError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn default_sample_cap() -> usize {
    DEFAULT_SAMPLE_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvboConfig {
    pub spatial: SpatialKernel,
    pub temporal: TemporalKernel,
    /// Δ
    pub time_step: f64,
    pub horizon: usize,
    /// δ of the confidence schedule.
    pub confidence: f64,
    pub lipschitz: f64,
    /// Grid points per dimension.
    pub resolution: usize,
    /// σ₀²
    pub noise_variance: f64,
    pub seed: u64,
    #[serde(default = "default_sample_cap")]
    pub sample_cap: usize,
}

impl TvboConfig {
    /// d = 1, m = 25, Δ = 0.1, σ₀² = 0.01, δ = 0.1, L = 10, horizon 200, spatial RBF ℓ = 0.2.
    pub fn with_temporal(temporal: TemporalKernel) -> Self {
        Self {
            spatial: SpatialKernel::Rbf { lengthscales: vec![0.2] },
            temporal,
            time_step: 0.1,
            horizon: 200,
            confidence: 0.1,
            lipschitz: 10.0,
            resolution: 25,
            noise_variance: 0.01,
            seed: 0,
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), TvboError> {
        self.spatial.validate()?;
        self.temporal.validate()?;
        let bad = |msg: &str| Err(TvboError::InvalidConfig(msg.to_string()));
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("time_step must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad("lipschitz must be positive");
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2");
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance must be nonnegative");
        }
        Ok(())
    }

    pub fn kernel(&self) -> ProductKernel {
        ProductKernel::new(self.spatial.clone(), self.temporal.clone())
    }

    pub fn dim(&self) -> usize {
        self.spatial.dim()
    }
}

/// `β_i = 2d ln(L d i² / 6δ) + 4 ln(πi)`; may be negative for tiny `i`.
pub fn beta_schedule(i: usize, confidence: f64, dim: usize, lipschitz: f64) -> f64 {
    let (i, d) = (i as f64, dim as f64);
    2.0 * d * (lipschitz * d * i * i / (6.0 * confidence)).ln() + 4.0 * (PI * i).ln()
}

/// `m^d` points of `linspace(0, 1, m)^d`, last coordinate varying fastest.
pub fn uniform_grid(dim: usize, m: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let total = m.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; dim];
            for k in (0..dim).rev() {
                x[k] = axis[idx % m];
                idx /= m;
            }
            x
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UcbChoice {
    pub index: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Grid maximizer of `μ + √β σ` at time `t_next`, ties to the lowest index.
/// Negative `beta` is treated as 0.
pub fn ucb_select(posterior: &GpPosterior, t_next: f64, beta: f64, grid: &[Vec<f64>]) -> UcbChoice {
    let root = beta.max(0.0).sqrt();
    let mut best: Option<(f64, UcbChoice)> = None;
    for (index, x) in grid.iter().enumerate() {
        let (mean, variance) = posterior.predict(x, t_next);
        let score = mean + root * variance.sqrt();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, UcbChoice { index, mean, variance }));
        }
    }
    best.expect("grid must be nonempty").1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretStep {
    pub iteration: usize,
    pub t: f64,
    pub chosen: usize,
    pub optimum: usize,
    pub x_chosen: Vec<f64>,
    pub x_star: Vec<f64>,
    pub f_chosen: f64,
    pub f_star: f64,
    pub regret: f64,
    pub cumulative: f64,
    pub beta: f64,
    /// Posterior variance at the chosen point before observing it.
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub steps: Vec<RegretStep>,
    /// Noise variance used for conditioning (at least the noiseless jitter).
    pub noise_variance: f64,
}

impl RegretTrace {
    pub fn cumulative(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }

    /// `R_i` for `i = 1..=n`.
    pub fn cumulative_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cumulative).collect()
    }

    /// `I_i = ½ Σ_{k≤i} ln(1 + σ₀⁻² σ²_{k−1}(x_k, t_k))`, which equals `½ log det(I + σ₀⁻² K_i)`.
    pub fn information_series(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                acc += 0.5 * (s.variance / self.noise_variance).ln_1p();
                acc
            })
            .collect()
    }

    /// Fraction of steps whose posterior standard deviation exceeded `σ₀`.
    pub fn sd_above_noise_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let hits = self.steps.iter().filter(|s| s.variance > self.noise_variance).count();
        hits as f64 / self.steps.len() as f64
    }

    /// Columns `iteration,t,x_chosen,x_star,r,R_cumulative`; coordinates joined by `;`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TvboError> {
        let join = |x: &[f64]| x.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";");
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "t", "x_chosen", "x_star", "r", "R_cumulative"])?;
        for s in &self.steps {
            w.write_record([
                s.iteration.to_string(),
                format_float(s.t),
                join(&s.x_chosen),
                join(&s.x_star),
                format_float(s.regret),
                format_float(s.cumulative),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Draws the objective once, then runs GP-UCB for `horizon` steps.
///
/// The objective and the observation noise come from separate ChaCha8 streams of `seed`.
pub fn run_tvbo(config: &TvboConfig) -> Result<RegretTrace, TvboError> {
    config.validate()?;
    let kernel = config.kernel();
    let d = config.dim();
    let grid = uniform_grid(d, config.resolution);
    let times = TimeGrid::new(config.horizon, config.time_step)?;

    let mut path_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let objective = sample_prior_path_with(&kernel, &grid, times, &mut path_rng, config.sample_cap)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let sigma = config.noise_variance.sqrt();

    let mut post = GpPosterior::new(kernel, Dataset::new(config.noise_variance)?)?;
    let mut steps = Vec::with_capacity(config.horizon);
    let mut cumulative = 0.0;
    for i in 1..=config.horizon {
        let t = times.time(i - 1);
        let beta = beta_schedule(i, config.confidence, d, config.lipschitz);
        let choice = ucb_select(&post, t, beta, &grid);
        let column = objective.column(i - 1);
        let optimum = argmax(&column);
        let (f_chosen, f_star) = (column[choice.index], column[optimum]);
        let regret = f_star - f_chosen;
        cumulative += regret;
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        post = post.conditioned(Observation { x: grid[choice.index].clone(), t, y: f_chosen + sigma * z })?;
        steps.push(RegretStep {
            iteration: i,
            t,
            chosen: choice.index,
            optimum,
            x_chosen: grid[choice.index].clone(),
            x_star: grid[optimum].clone(),
            f_chosen,
            f_star,
            regret,
            cumulative,
            beta,
            variance: choice.variance,
        });
    }
    Ok(RegretTrace { steps, noise_variance: post.effective_noise() })
}

/// Runs one trace per seed; results are in seed order.
pub fn run_replications(config: &TvboConfig, seeds: &[u64], exec: Execution) -> Result<Vec<RegretTrace>, TvboError> {
    exec.map(seeds, |&seed| run_tvbo(&TvboConfig { seed, ..config.clone() })).into_iter().collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
