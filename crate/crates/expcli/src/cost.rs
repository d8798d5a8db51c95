use std::time::Instant;

use tvbo_core::bounds::uniform_points;
use tvbo_core::kernels::SpatialKernel;
use tvbo_core::spectral::{build_spatial_matrix, eig_sym};

use crate::config::ExperimentConfig;

/// Runtime above which a configuration is flagged as beyond desk scale.
pub const DESK_BUDGET_SECS: f64 = 300.0;
pub const SMALL_SECS: f64 = 10.0;
const PROBE_N: usize = 120;
const PROBE_REPEATS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuntimeClass {
    Small,
    Medium,
    Large,
}

impl RuntimeClass {
    pub fn of(seconds: f64) -> Self {
        if seconds < SMALL_SECS {
            Self::Small
        } else if seconds < DESK_BUDGET_SECS {
            Self::Medium
        } else {
            Self::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

/// Dense eigendecompositions a run performs, as `(order, how many)`.
pub fn workload(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    match config {
        ExperimentConfig::Spectra(c) => vec![(c.n, 3)],
        ExperimentConfig::Temporal(c) => c.panels().iter().map(|p| (p.n, 1)).collect(),
        ExperimentConfig::Periodic(c) => c.divisors.iter().flat_map(|_| c.ns.iter().map(|&n| (n, 1))).collect(),
        ExperimentConfig::ScalingFigure(c) => c.ns().iter().map(|&n| (n, 3 * c.replications * c.kernels.len())).collect(),
        ExperimentConfig::Table(c) => c.ns.iter().map(|&n| (n, 3 * c.replications * c.kernels.len())).collect(),
        ExperimentConfig::Regret(c) => {
            let grid = c.resolution.pow(c.spatial.dim() as u32);
            let mut w: Vec<(usize, usize)> = (1..c.horizon).map(|i| (i, c.replications)).collect();
            w.push((c.horizon, 4 * c.replications));
            w.push((grid, c.replications));
            w
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub decompositions: usize,
    pub largest: usize,
    pub seconds: f64,
}

impl Estimate {
    pub fn class(&self) -> RuntimeClass {
        RuntimeClass::of(self.seconds)
    }
}

/// Seconds per `n³` measured on a `PROBE_N`-point kernel matrix.
pub fn measure_constant() -> f64 {
    let xs = uniform_points(0, 0, PROBE_N, 1);
    let k = SpatialKernel::rbf_iso(0.2, 1).expect("valid probe kernel");
    let m = build_spatial_matrix(&k, &xs).expect("probe points match the kernel");
    let best = (0..PROBE_REPEATS)
        .map(|_| {
            let start = Instant::now();
            let _ = eig_sym(&m, false);
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min);
    best / (PROBE_N as f64).powi(3)
}

pub fn estimate(config: &ExperimentConfig, per_element: f64) -> Estimate {
    let w = workload(config);
    Estimate {
        decompositions: w.iter().map(|p| p.1).sum(),
        largest: w.iter().map(|p| p.0).max().unwrap_or(0),
        seconds: w.iter().map(|&(n, k)| k as f64 * (n as f64).powi(3)).sum::<f64>() * per_element,
    }
}
