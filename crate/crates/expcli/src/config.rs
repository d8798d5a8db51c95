use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tvbo_core::kernels::{SpatialKernel, TemporalKernel};
use tvbo_core::tvbo::TvboConfig;

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Table1,
    Regret,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [Self::Fig1, Self::Fig2, Self::Fig3, Self::Fig4, Self::Fig5, Self::Table1, Self::Regret];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Table1 => "table1",
            Self::Regret => "regret",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Self::Fig1 => "spatial, temporal and spatio-temporal spectra with the product approximation",
            Self::Fig2 => "temporal spectrum vs sampled spectral density, broadband kernel",
            Self::Fig3 => "temporal spectrum vs sampled spectral density, band-limited kernel",
            Self::Fig4 => "periodic kernel spectra at commensurate sampling steps",
            Self::Fig5 => "eigenvalue counts in [a, b] and I/n against n, averaged over replications",
            Self::Table1 => "kernel classes with their empirical eigenvalue-count scaling",
            Self::Regret => "seeded GP-UCB runs with regret upper and lower bounds",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s)
    }
}

fn zero() -> u64 {
    0
}

/// Spectra of `K_S/n`, `K_T` and `K` on `n` uniform points at `t_i = iΔ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    pub experiment: ExperimentId,
    pub spatial: SpatialKernel,
    pub temporal: TemporalKernel,
    #[serde(default = "SpectraConfig::default_n")]
    pub n: usize,
    #[serde(default = "SpectraConfig::default_time_step")]
    pub time_step: f64,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SpectraConfig {
    fn default_n() -> usize {
        100
    }
    fn default_time_step() -> f64 {
        0.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub n: usize,
    pub time_step: f64,
}

/// Exact and sampled-density temporal spectra, one panel per `(n, Δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub experiment: ExperimentId,
    pub temporal: TemporalKernel,
    #[serde(default)]
    pub panels: Option<Vec<Panel>>,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl TemporalConfig {
    pub fn panels(&self) -> Vec<Panel> {
        if let Some(p) = &self.panels {
            return p.clone();
        }
        let steps: [(usize, f64); 3] = match self.experiment {
            ExperimentId::Fig3 => [(100, 0.75), (100, 0.25), (200, 0.25)],
            _ => [(100, 0.1), (100, 0.05), (200, 0.1)],
        };
        steps.iter().map(|&(n, time_step)| Panel { n, time_step }).collect()
    }
}

/// Periodic-kernel spectra at `Δ = r/k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicConfig {
    pub experiment: ExperimentId,
    pub temporal: TemporalKernel,
    #[serde(default = "PeriodicConfig::default_divisors")]
    pub divisors: Vec<usize>,
    #[serde(default = "PeriodicConfig::default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl PeriodicConfig {
    fn default_divisors() -> Vec<usize> {
        vec![3, 6]
    }
    fn default_ns() -> Vec<usize> {
        vec![60, 120]
    }

    pub fn period(&self) -> Option<f64> {
        match self.temporal {
            TemporalKernel::Periodic { period, .. } => Some(period),
            _ => None,
        }
    }
}

fn default_interval() -> (f64, f64) {
    (1.0, 2.0)
}
fn default_replications() -> usize {
    10
}
fn default_scaling_step() -> f64 {
    0.25
}
fn default_noise() -> f64 {
    0.01
}

/// Eigenvalue counts and `I/n` for several temporal kernels, `n = n_step, 2 n_step, …, ≤ n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingFigureConfig {
    pub experiment: ExperimentId,
    pub spatial: SpatialKernel,
    pub kernels: Vec<TemporalKernel>,
    #[serde(default = "ScalingFigureConfig::default_n_step")]
    pub n_step: usize,
    #[serde(default = "ScalingFigureConfig::default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_scaling_step")]
    pub time_step: f64,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ScalingFigureConfig {
    fn default_n_step() -> usize {
        50
    }
    fn default_n_max() -> usize {
        400
    }

    pub fn ns(&self) -> Vec<usize> {
        if self.n_step == 0 {
            return Vec::new();
        }
        (1..=self.n_max / self.n_step).map(|i| i * self.n_step).collect()
    }
}

/// Kernel classes with eigenvalue counts at a few sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub experiment: ExperimentId,
    pub spatial: SpatialKernel,
    pub kernels: Vec<TemporalKernel>,
    #[serde(default = "TableConfig::default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_scaling_step")]
    pub time_step: f64,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl TableConfig {
    fn default_ns() -> Vec<usize> {
        vec![100, 200]
    }
}

/// Seeded GP-UCB replications; replication `i` uses seed `seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretConfig {
    pub experiment: ExperimentId,
    pub spatial: SpatialKernel,
    pub temporal: TemporalKernel,
    #[serde(default = "RegretConfig::default_time_step")]
    pub time_step: f64,
    #[serde(default = "RegretConfig::default_horizon")]
    pub horizon: usize,
    #[serde(default = "RegretConfig::default_confidence")]
    pub confidence: f64,
    #[serde(default = "RegretConfig::default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default = "RegretConfig::default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RegretConfig {
    fn default_time_step() -> f64 {
        0.1
    }
    fn default_horizon() -> usize {
        200
    }
    fn default_confidence() -> f64 {
        0.1
    }
    fn default_lipschitz() -> f64 {
        10.0
    }
    fn default_resolution() -> usize {
        25
    }

    pub fn tvbo(&self, seed: u64) -> TvboConfig {
        TvboConfig {
            spatial: self.spatial.clone(),
            temporal: self.temporal.clone(),
            time_step: self.time_step,
            horizon: self.horizon,
            confidence: self.confidence,
            lipschitz: self.lipschitz,
            resolution: self.resolution,
            noise_variance: self.noise_variance,
            seed,
            sample_cap: TvboConfig::with_temporal(self.temporal.clone()).sample_cap,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentConfig {
    Spectra(SpectraConfig),
    Temporal(TemporalConfig),
    Periodic(PeriodicConfig),
    ScalingFigure(ScalingFigureConfig),
    Table(TableConfig),
    Regret(RegretConfig),
}

macro_rules! each {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            ExperimentConfig::Spectra($c) => $body,
            ExperimentConfig::Temporal($c) => $body,
            ExperimentConfig::Periodic($c) => $body,
            ExperimentConfig::ScalingFigure($c) => $body,
            ExperimentConfig::Table($c) => $body,
            ExperimentConfig::Regret($c) => $body,
        }
    };
}

impl ExperimentConfig {
    pub fn id(&self) -> ExperimentId {
        each!(self, c => c.experiment)
    }

    pub fn seed(&self) -> u64 {
        each!(self, c => c.seed)
    }

    pub fn set_seed(&mut self, seed: u64) {
        each!(self, c => c.seed = seed)
    }

    pub fn out(&self) -> Option<&Path> {
        each!(self, c => c.out.as_deref())
    }

    pub fn set_out(&mut self, out: PathBuf) {
        each!(self, c => c.out = Some(out))
    }

    /// Semantic checks beyond the schema; errors name the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Self::Spectra(c) => {
                check_spatial(&c.spatial)?;
                check_temporal("temporal", &c.temporal)?;
                check_size("n", c.n, 2)?;
                check_step("time_step", c.time_step)
            }
            Self::Temporal(c) => {
                check_temporal("temporal", &c.temporal)?;
                if c.temporal.classify().is_discrete() {
                    return Err(ConfigError::invalid("temporal", "needs a kernel with a spectral density"));
                }
                let panels = c.panels();
                if panels.is_empty() {
                    return Err(ConfigError::invalid("panels", "at least one panel is required"));
                }
                for (i, p) in panels.iter().enumerate() {
                    check_size(&format!("panels[{i}].n"), p.n, 2)?;
                    check_step(&format!("panels[{i}].time_step"), p.time_step)?;
                }
                Ok(())
            }
            Self::Periodic(c) => {
                check_temporal("temporal", &c.temporal)?;
                if c.period().is_none() {
                    return Err(ConfigError::invalid("temporal", "family must be `periodic`"));
                }
                if c.divisors.is_empty() || c.divisors.contains(&0) {
                    return Err(ConfigError::invalid("divisors", "need positive integers"));
                }
                if c.ns.is_empty() {
                    return Err(ConfigError::invalid("ns", "at least one size is required"));
                }
                for (i, &n) in c.ns.iter().enumerate() {
                    check_size(&format!("ns[{i}]"), n, 2)?;
                }
                Ok(())
            }
            Self::ScalingFigure(c) => {
                check_spatial(&c.spatial)?;
                check_kernels(&c.kernels)?;
                check_size("n_step", c.n_step, 2)?;
                if c.n_max < c.n_step {
                    return Err(ConfigError::invalid("n_max", "must be at least n_step"));
                }
                check_scaling(c.interval, c.replications, c.time_step, c.noise_variance)
            }
            Self::Table(c) => {
                check_spatial(&c.spatial)?;
                check_kernels(&c.kernels)?;
                if c.ns.is_empty() {
                    return Err(ConfigError::invalid("ns", "at least one size is required"));
                }
                for (i, &n) in c.ns.iter().enumerate() {
                    check_size(&format!("ns[{i}]"), n, 2)?;
                }
                if c.ns.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ConfigError::invalid("ns", "sizes must be strictly increasing"));
                }
                check_scaling(c.interval, c.replications, c.time_step, c.noise_variance)
            }
            Self::Regret(c) => {
                check_spatial(&c.spatial)?;
                check_temporal("temporal", &c.temporal)?;
                check_size("replications", c.replications, 1)?;
                if !(c.noise_variance > 0.0 && c.noise_variance.is_finite()) {
                    return Err(ConfigError::invalid("noise_variance", "bounds need a positive noise variance"));
                }
                c.tvbo(c.seed).validate().map_err(|e| {
                    let msg = e.to_string();
                    let field = ["time_step", "horizon", "confidence", "lipschitz", "resolution", "noise_variance"]
                        .into_iter()
                        .find(|f| msg.contains(f))
                        .unwrap_or("experiment");
                    ConfigError::invalid(field, msg)
                })
            }
        }
    }
}

fn check_spatial(k: &SpatialKernel) -> Result<(), ConfigError> {
    k.validate().map_err(|e| ConfigError::invalid("spatial", e))
}

fn check_temporal(field: &str, k: &TemporalKernel) -> Result<(), ConfigError> {
    k.validate().map_err(|e| ConfigError::invalid(field, e))
}

fn check_kernels(ks: &[TemporalKernel]) -> Result<(), ConfigError> {
    if ks.is_empty() {
        return Err(ConfigError::invalid("kernels", "at least one kernel is required"));
    }
    ks.iter().enumerate().try_for_each(|(i, k)| check_temporal(&format!("kernels[{i}]"), k))
}

fn check_size(field: &str, n: usize, min: usize) -> Result<(), ConfigError> {
    if n < min {
        return Err(ConfigError::invalid(field, format!("must be at least {min}, got {n}")));
    }
    Ok(())
}

fn check_step(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(ConfigError::invalid(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn check_scaling(interval: (f64, f64), replications: usize, time_step: f64, noise: f64) -> Result<(), ConfigError> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(ConfigError::invalid("interval", format!("need a ≤ b, got [{a}, {b}]")));
    }
    check_size("replications", replications, 1)?;
    check_step("time_step", time_step)?;
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(ConfigError::invalid("noise_variance", format!("must be positive, got {noise}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// `.json` files are JSON; everything else is TOML unless it starts with `{`.
    pub fn detect(path: &Path, text: &str) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            Some(e) if e.eq_ignore_ascii_case("toml") => Self::Toml,
            _ if text.trim_start().starts_with('{') => Self::Json,
            _ => Self::Toml,
        }
    }
}

/// Reads and schema-checks a configuration file. Semantic checks are separate.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse(path, &text)
}

pub fn parse(path: &Path, text: &str) -> Result<ExperimentConfig, ConfigError> {
    let format = Format::detect(path, text);
    let parse_error = |location, message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        location,
        field: backticked(&message),
        message,
    };
    let id = match format {
        Format::Toml => {
            let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
            table.get("experiment").map(|v| v.as_str().map(str::to_owned))
        }
        Format::Json => {
            let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
            value.get("experiment").map(|v| v.as_str().map(str::to_owned))
        }
    };
    let id = match id {
        None => return Err(parse_error(None, "missing field `experiment`".into())),
        Some(None) => return Err(parse_error(None, "field `experiment` must be a string".into())),
        Some(Some(name)) => ExperimentId::parse(&name).ok_or_else(|| {
            let known: Vec<&str> = ExperimentId::ALL.iter().map(|i| i.name()).collect();
            parse_error(None, format!("unknown `experiment` {name:?}, expected one of {}", known.join(", ")))
        })?,
    };
    Ok(match id {
        ExperimentId::Fig1 => ExperimentConfig::Spectra(decode(path, text, format)?),
        ExperimentId::Fig2 | ExperimentId::Fig3 => ExperimentConfig::Temporal(decode(path, text, format)?),
        ExperimentId::Fig4 => ExperimentConfig::Periodic(decode(path, text, format)?),
        ExperimentId::Fig5 => ExperimentConfig::ScalingFigure(decode(path, text, format)?),
        ExperimentId::Table1 => ExperimentConfig::Table(decode(path, text, format)?),
        ExperimentId::Regret => ExperimentConfig::Regret(decode(path, text, format)?),
    })
}

fn decode<T: DeserializeOwned>(path: &Path, text: &str, format: Format) -> Result<T, ConfigError> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| toml_error(path, text, e)),
        Format::Json => serde_json::from_str(text).map_err(|e| json_error(path, e)),
    }
}

fn toml_error(path: &Path, text: &str, e: toml::de::Error) -> ConfigError {
    let message = e.message().trim().to_string();
    let location = e.span().map(|span| line_column(text, span.start));
    ConfigError::Parse { path: path.to_path_buf(), location, field: backticked(&message), message }
}

fn json_error(path: &Path, e: serde_json::Error) -> ConfigError {
    let location = (e.line() > 0).then(|| (e.line(), e.column()));
    let message = e.to_string();
    let message = match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message,
    };
    ConfigError::Parse { path: path.to_path_buf(), location, field: backticked(&message), message }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// The first `` `name` `` in a serde message.
fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}
